#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

namespace optdisc {

/// Hard clustering of feature vectors into microstates.
struct MicrostateMap {
  /// assignments[i] is the microstate of data point i (row i of the features).
  std::vector<int> assignments;
  /// k_m x d, one centroid per row.
  Eigen::MatrixXd centroids;
  int num_microstates = 0;
  int iterations = 0;
  bool converged = false;
  /// Within-cluster SSE after each Lloyd iteration.
  std::vector<double> sse_history;

  double sse() const { return sse_history.empty() ? 0.0 : sse_history.back(); }
};

/// k-means++ seeding followed by Lloyd iterations until the assignment stops changing or
/// max_iters is reached. Empty clusters are reseeded from the point farthest from its centroid.
/// Rows of `features` are data points.
MicrostateMap kmeans(const Eigen::MatrixXd& features, int num_microstates, std::uint64_t seed, int max_iters = 100);

/// Number of pairwise distinct rows.
int count_distinct_rows(const Eigen::MatrixXd& features);

/// Reads delimited numeric records (comma and/or whitespace separated, `#` comments,
/// blank lines ignored). Every record must have the same width.
Eigen::MatrixXd read_features(std::istream& in);

/// `point,microstate` rows.
void write_microstate_map(std::ostream& out, const MicrostateMap& map);

/// Reads a `point,microstate` file back into an assignment vector indexed by point.
std::vector<int> read_microstate_assignments(std::istream& in);

}  // namespace optdisc
