#include "optdisc/kmeans.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "optdisc/error.hpp"
#include "optdisc/io.hpp"

namespace optdisc {

namespace {

double nearest(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& point, int& which) {
  double best = std::numeric_limits<double>::infinity();
  which = 0;
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c).transpose() - point).squaredNorm();
    if (d < best) {
      best = d;
      which = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

int count_distinct_rows(const Eigen::MatrixXd& features) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(features(i, j));
  }
  std::sort(rows.begin(), rows.end());
  return static_cast<int>(std::unique(rows.begin(), rows.end()) - rows.begin());
}

MicrostateMap kmeans(const Eigen::MatrixXd& features, int num_microstates, std::uint64_t seed, int max_iters) {
  const Eigen::Index n = features.rows();
  const Eigen::Index dim = features.cols();
  if (n == 0 || dim == 0) throw InvalidArgument("k-means needs a nonempty feature matrix");
  if (num_microstates < 1) throw InvalidArgument("k-means needs at least one cluster");
  if (max_iters < 1) throw InvalidArgument("k-means needs max_iters >= 1");
  if (num_microstates > count_distinct_rows(features)) {
    throw InvalidArgument("k_m = " + std::to_string(num_microstates) + " exceeds the number of distinct points");
  }

  std::mt19937_64 rng(seed);
  MicrostateMap out;
  out.num_microstates = num_microstates;
  out.centroids.resize(num_microstates, dim);

  // k-means++ seeding.
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  out.centroids.row(0) = features.row(first(rng));
  Eigen::VectorXd dist2(n);
  for (Eigen::Index i = 0; i < n; ++i) dist2(i) = (features.row(i) - out.centroids.row(0)).squaredNorm();
  for (int c = 1; c < num_microstates; ++c) {
    const double total = dist2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> unit(0.0, total);
      const double target = unit(rng);
      double acc = 0.0;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2(i);
        if (dist2(i) > 0.0 && target < acc) {
          chosen = i;
          break;
        }
      }
      while (dist2(chosen) <= 0.0 && chosen > 0) --chosen;
    }
    out.centroids.row(c) = features.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) {
      dist2(i) = std::min(dist2(i), (features.row(i) - out.centroids.row(c)).squaredNorm());
    }
  }

  out.assignments.assign(static_cast<std::size_t>(n), -1);
  std::vector<double> point_dist(static_cast<std::size_t>(n), 0.0);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int which = 0;
      point_dist[static_cast<std::size_t>(i)] = nearest(out.centroids, features.row(i).transpose(), which);
      if (out.assignments[static_cast<std::size_t>(i)] != which) {
        out.assignments[static_cast<std::size_t>(i)] = which;
        changed = true;
      }
    }

    // Reseed empty clusters from the farthest point, one at a time.
    std::vector<int> sizes(static_cast<std::size_t>(num_microstates), 0);
    for (int a : out.assignments) ++sizes[static_cast<std::size_t>(a)];
    for (int c = 0; c < num_microstates; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) continue;
      std::size_t far = point_dist.size();
      for (std::size_t i = 0; i < point_dist.size(); ++i) {
        if (sizes[static_cast<std::size_t>(out.assignments[i])] < 2) continue;
        if (far == point_dist.size() || point_dist[i] > point_dist[far]) far = i;
      }
      --sizes[static_cast<std::size_t>(out.assignments[far])];
      out.assignments[far] = c;
      sizes[static_cast<std::size_t>(c)] = 1;
      point_dist[far] = 0.0;
      changed = true;
    }

    out.centroids.setZero();
    for (Eigen::Index i = 0; i < n; ++i) out.centroids.row(out.assignments[static_cast<std::size_t>(i)]) += features.row(i);
    for (int c = 0; c < num_microstates; ++c) out.centroids.row(c) /= static_cast<double>(sizes[static_cast<std::size_t>(c)]);

    double sse = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      sse += (features.row(i) - out.centroids.row(out.assignments[static_cast<std::size_t>(i)])).squaredNorm();
    }
    out.sse_history.push_back(sse);
    out.iterations = iter + 1;
    if (!changed) {
      out.converged = true;
      break;
    }
  }
  return out;
}

Eigen::MatrixXd read_features(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto fields = io::split_fields(line);
    if (fields.empty()) continue;
    std::vector<double> row;
    row.reserve(fields.size());
    for (auto f : fields) {
      try {
        row.push_back(io::parse_number(f));
      } catch (const ParseError& e) {
        throw ParseError("feature file line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("feature file line " + std::to_string(line_no) + ": expected " +
                       std::to_string(rows.front().size()) + " values, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("feature file has no records");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return out;
}

void write_microstate_map(std::ostream& out, const MicrostateMap& map) {
  out << "point,microstate\n";
  for (std::size_t i = 0; i < map.assignments.size(); ++i) out << i << ',' << map.assignments[i] << '\n';
}

std::vector<int> read_microstate_assignments(std::istream& in) {
  std::vector<int> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) continue;
    const auto fields = io::split_fields(line);
    if (fields.empty()) continue;
    if (fields.size() != 2) throw ParseError("microstate map line " + std::to_string(line_no) + ": expected 2 fields");
    const auto point = static_cast<long>(io::parse_number(fields[0]));
    const auto micro = static_cast<int>(io::parse_number(fields[1]));
    if (point != static_cast<long>(out.size()) || micro < 0) {
      throw ParseError("microstate map line " + std::to_string(line_no) + ": points must be listed in order");
    }
    out.push_back(micro);
  }
  return out;
}

}  // namespace optdisc
