#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "optdisc/agents.hpp"
#include "optdisc/env.hpp"
#include "optdisc/model.hpp"
#include "optdisc/options.hpp"
#include "optdisc/spectral.hpp"

namespace optdisc {

/// Linear annealing from `start` to `end` over `decay_episodes` episodes, then constant.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  int decay_episodes = 300;

  double at(int episode) const;
};

struct OdstcConfig {
  int episodes_per_round = 10;
  /// Rounds between re-clusterings; the option set is refreshed at the end of round r when r % interval == 0.
  int pcca_refresh_interval = 10;
  int max_rounds = 60;
  bool discover_options = true;
  bool reward_weighting = false;
  ModelParams model;
  SpectralParams spectral;
  EpsilonSchedule epsilon;
  double alpha = 0.1;
  double gamma = 0.99;
  std::uint64_t seed = 1;
  LearnerKind learner = LearnerKind::Smdp;
  int max_steps = 1000;
  int option_max_steps = 0;
  int convergence_window = 50;
  bool stop_on_convergence = false;

  void validate() const;
};

/// Result of one clustering pass over a model.
struct Clustering {
  bool ok = false;
  std::string failure;
  int k = 0;
  bool k_fallback = false;
  double gap_ratio = 0.0;
  Eigen::VectorXd eigenvalues;
  /// Memberships over the original states (clamped and raw); dropped states have zero rows.
  Eigen::MatrixXd chi;
  Eigen::MatrixXd raw;
  Eigen::MatrixXd connectivity;
  std::vector<Option> options;
};

/// PCCA+ and option composition on a model; failures are reported, not thrown.
/// Options never initiate in `terminal` states.
Clustering cluster_model(const EstimatedModel& model, const SpectralParams& params,
                         std::span<const StateId> terminal = {});

struct RefreshSnapshot {
  int round = 0;
  int episodes_done = 0;
  Clustering clustering;
};

struct OdstcResult {
  QTable q;
  std::vector<Option> options;
  std::vector<EpisodeLog> history;
  std::vector<RefreshSnapshot> snapshots;
  EstimatedModel model;
  int rounds_run = 0;
  bool converged = false;
};

/// Sample, estimate, cluster, compose and learn until converged or out of rounds.
OdstcResult run_odstc(const GridWorld& world, const OdstcConfig& config);

/// True when the mean of the last `window` values differs from the mean of the `window`
/// values before them by less than 1% of the earlier mean.
bool convergence_test(std::span<const double> returns, int window);
bool convergence_test(std::span<const EpisodeLog> history, int window);

/// Smallest episode count e >= 2 * window at which the test passes on the first e episodes; nullopt if never.
std::optional<int> episodes_to_plateau(std::span<const EpisodeLog> history, int window);

/// Greedy (epsilon = 0, no learning) rollout from the start state.
EpisodeLog greedy_episode(const GridWorld& world, const QTable& q, std::span<const Option> options, int max_steps,
                          std::uint64_t seed);

/// Every (non-goal state, action) observed once under unslipped dynamics, plus absorbing goal
/// loops when params.absorbing_terminals is set.
EstimatedModel exhaustive_model(const GridWorld& world, ModelParams params = {});

/// Model over microstates: each state id in the trajectories is replaced by its assignment.
EstimatedModel aggregate_model(std::span<const Trajectory> trajectories, std::span<const int> assignments,
                               int num_microstates, int num_actions = kNumActions, ModelParams params = {});

/// Same aggregation applied to the counts of an existing state-level model.
EstimatedModel aggregate_model(const EstimatedModel& model, std::span<const int> assignments, int num_microstates);

}  // namespace optdisc
