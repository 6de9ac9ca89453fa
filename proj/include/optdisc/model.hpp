#pragma once

#include <compare>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "optdisc/env.hpp"

namespace optdisc {

struct ModelParams {
  /// Reward regularisation constant: a transition contributes exp(-v |mean reward|) to D.
  double v = 0.0;
  double d_prior = 0.0;
  double u_prior = 0.0;
  /// Record a zero-reward self-loop for every action at the last state of a terminated trajectory.
  bool absorbing_terminals = true;
};

struct TransitionKey {
  StateId state;
  ActionId action;
  StateId next;

  friend auto operator<=>(const TransitionKey&, const TransitionKey&) = default;
};

struct TransitionStats {
  double count = 0.0;
  double reward_sum = 0.0;

  double mean_reward() const { return count > 0.0 ? reward_sum / count : 0.0; }
};

/// Empirical transition counts, reward means and the reward-weighted adjacency D.
///
/// D(s, s') = d_prior + sum_a phi(s, a, s') * exp(-v * |mean reward(s, a, s')|) is kept
/// consistent with the counts after every observation.
class EstimatedModel {
 public:
  explicit EstimatedModel(int num_states, int num_actions = kNumActions, ModelParams params = {});

  int num_states() const noexcept { return num_states_; }
  int num_actions() const noexcept { return num_actions_; }
  const ModelParams& params() const noexcept { return params_; }
  bool empty() const noexcept { return stats_.empty(); }

  void update(const Trajectory& traj);
  void observe(const Transition& t);
  void observe_absorbing(StateId s);
  /// Adds `stats.count` observations of `key` with total reward `stats.reward_sum`.
  void merge(const TransitionKey& key, const TransitionStats& stats);

  /// Raw observation count phi(s, a, s').
  double observations(StateId s, ActionId a, StateId next) const;
  /// Posterior count U(s, a, s') = u_prior + phi(s, a, s').
  double count(StateId s, ActionId a, StateId next) const { return params_.u_prior + observations(s, a, next); }
  double mean_reward(StateId s, ActionId a, StateId next) const;
  /// Total observations of (s, a) over all successors.
  double visits(StateId s, ActionId a) const;

  const Eigen::MatrixXd& reward_weighted_adjacency() const noexcept { return d_; }
  const std::map<TransitionKey, TransitionStats>& entries() const noexcept { return stats_; }

 private:
  void check(StateId s, ActionId a, StateId next) const;
  void refresh_pair(StateId s, StateId next);

  int num_states_;
  int num_actions_;
  ModelParams params_;
  std::map<TransitionKey, TransitionStats> stats_;
  std::vector<double> visits_;
  Eigen::MatrixXd d_;
};

/// P(s, a, .) for every (s, a) with at least one observation; other pairs carry no estimate.
class TransitionProbabilities {
 public:
  TransitionProbabilities(int num_states, int num_actions);

  int num_states() const noexcept { return num_states_; }
  int num_actions() const noexcept { return num_actions_; }

  bool has(StateId s, ActionId a) const { return !row(s, a).empty(); }
  std::span<const Outcome> at(StateId s, ActionId a) const { return row(s, a); }
  double operator()(StateId s, ActionId a, StateId next) const;
  /// Actions at s with an estimate, ascending.
  std::vector<ActionId> observed_actions(StateId s) const;

  void set(StateId s, ActionId a, std::vector<Outcome> dist);

 private:
  const std::vector<Outcome>& row(StateId s, ActionId a) const;

  int num_states_;
  int num_actions_;
  std::vector<std::vector<Outcome>> rows_;
};

TransitionProbabilities transition_probabilities(const EstimatedModel& model);

/// Symmetrised adjacency W = (D + D^T) / 2.
Eigen::MatrixXd adjacency(const EstimatedModel& model);

/// Sparse triplet export: header `state,action,next_state,count,reward_mean`, one row per observed transition.
void write_model_triplets(std::ostream& out, const EstimatedModel& model);
EstimatedModel read_model_triplets(std::istream& in, int num_states, int num_actions, ModelParams params = {});

}  // namespace optdisc
