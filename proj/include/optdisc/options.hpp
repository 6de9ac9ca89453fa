#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "optdisc/env.hpp"
#include "optdisc/model.hpp"
#include "optdisc/spectral.hpp"

namespace optdisc {

/// Hard partition induced by argmax membership. States with an all-zero row are unassigned (-1).
struct AbstractionIndex {
  std::vector<int> assignment;
  std::vector<std::vector<StateId>> clusters;

  int cluster_of(StateId s) const { return assignment.at(static_cast<std::size_t>(s)); }
  int num_clusters() const { return static_cast<int>(clusters.size()); }
};

AbstractionIndex assign_states(const Eigen::MatrixXd& chi);

/// Temporally extended action from abstract state `source` to `target`.
struct Option {
  int source = -1;
  int target = -1;
  /// Sorted states of the source cluster with a defined policy.
  std::vector<StateId> initiation;
  /// policy[s] is the action distribution at s, empty where undefined.
  std::vector<std::vector<double>> policy;
  /// termination[s] = beta(s), 1 outside the source cluster.
  std::vector<double> termination;
  /// Source states where no action had positive gain; their policy is uniform over observed actions.
  std::vector<StateId> fallback_states;
  /// Source states with no observed action.
  std::vector<StateId> excluded_states;

  int num_states() const { return static_cast<int>(termination.size()); }
  bool can_initiate(StateId s) const;
  bool defined_at(StateId s) const;
  double action_prob(StateId s, ActionId a) const;
  /// Most probable action, lowest id on ties.
  ActionId greedy_action(StateId s) const;
  double beta(StateId s) const { return termination.at(static_cast<std::size_t>(s)); }
};

struct PolicyComposition {
  std::vector<std::vector<double>> policy;
  std::vector<StateId> fallback_states;
  std::vector<StateId> excluded_states;
};

/// Hill-climbing policy on column `target` of `potential` for the states of cluster `source`:
/// mu(s, a) proportional to max(sum_s' P(s,a,s') potential(s') - potential(s), 0).
PolicyComposition compose_policy(int source, int target, const Eigen::MatrixXd& potential,
                                 const TransitionProbabilities& probs, const AbstractionIndex& index);

inline constexpr double kTerminationClamp = 1e-6;

/// beta(s) = min(log chi_source(s) / log chi_target(s), 1) on the source cluster, 1 elsewhere.
std::vector<double> compose_termination(int source, int target, const Eigen::MatrixXd& chi,
                                        const AbstractionIndex& index, double clamp = kTerminationClamp);

Option compose_option(int source, int target, const Eigen::MatrixXd& chi, const Eigen::MatrixXd& potential,
                      const TransitionProbabilities& probs, const AbstractionIndex& index);

/// One option per connected ordered pair of abstract states.
///
/// chi and potential are over the original state space (rows = states); the policy
/// climbs `potential`, normally the unclamped membership.
std::vector<Option> discover_options(const Eigen::MatrixXd& chi, const Eigen::MatrixXd& potential,
                                     const Eigen::MatrixXd& connectivity, const TransitionProbabilities& probs,
                                     double tau_conn);

std::vector<Option> discover_options(const PccaResult<double>& pcca, const TransitionProbabilities& probs,
                                     double tau_conn);

/// Removes `states` from every initiation set and drops options left with an empty one.
/// Used to keep options from starting in terminal states.
void exclude_from_initiation(std::vector<Option>& options, std::span<const StateId> states);

/// CSV bundle: `option_id,source,target,initiation_size`, `option_id,state,action,prob`
/// (nonzero entries only) and `option_id,state,beta`.
void write_option_summary(std::ostream& out, std::span<const Option> options);
void write_option_policies(std::ostream& out, std::span<const Option> options);
void write_option_terminations(std::ostream& out, std::span<const Option> options);

}  // namespace optdisc
