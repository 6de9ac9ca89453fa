#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "optdisc/env.hpp"
#include "optdisc/options.hpp"

namespace optdisc {

/// Action/option values. Choice c < num_actions is primitive action c; choice
/// num_actions + o is option o. Unvisited entries read as 0.
class QTable {
 public:
  QTable(int num_states, int num_actions, int num_options, double alpha, double gamma);

  int num_states() const noexcept { return static_cast<int>(values_.rows()); }
  int num_actions() const noexcept { return num_actions_; }
  int num_options() const noexcept { return static_cast<int>(values_.cols()) - num_actions_; }
  int num_choices() const noexcept { return static_cast<int>(values_.cols()); }
  double alpha() const noexcept { return alpha_; }
  double gamma() const noexcept { return gamma_; }

  double operator()(StateId s, int choice) const { return values_(s, choice); }
  double& operator()(StateId s, int choice) { return values_(s, choice); }
  const Eigen::MatrixXd& values() const noexcept { return values_; }

  /// Drops every option column and appends `num_options` zero columns; primitive values are kept.
  void reset_options(int num_options);

  int option_choice(int option) const { return num_actions_ + option; }
  bool is_option(int choice) const { return choice >= num_actions_; }

 private:
  Eigen::MatrixXd values_;
  int num_actions_;
  double alpha_;
  double gamma_;
};

/// Primitive actions followed by every option that can be initiated at s.
std::vector<int> available_choices(StateId s, std::span<const Option> options, int num_actions = kNumActions);

double max_value(const QTable& q, StateId s, std::span<const int> choices);

/// Q(s,o) += alpha [r + gamma^k max_{c in next_choices} Q(s',c) - Q(s,o)]; the bootstrap is
/// dropped when `terminal`. Primitive actions are the k = 1 case.
void smdp_q_update(QTable& q, StateId s, int choice, double reward, int duration, StateId next,
                   std::span<const int> next_choices, bool terminal = false);

/// Updates the primitive Q(s,a) and every option with mu_o(s,a) > 0 from one transition.
/// Returns the number of Q entries touched.
int intra_option_q_update(QTable& q, const Transition& t, std::span<const Option> options,
                          std::span<const int> next_choices, bool terminal = false);

/// Uniform over `available` with probability epsilon, otherwise argmax Q with lowest-index ties.
int epsilon_greedy(const QTable& q, StateId s, std::span<const int> available, double epsilon, Rng& rng);

struct OptionRollout {
  std::vector<Transition> steps;
  double discounted_reward = 0.0;
  int duration = 0;
  StateId end = -1;
  /// The environment reached a goal.
  bool done = false;
  bool truncated = false;
  /// Execution reached a state where the option policy is undefined.
  bool missing_policy = false;
};

using TransitionCallback = std::function<void(const Transition&, bool done)>;

/// Follows mu from s0, sampling beta in every entered state, for at most max_steps steps.
OptionRollout run_option(const GridWorld& world, const Option& option, StateId s0, Rng& rng, int max_steps,
                         double gamma, const TransitionCallback& on_step = {});

enum class LearnerKind { Smdp, IntraOption };

struct EpisodeLog {
  int episode = 0;
  double cumulative_reward = 0.0;
  double discounted_return = 0.0;
  int decision_epochs = 0;
  int primitive_steps = 0;
  bool reached_goal = false;
  /// (option id, duration) per invocation.
  std::vector<std::pair<int, int>> options_invoked;
};

struct EpisodeSettings {
  double epsilon = 0.1;
  int max_steps = 1000;
  int option_max_steps = 0;  // 0: number of states
  LearnerKind learner = LearnerKind::Smdp;
  bool learn = true;
};

struct EpisodeResult {
  EpisodeLog log;
  Trajectory trajectory;
};

/// One episode from the start state. With an empty option set this is flat Q-learning.
EpisodeResult run_episode(const GridWorld& world, QTable& q, std::span<const Option> options,
                          const EpisodeSettings& settings, Rng& rng);

}  // namespace optdisc
