#include "optdisc/agents.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace optdisc {

namespace {

double unit_draw(Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return unit(rng);
}

ActionId sample_action(const std::vector<double>& dist, Rng& rng) {
  const double u = unit_draw(rng);
  double acc = 0.0;
  ActionId last = 0;
  for (std::size_t a = 0; a < dist.size(); ++a) {
    if (dist[a] <= 0.0) continue;
    acc += dist[a];
    last = static_cast<ActionId>(a);
    if (u < acc) return last;
  }
  return last;
}

}  // namespace

QTable::QTable(int num_states, int num_actions, int num_options, double alpha, double gamma)
    : num_actions_(num_actions), alpha_(alpha), gamma_(gamma) {
  if (num_states <= 0 || num_actions <= 0 || num_options < 0) throw InvalidArgument("invalid Q table shape");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in (0, 1)");
  values_ = Eigen::MatrixXd::Zero(num_states, num_actions + num_options);
}

void QTable::reset_options(int num_options) {
  if (num_options < 0) throw InvalidArgument("negative option count");
  Eigen::MatrixXd next = Eigen::MatrixXd::Zero(values_.rows(), num_actions_ + num_options);
  next.leftCols(num_actions_) = values_.leftCols(num_actions_);
  values_ = std::move(next);
}

std::vector<int> available_choices(StateId s, std::span<const Option> options, int num_actions) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(num_actions) + options.size());
  for (int a = 0; a < num_actions; ++a) out.push_back(a);
  for (std::size_t o = 0; o < options.size(); ++o) {
    if (options[o].can_initiate(s)) out.push_back(num_actions + static_cast<int>(o));
  }
  return out;
}

double max_value(const QTable& q, StateId s, std::span<const int> choices) {
  if (choices.empty()) return 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (int c : choices) best = std::max(best, q(s, c));
  return best;
}

void smdp_q_update(QTable& q, StateId s, int choice, double reward, int duration, StateId next,
                   std::span<const int> next_choices, bool terminal) {
  if (duration < 1) throw InvalidArgument("option duration must be positive");
  if (choice < 0 || choice >= q.num_choices()) throw InvalidArgument("choice out of range");
  const double bootstrap = terminal ? 0.0 : std::pow(q.gamma(), duration) * max_value(q, next, next_choices);
  q(s, choice) += q.alpha() * (reward + bootstrap - q(s, choice));
}

int intra_option_q_update(QTable& q, const Transition& t, std::span<const Option> options,
                          std::span<const int> next_choices, bool terminal) {
  const double best_next = terminal ? 0.0 : max_value(q, t.next, next_choices);

  // Targets are computed from the pre-update table, then applied together.
  std::vector<std::pair<int, double>> targets;
  targets.emplace_back(t.action, t.reward + q.gamma() * best_next);
  for (std::size_t o = 0; o < options.size(); ++o) {
    const Option& opt = options[o];
    if (opt.action_prob(t.state, t.action) <= 0.0) continue;
    const int choice = q.option_choice(static_cast<int>(o));
    double target = t.reward;
    if (!terminal) {
      const double beta = opt.beta(t.next);
      target += q.gamma() * ((1.0 - beta) * q(t.next, choice) + beta * best_next);
    }
    targets.emplace_back(choice, target);
  }
  for (const auto& [choice, target] : targets) q(t.state, choice) += q.alpha() * (target - q(t.state, choice));
  return static_cast<int>(targets.size());
}

int epsilon_greedy(const QTable& q, StateId s, std::span<const int> available, double epsilon, Rng& rng) {
  if (available.empty()) throw InvalidArgument("no available choices");
  if (epsilon > 0.0 && unit_draw(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, available.size() - 1);
    return available[pick(rng)];
  }
  int best = available.front();
  for (int c : available) {
    if (q(s, c) > q(s, best) || (q(s, c) == q(s, best) && c < best)) best = c;
  }
  return best;
}

OptionRollout run_option(const GridWorld& world, const Option& option, StateId s0, Rng& rng, int max_steps,
                         double gamma, const TransitionCallback& on_step) {
  if (max_steps < 1) throw InvalidArgument("option max_steps must be positive");
  OptionRollout out;
  StateId s = s0;
  double discount = 1.0;
  bool stopped = false;
  while (out.duration < max_steps) {
    if (!option.defined_at(s)) {
      out.missing_policy = true;
      stopped = true;
      break;
    }
    const ActionId a = sample_action(option.policy[static_cast<std::size_t>(s)], rng);
    const StepResult res = world.step(s, a, rng);
    const Transition t{s, a, res.reward, res.next};
    out.steps.push_back(t);
    out.discounted_reward += discount * res.reward;
    discount *= gamma;
    ++out.duration;
    if (on_step) on_step(t, res.done);
    s = res.next;
    if (res.done) {
      out.done = true;
      stopped = true;
      break;
    }
    const double beta = option.beta(s);
    if (beta >= 1.0 || (beta > 0.0 && unit_draw(rng) < beta)) {
      stopped = true;
      break;
    }
  }
  out.truncated = !stopped;
  out.end = s;
  return out;
}

EpisodeResult run_episode(const GridWorld& world, QTable& q, std::span<const Option> options,
                          const EpisodeSettings& settings, Rng& rng) {
  if (settings.max_steps < 1) throw InvalidArgument("episode max_steps must be positive");
  const int num_actions = q.num_actions();
  const int option_cap = settings.option_max_steps > 0 ? settings.option_max_steps : world.num_states();
  const double gamma = q.gamma();

  EpisodeResult result;
  EpisodeLog& log = result.log;
  StateId s = world.start();
  double discount = 1.0;

  while (log.primitive_steps < settings.max_steps) {
    const std::vector<int> avail = available_choices(s, options, num_actions);
    const int choice = epsilon_greedy(q, s, avail, settings.epsilon, rng);
    ++log.decision_epochs;

    if (!q.is_option(choice)) {
      const StepResult res = world.step(s, choice, rng);
      const Transition t{s, choice, res.reward, res.next};
      result.trajectory.steps.push_back(t);
      ++log.primitive_steps;
      log.cumulative_reward += res.reward;
      log.discounted_return += discount * res.reward;
      discount *= gamma;
      if (settings.learn) {
        const std::vector<int> next_avail = available_choices(res.next, options, num_actions);
        if (settings.learner == LearnerKind::Smdp) {
          smdp_q_update(q, s, choice, res.reward, 1, res.next, next_avail, res.done);
        } else {
          intra_option_q_update(q, t, options, next_avail, res.done);
        }
      }
      s = res.next;
      if (res.done) {
        log.reached_goal = true;
        break;
      }
      continue;
    }

    const int option_id = choice - num_actions;
    const Option& opt = options[static_cast<std::size_t>(option_id)];
    const int cap = std::min(option_cap, settings.max_steps - log.primitive_steps);
    TransitionCallback on_step;
    if (settings.learn && settings.learner == LearnerKind::IntraOption) {
      on_step = [&](const Transition& t, bool done) {
        const std::vector<int> next_avail = available_choices(t.next, options, num_actions);
        intra_option_q_update(q, t, options, next_avail, done);
      };
    }
    const OptionRollout roll = run_option(world, opt, s, rng, cap, gamma, on_step);
    result.trajectory.steps.insert(result.trajectory.steps.end(), roll.steps.begin(), roll.steps.end());
    log.primitive_steps += roll.duration;
    for (const Transition& t : roll.steps) log.cumulative_reward += t.reward;
    log.discounted_return += discount * roll.discounted_reward;
    discount *= std::pow(gamma, roll.duration);
    log.options_invoked.emplace_back(option_id, roll.duration);
    if (settings.learn && settings.learner == LearnerKind::Smdp && roll.duration > 0) {
      const std::vector<int> next_avail = available_choices(roll.end, options, num_actions);
      smdp_q_update(q, s, choice, roll.discounted_reward, roll.duration, roll.end, next_avail, roll.done);
    }
    s = roll.end;
    if (roll.done) {
      log.reached_goal = true;
      break;
    }
    if (roll.duration == 0) break;
  }
  result.trajectory.terminated = log.reached_goal;
  return result;
}

}  // namespace optdisc
