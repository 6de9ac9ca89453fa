#include "optdisc/model.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "optdisc/io.hpp"

namespace optdisc {

EstimatedModel::EstimatedModel(int num_states, int num_actions, ModelParams params)
    : num_states_(num_states), num_actions_(num_actions), params_(params) {
  if (num_states_ <= 0 || num_actions_ <= 0) throw InvalidArgument("model needs at least one state and action");
  if (params_.d_prior < 0.0 || params_.u_prior < 0.0) throw InvalidArgument("priors must be nonnegative");
  if (!std::isfinite(params_.v) || params_.v < 0.0) throw InvalidArgument("v must be finite and nonnegative");
  visits_.assign(static_cast<std::size_t>(num_states_) * num_actions_, 0.0);
  d_ = Eigen::MatrixXd::Constant(num_states_, num_states_, params_.d_prior);
}

void EstimatedModel::check(StateId s, ActionId a, StateId next) const {
  if (s < 0 || s >= num_states_ || next < 0 || next >= num_states_) {
    throw InvalidArgument("transition state out of range: " + std::to_string(s) + " -> " + std::to_string(next));
  }
  if (a < 0 || a >= num_actions_) throw InvalidArgument("transition action out of range: " + std::to_string(a));
}

void EstimatedModel::update(const Trajectory& traj) {
  for (const Transition& t : traj.steps) check(t.state, t.action, t.next);
  for (const Transition& t : traj.steps) observe(t);
  if (traj.terminated && params_.absorbing_terminals && !traj.steps.empty()) {
    observe_absorbing(traj.steps.back().next);
  }
}

void EstimatedModel::observe(const Transition& t) {
  check(t.state, t.action, t.next);
  TransitionStats& st = stats_[{t.state, t.action, t.next}];
  st.count += 1.0;
  st.reward_sum += t.reward;
  visits_[static_cast<std::size_t>(t.state) * num_actions_ + t.action] += 1.0;
  refresh_pair(t.state, t.next);
}

void EstimatedModel::observe_absorbing(StateId s) {
  for (ActionId a = 0; a < num_actions_; ++a) observe({s, a, 0.0, s});
}

void EstimatedModel::merge(const TransitionKey& key, const TransitionStats& stats) {
  check(key.state, key.action, key.next);
  if (!(stats.count > 0.0) || !std::isfinite(stats.reward_sum)) throw InvalidArgument("merged count must be positive");
  TransitionStats& st = stats_[key];
  st.count += stats.count;
  st.reward_sum += stats.reward_sum;
  visits_[static_cast<std::size_t>(key.state) * num_actions_ + key.action] += stats.count;
  refresh_pair(key.state, key.next);
}

void EstimatedModel::refresh_pair(StateId s, StateId next) {
  double total = params_.d_prior;
  for (ActionId a = 0; a < num_actions_; ++a) {
    auto it = stats_.find({s, a, next});
    if (it == stats_.end()) continue;
    total += it->second.count * std::exp(-params_.v * std::abs(it->second.mean_reward()));
  }
  d_(s, next) = total;
}

double EstimatedModel::observations(StateId s, ActionId a, StateId next) const {
  check(s, a, next);
  auto it = stats_.find({s, a, next});
  return it == stats_.end() ? 0.0 : it->second.count;
}

double EstimatedModel::mean_reward(StateId s, ActionId a, StateId next) const {
  check(s, a, next);
  auto it = stats_.find({s, a, next});
  return it == stats_.end() ? 0.0 : it->second.mean_reward();
}

double EstimatedModel::visits(StateId s, ActionId a) const {
  check(s, a, s);
  return visits_[static_cast<std::size_t>(s) * num_actions_ + a];
}

TransitionProbabilities::TransitionProbabilities(int num_states, int num_actions)
    : num_states_(num_states), num_actions_(num_actions) {
  rows_.resize(static_cast<std::size_t>(num_states_) * num_actions_);
}

const std::vector<Outcome>& TransitionProbabilities::row(StateId s, ActionId a) const {
  if (s < 0 || s >= num_states_ || a < 0 || a >= num_actions_) {
    throw InvalidArgument("probability lookup out of range");
  }
  return rows_[static_cast<std::size_t>(s) * num_actions_ + a];
}

double TransitionProbabilities::operator()(StateId s, ActionId a, StateId next) const {
  for (const Outcome& o : row(s, a)) {
    if (o.next == next) return o.prob;
  }
  return 0.0;
}

std::vector<ActionId> TransitionProbabilities::observed_actions(StateId s) const {
  std::vector<ActionId> out;
  for (ActionId a = 0; a < num_actions_; ++a) {
    if (has(s, a)) out.push_back(a);
  }
  return out;
}

void TransitionProbabilities::set(StateId s, ActionId a, std::vector<Outcome> dist) {
  row(s, a);
  rows_[static_cast<std::size_t>(s) * num_actions_ + a] = std::move(dist);
}

TransitionProbabilities transition_probabilities(const EstimatedModel& model) {
  const int n = model.num_states();
  const double prior = model.params().u_prior;
  TransitionProbabilities probs(n, model.num_actions());

  // Group observed successors per (s, a); entries() is ordered by (s, a, s').
  auto it = model.entries().begin();
  const auto end = model.entries().end();
  while (it != end) {
    const StateId s = it->first.state;
    const ActionId a = it->first.action;
    std::vector<Outcome> dist;
    double total = 0.0;
    if (prior > 0.0) {
      dist.reserve(static_cast<std::size_t>(n));
      for (StateId next = 0; next < n; ++next) dist.push_back({next, prior});
      total = prior * n;
    }
    for (; it != end && it->first.state == s && it->first.action == a; ++it) {
      if (prior > 0.0) {
        dist[static_cast<std::size_t>(it->first.next)].prob += it->second.count;
      } else {
        dist.push_back({it->first.next, it->second.count});
      }
      total += it->second.count;
    }
    for (Outcome& o : dist) o.prob /= total;
    probs.set(s, a, std::move(dist));
  }
  return probs;
}

Eigen::MatrixXd adjacency(const EstimatedModel& model) {
  const Eigen::MatrixXd& d = model.reward_weighted_adjacency();
  return (d + d.transpose()) / 2.0;
}

void write_model_triplets(std::ostream& out, const EstimatedModel& model) {
  out << "state,action,next_state,count,reward_mean\n";
  for (const auto& [key, st] : model.entries()) {
    out << key.state << ',' << key.action << ',' << key.next << ',' << io::format_number(st.count) << ','
        << io::format_number(st.mean_reward()) << '\n';
  }
}

EstimatedModel read_model_triplets(std::istream& in, int num_states, int num_actions, ModelParams params) {
  EstimatedModel model(num_states, num_actions, params);
  std::string line;
  int line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (header) {
      header = false;
      continue;
    }
    const auto fields = io::split_fields(line);
    if (fields.empty()) continue;
    if (fields.size() != 5) throw ParseError("model triplets line " + std::to_string(line_no) + ": expected 5 fields");
    try {
      const auto s = static_cast<StateId>(io::parse_number(fields[0]));
      const auto a = static_cast<ActionId>(io::parse_number(fields[1]));
      const auto next = static_cast<StateId>(io::parse_number(fields[2]));
      const double count = io::parse_number(fields[3]);
      const double reward = io::parse_number(fields[4]);
      const auto whole = static_cast<long>(count);
      if (count < 1.0 || static_cast<double>(whole) != count) throw ParseError("count must be a positive integer");
      model.merge({s, a, next}, {count, count * reward});
    } catch (const Error& e) {
      throw ParseError("model triplets line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return model;
}

}  // namespace optdisc
