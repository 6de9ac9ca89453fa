#include "optdisc/options.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "optdisc/io.hpp"

namespace optdisc {

namespace {

// Gains at or below this are treated as no improvement.
constexpr double kGainTolerance = 1e-12;

}  // namespace

AbstractionIndex assign_states(const Eigen::MatrixXd& chi) {
  AbstractionIndex index;
  index.assignment.assign(static_cast<std::size_t>(chi.rows()), -1);
  index.clusters.resize(static_cast<std::size_t>(chi.cols()));
  for (Eigen::Index s = 0; s < chi.rows(); ++s) {
    if (chi.row(s).maxCoeff() <= 0.0) continue;
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < chi.cols(); ++c) {
      if (chi(s, c) > chi(s, best)) best = c;
    }
    index.assignment[static_cast<std::size_t>(s)] = static_cast<int>(best);
    index.clusters[static_cast<std::size_t>(best)].push_back(static_cast<StateId>(s));
  }
  return index;
}

bool Option::can_initiate(StateId s) const {
  return std::binary_search(initiation.begin(), initiation.end(), s);
}

bool Option::defined_at(StateId s) const {
  return s >= 0 && s < num_states() && !policy[static_cast<std::size_t>(s)].empty();
}

double Option::action_prob(StateId s, ActionId a) const {
  if (!defined_at(s)) return 0.0;
  const auto& row = policy[static_cast<std::size_t>(s)];
  return a >= 0 && a < static_cast<ActionId>(row.size()) ? row[static_cast<std::size_t>(a)] : 0.0;
}

ActionId Option::greedy_action(StateId s) const {
  if (!defined_at(s)) throw InvalidArgument("option policy undefined at state " + std::to_string(s));
  const auto& row = policy[static_cast<std::size_t>(s)];
  return static_cast<ActionId>(std::max_element(row.begin(), row.end()) - row.begin());
}

PolicyComposition compose_policy(int source, int target, const Eigen::MatrixXd& potential,
                                 const TransitionProbabilities& probs, const AbstractionIndex& index) {
  if (source < 0 || source >= index.num_clusters() || target < 0 || target >= potential.cols()) {
    throw InvalidArgument("abstract state index out of range");
  }
  if (potential.rows() != probs.num_states()) throw InvalidArgument("membership rows do not match the model");

  const int num_actions = probs.num_actions();
  PolicyComposition out;
  out.policy.resize(static_cast<std::size_t>(probs.num_states()));
  for (StateId s : index.clusters[static_cast<std::size_t>(source)]) {
    const std::vector<ActionId> observed = probs.observed_actions(s);
    if (observed.empty()) {
      out.excluded_states.push_back(s);
      continue;
    }
    std::vector<double> mu(static_cast<std::size_t>(num_actions), 0.0);
    double total = 0.0;
    for (ActionId a : observed) {
      double expected = 0.0;
      for (const Outcome& o : probs.at(s, a)) expected += o.prob * potential(o.next, target);
      const double gain = expected - potential(s, target);
      if (gain > kGainTolerance) {
        mu[static_cast<std::size_t>(a)] = gain;
        total += gain;
      }
    }
    if (total > 0.0) {
      for (double& m : mu) m /= total;
    } else {
      for (ActionId a : observed) mu[static_cast<std::size_t>(a)] = 1.0 / static_cast<double>(observed.size());
      out.fallback_states.push_back(s);
    }
    out.policy[static_cast<std::size_t>(s)] = std::move(mu);
  }
  return out;
}

std::vector<double> compose_termination(int source, int target, const Eigen::MatrixXd& chi,
                                        const AbstractionIndex& index, double clamp) {
  if (source < 0 || source >= chi.cols() || target < 0 || target >= chi.cols()) {
    throw InvalidArgument("abstract state index out of range");
  }
  std::vector<double> beta(static_cast<std::size_t>(chi.rows()), 1.0);
  for (StateId s : index.clusters.at(static_cast<std::size_t>(source))) {
    const double from = std::clamp(chi(s, source), clamp, 1.0 - clamp);
    const double to = std::clamp(chi(s, target), clamp, 1.0 - clamp);
    beta[static_cast<std::size_t>(s)] = std::min(std::log(from) / std::log(to), 1.0);
  }
  return beta;
}

Option compose_option(int source, int target, const Eigen::MatrixXd& chi, const Eigen::MatrixXd& potential,
                      const TransitionProbabilities& probs, const AbstractionIndex& index) {
  Option opt;
  opt.source = source;
  opt.target = target;
  PolicyComposition comp = compose_policy(source, target, potential, probs, index);
  opt.policy = std::move(comp.policy);
  opt.fallback_states = std::move(comp.fallback_states);
  opt.excluded_states = std::move(comp.excluded_states);
  opt.termination = compose_termination(source, target, chi, index);
  for (StateId s : index.clusters[static_cast<std::size_t>(source)]) {
    if (opt.defined_at(s)) opt.initiation.push_back(s);
  }
  return opt;
}

std::vector<Option> discover_options(const Eigen::MatrixXd& chi, const Eigen::MatrixXd& potential,
                                     const Eigen::MatrixXd& connectivity, const TransitionProbabilities& probs,
                                     double tau_conn) {
  if (chi.rows() != potential.rows() || chi.cols() != potential.cols()) {
    throw InvalidArgument("chi and potential shapes differ");
  }
  if (connectivity.rows() != chi.cols() || connectivity.cols() != chi.cols()) {
    throw InvalidArgument("connectivity must be k x k");
  }
  std::vector<Option> options;
  if (chi.cols() < 2) return options;
  const AbstractionIndex index = assign_states(chi);
  for (const auto& [i, j] : connected_pairs(connectivity, tau_conn)) {
    options.push_back(compose_option(i, j, chi, potential, probs, index));
  }
  return options;
}

std::vector<Option> discover_options(const PccaResult<double>& pcca, const TransitionProbabilities& probs,
                                     double tau_conn) {
  return discover_options(pcca.full_chi(), pcca.full_raw(), pcca.connectivity, probs, tau_conn);
}

void exclude_from_initiation(std::vector<Option>& options, std::span<const StateId> states) {
  for (Option& opt : options) {
    std::erase_if(opt.initiation, [&](StateId s) { return std::find(states.begin(), states.end(), s) != states.end(); });
  }
  std::erase_if(options, [](const Option& opt) { return opt.initiation.empty(); });
}

void write_option_summary(std::ostream& out, std::span<const Option> options) {
  out << "option_id,source,target,initiation_size\n";
  for (std::size_t id = 0; id < options.size(); ++id) {
    out << id << ',' << options[id].source << ',' << options[id].target << ',' << options[id].initiation.size()
        << '\n';
  }
}

void write_option_policies(std::ostream& out, std::span<const Option> options) {
  out << "option_id,state,action,prob\n";
  for (std::size_t id = 0; id < options.size(); ++id) {
    const Option& opt = options[id];
    for (StateId s = 0; s < opt.num_states(); ++s) {
      if (!opt.defined_at(s)) continue;
      const auto& row = opt.policy[static_cast<std::size_t>(s)];
      for (std::size_t a = 0; a < row.size(); ++a) {
        if (row[a] > 0.0) out << id << ',' << s << ',' << a << ',' << io::format_number(row[a]) << '\n';
      }
    }
  }
}

void write_option_terminations(std::ostream& out, std::span<const Option> options) {
  out << "option_id,state,beta\n";
  for (std::size_t id = 0; id < options.size(); ++id) {
    const Option& opt = options[id];
    for (StateId s = 0; s < opt.num_states(); ++s) {
      out << id << ',' << s << ',' << io::format_number(opt.beta(s)) << '\n';
    }
  }
}

}  // namespace optdisc
