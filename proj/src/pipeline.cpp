#include "optdisc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "optdisc/error.hpp"

namespace optdisc {

double EpsilonSchedule::at(int episode) const {
  if (decay_episodes <= 0) return end;
  const double frac = std::min(1.0, static_cast<double>(episode) / decay_episodes);
  return start + (end - start) * frac;
}

void OdstcConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument(what);
  };
  require(episodes_per_round >= 1, "episodes_per_round must be >= 1");
  require(pcca_refresh_interval >= 1, "pcca_refresh_interval must be >= 1");
  require(max_rounds >= 0, "max_rounds must be >= 0");
  require(max_steps >= 1, "max_steps must be >= 1");
  require(option_max_steps >= 0, "option_max_steps must be >= 0");
  require(convergence_window >= 2, "convergence_window must be >= 2");
  require(epsilon.start >= 0.0 && epsilon.start <= 1.0, "epsilon.start must lie in [0, 1]");
  require(epsilon.end >= 0.0 && epsilon.end <= 1.0, "epsilon.end must lie in [0, 1]");
  require(epsilon.decay_episodes >= 0, "epsilon.decay_episodes must be >= 0");
  require(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1]");
  require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
  require(spectral.t_c > 0.0 && spectral.t_c < 1.0, "t_c must lie in (0, 1)");
  require(spectral.tau_conn >= 0.0, "tau_conn must be >= 0");
  require(model.v >= 0.0, "v must be >= 0");
  require(model.d_prior >= 0.0 && model.u_prior >= 0.0, "priors must be >= 0");
}

Clustering cluster_model(const EstimatedModel& model, const SpectralParams& params,
                         std::span<const StateId> terminal) {
  Clustering out;
  if (model.empty()) {
    out.failure = "model has no observations";
    return out;
  }
  try {
    const Eigen::MatrixXd W = adjacency(model);
    const PccaResult<double> result = pcca(W, params.t_c);
    out.k = result.k();
    out.k_fallback = result.spectrum.gap.fallback;
    out.gap_ratio = result.spectrum.gap.ratio;
    out.eigenvalues = result.spectrum.eigenvalues;
    out.chi = result.full_chi();
    out.raw = result.full_raw();
    out.connectivity = result.connectivity;
    out.options = discover_options(result, transition_probabilities(model), params.tau_conn);
    exclude_from_initiation(out.options, terminal);
    out.ok = true;
  } catch (const Error& e) {
    out = Clustering{};
    out.failure = e.what();
  }
  return out;
}

OdstcResult run_odstc(const GridWorld& world, const OdstcConfig& config) {
  config.validate();
  ModelParams params = config.model;
  if (!config.reward_weighting) params.v = 0.0;

  OdstcResult out{QTable(world.num_states(), kNumActions, 0, config.alpha, config.gamma), {}, {}, {},
                  EstimatedModel(world.num_states(), kNumActions, params)};
  Rng rng(config.seed);

  EpisodeSettings settings;
  settings.max_steps = config.max_steps;
  settings.option_max_steps = config.option_max_steps;
  settings.learner = config.learner;

  for (int round = 1; round <= config.max_rounds; ++round) {
    for (int e = 0; e < config.episodes_per_round; ++e) {
      const int episode = static_cast<int>(out.history.size());
      settings.epsilon = config.epsilon.at(episode);
      EpisodeResult res = run_episode(world, out.q, out.options, settings, rng);
      res.log.episode = episode;
      out.model.update(res.trajectory);
      out.history.push_back(std::move(res.log));
    }
    out.rounds_run = round;

    if (config.discover_options && round % config.pcca_refresh_interval == 0) {
      RefreshSnapshot snap{round, static_cast<int>(out.history.size()), cluster_model(out.model, config.spectral, world.goals())};
      // Cluster labels are not stable across refreshes, so old option values are dropped.
      out.options = snap.clustering.options;
      out.q.reset_options(static_cast<int>(out.options.size()));
      out.snapshots.push_back(std::move(snap));
    }

    if (config.stop_on_convergence && convergence_test(out.history, config.convergence_window)) {
      out.converged = true;
      break;
    }
  }
  return out;
}

bool convergence_test(std::span<const double> returns, int window) {
  if (window < 2) throw InvalidArgument("convergence window must be >= 2");
  const auto w = static_cast<std::size_t>(window);
  if (returns.size() < 2 * w) return false;
  const auto later = returns.last(w);
  const auto earlier = returns.subspan(returns.size() - 2 * w, w);
  const double later_mean = std::accumulate(later.begin(), later.end(), 0.0) / window;
  const double earlier_mean = std::accumulate(earlier.begin(), earlier.end(), 0.0) / window;
  if (earlier_mean == 0.0) return later_mean == 0.0;
  return std::abs(later_mean - earlier_mean) < 0.01 * std::abs(earlier_mean);
}

namespace {

std::vector<double> discounted_returns(std::span<const EpisodeLog> history) {
  std::vector<double> out;
  out.reserve(history.size());
  for (const EpisodeLog& log : history) out.push_back(log.discounted_return);
  return out;
}

}  // namespace

bool convergence_test(std::span<const EpisodeLog> history, int window) {
  return convergence_test(std::span<const double>(discounted_returns(history)), window);
}

std::optional<int> episodes_to_plateau(std::span<const EpisodeLog> history, int window) {
  const std::vector<double> returns = discounted_returns(history);
  const std::span<const double> all(returns);
  for (std::size_t e = 2 * static_cast<std::size_t>(window); e <= returns.size(); ++e) {
    if (convergence_test(all.first(e), window)) return static_cast<int>(e);
  }
  return std::nullopt;
}

EpisodeLog greedy_episode(const GridWorld& world, const QTable& q, std::span<const Option> options, int max_steps,
                          std::uint64_t seed) {
  QTable copy = q;
  EpisodeSettings settings;
  settings.epsilon = 0.0;
  settings.max_steps = max_steps;
  settings.learn = false;
  Rng rng(seed);
  return run_episode(world, copy, options, settings, rng).log;
}

EstimatedModel exhaustive_model(const GridWorld& world, ModelParams params) {
  EstimatedModel out(world.num_states(), kNumActions, params);
  for (const Transition& t : enumerate_transitions(world)) out.observe(t);
  if (params.absorbing_terminals) {
    for (StateId g : world.goals()) out.observe_absorbing(g);
  }
  return out;
}

namespace {

int microstate_of(StateId s, std::span<const int> assignments, int num_microstates) {
  if (s < 0 || static_cast<std::size_t>(s) >= assignments.size()) {
    throw InvalidArgument("state " + std::to_string(s) + " has no microstate assignment");
  }
  const int m = assignments[static_cast<std::size_t>(s)];
  if (m < 0 || m >= num_microstates) {
    throw InvalidArgument("state " + std::to_string(s) + " is assigned to invalid microstate " + std::to_string(m));
  }
  return m;
}

}  // namespace

EstimatedModel aggregate_model(std::span<const Trajectory> trajectories, std::span<const int> assignments,
                               int num_microstates, int num_actions, ModelParams params) {
  if (num_microstates < 1) throw InvalidArgument("need at least one microstate");
  auto micro = [&](StateId s) { return microstate_of(s, assignments, num_microstates); };

  EstimatedModel out(num_microstates, num_actions, params);
  for (const Trajectory& traj : trajectories) {
    Trajectory mapped;
    mapped.terminated = traj.terminated;
    mapped.steps.reserve(traj.steps.size());
    for (const Transition& t : traj.steps) mapped.steps.push_back({micro(t.state), t.action, t.reward, micro(t.next)});
    out.update(mapped);
  }
  return out;
}

EstimatedModel aggregate_model(const EstimatedModel& model, std::span<const int> assignments, int num_microstates) {
  if (num_microstates < 1) throw InvalidArgument("need at least one microstate");
  EstimatedModel out(num_microstates, model.num_actions(), model.params());
  for (const auto& [key, stats] : model.entries()) {
    out.merge({microstate_of(key.state, assignments, num_microstates), key.action,
               microstate_of(key.next, assignments, num_microstates)},
              stats);
  }
  return out;
}

}  // namespace optdisc
