#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "optdisc/experiment.hpp"
#include "optdisc/io.hpp"
#include "optdisc/kmeans.hpp"

namespace optdisc {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

GridWorld load_world(const ExperimentConfig& c) { return load_gridworld_file(c.environment.map, c.environment.params); }

ModelParams effective_params(const ExperimentConfig& c) {
  ModelParams p = c.model.params;
  if (!c.model.reward_weighting) p.v = 0.0;
  return p;
}

/// State-level model from the configured source. Sampling draws rounds x episodes_per_round
/// uniform-random episodes with the first seed.
EstimatedModel build_model(const GridWorld& world, const ExperimentConfig& c) {
  const ModelParams params = effective_params(c);
  switch (c.model.source) {
    case ModelSource::Exhaustive:
      return exhaustive_model(world, params);
    case ModelSource::File: {
      std::ifstream in(c.model.path);
      if (!in) throw IoError("cannot open model file " + c.model.path.string());
      return read_model_triplets(in, c.model.num_states, kNumActions, params);
    }
    case ModelSource::Sampled:
      break;
  }
  EstimatedModel model(world.num_states(), kNumActions, params);
  Rng rng(c.pipeline.seeds.front());
  const BehaviorPolicy policy = uniform_random_policy();
  const int episodes = c.pipeline.rounds * c.pipeline.episodes_per_round;
  for (int e = 0; e < episodes; ++e) model.update(sample_trajectory(world, policy, c.environment.max_steps, rng));
  return model;
}

std::string cluster_header(const std::string& first, Eigen::Index k) {
  std::string out = first;
  for (Eigen::Index i = 0; i < k; ++i) out += ",S" + std::to_string(i);
  return out + "\n";
}

std::string matrix_csv(const std::string& first, const Eigen::MatrixXd& m) {
  std::string out = cluster_header(first, m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out += std::to_string(r);
    for (Eigen::Index col = 0; col < m.cols(); ++col) out += "," + io::format_number(m(r, col));
    out += "\n";
  }
  return out;
}

template <typename Writer>
std::string to_text(Writer&& write) {
  std::ostringstream out;
  write(out);
  return out.str();
}

void write_option_bundle(const fs::path& dir, const std::string& prefix, std::span<const Option> options) {
  io::write_text(dir / (prefix + "options.csv"), to_text([&](std::ostream& o) { write_option_summary(o, options); }));
  io::write_text(dir / (prefix + "option_policies.csv"),
                 to_text([&](std::ostream& o) { write_option_policies(o, options); }));
  io::write_text(dir / (prefix + "option_terminations.csv"),
                 to_text([&](std::ostream& o) { write_option_terminations(o, options); }));
}

/// Memberships over grid states, or an empty matrix when the model's states cannot be mapped to cells.
Eigen::MatrixXd grid_memberships(const GridWorld& world, const EstimatedModel& model, const Eigen::MatrixXd& chi,
                                 const ExperimentConfig& c) {
  if (!c.model.microstate_map.empty()) {
    std::ifstream in(c.model.microstate_map);
    if (!in) throw IoError("cannot open microstate map " + c.model.microstate_map.string());
    const std::vector<int> assign = read_microstate_assignments(in);
    if (static_cast<int>(assign.size()) != world.num_states()) {
      throw ConfigError("model.microstate_map must list one microstate per grid state");
    }
    Eigen::MatrixXd out(world.num_states(), chi.cols());
    for (int s = 0; s < world.num_states(); ++s) {
      const int m = assign[static_cast<std::size_t>(s)];
      if (m >= chi.rows()) throw ConfigError("model.microstate_map refers to microstate " + std::to_string(m));
      out.row(s) = chi.row(m);
    }
    return out;
  }
  if (model.num_states() == world.num_states()) return chi;
  return {};
}

std::string episodes_csv(std::span<const EpisodeLog> history) {
  std::string out = "episode,return,discounted_return,decision_epochs,primitive_steps,reached_goal,options_invoked\n";
  for (const EpisodeLog& log : history) {
    out += std::to_string(log.episode) + "," + io::format_number(log.cumulative_reward) + "," +
           io::format_number(log.discounted_return) + "," + std::to_string(log.decision_epochs) + "," +
           std::to_string(log.primitive_steps) + "," + (log.reached_goal ? "1" : "0") + "," +
           std::to_string(log.options_invoked.size()) + "\n";
  }
  return out;
}

struct RunSummary {
  std::string learner;
  std::uint64_t seed = 0;
  int episodes = 0;
  std::optional<int> plateau;
  double final_decision_epochs = 0.0;
  double final_primitive_steps = 0.0;
  double final_discounted_return = 0.0;
  double goal_rate = 0.0;
  int num_options = 0;
};

RunSummary summarize(const std::string& learner, std::uint64_t seed, const OdstcResult& r, int window) {
  RunSummary s;
  s.learner = learner;
  s.seed = seed;
  s.episodes = static_cast<int>(r.history.size());
  s.num_options = static_cast<int>(r.options.size());
  if (r.history.empty()) return s;
  s.plateau = episodes_to_plateau(r.history, window);
  const std::size_t n = std::min(r.history.size(), static_cast<std::size_t>(window));
  for (std::size_t i = r.history.size() - n; i < r.history.size(); ++i) {
    s.final_decision_epochs += r.history[i].decision_epochs;
    s.final_primitive_steps += r.history[i].primitive_steps;
    s.final_discounted_return += r.history[i].discounted_return;
  }
  s.final_decision_epochs /= static_cast<double>(n);
  s.final_primitive_steps /= static_cast<double>(n);
  s.final_discounted_return /= static_cast<double>(n);
  s.goal_rate = static_cast<double>(std::count_if(r.history.begin(), r.history.end(),
                                                  [](const EpisodeLog& l) { return l.reached_goal; })) /
                static_cast<double>(r.history.size());
  return s;
}

void write_snapshots(const fs::path& dir, const std::string& tag, const OdstcResult& r) {
  for (const RefreshSnapshot& snap : r.snapshots) {
    const std::string prefix = tag + "_round" + std::to_string(snap.round) + "_";
    if (!snap.clustering.ok) {
      io::write_text(dir / (prefix + "failure.txt"), snap.clustering.failure + "\n");
      continue;
    }
    io::write_text(dir / (prefix + "memberships.csv"), matrix_csv("state", snap.clustering.chi));
    write_option_bundle(dir, prefix, snap.clustering.options);
  }
}

}  // namespace

std::string membership_heatmap(const GridWorld& world, const Eigen::MatrixXd& chi, int cluster) {
  if (chi.rows() != world.num_states() || cluster < 0 || cluster >= chi.cols()) {
    throw InvalidArgument("heatmap needs one membership row per state and a valid cluster");
  }
  std::vector<unsigned char> pixels(static_cast<std::size_t>(world.width()) * world.height(), 0);
  for (int r = 0; r < world.height(); ++r) {
    for (int col = 0; col < world.width(); ++col) {
      const auto s = world.state_at(r, col);
      if (!s) continue;
      const double value = std::clamp(chi(*s, cluster), 0.0, 1.0);
      pixels[static_cast<std::size_t>(r) * world.width() + col] = static_cast<unsigned char>(std::lround(255.0 * value));
    }
  }
  return io::encode_pgm(world.width(), world.height(), pixels);
}

void cmd_discover(const ExperimentConfig& c) {
  const GridWorld world = load_world(c);
  const EstimatedModel model = build_model(world, c);
  const bool grid_model = model.num_states() == world.num_states() && c.model.microstate_map.empty();
  const std::vector<StateId> terminal = grid_model ? world.goals() : std::vector<StateId>{};
  const Clustering cl = cluster_model(model, c.spectral, terminal);
  if (!cl.ok) throw NumericError("clustering failed: " + cl.failure);

  const fs::path& dir = c.output.directory;
  io::ensure_directory(dir);

  std::string eig;
  for (Eigen::Index i = 0; i < cl.eigenvalues.size(); ++i) eig += io::format_number(cl.eigenvalues(i)) + "\n";
  io::write_text(dir / "eigenvalues.txt", eig);
  if (c.output.memberships) io::write_text(dir / "memberships.csv", matrix_csv("state", cl.chi));
  if (c.output.connectivity) io::write_text(dir / "connectivity.csv", matrix_csv("cluster", cl.connectivity));
  if (c.output.options) write_option_bundle(dir, "", cl.options);
  if (c.output.model) {
    io::write_text(dir / "model.csv", to_text([&](std::ostream& o) { write_model_triplets(o, model); }));
  }

  int heatmaps = 0;
  if (c.output.heatmaps) {
    const Eigen::MatrixXd grid_chi = grid_memberships(world, model, cl.chi, c);
    if (grid_chi.size() > 0) {
      for (int i = 0; i < cl.k; ++i) {
        io::write_text(dir / ("heatmap_S" + std::to_string(i) + ".pgm"), membership_heatmap(world, grid_chi, i));
        ++heatmaps;
      }
    }
  }

  json summary{{"format_version", 1},       {"num_states", model.num_states()}, {"k", cl.k},
               {"k_fallback", cl.k_fallback}, {"gap_ratio", cl.gap_ratio},       {"num_options", cl.options.size()},
               {"heatmaps", heatmaps}};
  json opts = json::array();
  for (const Option& o : cl.options) {
    opts.push_back({{"source", o.source}, {"target", o.target}, {"initiation_size", o.initiation.size()}});
  }
  summary["options"] = std::move(opts);
  io::write_text(dir / "discover_summary.json", summary.dump(2) + "\n");
}

void cmd_train(const ExperimentConfig& c) {
  const GridWorld world = load_world(c);
  const fs::path& dir = c.output.directory;
  io::ensure_directory(dir);
  const int window = c.pipeline.convergence_window;

  // Seeds run one after another; each run owns its own RNG, so order does not affect results.
  std::vector<RunSummary> runs;
  for (std::uint64_t seed : c.pipeline.seeds) {
    const std::string seed_tag = "seed" + std::to_string(seed);
    const OdstcResult flat = run_odstc(world, c.odstc(seed, LearnerKind::Smdp, false));
    io::write_text(dir / ("episodes_flat_" + seed_tag + ".csv"), episodes_csv(flat.history));
    runs.push_back(summarize("flat", seed, flat, window));

    for (LearnerKind kind : c.agent.learners) {
      const std::string name = learner_name(kind);
      const OdstcResult r = run_odstc(world, c.odstc(seed, kind, true));
      io::write_text(dir / ("episodes_" + name + "_" + seed_tag + ".csv"), episodes_csv(r.history));
      if (c.output.snapshots) {
        io::ensure_directory(dir / "snapshots");
        write_snapshots(dir / "snapshots", name + "_" + seed_tag, r);
      }
      runs.push_back(summarize(name, seed, r, window));
    }
  }

  std::string csv =
      "learner,seed,episodes,episodes_to_plateau,final_decision_epochs,final_primitive_steps,"
      "final_discounted_return,goal_rate,num_options\n";
  for (const RunSummary& s : runs) {
    csv += s.learner + "," + std::to_string(s.seed) + "," + std::to_string(s.episodes) + "," +
           (s.plateau ? std::to_string(*s.plateau) : std::string("NA")) + "," +
           io::format_number(s.final_decision_epochs) + "," + io::format_number(s.final_primitive_steps) + "," +
           io::format_number(s.final_discounted_return) + "," + io::format_number(s.goal_rate) + "," +
           std::to_string(s.num_options) + "\n";
  }
  io::write_text(dir / "train_summary.csv", csv);

  json learners = json::object();
  std::vector<std::string> names{"flat"};
  for (LearnerKind kind : c.agent.learners) names.push_back(learner_name(kind));
  for (const std::string& name : names) {
    int plateaus = 0;
    double plateau_sum = 0.0;
    double epochs_sum = 0.0;
    int count = 0;
    for (const RunSummary& s : runs) {
      if (s.learner != name) continue;
      ++count;
      epochs_sum += s.final_decision_epochs;
      if (s.plateau) {
        ++plateaus;
        plateau_sum += *s.plateau;
      }
    }
    json entry{{"runs", count}, {"plateau_found", plateaus}};
    entry["mean_episodes_to_plateau"] = plateaus > 0 ? json(plateau_sum / plateaus) : json(nullptr);
    entry["mean_final_decision_epochs"] = count > 0 ? json(epochs_sum / count) : json(nullptr);
    learners[name] = std::move(entry);
  }
  json summary{{"format_version", 1}, {"convergence_window", window}, {"learners", std::move(learners)}};
  io::write_text(dir / "train_summary.json", summary.dump(2) + "\n");
}

void cmd_aggregate(const ExperimentConfig& c, const fs::path& features_path) {
  if (c.pipeline.k_m < 1) throw ConfigError("pipeline.k_m must be set to a positive microstate count");
  std::ifstream in(features_path);
  if (!in) throw IoError("cannot open feature file " + features_path.string());
  const Eigen::MatrixXd features = read_features(in);

  const GridWorld world = load_world(c);
  if (features.rows() != world.num_states()) {
    throw ConfigError("feature file has " + std::to_string(features.rows()) + " records; expected one per state (" +
                      std::to_string(world.num_states()) + ")");
  }
  MicrostateMap map;
  try {
    map = kmeans(features, c.pipeline.k_m, c.pipeline.seeds.front(), c.pipeline.kmeans_max_iters);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }

  const EstimatedModel state_model = build_model(world, c);
  const EstimatedModel micro_model = aggregate_model(state_model, map.assignments, map.num_microstates);

  const fs::path& dir = c.output.directory;
  io::ensure_directory(dir);
  io::write_text(dir / "microstates.csv", to_text([&](std::ostream& o) { write_microstate_map(o, map); }));
  io::write_text(dir / "microstate_model.csv",
                 to_text([&](std::ostream& o) { write_model_triplets(o, micro_model); }));
  json summary{{"format_version", 1},          {"k_m", map.num_microstates}, {"iterations", map.iterations},
               {"converged", map.converged},    {"sse", map.sse()},           {"points", features.rows()}};
  io::write_text(dir / "aggregate_summary.json", summary.dump(2) + "\n");
}

}  // namespace optdisc
