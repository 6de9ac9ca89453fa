#include "optdisc/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "optdisc/io.hpp"

namespace optdisc {

namespace {

using nlohmann::json;

std::string line_column(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  int line = 1;
  std::size_t line_start = 0;
  for (std::size_t i = 0; i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      line_start = i + 1;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(byte - line_start);
}

/// Reads the keys of one block and rejects any key nobody asked for.
class Block {
 public:
  Block(const json& root, std::string name) : name_(std::move(name)) {
    if (root.contains(name_)) bind(root.at(name_));
  }
  /// A nested object that is itself the block.
  Block(const json* node, std::string name) : name_(std::move(name)) { bind(*node); }

  const json* find(const std::string& key) {
    seen_.insert(key);
    if (node_ == nullptr || !node_->contains(key)) return nullptr;
    return &node_->at(key);
  }

  template <typename T>
  void read(const std::string& key, T& target) {
    const json* v = find(key);
    if (v == nullptr) return;
    try {
      target = v->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key " + path(key) + " has the wrong type (" + v->type_name() + ")");
    }
  }

  void read_path(const std::string& key, std::filesystem::path& target, const std::filesystem::path& base) {
    std::string text;
    read(key, text);
    if (!text.empty()) target = base / text;
  }

  std::string path(const std::string& key) const { return name_ + "." + key; }

  void bind(const json& node) {
    if (!node.is_object()) throw ConfigError("config block '" + name_ + "' must be an object");
    node_ = &node;
  }

  void finish() const {
    if (node_ == nullptr) return;
    for (const auto& [key, value] : node_->items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key " + path(key));
    }
  }

 private:
  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

LearnerKind parse_learner(const std::string& name) {
  if (name == "smdp") return LearnerKind::Smdp;
  if (name == "intra_option") return LearnerKind::IntraOption;
  throw ConfigError("unknown learner '" + name + "' (expected smdp or intra_option)");
}

ModelSource parse_source(const std::string& name) {
  if (name == "sampled") return ModelSource::Sampled;
  if (name == "exhaustive") return ModelSource::Exhaustive;
  if (name == "file") return ModelSource::File;
  throw ConfigError("unknown model source '" + name + "' (expected sampled, exhaustive or file)");
}

void apply_set(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects block.key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  if (key.find('.') == std::string::npos) throw ConfigError("--set key must name a block: '" + key + "'");

  std::string pointer;
  std::stringstream parts(key);
  for (std::string part; std::getline(parts, part, '.');) {
    if (part.empty()) throw ConfigError("--set key has an empty component: '" + key + "'");
    pointer += "/" + part;
  }
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;
  root[json::json_pointer(pointer)] = std::move(parsed);
}

void validate(const ExperimentConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(!c.environment.map.empty(), "environment.map is required");
  require(std::filesystem::is_regular_file(c.environment.map),
          "environment.map does not exist: " + c.environment.map.string());
  const EnvParams& e = c.environment.params;
  require(e.slip_prob >= 0.0 && e.slip_prob <= 1.0, "environment.slip_prob must lie in [0, 1]");
  require(c.environment.max_steps >= 1, "environment.max_steps must be >= 1");
  if (c.model.source == ModelSource::File) {
    require(std::filesystem::is_regular_file(c.model.path), "model.path does not exist: " + c.model.path.string());
    require(c.model.num_states >= 1, "model.num_states must be >= 1 for source = file");
  }
  if (!c.model.microstate_map.empty()) {
    require(std::filesystem::is_regular_file(c.model.microstate_map),
            "model.microstate_map does not exist: " + c.model.microstate_map.string());
  }
  require(!c.agent.learners.empty(), "agent.learner must name at least one learner");
  require(!c.pipeline.seeds.empty(), "pipeline.seeds must not be empty");
  require(c.pipeline.k_m >= 0, "pipeline.k_m must be >= 0");
  require(c.pipeline.kmeans_max_iters >= 1, "pipeline.kmeans_max_iters must be >= 1");
  require(!c.output.directory.empty(), "output.directory must not be empty");
  try {
    c.odstc(c.pipeline.seeds.front(), c.agent.learners.front(), true).validate();
  } catch (const InvalidArgument& err) {
    throw ConfigError(err.what());
  }
}

}  // namespace

std::string learner_name(LearnerKind kind) { return kind == LearnerKind::Smdp ? "smdp" : "intra_option"; }

OdstcConfig ExperimentConfig::odstc(std::uint64_t seed, LearnerKind learner, bool with_options) const {
  OdstcConfig out;
  out.episodes_per_round = pipeline.episodes_per_round;
  out.pcca_refresh_interval = pipeline.refresh_interval;
  out.max_rounds = pipeline.rounds;
  out.discover_options = with_options;
  out.reward_weighting = model.reward_weighting;
  out.model = model.params;
  out.spectral = spectral;
  out.epsilon = agent.epsilon;
  out.alpha = agent.alpha;
  out.gamma = agent.gamma;
  out.seed = seed;
  out.learner = learner;
  out.max_steps = environment.max_steps;
  out.option_max_steps = agent.option_max_steps;
  out.convergence_window = pipeline.convergence_window;
  out.stop_on_convergence = pipeline.stop_on_convergence;
  return out;
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                              const ConfigOverrides& overrides) {
  json root;
  try {
    root = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error at " + line_column(text, e.byte) + ": " + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const std::string& s : overrides.set) apply_set(root, s);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("--set: ") + e.what());
  }

  static const std::set<std::string> blocks{"environment", "model", "spectral", "agent", "pipeline", "output"};
  for (const auto& [key, value] : root.items()) {
    if (!blocks.count(key)) throw ConfigError("unknown config block '" + key + "'");
  }

  ExperimentConfig c;
  {
    Block b(root, "environment");
    b.read_path("map", c.environment.map, base_dir);
    b.read("goal_reward", c.environment.params.goal_reward);
    b.read("step_reward", c.environment.params.step_reward);
    b.read("slip_prob", c.environment.params.slip_prob);
    b.read("max_steps", c.environment.max_steps);
    b.finish();
  }
  {
    Block b(root, "model");
    std::string source = "sampled";
    b.read("source", source);
    c.model.source = parse_source(source);
    b.read("v", c.model.params.v);
    b.read("d_prior", c.model.params.d_prior);
    b.read("u_prior", c.model.params.u_prior);
    b.read("absorbing_terminals", c.model.params.absorbing_terminals);
    b.read("reward_weighting", c.model.reward_weighting);
    b.read_path("path", c.model.path, base_dir);
    b.read("num_states", c.model.num_states);
    b.read_path("microstate_map", c.model.microstate_map, base_dir);
    b.finish();
  }
  {
    Block b(root, "spectral");
    b.read("t_c", c.spectral.t_c);
    b.read("tau_conn", c.spectral.tau_conn);
    b.finish();
  }
  {
    Block b(root, "agent");
    if (const json* v = b.find("learner")) {
      c.agent.learners.clear();
      if (v->is_string()) {
        c.agent.learners.push_back(parse_learner(v->get<std::string>()));
      } else if (v->is_array()) {
        for (const json& item : *v) {
          if (!item.is_string()) throw ConfigError("agent.learner entries must be strings");
          c.agent.learners.push_back(parse_learner(item.get<std::string>()));
        }
      } else {
        throw ConfigError("agent.learner must be a string or an array of strings");
      }
    }
    b.read("alpha", c.agent.alpha);
    b.read("gamma", c.agent.gamma);
    b.read("option_max_steps", c.agent.option_max_steps);
    if (const json* v = b.find("epsilon")) {
      if (v->is_number()) {
        c.agent.epsilon = {v->get<double>(), v->get<double>(), 0};
      } else {
        Block inner(v, "agent.epsilon");
        inner.read("start", c.agent.epsilon.start);
        inner.read("end", c.agent.epsilon.end);
        inner.read("decay_episodes", c.agent.epsilon.decay_episodes);
        inner.finish();
      }
    }
    b.finish();
  }
  {
    Block b(root, "pipeline");
    b.read("rounds", c.pipeline.rounds);
    b.read("episodes_per_round", c.pipeline.episodes_per_round);
    b.read("refresh_interval", c.pipeline.refresh_interval);
    b.read("convergence_window", c.pipeline.convergence_window);
    b.read("stop_on_convergence", c.pipeline.stop_on_convergence);
    b.read("seeds", c.pipeline.seeds);
    b.read("k_m", c.pipeline.k_m);
    b.read("kmeans_max_iters", c.pipeline.kmeans_max_iters);
    b.finish();
  }
  {
    Block b(root, "output");
    b.read_path("directory", c.output.directory, base_dir);
    b.read("memberships", c.output.memberships);
    b.read("connectivity", c.output.connectivity);
    b.read("options", c.output.options);
    b.read("heatmaps", c.output.heatmaps);
    b.read("model", c.output.model);
    b.read("snapshots", c.output.snapshots);
    b.finish();
  }

  if (!overrides.seeds.empty()) c.pipeline.seeds = overrides.seeds;
  if (!overrides.out_dir.empty()) c.output.directory = overrides.out_dir;
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path.parent_path(), overrides);
}

}  // namespace optdisc
