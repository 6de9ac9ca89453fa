#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "optdisc/agents.hpp"
#include "optdisc/env.hpp"
#include "optdisc/model.hpp"
#include "optdisc/pipeline.hpp"
#include "optdisc/spectral.hpp"

namespace optdisc {

/// Invalid or unreadable experiment configuration (exit status 2).
class ConfigError : public ParseError {
 public:
  using ParseError::ParseError;
};

enum class ModelSource { Sampled, Exhaustive, File };

struct EnvironmentConfig {
  std::filesystem::path map;
  EnvParams params;
  int max_steps = 1000;
};

struct ModelConfig {
  ModelSource source = ModelSource::Sampled;
  ModelParams params;
  bool reward_weighting = false;
  /// Triplet file and its state count, for source = file.
  std::filesystem::path path;
  int num_states = 0;
  /// Optional `point,microstate` map from grid states to the file model's states (heatmaps only).
  std::filesystem::path microstate_map;
};

struct AgentConfig {
  std::vector<LearnerKind> learners{LearnerKind::Smdp};
  double alpha = 0.1;
  double gamma = 0.99;
  EpsilonSchedule epsilon;
  int option_max_steps = 0;
};

struct PipelineConfig {
  int rounds = 60;
  int episodes_per_round = 10;
  int refresh_interval = 10;
  int convergence_window = 50;
  bool stop_on_convergence = false;
  std::vector<std::uint64_t> seeds{1};
  int k_m = 0;
  int kmeans_max_iters = 100;
};

struct OutputConfig {
  std::filesystem::path directory = "out";
  bool memberships = true;
  bool connectivity = true;
  bool options = true;
  bool heatmaps = true;
  bool model = true;
  bool snapshots = false;
};

struct ExperimentConfig {
  EnvironmentConfig environment;
  ModelConfig model;
  SpectralParams spectral;
  AgentConfig agent;
  PipelineConfig pipeline;
  OutputConfig output;

  /// ODSTC settings for one seed and learner; flat runs disable option discovery.
  OdstcConfig odstc(std::uint64_t seed, LearnerKind learner, bool with_options) const;
};

/// Command-line overrides applied on top of the file, in order.
struct ConfigOverrides {
  /// `block.key=value`; the value is read as JSON when it parses, otherwise as a string.
  std::vector<std::string> set;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir;
};

/// Parses and validates a JSON config; relative paths resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                              const ConfigOverrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

std::string learner_name(LearnerKind kind);

/// Exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

/// The commands throw; run_command maps exceptions to exit statuses and prints them to stderr.
void cmd_discover(const ExperimentConfig& config);
void cmd_train(const ExperimentConfig& config);
void cmd_aggregate(const ExperimentConfig& config, const std::filesystem::path& features_path);

/// Membership heatmap: gray level round(255 chi(s, cluster)) per open cell, walls 0.
std::string membership_heatmap(const GridWorld& world, const Eigen::MatrixXd& chi, int cluster);

}  // namespace optdisc
