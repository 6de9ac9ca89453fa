#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "optdisc/experiment.hpp"

namespace {

template <typename Fn>
int run_command(Fn&& fn) {
  try {
    fn();
    return optdisc::kExitOk;
  } catch (const optdisc::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return optdisc::kExitIo;
  } catch (const optdisc::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return optdisc::kExitNumeric;
  } catch (const optdisc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return optdisc::kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return optdisc::kExitIo;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Option discovery on tabular gridworlds"};
  app.require_subcommand(1);

  std::string config_path;
  std::string features_path;
  optdisc::ConfigOverrides overrides;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", config_path, "JSON experiment config")->required();
    cmd->add_option("--set", overrides.set, "Override a config key: block.key=value (repeatable)");
    cmd->add_option("--seed", seeds, "Seed(s); replaces pipeline.seeds");
    cmd->add_option("--out-dir", out_dir, "Output directory; replaces output.directory");
  };
  CLI::App* discover = app.add_subcommand("discover", "Cluster a model and export memberships, options and heatmaps");
  add_common(discover);
  CLI::App* train = app.add_subcommand("train", "Run flat and option learners, export learning curves");
  add_common(train);
  CLI::App* aggregate = app.add_subcommand("aggregate", "k-means microstates from a feature file");
  add_common(aggregate);
  aggregate->add_option("--features", features_path, "Feature file, one record per state")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : optdisc::kExitConfig;
  }

  overrides.seeds = seeds;
  overrides.out_dir = out_dir;
  optdisc::ExperimentConfig config;
  if (const int code = run_command([&] { config = optdisc::load_config(config_path, overrides); }); code != 0) {
    return code;
  }
  if (*discover) return run_command([&] { optdisc::cmd_discover(config); });
  if (*train) return run_command([&] { optdisc::cmd_train(config); });
  return run_command([&] { optdisc::cmd_aggregate(config, features_path); });
}
