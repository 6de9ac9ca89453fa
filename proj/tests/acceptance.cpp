// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>

#include "optdisc/experiment.hpp"
#include "optdisc/kmeans.hpp"
#include "optdisc/pipeline.hpp"
#include "oracles.hpp"

using namespace optdisc;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

GridWorld three_room() { return load_gridworld_file(oracle::data_path("three_room.map")); }

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

/// Room of each cluster: the room holding most of its states (-1 when it has none).
std::vector<int> cluster_rooms(const GridWorld& w, const AbstractionIndex& idx) {
  std::vector<int> out;
  for (const auto& members : idx.clusters) {
    std::map<int, int> votes;
    for (StateId s : members) {
      if (oracle::room_of(w, s) >= 0) ++votes[oracle::room_of(w, s)];
    }
    int best = -1;
    int count = 0;
    for (auto [room, n] : votes) {
      if (n > count) {
        best = room;
        count = n;
      }
    }
    out.push_back(best);
  }
  return out;
}

/// Doorway cells (open cells outside the three column bands) and their neighbouring rooms.
std::vector<StateId> doorways(const GridWorld& w) {
  std::vector<StateId> out;
  for (StateId s = 0; s < w.num_states(); ++s) {
    if (oracle::room_of(w, s) < 0) out.push_back(s);
  }
  return out;
}

/// Interior cells match their room's cluster one-to-one; a doorway joins one of the two rooms it links.
bool matches_rooms(const GridWorld& w, const AbstractionIndex& idx, int rooms, std::string& why) {
  std::map<int, int> cluster_of_room;
  for (StateId s = 0; s < w.num_states(); ++s) {
    const int room = oracle::room_of(w, s);
    if (room < 0 || w.is_goal(s)) continue;
    const int c = idx.cluster_of(s);
    auto [it, fresh] = cluster_of_room.emplace(room, c);
    if (!fresh && it->second != c) {
      why = "room " + std::to_string(room) + " split";
      return false;
    }
  }
  std::set<int> distinct;
  for (auto [room, c] : cluster_of_room) distinct.insert(c);
  if (static_cast<int>(distinct.size()) != rooms) {
    why = "rooms share a cluster";
    return false;
  }
  for (StateId d : doorways(w)) {
    std::set<int> allowed;
    for (StateId n : oracle::grid_neighbours(w, d)) {
      if (oracle::room_of(w, n) >= 0) allowed.insert(cluster_of_room.at(oracle::room_of(w, n)));
    }
    if (!allowed.count(idx.cluster_of(d))) {
      why = "doorway " + std::to_string(d) + " outside its rooms";
      return false;
    }
  }
  return true;
}

Verdict room_count() {
  const GridWorld w = three_room();
  const Clustering c = cluster_model(exhaustive_model(w), SpectralParams{}, w.goals());
  if (!c.ok) return {false, c.failure};
  if (c.k != 3) return {false, "k = " + std::to_string(c.k)};
  const AbstractionIndex idx = assign_states(c.chi);
  // With absorbing goal loops and v = 0 the goal cell is an ordinary room cell.
  const bool goal_in_room = idx.cluster_of(w.goals()[0]) == idx.cluster_of(oracle::next_cell(w, w.goals()[0], 3));
  std::string why;
  const bool ok = matches_rooms(w, idx, 3, why) && goal_in_room;
  return {ok, ok ? "k = 3, ratio " + fmt(c.gap_ratio) : (why.empty() ? "goal outside its room" : why)};
}

Verdict goal_cluster() {
  const GridWorld w = three_room();
  const Clustering c = cluster_model(exhaustive_model(w, {3.0}), SpectralParams{}, w.goals());
  if (!c.ok) return {false, c.failure};
  if (c.k != 4) return {false, "k = " + std::to_string(c.k)};
  const AbstractionIndex idx = assign_states(c.chi);
  const StateId goal = w.goals()[0];
  const auto& members = idx.clusters[static_cast<std::size_t>(idx.cluster_of(goal))];
  std::string why;
  const bool rooms = matches_rooms(w, idx, 3, why);
  const bool ok = members == std::vector<StateId>{goal} && rooms;
  return {ok, "k = 4, goal cluster size " + std::to_string(members.size()) + (rooms ? "" : ", " + why)};
}

Verdict bottleneck_termination() {
  const GridWorld w = three_room();
  const Clustering c = cluster_model(exhaustive_model(w), SpectralParams{}, w.goals());
  if (!c.ok || c.options.empty()) return {false, "no options"};
  const AbstractionIndex idx = assign_states(c.chi);
  const std::vector<int> room = cluster_rooms(w, idx);
  double worst_door = 1.0;
  for (const Option& opt : c.options) {
    const int from = room[static_cast<std::size_t>(opt.source)];
    const int to = room[static_cast<std::size_t>(opt.target)];
    StateId best = -1;
    for (StateId s = 0; s < w.num_states(); ++s) {
      if (oracle::room_of(w, s) != from) continue;
      if (best < 0 || opt.beta(s) > opt.beta(best)) best = s;
    }
    bool beside_door = false;
    for (StateId n : oracle::grid_neighbours(w, best)) beside_door |= oracle::room_of(w, n) < 0;
    if (!beside_door) return {false, "option " + std::to_string(from) + "->" + std::to_string(to) + ": argmax beta not at a doorway"};
    for (StateId d : doorways(w)) {
      std::set<int> linked;
      for (StateId n : oracle::grid_neighbours(w, d)) linked.insert(oracle::room_of(w, n));
      if (linked.count(from) && linked.count(to)) worst_door = std::min(worst_door, opt.beta(d));
    }
  }
  return {worst_door >= 0.95, std::to_string(c.options.size()) + " options, min doorway beta " + fmt(worst_door)};
}

Verdict reachability() {
  const GridWorld w = three_room();
  const Clustering c = cluster_model(exhaustive_model(w), SpectralParams{}, w.goals());
  if (!c.ok || c.options.empty()) return {false, "no options"};
  const AbstractionIndex idx = assign_states(c.chi);
  int starts = 0;
  int reached = 0;
  int longest = 0;
  for (const Option& opt : c.options) {
    for (StateId s0 : opt.initiation) {
      ++starts;
      StateId s = s0;
      for (int step = 1; step <= w.num_states() && opt.defined_at(s); ++step) {
        s = w.move(s, opt.greedy_action(s));
        if (idx.cluster_of(s) == opt.target) {
          ++reached;
          longest = std::max(longest, step);
          break;
        }
      }
    }
  }
  return {starts > 0 && reached == starts,
          std::to_string(reached) + "/" + std::to_string(starts) + " starts, longest " + std::to_string(longest) + " steps"};
}

Verdict exact_blocks() {
  double worst_chi = 0.0;
  double worst_residual = 0.0;
  double worst_eig = 0.0;
  for (int b : {2, 3, 4}) {
    std::vector<int> sizes;
    for (int i = 0; i < b; ++i) sizes.push_back(3 + 2 * i);
    const Eigen::MatrixXd adj = oracle::block_adjacency(sizes, 40 + static_cast<std::uint64_t>(b));
    const auto res = pcca(adj, 0.5);
    if (res.k() != b) return {false, "b = " + std::to_string(b) + " gave k = " + std::to_string(res.k())};
    // Indicator: each row one-hot, constant within a block.
    int offset = 0;
    std::set<Eigen::Index> used;
    for (int size : sizes) {
      Eigen::Index col = 0;
      res.membership.chi.row(offset).maxCoeff(&col);
      used.insert(col);
      for (int r = offset; r < offset + size; ++r) {
        Eigen::RowVectorXd unit = Eigen::RowVectorXd::Zero(b);
        unit(col) = 1.0;
        worst_chi = std::max(worst_chi, (res.membership.chi.row(r) - unit).cwiseAbs().maxCoeff());
      }
      offset += size;
    }
    if (static_cast<int>(used.size()) != b) return {false, "blocks share a cluster"};
    const auto dec = decompose(res.laplacian);
    worst_residual = std::max(worst_residual, max_eigen_residual(res.laplacian, dec, dec.eigenvalues.size()));
    const auto ref = oracle::random_walk_spectrum(adj);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      worst_eig = std::max(worst_eig, std::abs(ref[i] - dec.eigenvalues(static_cast<Eigen::Index>(i))));
    }
  }
  const bool ok = worst_chi <= 1e-8 && worst_residual <= 1e-8 && worst_eig <= 1e-8;
  return {ok, "chi err " + fmt(worst_chi) + ", residual " + fmt(worst_residual) + ", eig vs Jacobi " + fmt(worst_eig)};
}

Verdict smdp_fixpoint() {
  const GridWorld w = three_room();
  const int n = w.num_states();
  const double gamma = 0.95;
  const Clustering c = cluster_model(exhaustive_model(w), SpectralParams{}, w.goals());
  if (!c.ok || c.options.empty()) return {false, "no options"};

  // Deterministic versions of the discovered options: greedy mu, stop exactly where beta = 1.
  std::vector<Option> opts;
  std::vector<oracle::ChoiceModel> models;
  for (int a = 0; a < kNumActions; ++a) {
    models.push_back(oracle::solve_choice(w, std::vector<int>(static_cast<std::size_t>(n), a),
                                          std::vector<char>(static_cast<std::size_t>(n), 1), gamma));
  }
  for (const Option& src : c.options) {
    Option det = src;
    std::vector<int> action(static_cast<std::size_t>(n), -1);
    std::vector<char> stop(static_cast<std::size_t>(n), 1);
    for (StateId s = 0; s < n; ++s) {
      if (src.defined_at(s)) {
        const ActionId a = src.greedy_action(s);
        action[static_cast<std::size_t>(s)] = a;
        det.policy[static_cast<std::size_t>(s)].assign(kNumActions, 0.0);
        det.policy[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] = 1.0;
      }
      det.termination[static_cast<std::size_t>(s)] = src.beta(s) >= 1.0 ? 1.0 : 0.0;
      stop[static_cast<std::size_t>(s)] = det.beta(s) >= 1.0;
    }
    opts.push_back(std::move(det));
    models.push_back(oracle::solve_choice(w, action, stop, gamma));
  }
  std::vector<std::vector<int>> available(static_cast<std::size_t>(n));
  for (StateId s = 0; s < n; ++s) {
    if (!w.is_goal(s)) available[static_cast<std::size_t>(s)] = available_choices(s, opts);
  }
  const Eigen::MatrixXd exact = oracle::smdp_value_iteration(models, available);

  QTable q(n, kNumActions, static_cast<int>(opts.size()), 1.0, gamma);
  Rng rng(1);
  int sweeps = 0;
  double worst = 0.0;
  for (sweeps = 1; sweeps <= 2000; ++sweeps) {
    for (StateId s = 0; s < n; ++s) {
      for (int ch : available[static_cast<std::size_t>(s)]) {
        if (!q.is_option(ch)) {
          const StepResult r = w.step(s, ch, rng);
          smdp_q_update(q, s, ch, r.reward, 1, r.next, available_choices(r.next, opts), r.done);
          continue;
        }
        const OptionRollout roll = run_option(w, opts[static_cast<std::size_t>(ch - kNumActions)], s, rng, 10 * n, gamma);
        smdp_q_update(q, s, ch, roll.discounted_reward, roll.duration, roll.end, available_choices(roll.end, opts), roll.done);
      }
    }
    worst = 0.0;
    for (StateId s = 0; s < n; ++s) {
      for (int ch : available[static_cast<std::size_t>(s)]) worst = std::max(worst, std::abs(q(s, ch) - exact(s, ch)));
    }
    if (worst < 1e-10) break;
  }
  return {worst <= 1e-4, "max |Q - Q*| " + fmt(worst) + " after " + std::to_string(sweeps) + " sweeps"};
}

Verdict option_speedup() {
  const ExperimentConfig cfg = load_config(fs::path(OPTDISC_SOURCE_DIR) / "configs" / "three_room.json");
  const GridWorld w = load_gridworld_file(cfg.environment.map, cfg.environment.params);
  const int window = cfg.pipeline.convergence_window;
  auto measure = [&](bool with_options) {
    double plateau = 0.0;
    double epochs = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const OdstcResult r = run_odstc(w, cfg.odstc(seed, LearnerKind::Smdp, with_options));
      // A run that never plateaus counts as its full length.
      plateau += episodes_to_plateau(r.history, window).value_or(static_cast<int>(r.history.size()));
      const auto tail = std::span<const EpisodeLog>(r.history).last(static_cast<std::size_t>(window));
      for (const EpisodeLog& log : tail) epochs += log.decision_epochs;
    }
    return std::pair{plateau / 10.0, epochs / (10.0 * window)};
  };
  const auto [flat_plateau, flat_epochs] = measure(false);
  const auto [opt_plateau, opt_epochs] = measure(true);
  const bool ok = opt_plateau <= flat_plateau && opt_epochs < flat_epochs;
  return {ok, "plateau " + fmt(opt_plateau) + " vs flat " + fmt(flat_plateau) + ", decision epochs " + fmt(opt_epochs) +
                  " vs flat " + fmt(flat_epochs)};
}

Verdict intra_breadth() {
  const GridWorld w = three_room();
  const Clustering c = cluster_model(exhaustive_model(w), SpectralParams{}, w.goals());
  if (!c.ok || c.options.empty()) return {false, "no options"};
  Rng rng(21);
  const Trajectory traj = sample_trajectory(w, uniform_random_policy(), 2000, rng);
  QTable q(w.num_states(), kNumActions, static_cast<int>(c.options.size()), 0.1, 0.99);
  int consistent = 0;
  int broader = 0;
  for (const Transition& t : traj.steps) {
    bool any = false;
    for (const Option& o : c.options) any |= o.action_prob(t.state, t.action) > 0.0;
    const int touched = intra_option_q_update(q, t, c.options, available_choices(t.next, c.options), w.is_goal(t.next));
    if (!any) continue;
    ++consistent;
    broader += touched > 1;
  }
  return {consistent > 0 && broader == consistent,
          std::to_string(broader) + "/" + std::to_string(consistent) + " consistent transitions of " +
              std::to_string(traj.steps.size())};
}

Verdict aggregation() {
  const GridWorld w = three_room();
  std::vector<int> assign(static_cast<std::size_t>(w.num_states()));
  for (StateId s = 0; s < w.num_states(); ++s) {
    const int room = oracle::room_of(w, s);
    assign[static_cast<std::size_t>(s)] = room >= 0 ? room : (w.position(s).second == 6 ? 0 : 1);
  }
  const EstimatedModel agg = aggregate_model(exhaustive_model(w), assign, 3);
  const Eigen::MatrixXd adj = adjacency(agg);
  const bool chain = adj(0, 1) > 0.0 && adj(1, 2) > 0.0 && adj(0, 2) == 0.0;

  // The gap test cannot select k = N, so the full three-vector basis is used.
  const auto lap = build_laplacian(adj);
  const auto dec = decompose(lap);
  const auto vtx = find_simplex_vertices(dec.eigenvectors);
  const auto mem = compute_memberships(dec.eigenvectors, vtx.indices);
  double chi_err = 0.0;
  for (Eigen::Index r = 0; r < 3; ++r) chi_err = std::max(chi_err, std::abs(mem.chi.row(r).maxCoeff() - 1.0));

  int good = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 gen(500 + seed);
    std::normal_distribution<double> noise(0.0, 0.5);
    Eigen::MatrixXd x(200, 2);
    std::vector<int> truth;
    for (int i = 0; i < 200; ++i) {
      const int b = i < 100 ? 0 : 1;
      x(i, 0) = (b ? 5.0 : -5.0) + noise(gen);
      x(i, 1) = noise(gen);
      truth.push_back(b);
    }
    const MicrostateMap m = kmeans(x, 2, seed);
    int same = 0;
    for (int i = 0; i < 200; ++i) same += m.assignments[static_cast<std::size_t>(i)] == truth[static_cast<std::size_t>(i)];
    good += std::max(same, 200 - same) >= 198;
  }
  const bool ok = chain && chi_err <= 1e-8 && good == 20;
  return {ok, std::string(chain ? "chain" : "not a chain") + ", chi err " + fmt(chi_err) + ", k-means " +
                  std::to_string(good) + "/20 seeds >= 99%"};
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / ("optdisc_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const fs::path config = fs::path(OPTDISC_SOURCE_DIR) / "configs" / "three_room.json";
  for (const char* run : {"a", "b"}) {
    ConfigOverrides o;
    o.seeds = {1};
    o.out_dir = root / run;
    const ExperimentConfig cfg = load_config(config, o);
    cmd_discover(cfg);
    cmd_train(cfg);
  }
  int files = 0;
  int identical = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    auto slurp = [](const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    ++files;
    identical += slurp(entry.path()) == slurp(root / "b" / entry.path().filename());
  }
  fs::remove_all(root);
  return {files > 0 && identical == files, std::to_string(identical) + "/" + std::to_string(files) + " files identical"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"three rooms give three abstract states", room_count},
      {"reward weighting isolates the goal", goal_cluster},
      {"termination peaks at doorways", bottleneck_termination},
      {"greedy option execution reaches the target", reachability},
      {"exact blocks recovered", exact_blocks},
      {"SMDP Q-learning fixpoint", smdp_fixpoint},
      {"options speed up learning", option_speedup},
      {"intra-option updates are broader", intra_breadth},
      {"aggregation recovers rooms and components", aggregation},
      {"outputs are deterministic", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Verdict out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !out.pass;
    std::printf("[%s] %zu: %s (%s; %.2fs)\n", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                out.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
