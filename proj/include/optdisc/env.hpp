#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

#include "optdisc/error.hpp"

namespace optdisc {

using StateId = int;
using ActionId = int;
using Rng = std::mt19937_64;

inline constexpr int kNumActions = 4;

/// Compass actions in the fixed order used everywhere (N, E, S, W).
enum class Action : ActionId { North = 0, East = 1, South = 2, West = 3 };

inline constexpr std::array<char, kNumActions> kActionNames = {'N', 'E', 'S', 'W'};

enum class Cell : std::uint8_t { Wall, Open, Start, Goal };

struct EnvParams {
  double goal_reward = 1.0;
  double step_reward = 0.0;
  double slip_prob = 0.0;
};

class MapParseError : public ParseError {
 public:
  enum class Kind { Empty, NonRectangular, NoStart, MultipleStarts, NoGoal, UnknownCharacter };

  MapParseError(Kind kind, const std::string& what) : ParseError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct Transition {
  StateId state;
  ActionId action;
  double reward;
  StateId next;

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct Trajectory {
  std::vector<Transition> steps;
  bool terminated = false;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct StepResult {
  StateId next;
  double reward;
  bool done;
};

/// One (successor, probability) pair of the true dynamics.
struct Outcome {
  StateId next;
  double prob;
};

/// Immutable tabular gridworld. Open cells are numbered row-major.
class GridWorld {
 public:
  GridWorld(int width, int height, std::vector<Cell> cells, EnvParams params);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int num_states() const noexcept { return static_cast<int>(positions_.size()); }
  const EnvParams& params() const noexcept { return params_; }

  Cell cell(int row, int col) const { return cells_[static_cast<std::size_t>(row * width_ + col)]; }
  std::optional<StateId> state_at(int row, int col) const;
  std::pair<int, int> position(StateId s) const;

  StateId start() const noexcept { return start_; }
  const std::vector<StateId>& goals() const noexcept { return goals_; }
  bool is_goal(StateId s) const;

  /// Cell reached by an unslipped move; walls and the border leave the state unchanged.
  StateId move(StateId s, ActionId a) const;

  /// Exact next-state distribution (merged duplicates, sorted by state).
  std::vector<Outcome> kernel(StateId s, ActionId a) const;

  double reward_for(StateId next) const { return is_goal(next) ? params_.goal_reward : params_.step_reward; }

  StepResult step(StateId s, ActionId a, Rng& rng) const;

 private:
  void check_state(StateId s) const;
  void check_action(ActionId a) const;

  int width_;
  int height_;
  std::vector<Cell> cells_;
  std::vector<int> state_of_cell_;
  std::vector<std::pair<int, int>> positions_;
  std::vector<StateId> goals_;
  std::vector<char> goal_mask_;
  StateId start_ = -1;
  EnvParams params_;
};

GridWorld load_gridworld(std::string_view map_text, const EnvParams& params = {});
GridWorld load_gridworld_file(const std::filesystem::path& path, const EnvParams& params = {});

/// Behavioural policy: picks an action for a state.
using BehaviorPolicy = std::function<ActionId(StateId, Rng&)>;

BehaviorPolicy uniform_random_policy();

Trajectory sample_trajectory(const GridWorld& world, const BehaviorPolicy& policy, int max_steps, Rng& rng);

/// Every (s, a) pair from every non-goal state, each taken once with the unslipped move.
/// Used to build the exhaustively sampled model.
std::vector<Transition> enumerate_transitions(const GridWorld& world);

}  // namespace optdisc
