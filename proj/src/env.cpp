#include "optdisc/env.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>

namespace optdisc {

namespace {

constexpr std::array<std::pair<int, int>, kNumActions> kOffsets = {{{-1, 0}, {0, 1}, {1, 0}, {0, -1}}};

std::array<ActionId, 2> perpendicular(ActionId a) {
  if (a == static_cast<ActionId>(Action::North) || a == static_cast<ActionId>(Action::South)) {
    return {static_cast<ActionId>(Action::East), static_cast<ActionId>(Action::West)};
  }
  return {static_cast<ActionId>(Action::North), static_cast<ActionId>(Action::South)};
}

}  // namespace

GridWorld::GridWorld(int width, int height, std::vector<Cell> cells, EnvParams params)
    : width_(width), height_(height), cells_(std::move(cells)), params_(params) {
  if (width_ <= 0 || height_ <= 0 || cells_.size() != static_cast<std::size_t>(width_) * height_) {
    throw InvalidArgument("grid dimensions do not match cell count");
  }
  if (!(params_.slip_prob >= 0.0 && params_.slip_prob <= 1.0)) {
    throw InvalidArgument("slip_prob must lie in [0, 1]");
  }
  state_of_cell_.assign(cells_.size(), -1);
  int starts = 0;
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      const Cell kind = cell(r, c);
      if (kind == Cell::Wall) continue;
      const StateId s = static_cast<StateId>(positions_.size());
      state_of_cell_[static_cast<std::size_t>(r * width_ + c)] = s;
      positions_.emplace_back(r, c);
      if (kind == Cell::Start) {
        start_ = s;
        ++starts;
      } else if (kind == Cell::Goal) {
        goals_.push_back(s);
      }
    }
  }
  if (starts != 1) throw InvalidArgument("grid must contain exactly one start cell");
  if (goals_.empty()) throw InvalidArgument("grid must contain at least one goal cell");
  goal_mask_.assign(positions_.size(), 0);
  for (StateId g : goals_) goal_mask_[static_cast<std::size_t>(g)] = 1;
}

std::optional<StateId> GridWorld::state_at(int row, int col) const {
  if (row < 0 || row >= height_ || col < 0 || col >= width_) return std::nullopt;
  const int s = state_of_cell_[static_cast<std::size_t>(row * width_ + col)];
  if (s < 0) return std::nullopt;
  return s;
}

std::pair<int, int> GridWorld::position(StateId s) const {
  check_state(s);
  return positions_[static_cast<std::size_t>(s)];
}

bool GridWorld::is_goal(StateId s) const {
  check_state(s);
  return goal_mask_[static_cast<std::size_t>(s)] != 0;
}

void GridWorld::check_state(StateId s) const {
  if (s < 0 || s >= num_states()) throw InvalidArgument("invalid state id " + std::to_string(s));
}

void GridWorld::check_action(ActionId a) const {
  if (a < 0 || a >= kNumActions) throw InvalidArgument("invalid action id " + std::to_string(a));
}

StateId GridWorld::move(StateId s, ActionId a) const {
  check_state(s);
  check_action(a);
  const auto [r, c] = positions_[static_cast<std::size_t>(s)];
  const auto [dr, dc] = kOffsets[static_cast<std::size_t>(a)];
  return state_at(r + dr, c + dc).value_or(s);
}

std::vector<Outcome> GridWorld::kernel(StateId s, ActionId a) const {
  std::vector<Outcome> out;
  auto add = [&out](StateId next, double p) {
    if (p <= 0.0) return;
    auto it = std::find_if(out.begin(), out.end(), [next](const Outcome& o) { return o.next == next; });
    if (it == out.end()) {
      out.push_back({next, p});
    } else {
      it->prob += p;
    }
  };
  add(move(s, a), 1.0 - params_.slip_prob);
  for (ActionId side : perpendicular(a)) add(move(s, side), 0.5 * params_.slip_prob);
  std::sort(out.begin(), out.end(), [](const Outcome& x, const Outcome& y) { return x.next < y.next; });
  return out;
}

StepResult GridWorld::step(StateId s, ActionId a, Rng& rng) const {
  check_state(s);
  check_action(a);
  if (is_goal(s)) throw InvalidArgument("step from terminal state " + std::to_string(s));
  ActionId taken = a;
  if (params_.slip_prob > 0.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < params_.slip_prob) {
      const auto sides = perpendicular(a);
      taken = sides[unit(rng) < 0.5 ? 0 : 1];
    }
  }
  const StateId next = move(s, taken);
  const bool done = is_goal(next);
  return {next, reward_for(next), done};
}

GridWorld load_gridworld(std::string_view map_text, const EnvParams& params) {
  using Kind = MapParseError::Kind;
  std::vector<std::string> rows;
  std::string line;
  std::istringstream in{std::string(map_text)};
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    rows.push_back(line);
  }
  while (!rows.empty() && rows.back().empty()) rows.pop_back();
  if (rows.empty() || rows.front().empty()) throw MapParseError(Kind::Empty, "map is empty");

  const std::size_t width = rows.front().size();
  std::vector<Cell> cells;
  cells.reserve(width * rows.size());
  int starts = 0;
  int goals = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width) {
      throw MapParseError(Kind::NonRectangular, "map row " + std::to_string(r + 1) + " has length " +
                                                    std::to_string(rows[r].size()) + ", expected " +
                                                    std::to_string(width));
    }
    for (std::size_t c = 0; c < width; ++c) {
      switch (rows[r][c]) {
        case '#': cells.push_back(Cell::Wall); break;
        case '.': cells.push_back(Cell::Open); break;
        case 'S': cells.push_back(Cell::Start); ++starts; break;
        case 'G': cells.push_back(Cell::Goal); ++goals; break;
        default:
          throw MapParseError(Kind::UnknownCharacter, "unknown map character '" + std::string(1, rows[r][c]) +
                                                          "' at row " + std::to_string(r + 1) + ", column " +
                                                          std::to_string(c + 1));
      }
    }
  }
  if (starts == 0) throw MapParseError(Kind::NoStart, "map has no start cell 'S'");
  if (starts > 1) throw MapParseError(Kind::MultipleStarts, "map has " + std::to_string(starts) + " start cells");
  if (goals == 0) throw MapParseError(Kind::NoGoal, "map has no goal cell 'G'");
  return GridWorld(static_cast<int>(width), static_cast<int>(rows.size()), std::move(cells), params);
}

GridWorld load_gridworld_file(const std::filesystem::path& path, const EnvParams& params) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open map file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return load_gridworld(text.str(), params);
}

BehaviorPolicy uniform_random_policy() {
  return [](StateId, Rng& rng) {
    std::uniform_int_distribution<ActionId> pick(0, kNumActions - 1);
    return pick(rng);
  };
}

Trajectory sample_trajectory(const GridWorld& world, const BehaviorPolicy& policy, int max_steps, Rng& rng) {
  if (max_steps < 1) throw InvalidArgument("max_steps must be at least 1");
  Trajectory traj;
  StateId s = world.start();
  for (int t = 0; t < max_steps; ++t) {
    const ActionId a = policy(s, rng);
    const StepResult res = world.step(s, a, rng);
    traj.steps.push_back({s, a, res.reward, res.next});
    s = res.next;
    if (res.done) {
      traj.terminated = true;
      break;
    }
  }
  return traj;
}

std::vector<Transition> enumerate_transitions(const GridWorld& world) {
  std::vector<Transition> out;
  for (StateId s = 0; s < world.num_states(); ++s) {
    if (world.is_goal(s)) continue;
    for (ActionId a = 0; a < kNumActions; ++a) {
      const StateId next = world.move(s, a);
      out.push_back({s, a, world.reward_for(next), next});
    }
  }
  return out;
}

}  // namespace optdisc
