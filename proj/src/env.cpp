#include "sil/env.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include "sil/error.hpp"

namespace sil::env {
namespace {

constexpr std::string_view kAlphabet = "#.SAKDT";
constexpr std::size_t kMaxApples = 32;

// Cells reachable from `from` when doors count as walls.
std::vector<bool> reachable_without_door(const std::vector<std::string>& lines, Cell from) {
  const int rows = static_cast<int>(lines.size());
  const int cols = static_cast<int>(lines[0].size());
  std::vector<bool> seen(static_cast<std::size_t>(rows * cols), false);
  std::deque<Cell> frontier{from};
  seen[static_cast<std::size_t>(from.row * cols + from.col)] = true;
  while (!frontier.empty()) {
    const Cell c = frontier.front();
    frontier.pop_front();
    const int dr[] = {-1, 1, 0, 0};
    const int dc[] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      const int r = c.row + dr[k];
      const int q = c.col + dc[k];
      if (r < 0 || r >= rows || q < 0 || q >= cols) continue;
      const char ch = lines[static_cast<std::size_t>(r)][static_cast<std::size_t>(q)];
      const auto idx = static_cast<std::size_t>(r * cols + q);
      if (ch == '#' || ch == 'D' || seen[idx]) continue;
      seen[idx] = true;
      frontier.push_back({r, q});
    }
  }
  return seen;
}

}  // namespace

GridSpec GridSpec::parse(std::string_view text, RewardTable rewards, int time_limit) {
  GridSpec spec;
  std::string line;
  std::istringstream in{std::string(text)};
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    spec.lines_.push_back(line);
  }
  if (spec.lines_.empty()) throw ConfigError("map is empty");
  if (time_limit <= 0) throw ConfigError("time_limit must be positive");

  spec.rows_ = static_cast<int>(spec.lines_.size());
  spec.cols_ = static_cast<int>(spec.lines_[0].size());
  int starts = 0;
  for (int r = 0; r < spec.rows_; ++r) {
    const auto& row = spec.lines_[static_cast<std::size_t>(r)];
    if (static_cast<int>(row.size()) != spec.cols_)
      throw ConfigError("map is not rectangular (row " + std::to_string(r) + ")");
    for (int c = 0; c < spec.cols_; ++c) {
      const char ch = row[static_cast<std::size_t>(c)];
      if (kAlphabet.find(ch) == std::string_view::npos)
        throw ConfigError(std::string("map contains invalid character '") + ch + "'");
      const Cell cell{r, c};
      switch (ch) {
        case 'S':
          ++starts;
          spec.start_ = cell;
          break;
        case 'A':
          spec.apples_.push_back(cell);
          break;
        case 'K':
          if (spec.key_) throw ConfigError("map has more than one key");
          spec.key_ = cell;
          break;
        case 'D':
          if (spec.door_) throw ConfigError("map has more than one door");
          spec.door_ = cell;
          break;
        case 'T':
          spec.treasures_.push_back(cell);
          break;
        default:
          break;
      }
    }
  }
  if (starts != 1) throw ConfigError("map must contain exactly one start, found " + std::to_string(starts));
  if (spec.treasures_.empty()) throw ConfigError("map must contain at least one treasure");
  if (spec.apples_.size() > kMaxApples) throw ConfigError("map has more than 32 apples");

  if (spec.door_) {
    if (!spec.key_) throw ConfigError("map has a door but no key");
    const auto seen = reachable_without_door(spec.lines_, spec.start_);
    auto reached = [&](Cell c) { return seen[static_cast<std::size_t>(c.row * spec.cols_ + c.col)]; };
    if (!reached(*spec.key_)) throw ConfigError("key is not reachable from the start without the door");
    for (const auto& t : spec.treasures_)
      if (reached(t)) throw ConfigError("treasure is reachable without opening the door");
  }

  spec.rewards_ = rewards;
  spec.time_limit_ = time_limit;
  return spec;
}

GridSpec GridSpec::load(const std::filesystem::path& path, RewardTable rewards, int time_limit) {
  std::ifstream file(path);
  if (!file) throw ConfigError("cannot open map file: " + path.string());
  std::stringstream buffer;
  buffer << file.rdbuf();
  return parse(buffer.str(), rewards, time_limit);
}

char GridSpec::at(int row, int col) const {
  if (row < 0 || row >= rows_ || col < 0 || col >= cols_) return '#';
  return lines_[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)];
}

double GridSpec::key_door_treasure_return() const {
  double total = rewards_.treasure;
  if (key_) total += rewards_.key;
  if (door_) total += rewards_.door;
  return total;
}

double GridSpec::full_collection_return() const {
  return key_door_treasure_return() + rewards_.apple * static_cast<double>(apples_.size());
}

std::optional<std::size_t> GridSpec::apple_index(Cell c) const {
  const auto it = std::find(apples_.begin(), apples_.end(), c);
  if (it == apples_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - apples_.begin());
}

void encode_obs(const GridState& state, const GridSpec& spec, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const auto cells = static_cast<std::size_t>(spec.rows() * spec.cols());
  out[static_cast<std::size_t>(state.pos.row * spec.cols() + state.pos.col)] = 1.0;
  out[cells] = state.has_key ? 1.0 : 0.0;
  out[cells + 1] = state.door_open ? 1.0 : 0.0;
  for (std::size_t i = 0; i < spec.apples().size(); ++i)
    out[cells + 2 + i] = (state.apples_collected >> i) & 1u ? 1.0 : 0.0;
}

std::vector<double> encode_obs(const GridState& state, const GridSpec& spec) {
  std::vector<double> out(spec.obs_dim());
  encode_obs(state, spec, out);
  return out;
}

std::uint64_t state_key(const GridState& s) {
  return (static_cast<std::uint64_t>(s.pos.row) << 48) |
         (static_cast<std::uint64_t>(s.pos.col) << 36) |
         (static_cast<std::uint64_t>(s.has_key) << 35) |
         (static_cast<std::uint64_t>(s.door_open) << 34) |
         static_cast<std::uint64_t>(s.apples_collected);
}

GridWorld::GridWorld(GridSpec spec) : spec_(std::move(spec)) { reset(); }

std::vector<double> GridWorld::reset(std::uint64_t /*seed*/) {
  state_ = GridState{};
  state_.pos = spec_.start();
  return encode_obs(state_, spec_);
}

StepResult GridWorld::step(Action action) {
  if (state_.done) throw UsageError("step called on a finished episode; call reset first");

  static constexpr int kDr[] = {-1, 1, 0, 0};
  static constexpr int kDc[] = {0, 0, -1, 1};
  const auto a = static_cast<int>(action);
  if (a < 0 || a >= static_cast<int>(kActionCount)) throw UsageError("invalid action");

  const Cell target{state_.pos.row + kDr[a], state_.pos.col + kDc[a]};
  const char cell = spec_.at(target.row, target.col);
  const auto& rewards = spec_.rewards();
  double reward = 0.0;
  bool treasure = false;

  const bool blocked = cell == '#' || (cell == 'D' && !state_.door_open && !state_.has_key);
  if (!blocked) {
    state_.pos = target;
    switch (cell) {
      case 'A': {
        const std::uint32_t bit = 1u << *spec_.apple_index(target);
        if ((state_.apples_collected & bit) == 0) {
          state_.apples_collected |= bit;
          reward += rewards.apple;
        }
        break;
      }
      case 'K':
        if (!state_.has_key) {
          state_.has_key = true;
          reward += rewards.key;
        }
        break;
      case 'D':
        if (!state_.door_open) {
          state_.door_open = true;
          reward += rewards.door;
        }
        break;
      case 'T':
        reward += rewards.treasure;
        treasure = true;
        break;
      default:
        break;
    }
  }

  ++state_.step_count;
  StepResult result;
  result.reward = reward;
  result.info.raw_reward = reward;
  result.info.time_limit = !treasure && state_.step_count >= spec_.time_limit();
  result.done = treasure || result.info.time_limit;
  state_.done = result.done;
  result.observation = encode_obs(state_, spec_);
  return result;
}

DelayedReward::DelayedReward(int period) : period_(period) {
  if (period <= 0) throw ConfigError("delayed reward period must be positive");
}

void DelayedReward::reset() {
  pending_ = 0.0;
  since_release_ = 0;
}

StepResult DelayedReward::apply(StepResult inner) {
  pending_ += inner.reward;
  ++since_release_;
  if (inner.done || since_release_ >= period_) {
    inner.reward = pending_;
    pending_ = 0.0;
    since_release_ = 0;
  } else {
    inner.reward = 0.0;
  }
  if (inner.done) reset();
  return inner;
}

std::uint64_t VisitCounter::count(std::uint64_t key) const {
  const auto it = counts_.find(key);
  return it == counts_.end() ? 0 : it->second;
}

StepResult bonus_step(VisitCounter& counter, StepResult inner, const GridState& next_state, double beta) {
  if (beta < 0.0) throw ConfigError("exploration beta must be non-negative");
  if (beta == 0.0) return inner;
  const auto n = counter.increment(state_key(next_state));
  const double bonus = beta / std::sqrt(static_cast<double>(n));
  inner.reward += bonus;
  inner.info.bonus_reward = bonus;
  return inner;
}

}  // namespace sil::env
