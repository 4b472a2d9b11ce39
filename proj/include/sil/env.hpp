#pragma once

// Deterministic key/door/treasure gridworlds and the reward-shaping wrappers
// used by the exploration experiments.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sil::env {

enum class Action : int { up = 0, down = 1, left = 2, right = 3 };
inline constexpr std::size_t kActionCount = 4;

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

struct RewardTable {
  double apple = 1.0;
  double key = 1.0;
  double door = 1.0;
  double treasure = 5.0;
  bool operator==(const RewardTable&) const = default;
};

/// Parsed ASCII map plus rewards and episode length. Alphabet:
/// `#` wall, `.` floor, `S` start, `A` apple, `K` key, `D` door, `T` treasure.
class GridSpec {
 public:
  static constexpr int kDefaultTimeLimit = 50;

  /// Throws ConfigError on a malformed map.
  static GridSpec parse(std::string_view text, RewardTable rewards = {},
                        int time_limit = kDefaultTimeLimit);
  static GridSpec load(const std::filesystem::path& path, RewardTable rewards = {},
                       int time_limit = kDefaultTimeLimit);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  char at(int row, int col) const;
  const std::vector<std::string>& lines() const { return lines_; }

  Cell start() const { return start_; }
  const std::vector<Cell>& apples() const { return apples_; }
  std::optional<Cell> key() const { return key_; }
  std::optional<Cell> door() const { return door_; }
  const std::vector<Cell>& treasures() const { return treasures_; }

  const RewardTable& rewards() const { return rewards_; }
  int time_limit() const { return time_limit_; }

  std::size_t obs_dim() const {
    return static_cast<std::size_t>(rows_ * cols_) + 2 + apples_.size();
  }

  /// Reward for collecting every object and then the treasure.
  double full_collection_return() const;
  /// Key, door and treasure only.
  double key_door_treasure_return() const;

  std::optional<std::size_t> apple_index(Cell c) const;

 private:
  std::vector<std::string> lines_;
  int rows_ = 0;
  int cols_ = 0;
  Cell start_;
  std::vector<Cell> apples_;
  std::optional<Cell> key_;
  std::optional<Cell> door_;
  std::vector<Cell> treasures_;
  RewardTable rewards_;
  int time_limit_ = kDefaultTimeLimit;
};

struct GridState {
  Cell pos;
  bool has_key = false;
  bool door_open = false;
  std::uint32_t apples_collected = 0;  // bit i <-> spec.apples()[i]
  int step_count = 0;
  bool done = false;

  bool operator==(const GridState&) const = default;
};

struct StepInfo {
  double raw_reward = 0.0;    // environment reward before any wrapper
  double bonus_reward = 0.0;  // exploration bonus added by bonus_step
  bool time_limit = false;    // episode ended by the step limit
};

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

void encode_obs(const GridState& state, const GridSpec& spec, std::span<double> out);
std::vector<double> encode_obs(const GridState& state, const GridSpec& spec);

/// Packs the full state tuple (position and flags, not the step count).
std::uint64_t state_key(const GridState& state);

class GridWorld {
 public:
  explicit GridWorld(GridSpec spec);

  /// The seed is accepted for interface stability; transitions are
  /// deterministic.
  std::vector<double> reset(std::uint64_t seed = 0);

  /// Throws UsageError once the episode is done.
  StepResult step(Action action);

  const GridState& state() const { return state_; }
  const GridSpec& spec() const { return spec_; }

 private:
  GridSpec spec_;
  GridState state_;
};

/// Holds back rewards and releases their sum every `period` steps or when
/// the episode ends.
class DelayedReward {
 public:
  explicit DelayedReward(int period);

  void reset();
  StepResult apply(StepResult inner);

  int period() const { return period_; }

 private:
  int period_;
  double pending_ = 0.0;
  int since_release_ = 0;
};

class VisitCounter {
 public:
  std::uint64_t increment(std::uint64_t key) { return ++counts_[key]; }
  std::uint64_t count(std::uint64_t key) const;
  std::size_t distinct() const { return counts_.size(); }

 private:
  std::unordered_map<std::uint64_t, std::uint64_t> counts_;
};

/// Adds beta / sqrt(N(next_state)) after counting the visit. beta == 0
/// returns the inner result untouched.
StepResult bonus_step(VisitCounter& counter, StepResult inner,
                      const GridState& next_state, double beta);

}  // namespace sil::env
