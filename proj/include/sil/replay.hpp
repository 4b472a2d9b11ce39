#pragma once

// Episode buffering, discounted returns, and the prioritized replay buffer
// that feeds self-imitation updates. Priorities are clipped advantages
// (R - V(s))_+ plus a small floor, sampled through a sum-tree.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "sil/losses.hpp"
#include "sil/random.hpp"

namespace sil::replay {

struct Transition {
  std::vector<double> observation;
  int action = 0;
  double reward = 0.0;
};

class EpisodeBuffer {
 public:
  void push(std::vector<double> observation, int action, double reward) {
    steps_.push_back({std::move(observation), action, reward});
  }
  void clear() { steps_.clear(); }
  std::size_t size() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }
  const std::vector<Transition>& steps() const { return steps_; }

 private:
  std::vector<Transition> steps_;
};

struct ReplayEntry {
  std::vector<double> observation;
  int action = 0;
  double ret = 0.0;
};

/// R_t = r_t + gamma * R_{t+1}, R_{T+1} = 0.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);
std::vector<ReplayEntry> compute_returns(const EpisodeBuffer& episode, double gamma);

/// Complete binary tree over `capacity` leaves; each internal node holds the
/// sum of its children.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity);

  void set(std::size_t leaf, double value);
  double get(std::size_t leaf) const { return nodes_[leaves_ + leaf]; }
  double total() const { return nodes_[1]; }
  std::size_t capacity() const { return capacity_; }

  /// Leaf whose cumulative interval contains `mass` (0 <= mass < total()).
  /// Never returns a zero-valued leaf while total() > 0.
  std::size_t find(double mass) const;

  /// Largest |node - (left + right)| relative to the node value.
  double max_relative_defect() const;
  /// Sum of leaves recomputed from scratch.
  double leaf_sum() const;

 private:
  std::size_t capacity_;
  std::size_t leaves_;  // power of two >= capacity
  std::vector<double> nodes_;  // 1-based heap layout
};

struct PrioritizedConfig {
  std::size_t capacity = 100000;
  double exponent = 0.6;
  double bias_correction = 0.1;
  double epsilon = 1e-6;
};

/// Identifies a stored entry at sampling time; a later overwrite of the slot
/// makes the handle stale.
struct SampleHandle {
  std::size_t slot = 0;
  std::uint64_t serial = 0;
};

struct Sample {
  losses::SilBatch batch;
  std::vector<SampleHandle> handles;
  std::vector<double> probabilities;
};

class EmptyBufferError : public std::runtime_error {
 public:
  EmptyBufferError() : std::runtime_error("cannot sample from an empty replay buffer") {}
};

class PrioritizedBuffer {
 public:
  PrioritizedBuffer(PrioritizedConfig config, std::size_t obs_dim);

  /// `values[i]` is V(s) of entries[i] at insertion time.
  void push_episode(std::span<const ReplayEntry> entries, std::span<const double> values);
  void push(const ReplayEntry& entry, double value);

  /// Stratified proportional sampling of `batch_size` entries with
  /// importance weights (N * P(i))^-bias_correction / max. Throws
  /// EmptyBufferError when nothing is stored.
  Sample sample(std::size_t batch_size, Rng& rng) const;

  /// Replaces priorities from fresh clipped advantages. Stale handles are
  /// skipped and counted; returns how many were skipped.
  std::size_t update_priorities(std::span<const SampleHandle> handles,
                                std::span<const double> clipped_advantages);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return config_.capacity; }
  std::size_t obs_dim() const { return obs_dim_; }
  const PrioritizedConfig& config() const { return config_; }
  bool empty() const { return size_ == 0; }

  /// Slot of the i-th oldest stored entry.
  std::size_t slot_of(std::size_t age_rank) const;

  std::span<const double> observation(std::size_t slot) const {
    return {observations_.data() + slot * obs_dim_, obs_dim_};
  }
  int action(std::size_t slot) const { return actions_[slot]; }
  double ret(std::size_t slot) const { return returns_[slot]; }
  std::uint64_t serial(std::size_t slot) const { return serials_[slot]; }
  /// (R - V)_+ + epsilon, before the exponent.
  double priority(std::size_t slot) const { return priorities_[slot]; }
  double probability(std::size_t slot) const;
  const SumTree& tree() const { return tree_; }
  std::uint64_t stale_updates() const { return stale_updates_; }

  /// Little-endian binary dump; see README for the layout.
  void save_snapshot(const std::filesystem::path& path) const;
  static PrioritizedBuffer load_snapshot(const std::filesystem::path& path);

 private:
  void store(std::size_t slot, double priority);

  PrioritizedConfig config_;
  std::size_t obs_dim_;
  std::size_t size_ = 0;
  std::size_t next_ = 0;
  std::uint64_t next_serial_ = 1;
  std::uint64_t stale_updates_ = 0;
  std::vector<double> observations_;
  std::vector<int> actions_;
  std::vector<double> returns_;
  std::vector<double> priorities_;
  std::vector<std::uint64_t> serials_;
  SumTree tree_;
};

}  // namespace sil::replay
