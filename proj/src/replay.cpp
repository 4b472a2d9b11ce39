#include "sil/replay.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sil/error.hpp"

namespace sil::replay {

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> out(rewards.size());
  double running = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    running = rewards[t] + gamma * running;
    out[t] = running;
  }
  return out;
}

std::vector<ReplayEntry> compute_returns(const EpisodeBuffer& episode, double gamma) {
  std::vector<double> rewards;
  rewards.reserve(episode.size());
  for (const auto& s : episode.steps()) rewards.push_back(s.reward);
  const auto returns = discounted_returns(rewards, gamma);
  std::vector<ReplayEntry> entries;
  entries.reserve(episode.size());
  for (std::size_t t = 0; t < episode.size(); ++t) {
    const auto& s = episode.steps()[t];
    entries.push_back({s.observation, s.action, returns[t]});
  }
  return entries;
}

SumTree::SumTree(std::size_t capacity) : capacity_(capacity), leaves_(std::bit_ceil(std::max<std::size_t>(capacity, 1))) {
  if (capacity == 0) throw ConfigError("sum-tree capacity must be positive");
  nodes_.assign(2 * leaves_, 0.0);
}

void SumTree::set(std::size_t leaf, double value) {
  if (leaf >= capacity_) throw UsageError("sum-tree leaf out of range");
  if (!(value >= 0.0) || !std::isfinite(value)) throw NumericError("sum-tree values must be finite and non-negative");
  std::size_t i = leaves_ + leaf;
  nodes_[i] = value;
  for (i /= 2; i >= 1; i /= 2) nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
}

std::size_t SumTree::find(double mass) const {
  std::size_t i = 1;
  while (i < leaves_) {
    const std::size_t left = 2 * i;
    if (mass < nodes_[left] || nodes_[left + 1] <= 0.0) {
      i = left;
    } else {
      mass -= nodes_[left];
      i = left + 1;
    }
  }
  return i - leaves_;
}

double SumTree::max_relative_defect() const {
  double worst = 0.0;
  for (std::size_t i = 1; i < leaves_; ++i) {
    const double expect = nodes_[2 * i] + nodes_[2 * i + 1];
    const double scale = std::max({std::abs(nodes_[i]), std::abs(expect), 1e-300});
    worst = std::max(worst, std::abs(nodes_[i] - expect) / scale);
  }
  return worst;
}

double SumTree::leaf_sum() const {
  double s = 0.0;
  for (std::size_t i = 0; i < capacity_; ++i) s += nodes_[leaves_ + i];
  return s;
}

PrioritizedBuffer::PrioritizedBuffer(PrioritizedConfig config, std::size_t obs_dim)
    : config_(config), obs_dim_(obs_dim), tree_(config.capacity) {
  if (config_.exponent < 0.0) throw ConfigError("prioritization exponent must be non-negative");
  if (config_.bias_correction < 0.0) throw ConfigError("bias correction must be non-negative");
  if (!(config_.epsilon > 0.0)) throw ConfigError("priority epsilon must be positive");
  observations_.assign(config_.capacity * obs_dim_, 0.0);
  actions_.assign(config_.capacity, 0);
  returns_.assign(config_.capacity, 0.0);
  priorities_.assign(config_.capacity, 0.0);
  serials_.assign(config_.capacity, 0);
}

void PrioritizedBuffer::store(std::size_t slot, double priority) {
  priorities_[slot] = priority;
  tree_.set(slot, std::pow(priority, config_.exponent));
}

void PrioritizedBuffer::push(const ReplayEntry& entry, double value) {
  if (entry.observation.size() != obs_dim_) throw UsageError("replay entry has the wrong observation width");
  if (!std::isfinite(entry.ret)) throw NumericError("replay return is not finite");
  const std::size_t slot = next_;
  std::copy(entry.observation.begin(), entry.observation.end(), observations_.begin() + static_cast<std::ptrdiff_t>(slot * obs_dim_));
  actions_[slot] = entry.action;
  returns_[slot] = entry.ret;
  serials_[slot] = next_serial_++;
  store(slot, std::max(entry.ret - value, 0.0) + config_.epsilon);
  next_ = (next_ + 1) % config_.capacity;
  size_ = std::min(size_ + 1, config_.capacity);
}

void PrioritizedBuffer::push_episode(std::span<const ReplayEntry> entries, std::span<const double> values) {
  if (entries.size() != values.size()) throw UsageError("push_episode: one value estimate per entry required");
  for (std::size_t i = 0; i < entries.size(); ++i) push(entries[i], values[i]);
}

std::size_t PrioritizedBuffer::slot_of(std::size_t age_rank) const {
  if (age_rank >= size_) throw UsageError("replay age rank out of range");
  const std::size_t oldest = size_ < config_.capacity ? 0 : next_;
  return (oldest + age_rank) % config_.capacity;
}

double PrioritizedBuffer::probability(std::size_t slot) const {
  return tree_.get(slot) / tree_.total();
}

Sample PrioritizedBuffer::sample(std::size_t batch_size, Rng& rng) const {
  if (size_ == 0) throw EmptyBufferError();
  Sample out;
  auto& b = out.batch;
  b.observations = nn::Matrix(batch_size, obs_dim_);
  b.actions.resize(batch_size);
  b.returns.resize(batch_size);
  b.weights.resize(batch_size);
  out.handles.resize(batch_size);
  out.probabilities.resize(batch_size);

  const double total = tree_.total();
  const double segment = total / static_cast<double>(batch_size);
  const double n = static_cast<double>(size_);
  double max_weight = 0.0;
  for (std::size_t i = 0; i < batch_size; ++i) {
    double mass = (static_cast<double>(i) + uniform01(rng)) * segment;
    mass = std::min(mass, std::nextafter(total, 0.0));
    const std::size_t slot = tree_.find(mass);
    const auto obs = observation(slot);
    std::copy(obs.begin(), obs.end(), b.observations.row(i).begin());
    b.actions[i] = actions_[slot];
    b.returns[i] = returns_[slot];
    out.handles[i] = {slot, serials_[slot]};
    const double p = tree_.get(slot) / total;
    out.probabilities[i] = p;
    b.weights[i] = std::pow(n * p, -config_.bias_correction);
    max_weight = std::max(max_weight, b.weights[i]);
  }
  for (double& w : b.weights) w /= max_weight;
  return out;
}

std::size_t PrioritizedBuffer::update_priorities(std::span<const SampleHandle> handles,
                                                 std::span<const double> clipped_advantages) {
  if (handles.size() != clipped_advantages.size()) throw UsageError("update_priorities: length mismatch");
  std::size_t stale = 0;
  for (std::size_t i = 0; i < handles.size(); ++i) {
    const auto& h = handles[i];
    if (h.slot >= config_.capacity || serials_[h.slot] != h.serial) {
      ++stale;
      continue;
    }
    store(h.slot, std::max(clipped_advantages[i], 0.0) + config_.epsilon);
  }
  stale_updates_ += stale;
  return stale;
}

namespace {

constexpr char kMagic[8] = {'S', 'I', 'L', 'R', 'P', 'L', 'A', 'Y'};
constexpr std::uint32_t kSnapshotVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(bytes, 8);
}
void put_u32(std::ostream& out, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(bytes, 4);
}
void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw ConfigError("truncated replay snapshot");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}
std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw ConfigError("truncated replay snapshot");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

void PrioritizedBuffer::save_snapshot(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write replay snapshot: " + path.string());
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kSnapshotVersion);
  put_u32(out, static_cast<std::uint32_t>(obs_dim_));
  put_u64(out, config_.capacity);
  put_u64(out, size_);
  put_u64(out, next_);
  put_f64(out, config_.exponent);
  put_f64(out, config_.bias_correction);
  put_f64(out, config_.epsilon);
  // Slots are written in storage order so a restored buffer samples identically.
  for (std::size_t slot = 0; slot < size_; ++slot) {
    for (double x : observation(slot)) put_f64(out, x);
    put_u32(out, static_cast<std::uint32_t>(actions_[slot]));
    put_f64(out, returns_[slot]);
    put_f64(out, priorities_[slot]);
  }
}

PrioritizedBuffer PrioritizedBuffer::load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read replay snapshot: " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw ConfigError("not a replay snapshot");
  if (get_u32(in) != kSnapshotVersion) throw ConfigError("unsupported replay snapshot version");
  const std::size_t obs_dim = get_u32(in);
  PrioritizedConfig config;
  config.capacity = get_u64(in);
  const std::size_t size = get_u64(in);
  const std::size_t next = get_u64(in);
  config.exponent = get_f64(in);
  config.bias_correction = get_f64(in);
  config.epsilon = get_f64(in);
  if (size > config.capacity || next >= config.capacity || (size < config.capacity && next != size))
    throw ConfigError("corrupt replay snapshot");

  PrioritizedBuffer buffer(config, obs_dim);
  for (std::size_t slot = 0; slot < size; ++slot) {
    for (std::size_t i = 0; i < obs_dim; ++i) buffer.observations_[slot * obs_dim + i] = get_f64(in);
    buffer.actions_[slot] = static_cast<int>(get_u32(in));
    buffer.returns_[slot] = get_f64(in);
    const double priority = get_f64(in);
    buffer.store(slot, priority);
  }
  buffer.size_ = size;
  buffer.next_ = next;
  for (std::size_t rank = 0; rank < size; ++rank) buffer.serials_[buffer.slot_of(rank)] = buffer.next_serial_++;
  return buffer;
}

}  // namespace sil::replay
