#include "sil/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "sil/error.hpp"

namespace sil::config {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw ConfigError(key + ": " + what);
}

double to_double(const std::string& key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out))
    bad(key, "expected a number, got '" + std::string(v) + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    bad(key, "expected a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

int to_int(const std::string& key, std::string_view v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    bad(key, "expected an integer, got '" + std::string(v) + "'");
  return out;
}

bool to_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad(key, "expected true or false, got '" + std::string(v) + "'");
}

std::vector<std::size_t> to_widths(const std::string& key, std::string_view v) {
  std::vector<std::size_t> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    const auto item = trim(v.substr(0, comma));
    if (item.empty()) bad(key, "empty layer width");
    out.push_back(to_uint(key, item));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Setter = std::function<void(trainer::TrainConfig&, const std::string& key, std::string_view value)>;

const std::map<std::string, Setter>& setters() {
  using trainer::TrainConfig;
  static const std::map<std::string, Setter> table = {
      {"env.map", [](TrainConfig& c, const std::string&, std::string_view v) { c.env_map = std::string(v); }},
      {"env.time_limit", [](TrainConfig& c, const std::string& k, std::string_view v) { c.time_limit = to_int(k, v); }},
      {"env.reward_apple", [](TrainConfig& c, const std::string& k, std::string_view v) { c.rewards.apple = to_double(k, v); }},
      {"env.reward_key", [](TrainConfig& c, const std::string& k, std::string_view v) { c.rewards.key = to_double(k, v); }},
      {"env.reward_door", [](TrainConfig& c, const std::string& k, std::string_view v) { c.rewards.door = to_double(k, v); }},
      {"env.reward_treasure", [](TrainConfig& c, const std::string& k, std::string_view v) { c.rewards.treasure = to_double(k, v); }},
      {"env.delayed_reward_period", [](TrainConfig& c, const std::string& k, std::string_view v) { c.delayed_reward_period = to_int(k, v); }},
      {"a2c.n_envs", [](TrainConfig& c, const std::string& k, std::string_view v) { c.n_envs = to_uint(k, v); }},
      {"a2c.n_steps", [](TrainConfig& c, const std::string& k, std::string_view v) { c.n_steps = to_uint(k, v); }},
      {"a2c.gamma", [](TrainConfig& c, const std::string& k, std::string_view v) { c.gamma = to_double(k, v); }},
      {"a2c.entropy_alpha", [](TrainConfig& c, const std::string& k, std::string_view v) { c.alpha = to_double(k, v); }},
      {"a2c.value_weight", [](TrainConfig& c, const std::string& k, std::string_view v) { c.beta_a2c = to_double(k, v); }},
      {"sil.updates_per_iteration", [](TrainConfig& c, const std::string& k, std::string_view v) { c.sil_updates = to_uint(k, v); }},
      {"sil.batch_size", [](TrainConfig& c, const std::string& k, std::string_view v) { c.sil_batch = to_uint(k, v); }},
      {"sil.value_weight", [](TrainConfig& c, const std::string& k, std::string_view v) { c.beta_sil = to_double(k, v); }},
      {"sil.min_fill", [](TrainConfig& c, const std::string& k, std::string_view v) { c.sil_min_fill = to_uint(k, v); }},
      {"replay.capacity", [](TrainConfig& c, const std::string& k, std::string_view v) { c.buffer_capacity = to_uint(k, v); }},
      {"replay.exponent", [](TrainConfig& c, const std::string& k, std::string_view v) { c.priority_exponent = to_double(k, v); }},
      {"replay.bias_correction", [](TrainConfig& c, const std::string& k, std::string_view v) { c.bias_correction = to_double(k, v); }},
      {"replay.epsilon", [](TrainConfig& c, const std::string& k, std::string_view v) { c.priority_epsilon = to_double(k, v); }},
      {"exploration.beta", [](TrainConfig& c, const std::string& k, std::string_view v) { c.exploration_beta = to_double(k, v); }},
      {"exploration.bonus_in_replay", [](TrainConfig& c, const std::string& k, std::string_view v) { c.bonus_in_replay = to_bool(k, v); }},
      {"net.hidden", [](TrainConfig& c, const std::string& k, std::string_view v) { c.hidden = to_widths(k, v); }},
      {"optimizer.kind", [](TrainConfig& c, const std::string& k, std::string_view v) {
         if (v == "rmsprop") c.optimizer.kind = nn::OptimizerKind::rmsprop;
         else if (v == "adam") c.optimizer.kind = nn::OptimizerKind::adam;
         else bad(k, "expected rmsprop or adam, got '" + std::string(v) + "'");
       }},
      {"optimizer.lr", [](TrainConfig& c, const std::string& k, std::string_view v) { c.lr = to_double(k, v); }},
      {"optimizer.decay", [](TrainConfig& c, const std::string& k, std::string_view v) { c.optimizer.decay = to_double(k, v); }},
      {"optimizer.epsilon", [](TrainConfig& c, const std::string& k, std::string_view v) { c.optimizer.epsilon = to_double(k, v); }},
      {"optimizer.max_grad_norm", [](TrainConfig& c, const std::string& k, std::string_view v) { c.optimizer.max_grad_norm = to_double(k, v); }},
      {"train.variant", [](TrainConfig& c, const std::string& k, std::string_view v) {
         try {
           c.variant = trainer::parse_variant(v);
         } catch (const ConfigError& e) {
           bad(k, e.what());
         }
       }},
      {"train.total_steps", [](TrainConfig& c, const std::string& k, std::string_view v) { c.total_steps = to_uint(k, v); }},
      {"train.seed", [](TrainConfig& c, const std::string& k, std::string_view v) { c.seed = to_uint(k, v); }},
      {"train.return_window", [](TrainConfig& c, const std::string& k, std::string_view v) { c.return_window = to_uint(k, v); }},
  };
  return table;
}

}  // namespace

trainer::TrainConfig parse(std::string_view text, const std::filesystem::path& base_dir) {
  trainer::TrainConfig config;
  std::string section;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string name = std::string(trim(line.substr(0, eq)));
    const std::string key = section.empty() ? name : section + "." + name;
    const auto value = trim(line.substr(eq + 1));

    const auto& table = setters();
    const auto it = table.find(key);
    if (it == table.end()) bad(key, "unknown key");
    if (!seen.insert(key).second) bad(key, "duplicate key");
    it->second(config, key, value);
  }

  if (!config.env_map.empty()) {
    std::filesystem::path map(config.env_map);
    if (map.is_relative() && !base_dir.empty()) map = base_dir / map;
    if (map.is_relative()) map = std::filesystem::absolute(map);
    config.env_map = map.lexically_normal().string();
  }
  return config;
}

trainer::TrainConfig load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  auto dir = std::filesystem::absolute(path).parent_path();
  return parse(text.str(), dir);
}

std::string serialize(const trainer::TrainConfig& c) {
  std::ostringstream os;
  os << "[env]\n"
     << "map = " << c.env_map << "\n"
     << "time_limit = " << c.time_limit << "\n"
     << "reward_apple = " << fmt(c.rewards.apple) << "\n"
     << "reward_key = " << fmt(c.rewards.key) << "\n"
     << "reward_door = " << fmt(c.rewards.door) << "\n"
     << "reward_treasure = " << fmt(c.rewards.treasure) << "\n"
     << "delayed_reward_period = " << c.delayed_reward_period << "\n\n";
  os << "[a2c]\n"
     << "n_envs = " << c.n_envs << "\n"
     << "n_steps = " << c.n_steps << "\n"
     << "gamma = " << fmt(c.gamma) << "\n"
     << "entropy_alpha = " << fmt(c.alpha) << "\n"
     << "value_weight = " << fmt(c.beta_a2c) << "\n\n";
  os << "[sil]\n"
     << "updates_per_iteration = " << c.sil_updates << "\n"
     << "batch_size = " << c.sil_batch << "\n"
     << "value_weight = " << fmt(c.beta_sil) << "\n"
     << "min_fill = " << c.sil_min_fill << "\n\n";
  os << "[replay]\n"
     << "capacity = " << c.buffer_capacity << "\n"
     << "exponent = " << fmt(c.priority_exponent) << "\n"
     << "bias_correction = " << fmt(c.bias_correction) << "\n"
     << "epsilon = " << fmt(c.priority_epsilon) << "\n\n";
  os << "[exploration]\n"
     << "beta = " << fmt(c.exploration_beta) << "\n"
     << "bonus_in_replay = " << (c.bonus_in_replay ? "true" : "false") << "\n\n";
  os << "[net]\nhidden = ";
  for (std::size_t i = 0; i < c.hidden.size(); ++i) os << (i ? "," : "") << c.hidden[i];
  os << "\n\n";
  os << "[optimizer]\n"
     << "kind = " << (c.optimizer.kind == nn::OptimizerKind::adam ? "adam" : "rmsprop") << "\n"
     << "lr = " << fmt(c.lr) << "\n"
     << "decay = " << fmt(c.optimizer.decay) << "\n"
     << "epsilon = " << fmt(c.optimizer.epsilon) << "\n"
     << "max_grad_norm = " << fmt(c.optimizer.max_grad_norm) << "\n\n";
  os << "[train]\n"
     << "variant = " << trainer::variant_name(c.variant) << "\n"
     << "total_steps = " << c.total_steps << "\n"
     << "seed = " << c.seed << "\n"
     << "return_window = " << c.return_window << "\n";
  return os.str();
}

}  // namespace sil::config
