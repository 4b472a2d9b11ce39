// sil_lab: train, verify, evaluate and export self-imitation experiments.

#include <sys/wait.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sil/checkpoint.hpp"
#include "sil/config.hpp"
#include "sil/error.hpp"
#include "sil/kernels.hpp"
#include "sil/platform.hpp"
#include "sil/trainer.hpp"
#include "sil/verify.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex12(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf).substr(0, 12);
}

std::string env_label(const std::string& map_path) {
  auto stem = fs::path(map_path).stem().string();
  if (const auto dot = stem.find('.'); dot != std::string::npos) stem = stem.substr(0, dot);
  return stem;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sil::ConfigError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw std::runtime_error("cannot write " + path.string());
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::size_t seeds = 1;
  std::string out;
  std::string variant;
  std::uint64_t total_steps = 0;
  std::size_t jobs = 1;
  bool quiet = false;
};

int train_one(const sil::trainer::TrainConfig& config, const fs::path& csv, const fs::path& ckpt, bool quiet) {
  std::ofstream out(csv, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + csv.string());
  out << sil::trainer::kCsvHeader << '\n';
  sil::trainer::TrainHooks hooks;
  std::uint64_t next_report = 0;
  hooks.on_iteration = [&](const sil::trainer::IterationMetrics& m) {
    sil::trainer::write_csv_row(out, m);
    if (!quiet && m.env_steps >= next_report) {
      std::fprintf(stderr, "seed %llu  steps %8llu  mean_return %.3f  best %.3f\n",
                   static_cast<unsigned long long>(config.seed), static_cast<unsigned long long>(m.env_steps),
                   m.mean_return, m.best_return);
      next_report = m.env_steps + 20000;
    }
  };
  const auto result = sil::trainer::train(config, hooks);
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + csv.string());
  sil::checkpoint::save(ckpt, result.params);
  return kExitOk;
}

int cmd_train(const TrainArgs& args) {
  auto config = sil::config::load(args.config);
  if (!args.variant.empty()) config.variant = sil::trainer::parse_variant(args.variant);
  if (args.total_steps > 0) config.total_steps = args.total_steps;
  if (args.seeds == 0) throw sil::ConfigError("--seeds must be positive");
  config.validate();
  if (!fs::exists(config.env_map)) throw sil::ConfigError("env.map: file not found: " + config.env_map);
  // Surface map errors before any output is created.
  sil::env::GridSpec::load(config.env_map, config.rewards, config.time_limit);

  const std::string snapshot = sil::config::serialize(config);
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < args.seeds; ++i) seeds.push_back(config.seed + i);
  std::string id_source = snapshot;
  for (auto s : seeds) id_source += "," + std::to_string(s);
  const std::string run_id = hex12(fnv1a(id_source));

  const fs::path out_dir = args.out.empty() ? fs::path("runs") / (env_label(config.env_map) + "-" +
                                                                   std::string(sil::trainer::variant_name(config.variant)) +
                                                                   "-" + run_id)
                                            : fs::path(args.out);
  if (fs::exists(out_dir) && !fs::is_empty(out_dir))
    throw sil::ConfigError("output directory " + out_dir.string() + " exists and is not empty");
  fs::create_directories(out_dir);
  write_file(out_dir / "config.cfg", snapshot);

  std::vector<std::string> csvs, ckpts;
  for (auto s : seeds) {
    csvs.push_back("seed_" + std::to_string(s) + ".csv");
    ckpts.push_back("seed_" + std::to_string(s) + ".ckpt");
  }

  int status = kExitOk;
  if (args.jobs <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      auto cfg = config;
      cfg.seed = seeds[i];
      train_one(cfg, out_dir / csvs[i], out_dir / ckpts[i], args.quiet);
    }
  } else {
    std::size_t next = 0, running = 0;
    std::map<pid_t, std::size_t> children;
    auto reap = [&] {
      int wstatus = 0;
      const pid_t pid = ::wait(&wstatus);
      if (pid < 0) return;
      --running;
      if (!WIFEXITED(wstatus) || WEXITSTATUS(wstatus) != 0) {
        std::cerr << "seed " << seeds[children[pid]] << " failed\n";
        status = kExitFailure;
      }
    };
    while (next < seeds.size() || running > 0) {
      if (next < seeds.size() && running < args.jobs) {
        std::cout.flush();
        const pid_t pid = ::fork();
        if (pid < 0) throw std::runtime_error("fork failed");
        if (pid == 0) {
          int code = kExitFailure;
          try {
            auto cfg = config;
            cfg.seed = seeds[next];
            code = train_one(cfg, out_dir / csvs[next], out_dir / ckpts[next], args.quiet);
          } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
          }
          std::_Exit(code);
        }
        children[pid] = next++;
        ++running;
      } else {
        reap();
      }
    }
  }

  json manifest;
  manifest["run_id"] = run_id;
  manifest["env"] = env_label(config.env_map);
  manifest["variant"] = sil::trainer::variant_name(config.variant);
  manifest["seeds"] = seeds;
  manifest["output_dir"] = fs::absolute(out_dir).lexically_normal().string();
  manifest["config"] = snapshot;
  manifest["csv"] = csvs;
  manifest["checkpoints"] = ckpts;
  manifest["csv_header"] = sil::trainer::kCsvHeader;
  manifest["isa"] = sil::kernels::isa_name(sil::kernels::active().isa);
  write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "run " << run_id << " -> " << out_dir.string() << '\n';
  return status;
}

// ---- verify ---------------------------------------------------------------

int cmd_verify(bool quick, bool inject) {
  sil::verify::Options options;
  options.quick = quick;
  options.inject_clip_bug = inject;
  const auto report = sil::verify::run_all(options, [](const sil::verify::Check& c) {
    std::cout << sil::verify::format_check(c) << '\n';
    std::cout.flush();
  });
  std::size_t failed = 0;
  for (const auto& c : report.checks) failed += !c.passed && !c.informational;
  std::printf("%zu checks, %zu failed, %.1f s (%s kernels)\n", report.checks.size(), failed, report.seconds,
              std::string(sil::kernels::isa_name(sil::kernels::active().isa)).c_str());
  return report.all_passed() ? kExitOk : kExitFailure;
}

// ---- evaluate -------------------------------------------------------------

int cmd_evaluate(const std::string& checkpoint, const std::string& config_path, std::size_t episodes,
                 const std::string& mode_name, std::uint64_t seed) {
  const auto config = sil::config::load(config_path);
  if (!fs::exists(config.env_map)) throw sil::ConfigError("env.map: file not found: " + config.env_map);
  const auto spec = sil::env::GridSpec::load(config.env_map, config.rewards, config.time_limit);
  const auto params = sil::checkpoint::load(checkpoint);
  if (params.shape().input_dim != spec.obs_dim())
    throw sil::ConfigError("checkpoint input width " + std::to_string(params.shape().input_dim) +
                           " does not match the map's observation width " + std::to_string(spec.obs_dim()));
  const auto mode = mode_name == "argmax" ? sil::trainer::EvalMode::argmax : sil::trainer::EvalMode::sample;
  const auto stats = sil::trainer::evaluate(params, spec, episodes, mode, seed);
  std::printf("episodes %zu  mode %s  mean %.6g  std %.6g  min %.6g  max %.6g\n", episodes, mode_name.c_str(),
              stats.mean, stats.stddev, stats.min, stats.max);
  return kExitOk;
}

// ---- export ---------------------------------------------------------------

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

int cmd_export(const std::vector<std::string>& run_dirs, const std::string& out_path) {
  const auto header = split_csv(std::string(sil::trainer::kCsvHeader));
  std::ostringstream agg;
  agg << "run,seed,env_steps,metric,value\n";
  std::size_t rows = 0;
  for (const auto& dir : run_dirs) {
    const fs::path manifest_path = fs::path(dir) / "manifest.json";
    if (!fs::exists(manifest_path)) {
      std::cerr << "error: " << dir << " has no manifest.json\n";
      return kExitFailure;
    }
    json manifest;
    try {
      manifest = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
      std::cerr << "error: " << manifest_path.string() << ": " << e.what() << '\n';
      return kExitFailure;
    }
    const std::string run = manifest.value("env", std::string("env")) + "/" + manifest.value("variant", std::string("?"));
    const auto seeds = manifest.at("seeds").get<std::vector<std::uint64_t>>();
    const auto csvs = manifest.at("csv").get<std::vector<std::string>>();
    if (seeds.empty() || seeds.size() != csvs.size()) {
      std::cerr << "error: " << manifest_path.string() << " lists no seeds\n";
      return kExitFailure;
    }
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const fs::path csv = fs::path(dir) / csvs[i];
      std::ifstream in(csv);
      if (!in) {
        std::cerr << "error: missing " << csv.string() << '\n';
        return kExitFailure;
      }
      std::string line;
      std::getline(in, line);
      if (split_csv(line) != header) {
        std::cerr << "error: " << csv.string() << " has an unexpected header\n";
        return kExitFailure;
      }
      std::size_t line_no = 1;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
          std::cerr << "error: " << csv.string() << ":" << line_no << " has " << cells.size() << " fields, expected "
                    << header.size() << '\n';
          return kExitFailure;
        }
        for (std::size_t k = 2; k < header.size(); ++k) {
          agg << run << ',' << seeds[i] << ',' << cells[1] << ',' << header[k] << ',' << cells[k] << '\n';
          ++rows;
        }
      }
    }
  }
  if (rows == 0) {
    std::cerr << "error: nothing to export\n";
    return kExitFailure;
  }
  write_file(out_path, agg.str());
  std::cout << rows << " rows -> " << out_path << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  sil::tune_allocator();
  CLI::App app{"Self-imitation learning experiments on gridworlds"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train one or more seeds from a config file");
  train_cmd->add_option("--config", train.config, "Config file")->required();
  train_cmd->add_option("--seeds", train.seeds, "Number of seeds, counting up from train.seed");
  train_cmd->add_option("--out", train.out, "Output directory (must be new or empty)");
  train_cmd->add_option("--variant", train.variant, "Override train.variant")
      ->check(CLI::IsMember({"a2c", "sil", "exp", "sil+exp"}));
  train_cmd->add_option("--total-steps", train.total_steps, "Override train.total_steps");
  train_cmd->add_option("--jobs", train.jobs, "Seeds trained in parallel processes")->check(CLI::PositiveNumber);
  train_cmd->add_flag("--quiet", train.quiet, "No progress on stderr");

  bool quick = false, inject = false;
  auto* verify_cmd = app.add_subcommand("verify", "Run the numerical verification suite");
  verify_cmd->add_flag("--quick", quick, "Reduced sweep sizes");
  verify_cmd->add_flag("--inject-clip-bug", inject, "Flip the clip in lower-bound Q-learning (negative test)");

  std::string checkpoint, eval_config, mode = "sample";
  std::size_t episodes = 100;
  std::uint64_t eval_seed = 0;
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint without learning");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--config", eval_config, "Config naming the map and rewards")->required();
  eval_cmd->add_option("--episodes", episodes, "Episode count")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--mode", mode, "Action selection")->check(CLI::IsMember({"sample", "argmax"}));
  eval_cmd->add_option("--seed", eval_seed, "Sampling seed");

  std::vector<std::string> run_dirs;
  std::string export_out;
  auto* export_cmd = app.add_subcommand("export", "Aggregate run directories into one long-format CSV");
  export_cmd->add_option("runs", run_dirs, "Run directories containing manifest.json")->required();
  export_cmd->add_option("--out", export_out, "Aggregate CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (*verify_cmd) return cmd_verify(quick, inject);
    if (*eval_cmd) return cmd_evaluate(checkpoint, eval_config, episodes, mode, eval_seed);
    if (*export_cmd) return cmd_export(run_dirs, export_out);
  } catch (const sil::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const sil::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
