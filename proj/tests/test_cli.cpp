#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

Outcome run(const std::string& args) {
  const std::string cmd = std::string(SIL_LAB_BIN) + " " + args + " 2>&1";
  Outcome out;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.output.append(buf, n);
  const int status = ::pclose(pipe);
  out.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Scratch {
  fs::path root;
  Scratch() {
    root = fs::temp_directory_path() / ("sil_cli_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Scratch() { fs::remove_all(root); }
};

const std::string kConfig = std::string(SIL_LAB_CONFIG_DIR) + "/keydoor_sil.cfg";

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("help succeeds and usage errors exit 2") {
  CHECK(run("--help").code == 0);
  CHECK(run("").code == 2);
  CHECK(run("bogus").code == 2);
  CHECK(run("train").code == 2);
  CHECK(run("train --config " + kConfig + " --variant ppo").code == 2);
  CHECK(run("evaluate --checkpoint x --config y --mode greedy").code == 2);
}

TEST_CASE("config problems exit 2 and name the key") {
  Scratch s;
  CHECK(run("train --config " + (s.root / "missing.cfg").string()).code == 2);
  const auto bad = s.root / "bad.cfg";
  std::ofstream(bad) << "[a2c]\nn_envs = 0\n[env]\nmap = " << SIL_LAB_DATA_DIR << "/maps/key_door_treasure.v1.map\n";
  const auto r = run("train --quiet --config " + bad.string() + " --out " + (s.root / "o").string());
  CHECK(r.code == 2);
  CHECK(r.output.find("a2c.n_envs") != std::string::npos);
  CHECK_FALSE(fs::exists(s.root / "o"));
  const auto unknown = s.root / "unknown.cfg";
  std::ofstream(unknown) << "[a2c]\nlearning_rate = 1\n";
  CHECK(run("train --config " + unknown.string()).code == 2);
}

TEST_CASE("train writes seeds, checkpoints and a manifest, byte-identical across runs") {
  Scratch s;
  const std::string common = "train --quiet --config " + kConfig + " --seeds 2 --total-steps 800 --out ";
  const auto a = run(common + (s.root / "a").string());
  REQUIRE(a.code == 0);
  const auto b = run(common + (s.root / "b").string() + " --jobs 2");
  REQUIRE(b.code == 0);

  for (const char* f : {"seed_0.csv", "seed_1.csv", "seed_0.ckpt", "seed_1.ckpt", "config.cfg"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(s.root / "a" / f));
    CHECK(slurp(s.root / "a" / f) == slurp(s.root / "b" / f));
  }
  const auto csv = slurp(s.root / "a" / "seed_0.csv");
  CHECK(csv.rfind(
            "iteration,env_steps,mean_return,best_return,policy_loss,value_loss,entropy,"
            "sil_policy_loss,sil_value_loss,sil_valid_fraction,buffer_size\n",
            0) == 0);
  CHECK(count_lines(csv) == 1 + 10);  // 800 steps / (16 envs * 5 steps)
  CHECK(slurp(s.root / "a" / "seed_0.csv") != slurp(s.root / "a" / "seed_1.csv"));

  const auto manifest = nlohmann::json::parse(slurp(s.root / "a" / "manifest.json"));
  CHECK(manifest.at("variant") == "sil");
  CHECK(manifest.at("env") == "key_door_treasure");
  CHECK(manifest.at("seeds") == nlohmann::json::array({0, 1}));
  CHECK(manifest.at("csv").size() == 2);
  CHECK(manifest.at("run_id").get<std::string>().size() == 12);

  // Output directories are never overwritten.
  CHECK(run(common + (s.root / "a").string()).code == 2);
}

TEST_CASE("evaluate reads a checkpoint") {
  Scratch s;
  REQUIRE(run("train --quiet --config " + kConfig + " --total-steps 400 --out " + (s.root / "r").string()).code == 0);
  const auto ckpt = (s.root / "r" / "seed_0.ckpt").string();
  const auto e = run("evaluate --checkpoint " + ckpt + " --config " + kConfig + " --episodes 5 --mode argmax");
  CHECK(e.code == 0);
  CHECK(e.output.find("episodes 5") != std::string::npos);
  const auto apples = std::string(SIL_LAB_CONFIG_DIR) + "/apples_a2c.cfg";
  CHECK(run("evaluate --checkpoint " + ckpt + " --config " + apples).code == 2);
  CHECK(run("evaluate --checkpoint " + (s.root / "none.ckpt").string() + " --config " + kConfig).code == 2);
}

TEST_CASE("export produces the long-format aggregate") {
  Scratch s;
  const auto sil_dir = (s.root / "sil").string();
  const auto a2c_dir = (s.root / "a2c").string();
  REQUIRE(run("train --quiet --config " + kConfig + " --seeds 2 --total-steps 400 --out " + sil_dir).code == 0);
  REQUIRE(run("train --quiet --config " + kConfig + " --variant a2c --total-steps 400 --out " + a2c_dir).code == 0);
  const auto out = s.root / "agg.csv";
  const auto r = run("export " + sil_dir + " " + a2c_dir + " --out " + out.string());
  REQUIRE(r.code == 0);
  const auto text = slurp(out);
  CHECK(text.rfind("run,seed,env_steps,metric,value\n", 0) == 0);
  // 3 seeds x 5 iterations x 9 metrics.
  CHECK(count_lines(text) == 1 + 3 * 5 * 9);
  CHECK(text.find("key_door_treasure/sil,1,80,mean_return,") != std::string::npos);
  CHECK(text.find("key_door_treasure/a2c,0,400,buffer_size,") != std::string::npos);

  CHECK(run("export " + (s.root / "nowhere").string() + " --out " + out.string()).code == 1);
  std::ofstream(s.root / "sil" / "seed_1.csv") << "a,b,c\n1,2,3\n";
  CHECK(run("export " + sil_dir + " --out " + out.string()).code == 1);
}

TEST_CASE("verify exit status agrees with its report") {
  const auto r = run("verify --quick");
  for (int k = 1; k <= 7; ++k) CHECK(r.output.find("] " + std::to_string(k) + " ") != std::string::npos);
  const bool any_fail = r.output.find("[FAIL]") != std::string::npos;
  CHECK(r.code == (any_fail ? 1 : 0));
}

TEST_CASE("injected clip bug is caught by verify") {
  const auto r = run("verify --quick --inject-clip-bug");
  CHECK(r.code == 1);
  CHECK(r.output.find("[FAIL] 5 ") != std::string::npos);
}
