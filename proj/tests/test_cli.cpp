#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kScratch = fs::path(PINLAB_SCRATCH_DIR) / "cli";

int run(const std::string& args) {
  const std::string cmd = std::string(PINLAB_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path write_config(const std::string& name, const std::string& body) {
  fs::create_directories(kScratch);
  const auto p = kScratch / name;
  std::ofstream(p) << body;
  return p;
}

std::string config(const std::string& name) { return (fs::path(PINLAB_CONFIG_DIR) / name).string(); }

// Every data file in a, compared byte for byte with b; manifests carry timestamps.
bool same_data(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const auto name = e.path().filename();
    if (name == "manifest.json") continue;
    if (!fs::exists(b / name) || slurp(e.path()) != slurp(b / name)) return false;
    ++files;
  }
  return files > 0;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("pinned") == 2);
  CHECK(run("pinned --config /nonexistent/x.cfg -o " + (kScratch / "missing").string()) == 2);
  const auto bad = write_config("bad.cfg", "colour = red\n");
  CHECK(run("pinned -c " + bad.string() + " -o " + (kScratch / "bad").string()) == 2);
  const auto bad_check = write_config("bad_check.cfg", "check = everything\n");
  CHECK(run("fourier -c " + bad_check.string() + " -o " + (kScratch / "bad").string()) == 2);
  CHECK(run("--version") == 0);
}

TEST_CASE("oversized work exits with 3") {
  const auto big = write_config("big.cfg", "family = lebesgue\nper_axis = 256\nk = 3\neps = 2^-3\nseed = 1\n");
  CHECK(run("chain -c " + big.string() + " -o " + (kScratch / "big").string()) == 3);
}

TEST_CASE("reruns are byte identical") {
  for (const char* cmd : {"gen", "pinned", "chain", "hinge", "config-count", "probe"}) {
    std::string file = cmd;
    if (file == "config-count") file = "config_count";
    const auto a = kScratch / (file + "_a"), b = kScratch / (file + "_b");
    fs::remove_all(a);
    fs::remove_all(b);
    REQUIRE(run(std::string(cmd) + " -c " + config(file + ".cfg") + " -o " + a.string()) == 0);
    REQUIRE(run(std::string(cmd) + " -c " + config(file + ".cfg") + " -o " + b.string()) == 0);
    CHECK_MESSAGE(same_data(a, b), cmd);
    CHECK(fs::exists(a / "manifest.json"));
    CHECK(fs::exists(a / "summary.json"));
  }
}

TEST_CASE("the seed flag changes Monte Carlo output and the job count does not") {
  const auto cfg = write_config("mc.cfg",
                                "family = product_cantor\ntarget_dim = 1.7\nlevel = 5\npins = 6\n"
                                "eps = 2^-3, 2^-4\nmc_samples = 5000\nseed = 3\n");
  const auto one = kScratch / "mc_j1", four = kScratch / "mc_j4", other = kScratch / "mc_seed";
  for (const auto& d : {one, four, other}) fs::remove_all(d);
  REQUIRE(run("pinned -c " + cfg.string() + " -j 1 -o " + one.string()) == 0);
  REQUIRE(run("pinned -c " + cfg.string() + " -j 4 -o " + four.string()) == 0);
  REQUIRE(run("pinned -c " + cfg.string() + " --seed 4 -o " + other.string()) == 0);
  CHECK(same_data(one, four));
  CHECK(slurp(one / "pinned_density.csv") != slurp(other / "pinned_density.csv"));

  const auto sw1 = kScratch / "sweep_j1", sw3 = kScratch / "sweep_j3";
  const auto sweep = write_config("sweep_small.cfg",
                                  "target_dims = 1.0, 1.7\nlevel = 4\npins = 10\neps = 2^-3, 2^-4, 2^-5\nseed = 9\n");
  REQUIRE(run("sweep -c " + sweep.string() + " -j 1 -o " + sw1.string()) == 0);
  REQUIRE(run("sweep -c " + sweep.string() + " -j 3 -o " + sw3.string()) == 0);
  CHECK(same_data(sw1, sw3));
}

TEST_CASE("regression freeze and check") {
  const auto cfg = write_config("reg.cfg", "target_dim = 1.6\nlevel = 4\npins = 4\neps = 2^-3, 2^-4\nseed = 5\n");
  const auto out = kScratch / "reg";
  fs::remove_all(out);
  const auto golden = (kScratch / "reg_golden.json").string();
  REQUIRE(run("pinned -c " + cfg.string() + " -o " + out.string() + " --regression-freeze --golden " + golden) == 0);
  CHECK(fs::exists(golden));
  CHECK(run("pinned -c " + cfg.string() + " -o " + out.string() + " --regression-check --golden " + golden) == 0);
  CHECK(run("pinned -c " + cfg.string() + " --seed 6 -o " + out.string() + " --regression-check --golden " + golden) ==
        4);
  const auto other = write_config("reg2.cfg", "target_dim = 1.7\nlevel = 4\npins = 4\neps = 2^-3, 2^-4\nseed = 5\n");
  CHECK(run("pinned -c " + other.string() + " -o " + out.string() + " --regression-check --golden " + golden) == 4);
  CHECK(run("pinned -c " + cfg.string() + " -o " + out.string() + " --regression-check --golden " +
            (kScratch / "absent.json").string()) == 2);
}

TEST_CASE("manifests echo the resolved config") {
  const auto out = kScratch / "manifest";
  fs::remove_all(out);
  REQUIRE(run("hinge -c " + config("hinge.cfg") + " --seed 17 -o " + out.string()) == 0);
  const auto m = slurp(out / "manifest.json");
  CHECK(m.find("\"seed\": 17") != std::string::npos);
  CHECK(m.find("\"version\"") != std::string::npos);
  CHECK(m.find("\"dt_divisor\"") != std::string::npos);
}
