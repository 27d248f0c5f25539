#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using selfsim::cli::dispatch;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "selfsim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with 2") {
    CHECK(run({}).code == 2);
    CHECK(run({"no-such-command"}).code == 2);
    CHECK(run({"expander", "--out", fresh_dir("selfsim_cli_usage").string()}).code == 2);
    CHECK(run({"density", "--preset", "nothing", "--out", fresh_dir("selfsim_cli_usage").string()}).code == 2);
    CHECK(run({"--help"}).code == 0);
  }

  TEST_CASE("density writes data and a manifest") {
    const auto dir = fresh_dir("selfsim_cli_density");
    const auto r = run({"density", "--preset", "sphere", "--n", "3", "--out", dir.string(), "--format", "csv"});
    REQUIRE(r.code == 0);
    const auto sub = dir / "density";
    CHECK(fs::exists(sub / "density.csv"));
    CHECK_FALSE(fs::exists(sub / "manifest.json.tmp"));
    const auto m = nlohmann::json::parse(slurp(sub / "manifest.json"));
    CHECK(m["command"] == "density");
    CHECK(m["params"]["p"] == 1);
    CHECK(m["params"]["q"] == 2);
    CHECK(m["outputs"].size() == 2);
    for (const auto& o : m["outputs"]) {
      CHECK(o["sha256"].get<std::string>().size() == 64);
      CHECK(o["sha256"] == selfsim::cli::sha256_file(sub / o["path"].get<std::string>()));
    }
    const auto summary = nlohmann::json::parse(slurp(sub / "density_summary.json"));
    CHECK(summary["max_deviation"].get<double>() < 1e-6);
    const auto csv = slurp(sub / "density.csv");
    CHECK(csv.rfind("t,phi,err\n", 0) == 0);
  }

  TEST_CASE("outputs are deterministic and verifiable") {
    const auto a = fresh_dir("selfsim_cli_det_a");
    const auto b = fresh_dir("selfsim_cli_det_b");
    REQUIRE(run({"shrinkers", "--kmax", "3", "--out", a.string(), "--format", "csv"}).code == 0);
    REQUIRE(run({"shrinkers", "--kmax", "3", "--out", b.string(), "--format", "csv"}).code == 0);
    CHECK(slurp(a / "shrinkers" / "shrinkers.csv") == slurp(b / "shrinkers" / "shrinkers.csv"));
    CHECK(slurp(a / "shrinkers" / "sequence.json") == slurp(b / "shrinkers" / "sequence.json"));

    const auto manifest = (a / "shrinkers" / "manifest.json").string();
    auto v = run({"--verify", manifest});
    CHECK(v.code == 0);
    CHECK(v.out.find("all outputs match") != std::string::npos);
    {
      std::ofstream os(a / "shrinkers" / "shrinkers.csv", std::ios::app);
      os << "tampered\n";
    }
    v = run({"--verify", manifest});
    CHECK(v.code == 3);
    CHECK(v.out.find("drift") != std::string::npos);
    CHECK(run({"--verify", (a / "missing.json").string()}).code == 4);
  }

  TEST_CASE("environment chooses the default output directory") {
    const auto dir = fresh_dir("selfsim_cli_env");
    ::setenv("SELFSIM_OUT", dir.string().c_str(), 1);
    const auto r = run({"total-curvature", "--preset", "circle"});
    ::unsetenv("SELFSIM_OUT");
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "total-curvature" / "manifest.json"));
  }

  TEST_CASE("unwritable output directory exits with 4") {
    const auto blocker = fresh_dir("selfsim_cli_blocker");
    { std::ofstream os(blocker); os << "file, not a directory"; }
    CHECK(run({"kernel-check", "--draws", "5", "--out", blocker.string()}).code == 4);
    fs::remove(blocker);
  }

  TEST_CASE("numerical failures exit with 3") {
    // A window far too short for a trustworthy two-mode fit.
    const auto dir = fresh_dir("selfsim_cli_fit");
    fs::create_directories(dir);
    {
      std::ofstream os(dir / "tail.csv");
      os << "r,w\n";
      for (int i = 0; i <= 2000; ++i) {
        const double r = 1.0 + 1e-4 * i / 2000;
        os << r << "," << 1.0 / r << "\n";
      }
    }
    const auto r = run({"fit", "--input", (dir / "tail.csv").string(), "--n", "4", "--window", "1.00001", "1.00009", "--out", dir.string()});
    CHECK(r.code == 3);
  }
}
