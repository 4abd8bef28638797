#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "approx.hpp"
#include "hbt/cli.hpp"
#include "hbt/errors.hpp"

using namespace hbt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome hbtlidar(std::vector<std::string> args) {
  args.insert(args.begin(), "hbtlidar");
  std::vector<const char*> argv;
  for (const auto& a : args) {
    argv.push_back(a.c_str());
  }
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("hbt_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

// Small thermal run with a peak at 15 m: 50 ms at 1e6 /s per channel.
std::vector<std::string> small_run(const std::string& out) {
  return {"simulate", "--out", out, "--photon-rate-per-s", "2e6", "--split-ref", "0.5", "--split-probe", "0.5",
          "--distance-m", "15", "--duration-s", "0.05", "--seed", "7"};
}

}  // namespace

TEST_CASE("help of each subcommand lists every flag of the table") {
  const std::pair<const char*, unsigned> commands[] = {
      {"simulate", cli::kSimulate}, {"correlate", cli::kCorrelate}, {"fit", cli::kFit},
      {"range", cli::kRange},       {"snr", cli::kSnr},             {"convert", cli::kConvert}};
  for (const auto& [name, id] : commands) {
    CAPTURE(name);
    const Outcome r = hbtlidar({name, "--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("--config") != std::string::npos);
    CHECK(r.out.find("--preset") != std::string::npos);
    for (const auto& f : cli::fields()) {
      if (f.commands & id) {
        CAPTURE(f.key);
        CHECK(r.out.find(cli::flag_name(f) + " ") != std::string::npos);
      }
    }
  }
  const Outcome top = hbtlidar({"--help"});
  CHECK(top.code == 0);
  for (const char* name : {"simulate", "correlate", "fit", "range", "snr", "convert"}) {
    CHECK(top.out.find(name) != std::string::npos);
  }
}

TEST_CASE("documented flag names exist") {
  std::set<std::string> names;
  for (const auto& f : cli::fields()) {
    names.insert(cli::flag_name(f));
  }
  for (const char* flag : {"--seed", "--bin-width-ps", "--duration-s", "--chunk-ps", "--threads", "--distance-m"}) {
    CHECK(names.count(flag) == 1);
  }
  const Outcome r = hbtlidar({"correlate", "--help"});
  CHECK(r.out.find("--window-ps") != std::string::npos);
  CHECK(r.out.find("--out") != std::string::npos);
}

TEST_CASE("configuration layering and validation") {
  TempDir dir;
  auto config = cli::default_config();
  CHECK(config["scenario"]["seed"] == 1);

  cli::apply_overlay(config, nlohmann::json::parse(R"({"scenario": {"seed": 9}})"), "test");
  CHECK(config["scenario"]["seed"] == 9);
  CHECK_THROWS_AS(cli::apply_overlay(config, nlohmann::json::parse(R"({"scenario": {"bogus": 1}})"), "test"),
                  ConfigError);
  CHECK_THROWS_AS(cli::apply_overlay(config, nlohmann::json::parse(R"({"nowhere": {}})"), "test"), ConfigError);
  CHECK_THROWS_AS(cli::apply_overlay(config, nlohmann::json::parse(R"({"scenario": {"seed": "x"}})"), "test"),
                  ConfigError);

  spit(dir / "bad.json", R"({"scenario": {"bogus": 1}})");
  Outcome r = hbtlidar({"simulate", "--config", dir / "bad.json", "--out", dir / "x.bin"});
  CHECK(r.code == 1);
  CHECK(r.err.find("bogus") != std::string::npos);
  CHECK(r.err.find("bad.json") != std::string::npos);

  spit(dir / "broken.json", "{ not json");
  CHECK(hbtlidar({"simulate", "--config", dir / "broken.json"}).code == 1);
  CHECK(hbtlidar({"simulate", "--config", dir / "missing.json"}).code == 1);
  CHECK(hbtlidar({"simulate", "--preset", "nowhere"}).code == 1);
  CHECK(hbtlidar({"simulate", "--no-such-flag"}).code == 1);
  CHECK(hbtlidar({"simulate", "--seed", "abc"}).code == 1);
  CHECK(hbtlidar({}).code == 1);

  // preset < config file < flags
  spit(dir / "seed.json", R"({"scenario": {"seed": 9, "duration_s": 0.001}})");
  r = hbtlidar({"simulate", "--preset", "short-range", "--config", dir / "seed.json", "--out", dir / "a.bin"});
  REQUIRE(r.code == 0);
  auto truth = nlohmann::json::parse(slurp(dir / "a.bin.truth.json"));
  CHECK(truth["seed"] == 9);
  CHECK(truth["config"]["scenario"]["coherence_time_ns"] == 1.03);
  r = hbtlidar({"simulate", "--preset", "short-range", "--config", dir / "seed.json", "--seed", "11", "--out",
                dir / "b.bin"});
  REQUIRE(r.code == 0);
  truth = nlohmann::json::parse(slurp(dir / "b.bin.truth.json"));
  CHECK(truth["seed"] == 11);
}

TEST_CASE("presets load and validate") {
  const auto names = cli::preset_names();
  CHECK(names == std::vector<std::string>{"long-range-1km", "long-range-2km", "short-range"});
  for (const auto& name : names) {
    CAPTURE(name);
    const auto text = cli::preset_text(name);
    REQUIRE(text.has_value());
    auto config = cli::default_config();
    cli::apply_overlay(config, nlohmann::json::parse(*text), name);
    CHECK_NOTHROW(cli::scenario_from(config).validate());
    CHECK_NOTHROW(cli::correlation_from(config));
  }
  auto config = cli::default_config();
  cli::apply_overlay(config, nlohmann::json::parse(*cli::preset_text("long-range-1km")), "p");
  CHECK(cli::scenario_from(config).distance.value() == 965.29);
  CHECK(cli::correlation_from(config).bin_width.count == 2000);
  CHECK_FALSE(cli::preset_text("nope").has_value());
}

TEST_CASE("same seed gives byte-identical outputs") {
  TempDir dir;
  REQUIRE(hbtlidar(small_run(dir / "a.bin")).code == 0);
  REQUIRE(hbtlidar(small_run(dir / "b.bin")).code == 0);
  CHECK(slurp(dir / "a.bin") == slurp(dir / "b.bin"));
  CHECK(slurp(dir / "a.bin").size() > 32 + 16 * 50000);
  auto other = small_run(dir / "c.bin");
  other.back() = "8";
  REQUIRE(hbtlidar(other).code == 0);
  CHECK(slurp(dir / "a.bin") != slurp(dir / "c.bin"));

  REQUIRE(hbtlidar({"correlate", dir / "a.bin", "--out", dir / "a.csv"}).code == 0);
  REQUIRE(hbtlidar({"correlate", dir / "b.bin", "--out", dir / "b.csv"}).code == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
}

TEST_CASE("zero duration writes an empty file") {
  TempDir dir;
  const Outcome r = hbtlidar({"simulate", "--duration-s", "0", "--out", dir / "empty.bin"});
  CHECK(r.code == 0);
  CHECK(slurp(dir / "empty.bin").size() == 32);

  const Outcome c = hbtlidar({"correlate", dir / "empty.bin", "--out", dir / "e.csv"});
  CHECK(c.code == 1);
  CHECK(c.err.find("no events") != std::string::npos);
}

TEST_CASE("correlate, fit, range and snr pipeline") {
  TempDir dir;
  REQUIRE(hbtlidar(small_run(dir / "run.bin")).code == 0);
  const Outcome c = hbtlidar({"correlate", dir / "run.bin", "--bin-width-ps", "1000", "--window-ps", "-300000:400000",
                              "--out", dir / "g2.csv"});
  REQUIRE(c.code == 0);
  const std::string csv = slurp(dir / "g2.csv");
  CHECK(csv.rfind("tau_ps,counts,g2,sigma\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 701);
  const auto meta = nlohmann::json::parse(slurp(dir / "g2.csv.meta.json"));
  CHECK(meta["bin_width_ps"] == 1000);
  CHECK(meta["window_min_ps"] == -300000);

  // Chunked correlation produces the same bytes.
  for (const char* chunk : {"1000000", "7777777", "123456789012"}) {
    CAPTURE(chunk);
    REQUIRE(hbtlidar({"correlate", dir / "run.bin", "--bin-width-ps", "1000", "--window-ps", "-300000:400000",
                      "--chunk-ps", chunk, "--out", dir / "chunked.csv"})
                .code == 0);
    CHECK(slurp(dir / "chunked.csv") == csv);
  }
  REQUIRE(hbtlidar({"correlate", dir / "run.bin", "--bin-width-ps", "1000", "--window-ps", "-300000:400000",
                    "--threads", "1", "--out", dir / "serial.csv"})
              .code == 0);
  CHECK(slurp(dir / "serial.csv") == csv);

  const Outcome f = hbtlidar({"fit", dir / "g2.csv", "--out", dir / "fit.json"});
  REQUIRE(f.code == 0);
  CHECK(f.out.find("reduced chi2") != std::string::npos);
  const auto fit = nlohmann::json::parse(slurp(dir / "fit.json"));
  CHECK(fit["converged"] == true);
  CHECK(fit["n_free_params"] == 4);

  const Outcome r = hbtlidar({"range", dir / "g2.csv", "--out", dir / "range.kv", "--result-format", "kv"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("distance") != std::string::npos);
  const std::string kv = slurp(dir / "range.kv");
  const auto at = kv.find("range.distance_m=");
  REQUIRE(at != std::string::npos);
  const double d = std::stod(kv.substr(at + 17));
  CHECK(std::abs(d - 15.0) < 1.0);

  const Outcome s = hbtlidar({"snr", dir / "g2.csv", "--out", dir / "snr.json"});
  REQUIRE(s.code == 0);
  const auto snr = nlohmann::json::parse(slurp(dir / "snr.json"));
  CHECK(snr["integration_s"].get<double>() == approx(0.05));
  CHECK(snr["predicted_snr"].get<double>() > 0.0);

  spit(dir / "junk.csv", "tau_ps,counts,g2,sigma\n1,2,3\n");
  CHECK(hbtlidar({"fit", dir / "junk.csv"}).code == 1);
  CHECK(hbtlidar({"correlate", dir / "run.bin", "--window-ps", "5:1"}).code == 1);
  CHECK(hbtlidar({"correlate", dir / "run.bin", "--window-ps", "abc"}).code == 1);
}

TEST_CASE("snr prediction") {
  const Outcome r = hbtlidar({"snr", "--rate", "1e7", "--v2", "0.6", "--tauc-ns", "23", "--dt-ms", "1"});
  CHECK(r.code == 0);
  CHECK(r.out.find("28.8") != std::string::npos);
  CHECK(hbtlidar({"snr", "--rate", "-1", "--v2", "0.6", "--tauc-ns", "23", "--dt-ms", "1"}).code == 1);
}

TEST_CASE("convert between binary and text") {
  TempDir dir;
  REQUIRE(hbtlidar(small_run(dir / "run.bin")).code == 0);
  REQUIRE(hbtlidar({"convert", dir / "run.bin", dir / "run.txt"}).code == 0);
  CHECK(slurp(dir / "run.txt").rfind("# resolution_ps=1\n", 0) == 0);
  REQUIRE(hbtlidar({"convert", dir / "run.txt", dir / "back.bin"}).code == 0);
  CHECK(slurp(dir / "back.bin") == slurp(dir / "run.bin"));

  REQUIRE(hbtlidar({"convert", dir / "run.bin", dir / "coarse.bin", "--resolution-ps", "2000", "--quantization",
                    "rounded"})
              .code == 0);
  const TagFile coarse = cli::read_any_tags(dir / "coarse.bin");
  CHECK(coarse.header.resolution_ps == 2000);
  CHECK(coarse.quantization == Quantization::Rounded);
  CHECK(hbtlidar({"convert", dir / "run.bin", dir / "x.bin", "--resolution-ps", "2000"}).code == 1);
  CHECK(hbtlidar({"convert", dir / "missing.bin", dir / "x.bin"}).code == 1);

  std::string bad = slurp(dir / "run.bin");
  bad[0] = 'Z';
  spit(dir / "bad.bin", bad);
  const Outcome r = hbtlidar({"correlate", dir / "bad.bin"});
  CHECK(r.code == 1);
}
