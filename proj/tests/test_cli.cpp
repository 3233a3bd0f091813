#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "runner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json small_synth(int n = 300) {
  json doc = json::parse(R"({"seed": 11, "dataset": {"synth": {"sigma": 0.8}}})");
  doc["dataset"]["synth"]["n"] = n;
  return doc;
}

std::string error_of(const json& doc) {
  try {
    ieo::cli::parse_config(doc);
  } catch (const ieo::cli::ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("ieoml_cli_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ieo::cli::RunManifest run_in(const json& doc, const std::string& command, const fs::path& out, int workers = 1) {
  return ieo::cli::run(ieo::cli::parse_config(doc), {command, out.string(), std::nullopt, workers});
}

}  // namespace

TEST_CASE("config errors carry a json path") {
  json doc = small_synth();
  doc.erase("seed");
  CHECK(error_of(doc) == "config.seed: required field missing");

  doc = small_synth();
  doc["dataset"]["csv"] = json{{"path", "x.csv"}};
  CHECK(error_of(doc).find("exactly one of csv or synth") != std::string::npos);

  doc = small_synth();
  doc["sweep"] = json{{"foldz", 3}};
  CHECK(error_of(doc) == "config.sweep.foldz: unknown field");

  doc = small_synth();
  doc["sweep"] = json{{"models", {"gbt", "no-such-model"}}};
  CHECK(error_of(doc).rfind("config.sweep.models[1]", 0) == 0);

  doc = small_synth();
  doc["ieo"] = json{{"models", {json{{"kind", "gbt"}, {"params", {{"seed", 3}}}}}}};
  CHECK(error_of(doc).find("config.ieo.models[0]") == 0);

  doc = small_synth();
  doc["dataset"]["synth"]["colour"] = 1;
  CHECK(error_of(doc) == "config.dataset.synth.colour: unknown field");
}

TEST_CASE("config defaults and seed inheritance") {
  const auto c = ieo::cli::parse_config(small_synth());
  CHECK(c.seed == 11);
  REQUIRE(c.dataset.synth);
  CHECK(c.dataset.synth->seed == 11);
  CHECK(c.sweep.tc_values.size() == 11);
  CHECK(c.sweep.models.size() == 5);
  CHECK(c.ieo.folds == 10);
}

TEST_CASE("shipped configs parse") {
  for (const char* name : {"synthetic.json", "sf_columns.json"}) {
    CAPTURE(name);
    const auto path = fs::path(IEOML_SOURCE_DIR) / "configs" / name;
    CHECK_NOTHROW(ieo::cli::load_config(path.string()));
  }
}

TEST_CASE("sweep run writes a manifest listing every file") {
  TempDir dir("sweep");
  json doc = small_synth(400);
  doc["sweep"] = json{{"models", {"tree", "linear"}}, {"folds", 3}};
  const auto m = run_in(doc, "sweep", dir.path);
  REQUIRE(m.ok());
  CHECK(m.seed == 11);

  const auto csv = slurp(dir.path / "sweep.csv");
  CHECK(csv.rfind("tc,model,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 11 * 2);

  const auto manifest = json::parse(slurp(dir.path / "manifest.json"));
  CHECK(manifest.at("status") == "ok");
  CHECK(manifest.at("config_hash") == m.config_hash);
  for (const auto& f : manifest.at("files")) CHECK(fs::exists(dir.path / f.get<std::string>()));
  std::size_t on_disk = 0;
  for (const auto& e : fs::directory_iterator(dir.path))
    if (e.path().filename() != "manifest.json") ++on_disk;
  CHECK(on_disk == manifest.at("files").size());
}

TEST_CASE("seed override changes the config hash") {
  TempDir a("hash_a"), b("hash_b");
  json doc = small_synth(200);
  const auto c = ieo::cli::parse_config(doc);
  const auto m1 = ieo::cli::run(c, {"profile", a.path.string(), std::nullopt, 1});
  const auto m2 = ieo::cli::run(c, {"profile", b.path.string(), 99, 1});
  CHECK(m1.seed == 11);
  CHECK(m2.seed == 99);
  CHECK(m1.config_hash != m2.config_hash);
}

TEST_CASE("empty subsets surface as errors naming the scenario") {
  TempDir dir("scen");
  json doc = small_synth(300);
  doc["scenarios"] = json{{"tc", 1e6}, {"models", {"tree"}}, {"folds", 3}};
  const auto m = run_in(doc, "scenarios", dir.path);
  CHECK_FALSE(m.ok());
  bool named = false;
  for (const auto& e : m.errors) named = named || e.find("BtoB") != std::string::npos;
  CHECK(named);
  CHECK(json::parse(slurp(dir.path / "manifest.json")).at("status") == "error");
}

TEST_CASE("unknown command and bad worker count throw") {
  const auto c = ieo::cli::parse_config(small_synth());
  CHECK_THROWS(ieo::cli::run(c, {"bogus", "/tmp", std::nullopt, 1}));
  CHECK_THROWS(ieo::cli::run(c, {"profile", "/tmp", std::nullopt, 0}));
}

TEST_CASE("worker count does not change sweep output") {
  TempDir a("w1"), b("w4");
  json doc = small_synth(400);
  doc["sweep"] = json{{"models", {"gbt", "knn"}}, {"folds", 3}};
  REQUIRE(run_in(doc, "sweep", a.path, 1).ok());
  REQUIRE(run_in(doc, "sweep", b.path, 4).ok());
  CHECK(slurp(a.path / "sweep.csv") == slurp(b.path / "sweep.csv"));
}
