#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "affgrasp/cli.hpp"
#include "affgrasp/io.hpp"

using namespace affgrasp;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("affgrasp_cli_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string x;
  while (std::getline(ss, x, '\t')) f.push_back(x);
  return f;
}

}  // namespace

TEST_CASE("git blob hash") {
  // git hash-object on an empty file and on "hello\n"
  CHECK(cli::git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(cli::git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("gen-data writes 20 clouds and a manifest, byte-identical on rerun") {
  TempDir tmp;
  const auto a = run({"gen-data", "--categories", "mug,knife", "--per-category", "10", "--seed", "7", "--out", tmp / "a"});
  REQUIRE(a.code == 0);
  const auto b = run({"gen-data", "--categories", "mug,knife", "--per-category", "10", "--seed", "7", "--out", tmp / "b"});
  REQUIRE(b.code == 0);
  int ply = 0;
  for (const auto& e : fs::directory_iterator(tmp / "a")) {
    const auto name = e.path().filename().string();
    if (name == "run_manifest.json") continue;
    ply += e.path().extension() == ".ply";
    CHECK(read_file(e.path()) == read_file(fs::path(tmp / "b") / name));
  }
  CHECK(ply == 20);
  const auto manifest = nlohmann::json::parse(read_file(tmp / "a/run_manifest.json"));
  CHECK(manifest["command"] == "gen-data");
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["status"] == "ok");
  CHECK(manifest["outputs"].size() == 21);
  CHECK(manifest["config"]["--per-category"] == "10");
}

TEST_CASE("train on 8 samples writes a checkpoint and a 5-line history") {
  TempDir tmp;
  const auto r = run({"train", "--arch", "resunet", "--epochs", "5", "--widths", "2,3", "--res", "8", "--categories",
                      "mug,knife", "--per-category", "4", "--points", "800", "--batch", "4", "--out", tmp / "t"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(fs::file_size(tmp / "t/checkpoint.runc") > 0);
  std::istringstream hist(read_file(tmp / "t/history.tsv"));
  int lines = 0;
  for (std::string l; std::getline(hist, l);) ++lines;
  CHECK(lines == 5);

  const auto e = run({"eval-iou", "--checkpoint", tmp / "t/checkpoint.runc", "--categories", "mug", "--per-category", "2",
                      "--points", "800"});
  CHECK(e.code == 0);
  CHECK(e.out.find("Mug\t") != std::string::npos);
  CHECK(e.out.find("Overall\t") != std::string::npos);
}

TEST_CASE("plan on a synthetic mug prints tab-separated configurations") {
  TempDir tmp;
  REQUIRE(run({"gen-data", "--categories", "mug", "--per-category", "1", "--out", tmp / "d"}).code == 0);
  std::string cloud;
  for (const auto& e : fs::directory_iterator(tmp / "d"))
    if (e.path().extension() == ".ply") cloud = e.path().string();
  const auto r = run({"plan", "--cloud", cloud, "--table-z", "0", "--labels", "ground-truth", "--manifest", tmp / "m.json"});
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  int configs = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    CHECK(split_tabs(line).size() == 8);
    ++configs;
  }
  CHECK(configs >= 1);
  const auto m = nlohmann::json::parse(read_file(tmp / "m.json"));
  CHECK(m["inputs"][0]["git_blob_sha1"] == cli::git_blob_sha1(read_file(cloud)));

  const auto viz = run({"viz", "--cloud", cloud, "--out", tmp / "v.ply"});
  REQUIRE(viz.code == 0);
  const auto ply = read_file(tmp / "v.ply");
  CHECK(ply.find("property uchar red") != std::string::npos);
  CHECK(ply.find("element edge 1") != std::string::npos);
  CHECK(ply.find(" 255 165 0\n") != std::string::npos);
  CHECK(ply.find(" 0 0 139\n") != std::string::npos);
}

TEST_CASE("usage and domain errors") {
  TempDir tmp;
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({}).code == 2);
  const auto bad = run({"gen-data", "--per-category", "abc", "--out", tmp / "x"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("--per-category") != std::string::npos);
  const auto neg = run({"grasp-bench", "--trials", "-4"});
  CHECK(neg.code == 2);
  CHECK(neg.err.find("--trials") != std::string::npos);
  CHECK(run({"plan", "--cloud", tmp / "x.ply", "--aperture", "nan"}).code == 2);

  const auto missing = run({"plan", "--cloud", tmp / "none.ply", "--manifest", tmp / "fail.json"});
  CHECK(missing.code == 1);
  const auto m = nlohmann::json::parse(read_file(tmp / "fail.json"));
  CHECK(m["status"] == "failed");

  // no affordance points: a domain failure
  write_file_atomic(tmp / "flat.xyz", "0 0 0 0\n1 0 0 0\n0 1 0 0\n0 0 1 0\n");
  CHECK(run({"plan", "--cloud", tmp / "flat.xyz", "--manifest", tmp / "m2.json"}).code == 1);
}

TEST_CASE("--help exits 0 on every subcommand and names its flags") {
  CHECK(run({"--help"}).code == 0);
  for (std::string sub : {"gen-data", "train", "eval-iou", "plan", "grasp-bench", "sweep", "bench-time", "viz"}) {
    const auto r = run({sub, "--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("--seed") != std::string::npos);
  }
  const auto t = run({"train", "--help"});
  for (const char* flag : {"--arch", "--epochs", "--widths", "--res", "--batch", "--lr", "--data", "--out"})
    CHECK(t.out.find(flag) != std::string::npos);
}

TEST_CASE("config file: flags win over the file, the file over defaults") {
  TempDir tmp;
  write_file_atomic(tmp / "run.cfg", "# dataset\nper-category = 2\ncategories = lamp\nseed=5\n");
  REQUIRE(run({"gen-data", "--config", tmp / "run.cfg", "--out", tmp / "c"}).code == 0);
  auto m = nlohmann::json::parse(read_file(tmp / "c/run_manifest.json"));
  CHECK(m["seed"] == 5);
  CHECK(m["outputs"].size() == 3);

  REQUIRE(run({"gen-data", "--config", tmp / "run.cfg", "--per-category", "3", "--out", tmp / "f"}).code == 0);
  m = nlohmann::json::parse(read_file(tmp / "f/run_manifest.json"));
  CHECK(m["outputs"].size() == 4);

  write_file_atomic(tmp / "bad.cfg", "per-category\n");
  CHECK(run({"gen-data", "--config", tmp / "bad.cfg", "--out", tmp / "g"}).code == 2);
}

TEST_CASE("grasp-bench and sweep honor the seed") {
  const std::vector<std::string> args{"grasp-bench", "--trials", "1", "--categories", "mug,chair", "--points", "1000", "--seed", "3",
                                      "--manifest", (fs::temp_directory_path() / "affgrasp_gb.json").string()};
  const auto a = run(args), b = run(args);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.find("Average") != std::string::npos);
  const auto s = run({"sweep", "density", "--trials", "1", "--categories", "lamp", "--points", "1000", "--levels", "1,0.5",
                      "--manifest", (fs::temp_directory_path() / "affgrasp_sw.json").string()});
  CHECK(s.code == 0);
  CHECK(s.out.find("keep_probability") != std::string::npos);
  fs::remove(fs::temp_directory_path() / "affgrasp_gb.json");
  fs::remove(fs::temp_directory_path() / "affgrasp_sw.json");
}
