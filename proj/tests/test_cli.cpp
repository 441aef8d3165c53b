#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "test_util.hpp"

using fishdet::testing::TempDir;
using fishdet::testing::write_text;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const TempDir& dir, const std::string& args) {
  const auto out = dir.file("stdout.txt"), err = dir.file("stderr.txt");
  const std::string cmd =
      std::string("\"") + FISHDET_CLI_PATH + "\" " + args + " >\"" + out + "\" 2>\"" + err + "\"";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

}  // namespace

TEST_CASE("exit codes") {
  TempDir dir;
  const auto missing = dir.file("nope.csv");
  auto r = run(dir, "ingest --input " + missing + " --output " + dir.file("s.csv"));
  CHECK(r.code == 2);
  CHECK(r.err.find(missing) != std::string::npos);

  CHECK(run(dir, "train --bogus-flag").code == 1);
  CHECK(run(dir, "no-such-command").code == 1);
  CHECK(run(dir, "--help").code == 0);
  CHECK(run(dir, "label --input x --output y --window-kind sideways").code != 0);
}

TEST_CASE("ingest prints its report") {
  TempDir dir;
  const auto in = dir.file("ais.csv");
  write_text(in,
             "MMSI,BaseDateTime,LAT,LON,SOG,COG\n"
             "1,2020-04-01T00:00:00,48,-124,5,10\n"
             "1,2020-04-01T00:01:00,48,-124,-1,10\n"
             "1,2020-04-01T00:02:00,48,-124,0.2,10\n");
  const auto r = run(dir, "ingest --input " + in + " --output " + dir.file("store.csv"));
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["rows_read"] == 3);
  CHECK(j["rows_kept"] == 1);
}

TEST_CASE("synth, label, train, evaluate") {
  TempDir dir;
  const auto store = dir.file("store.csv"), labeled = dir.file("labeled.csv");
  const auto ck = dir.file("model.json"), report = dir.file("report.json");
  REQUIRE(run(dir, "synth --vessels 16 --segments 3 --seed 5 --output " + store).code == 0);

  REQUIRE(run(dir, "--quiet label --input " + store + " --output " + labeled +
                       " --window-kind time")
              .code == 0);
  const auto meta = nlohmann::json::parse(slurp(labeled + ".meta.json"));
  CHECK(meta["k"] == 8);
  CHECK(meta["config_toml"].get<std::string>().find("window-kind") != std::string::npos);
  CHECK(nlohmann::json::parse(slurp(labeled + ".clusters.json"))["centroids_raw"].size() == 8);

  REQUIRE(run(dir, "--quiet train --features " + labeled + " --out " + ck +
                       " --window 5 --hidden 8 --max-epochs 2 --stride 4 --n-test 4 --n-val 2"
                       " --history " + dir.file("hist.jsonl"))
              .code == 0);
  std::ifstream hist(dir.file("hist.jsonl"));
  int lines = 0;
  for (std::string line; std::getline(hist, line);) {
    CHECK(nlohmann::json::parse(line).contains("val_bce"));
    ++lines;
  }
  CHECK(lines == 2);
  const auto manifest = nlohmann::json::parse(slurp(ck));
  CHECK(manifest["metadata"].contains("run_config"));

  REQUIRE(run(dir, "evaluate --checkpoint " + ck + " --input " + labeled +
                       " --n-test 4 --n-val 2 --output " + report)
              .code == 0);
  const auto rep = nlohmann::json::parse(slurp(report));
  CHECK(rep.contains("macro"));
  CHECK(rep["confusion"].is_object());

  // A truncated weight file is a data error.
  std::ofstream(ck + ".bin", std::ios::trunc) << "xx";
  CHECK(run(dir, "evaluate --checkpoint " + ck + " --input " + labeled).code == 2);
}

TEST_CASE("TOML configuration file") {
  TempDir dir;
  const auto store = dir.file("store.csv"), cfg = dir.file("run.toml");
  REQUIRE(run(dir, "synth --vessels 4 --segments 2 --output " + store).code == 0);
  write_text(cfg, "[label]\nk = 3\nmin-run = 2\n");
  REQUIRE(run(dir, "--quiet --config " + cfg + " label --input " + store + " --output " +
                       dir.file("l.csv"))
              .code == 0);
  CHECK(nlohmann::json::parse(slurp(dir.file("l.csv") + ".meta.json"))["k"] == 3);
}

TEST_CASE("grid over one store yields every feature, w and s") {
  TempDir dir;
  const auto store = dir.file("store.csv"), out = dir.file("grid.csv");
  REQUIRE(run(dir, "synth --vessels 12 --segments 3 --output " + store).code == 0);
  REQUIRE(run(dir, "--quiet grid --input " + store +
                       " --cells elman --parallel 4 --s-values 4 6 8 --n-test 3 --n-val 2"
                       " --max-epochs 1 --stride 6 --output " + out)
              .code == 0);
  std::ifstream in(out);
  int rows = -1;  // header
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 27);
}

TEST_CASE("the echoed configuration reproduces a run") {
  TempDir dir;
  const auto store = dir.file("store.csv"), a = dir.file("a.csv"), b = dir.file("b.csv");
  REQUIRE(run(dir, "synth --vessels 6 --segments 3 --output " + store).code == 0);
  REQUIRE(run(dir, "--quiet label --input " + store + " --output " + a +
                       " --window-kind distance --k 4 --seed 9")
              .code == 0);
  const auto cfg = dir.file("echo.toml");
  write_text(cfg, nlohmann::json::parse(slurp(a + ".meta.json"))["config_toml"].get<std::string>());
  REQUIRE(run(dir, "--config " + cfg + " label --output " + b).code == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK_FALSE(slurp(a).empty());
}
