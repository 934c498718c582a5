// End-to-end tests of the command-line surface, run against the built binary.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

#ifndef MGTR_CLI_PATH
#error "MGTR_CLI_PATH must point at the mgtr executable"
#endif

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string out_path = (fs::temp_directory_path() / "mgtr_cli_out.txt").string();
  const std::string cmd = std::string(MGTR_CLI_PATH) + " " + args + " >" + out_path + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_path);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// small, fast configuration shared by the pipeline tests
const char* kTiny =
    "--profile desk --set model.num_modes=6 --set model.model_dim=32 --set model.ffn_dim=48 "
    "--set model.map_tokens=24 --set model.voxel_tokens=8 --set model.dec_traj_tokens=16 "
    "--set model.dec_motion_tokens=16 --set data.num_scenarios=12 --set data.voxel_hw=20 "
    "--set data.voxel_cell=2.5 --set model.voxel_levels=[5.0,2.5] --set train.epochs=1 "
    "--set nms.keep=4 ";

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / "mgtr_cli_ws";
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  std::string p(const char* name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("full pipeline: gen-data, cluster, train, eval, predict, tokenize") {
  Workspace ws;
  auto gen = run(std::string(kTiny) + "gen-data --set paths.out_dir=" + ws.dir.string() +
                 " --val-count 3");
  CHECK(gen.exit_code == 0);
  CHECK(gen.out.find("train.ndjson") != std::string::npos);
  REQUIRE(fs::exists(ws.p("train.ndjson")));
  REQUIRE(fs::exists(ws.p("val.ndjson")));

  auto cluster = run(std::string(kTiny) + "cluster-intentions --set paths.train=" +
                     ws.p("train.ndjson") + " --out " + ws.p("goals.json"));
  CHECK(cluster.exit_code == 0);
  REQUIRE(fs::exists(ws.p("goals.json")));

  const std::string common = std::string(kTiny) + "--set paths.goals=" + ws.p("goals.json") + " ";
  auto train = run(common + "train --set paths.train=" + ws.p("train.ndjson") +
                   " --set paths.out_dir=" + ws.p("run"));
  CHECK(train.exit_code == 0);
  CHECK(train.out.find("trained") != std::string::npos);
  const std::string ckpt = ws.p("run/checkpoint_epoch_001.mgtr");
  REQUIRE(fs::exists(ckpt));

  // metrics log lines carry the documented fields
  {
    std::ifstream log(ws.p("run/metrics.jsonl"));
    std::string line;
    REQUIRE(std::getline(log, line));
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"step", "epoch", "total", "aux", "cls", "gmm", "lr"})
      CHECK(j.contains(key));
  }

  auto eval = run(common + "eval --checkpoint " + ckpt + " --data " + ws.p("val.ndjson") +
                  " --out " + ws.p("report.json"));
  CHECK(eval.exit_code == 0);
  CHECK(eval.out.find("minADE") != std::string::npos);
  {
    const auto j = nlohmann::json::parse(file_bytes(ws.p("report.json")));
    CHECK(j.contains("types"));
    CHECK(j["types"].contains("Vehicle"));
    CHECK(j["avg"]["avg"].contains("mAP"));
  }

  auto predict = run(common + "predict --checkpoint " + ckpt + " --data " + ws.p("val.ndjson") +
                     " --out " + ws.p("pred.json") + " --plot " + ws.p("plots"));
  CHECK(predict.exit_code == 0);
  {
    const auto j = nlohmann::json::parse(file_bytes(ws.p("pred.json")));
    CHECK(j.at("schema_version") == 1);
    REQUIRE(!j.at("predictions").empty());
    const auto& p = j["predictions"][0];
    CHECK(p.contains("scenario_id"));
    CHECK(p.contains("agent_id"));
    CHECK(p.contains("agent_type"));
    REQUIRE(!p.at("modes").empty());
    double total = 0;
    for (const auto& m : p["modes"]) {
      total += m.at("probability").get<double>();
      CHECK(m.at("trajectory").size() == 80);
      CHECK(m["trajectory"][0].size() == 4);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(!fs::is_empty(ws.p("plots")));

  // prediction output is byte-deterministic
  auto predict2 = run(common + "predict --checkpoint " + ckpt + " --data " + ws.p("val.ndjson") +
                      " --out " + ws.p("pred2.json"));
  CHECK(predict2.exit_code == 0);
  CHECK(file_bytes(ws.p("pred.json")) == file_bytes(ws.p("pred2.json")));

  auto tok = run(common + "tokenize --data " + ws.p("val.ndjson") + " --dump --limit 1");
  CHECK(tok.exit_code == 0);
  {
    const auto j = nlohmann::json::parse(tok.out);
    REQUIRE(!j.empty());
    const auto& t = j[0]["targets"][0];
    CHECK(t.contains("agent_tokens"));
    CHECK(t["map_levels"].size() == 2);
    CHECK(t["voxel_levels"].size() == 2);
    CHECK(t["map_levels"][0].contains("ref_positions"));
    CHECK(t.contains("selected"));
  }
}

TEST_CASE("machine-parsable errors and exit codes") {
  auto bad_key = run("gen-data --set nope.key=1");
  CHECK(bad_key.exit_code == 2);
  CHECK(bad_key.out.rfind("E_CONFIG:", 0) == 0);

  auto missing = run("train --profile desk --set paths.train=/does/not/exist.ndjson "
                     "--set paths.goals=/does/not/exist.json");
  CHECK(missing.exit_code == 2);  // goals path validated first
  CHECK(missing.out.find("E_") == 0);

  Workspace ws;
  {
    std::ofstream bad(ws.p("bad.ndjson"));
    bad << "{\"schema_version\": 2}\n";
  }
  auto schema = run("tokenize --profile desk --data " + ws.p("bad.ndjson") + " --dump");
  CHECK(schema.exit_code == 5);
  CHECK(schema.out.rfind("E_SCHEMA:", 0) == 0);

  auto args = run("frobnicate");
  CHECK(args.exit_code == 2);
  CHECK(args.out.rfind("E_ARGS:", 0) == 0);

  auto nockpt = run("eval --profile desk --set paths.goals=/missing.json --checkpoint /missing.mgtr "
                    "--data /missing.ndjson");
  CHECK(nockpt.exit_code != 0);
  CHECK(nockpt.out.find("E_") == 0);
}

TEST_CASE("config hash guards checkpoints") {
  Workspace ws;
  REQUIRE(run(std::string(kTiny) + "gen-data --set paths.out_dir=" + ws.dir.string() +
              " --val-count 2")
              .exit_code == 0);
  REQUIRE(run(std::string(kTiny) + "cluster-intentions --set paths.train=" + ws.p("train.ndjson") +
              " --out " + ws.p("goals.json"))
              .exit_code == 0);
  const std::string common = std::string(kTiny) + "--set paths.goals=" + ws.p("goals.json") + " ";
  REQUIRE(run(common + "train --set paths.train=" + ws.p("train.ndjson") +
              " --set paths.out_dir=" + ws.p("run"))
              .exit_code == 0);
  const std::string ckpt = ws.p("run/checkpoint_epoch_001.mgtr");

  // a different model configuration must be rejected unless overridden
  auto mismatched = run(common + "eval --set model.knn_k=5 --checkpoint " + ckpt + " --data " +
                        ws.p("val.ndjson"));
  CHECK(mismatched.exit_code == 2);
  CHECK(mismatched.out.rfind("E_CONFIG:", 0) == 0);
  CHECK(mismatched.out.find("--allow-hash-mismatch") != std::string::npos);
}
