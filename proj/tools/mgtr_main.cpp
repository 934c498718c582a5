// mgtr: synthetic-driving motion prediction with a multi-granular
// transformer encoder/decoder. Subcommands: gen-data, cluster-intentions,
// train, eval, predict, tokenize.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mgtr/checkpoint.hpp"
#include "mgtr/config.hpp"
#include "mgtr/context_search.hpp"
#include "mgtr/errors.hpp"
#include "mgtr/log.hpp"
#include "mgtr/svg_plot.hpp"
#include "mgtr/train.hpp"

namespace fs = std::filesystem;
using namespace mgtr;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string profile = "paper";
  std::vector<std::string> overrides;  // key=value
};

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg = RunConfig::profile_by_name(args.profile);
  if (!args.config_path.empty()) cfg = load_config_file(args.config_path, cfg);
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key.path=value, got '" + kv + "'");
    cfg.apply_override(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--profile", args.profile, "base profile: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--set", args.overrides, "override config keys, e.g. --set optimizer.lr=0.001");
}

IntentionGoalSet load_goals_checked(const RunConfig& cfg) {
  if (cfg.paths.goals.empty()) throw ConfigError("paths.goals not set (run cluster-intentions)");
  const IntentionGoalSet goals = load_goals(cfg.paths.goals);
  if (goals.num_modes() != cfg.model.num_modes)
    throw ConfigError("goals file has " + std::to_string(goals.num_modes()) +
                      " modes, config expects " + std::to_string(cfg.model.num_modes));
  return goals;
}

MgtrModel load_model_from_checkpoint(const RunConfig& cfg, const std::string& checkpoint,
                                     bool allow_hash_mismatch) {
  MgtrModel model(cfg.model, cfg.seed);
  const CheckpointInfo info = load_checkpoint(checkpoint, model.params());
  if (!allow_hash_mismatch && info.config_hash != cfg.config_hash())
    throw ConfigError("checkpoint config hash " + info.config_hash +
                      " does not match the active config " + cfg.config_hash() +
                      " (pass --allow-hash-mismatch to override)");
  return model;
}

GmmModeSet modes_to_world(const GmmModeSet& local, const Pose2& pose) {
  GmmModeSet world = local;
  for (Index m = 0; m < local.modes(); ++m)
    for (Index t = 0; t < local.steps; ++t) {
      const Vec2 p = from_agent_frame_point(local.mean(m, t), pose);
      const Vec2 v = from_agent_frame_vector(local.velocity(m, t), pose);
      world.raw(m, t * kGmmChannels + 0) = p.x();
      world.raw(m, t * kGmmChannels + 1) = p.y();
      world.raw(m, t * kGmmChannels + 5) = v.x();
      world.raw(m, t * kGmmChannels + 6) = v.y();
    }
  return world;
}

int cmd_gen_data(const RunConfig& cfg, int val_count) {
  cfg.data.validate();
  fs::create_directories(cfg.paths.out_dir);
  const std::string train_path = (fs::path(cfg.paths.out_dir) / "train.ndjson").string();
  const std::string val_path = (fs::path(cfg.paths.out_dir) / "val.ndjson").string();

  // disjoint seed streams for the two splits
  const std::uint64_t train_seed = cfg.seed;
  const std::uint64_t val_seed = cfg.seed + 1000003ull;

  save_scenarios(train_path, generate_synthetic(train_seed, cfg.data));
  SceneGenConfig val_cfg = cfg.data;
  val_cfg.num_scenarios = val_count > 0 ? val_count : std::max(1, cfg.data.num_scenarios / 4);
  save_scenarios(val_path, generate_synthetic(val_seed, val_cfg));

  std::printf("wrote %d scenarios to %s\n", cfg.data.num_scenarios, train_path.c_str());
  std::printf("wrote %d scenarios to %s\n", val_cfg.num_scenarios, val_path.c_str());
  return 0;
}

int cmd_cluster_intentions(const RunConfig& cfg, const std::string& out_path) {
  if (cfg.paths.train.empty()) throw ConfigError("paths.train not set");
  ScenarioReader reader(cfg.paths.train);
  auto get = [&](std::size_t i) { return reader.load(i); };
  const auto endpoints = collect_goal_endpoints(get, reader.size());
  const IntentionGoalSet goals = cluster_intention_goals(endpoints, cfg.model.num_modes, cfg.seed);
  save_goals(out_path, goals);
  std::printf("clustered %lld goals per type into %s\n",
              static_cast<long long>(cfg.model.num_modes), out_path.c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  if (cfg.paths.train.empty()) throw ConfigError("paths.train not set");
  const IntentionGoalSet goals = load_goals_checked(cfg);
  const std::vector<Scenario> data = load_scenarios(cfg.paths.train);

  fs::create_directories(cfg.paths.out_dir);
  const std::string log_path = (fs::path(cfg.paths.out_dir) / "metrics.jsonl").string();
  std::ofstream metrics_log(log_path, std::ios::binary);
  if (!metrics_log) throw IoError("cannot open metrics log: " + log_path);

  MgtrModel model(cfg.model, cfg.seed);
  log::info("training on " + std::to_string(data.size()) + " scenarios, " +
            std::to_string(model.params().scalar_count()) + " parameters");
  const TrainSummary sum = train_model(model, cfg, data, goals, cfg.paths.out_dir, &metrics_log);
  std::printf("trained %d steps; last checkpoint: %s\n", sum.steps, sum.last_checkpoint.c_str());
  std::printf("final loss: total %.6f aux %.6f cls %.6f gmm %.6f\n", sum.last_breakdown.total,
              sum.last_breakdown.aux, sum.last_breakdown.cls, sum.last_breakdown.gmm);
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& data_path,
             const std::string& out_json, bool allow_hash_mismatch) {
  const IntentionGoalSet goals = load_goals_checked(cfg);
  const MgtrModel model = load_model_from_checkpoint(cfg, checkpoint, allow_hash_mismatch);
  ScenarioReader reader(data_path);
  auto get = [&](std::size_t i) { return reader.load(i); };
  const EvalReport report =
      evaluate_model(model, get, reader.size(), goals, cfg.nms, cfg.metrics_config());
  std::printf("%s", report.to_table().c_str());
  if (!out_json.empty()) {
    std::ofstream out(out_json, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + out_json);
    out << report.to_json() << "\n";
    std::printf("report written to %s\n", out_json.c_str());
  }
  return 0;
}

int cmd_predict(const RunConfig& cfg, const std::string& checkpoint, const std::string& data_path,
                const std::string& out_path, const std::string& plot_dir,
                bool allow_hash_mismatch) {
  const IntentionGoalSet goals = load_goals_checked(cfg);
  const MgtrModel model = load_model_from_checkpoint(cfg, checkpoint, allow_hash_mismatch);
  ScenarioReader reader(data_path);
  if (!plot_dir.empty()) fs::create_directories(plot_dir);

  nlohmann::json out;
  out["schema_version"] = 1;
  nlohmann::json preds = nlohmann::json::array();
  for (std::size_t i = 0; i < reader.size(); ++i) {
    const Scenario s = reader.load(i);
    for (int target : s.targets) {
      ad::NoGradGuard guard;
      MgtrModel::Forward fwd = model.forward(s, target, goals);
      const GmmModeSet pruned = nms_select(fwd.modes.back(), cfg.nms.keep, cfg.nms.radius);
      const GmmModeSet world = modes_to_world(pruned, fwd.pose);

      nlohmann::json modes = nlohmann::json::array();
      for (Index m = 0; m < world.modes(); ++m) {
        nlohmann::json traj = nlohmann::json::array();
        for (Index t = 0; t < world.steps; ++t) {
          const Vec2 p = world.mean(m, t);
          const Vec2 v = world.velocity(m, t);
          traj.push_back({p.x(), p.y(), v.x(), v.y()});
        }
        modes.push_back({{"probability", world.probabilities(m)}, {"trajectory", std::move(traj)}});
      }
      preds.push_back({{"scenario_id", s.scenario_id},
                       {"agent_id", target},
                       {"agent_type", to_string(s.find_agent(target)->agent_type)},
                       {"modes", std::move(modes)}});
      if (!plot_dir.empty()) {
        const std::string svg = (fs::path(plot_dir) /
                                 (s.scenario_id + "_agent" + std::to_string(target) + ".svg"))
                                    .string();
        write_prediction_svg(svg, s, target, world);
      }
    }
  }
  const std::size_t count = preds.size();
  out["predictions"] = std::move(preds);
  std::ofstream of(out_path, std::ios::binary);
  if (!of) throw IoError("cannot open for writing: " + out_path);
  of << out.dump() << "\n";
  std::printf("wrote %zu predictions to %s\n", count, out_path.c_str());
  return 0;
}

int cmd_tokenize(const RunConfig& cfg, const std::string& data_path, bool dump, int limit) {
  if (!dump) throw ConfigError("tokenize requires --dump");
  ScenarioReader reader(data_path);
  const std::size_t n =
      limit > 0 ? std::min<std::size_t>(reader.size(), static_cast<std::size_t>(limit))
                : reader.size();
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const Scenario s = reader.load(i);
    nlohmann::json sj;
    sj["scenario_id"] = s.scenario_id;
    nlohmann::json targets = nlohmann::json::array();
    for (int target : s.targets) {
      const Pose2 pose = target_pose(*s.find_agent(target));
      AgentState local = s.find_agent(target)->current();
      const Vec2 vl = to_agent_frame_vector(Vec2(local.vx, local.vy), pose);
      local.x = 0;
      local.y = 0;
      local.vx = vl.x();
      local.vy = vl.y();
      const Vec2 center =
          cfg.model.motion_aware ? motion_projected_center(local, cfg.model.tau) : Vec2(0, 0);

      nlohmann::json tj;
      tj["agent_id"] = target;
      const AgentArrays agents = build_agent_arrays(s, pose);
      tj["agent_tokens"] = agents.ref.rows();
      nlohmann::json agent_refs = nlohmann::json::array();
      for (Index r = 0; r < agents.ref.rows(); ++r)
        agent_refs.push_back({agents.ref(r, 0), agents.ref(r, 1)});
      tj["agent_ref_positions"] = std::move(agent_refs);

      const VectorizedMap vm = vectorize_map(s.map, cfg.model.granularity);
      std::vector<MatX2> map_refs;
      nlohmann::json map_levels = nlohmann::json::array();
      for (const auto& lv : vm.levels) {
        const MatX2 refs = to_agent_frame_points(lv.ref_world, pose);
        map_refs.push_back(refs);
        nlohmann::json lj;
        lj["tokens"] = lv.polyline_count();
        lj["points_per_polyline"] = lv.points_per_polyline;
        nlohmann::json rp = nlohmann::json::array();
        for (Index r = 0; r < refs.rows(); ++r) rp.push_back({refs(r, 0), refs(r, 1)});
        lj["ref_positions"] = std::move(rp);
        map_levels.push_back(std::move(lj));
      }
      tj["map_levels"] = std::move(map_levels);

      std::vector<MatX2> vox_refs;
      nlohmann::json vox_levels = nlohmann::json::array();
      for (double cell : cfg.model.granularity.voxel_levels) {
        const MatX2 refs = pooled_voxel_refs(s.voxels, cell, pose);
        vox_refs.push_back(refs);
        nlohmann::json lj;
        lj["cell_size"] = cell;
        lj["tokens"] = refs.rows();
        nlohmann::json rp = nlohmann::json::array();
        for (Index r = 0; r < refs.rows(); ++r) rp.push_back({refs(r, 0), refs(r, 1)});
        lj["ref_positions"] = std::move(rp);
        vox_levels.push_back(std::move(lj));
      }
      tj["voxel_levels"] = std::move(vox_levels);

      const LevelSelection msel =
          select_across_levels(map_refs, center, cfg.model.map_budget, cfg.model.per_level_budget);
      const LevelSelection vsel = select_across_levels(vox_refs, center, cfg.model.voxel_budget,
                                                       cfg.model.per_level_budget);
      tj["selected"] = {{"map", msel.total},
                        {"voxel", vsel.total},
                        {"search_center", {center.x(), center.y()}}};
      targets.push_back(std::move(tj));
    }
    sj["targets"] = std::move(targets);
    out.push_back(std::move(sj));
  }
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

int exit_code_for(const Error& e) {
  const std::string code = e.code();
  if (code == "E_CONFIG") return 2;
  if (code == "E_IO") return 3;
  if (code == "E_PARSE") return 4;
  if (code == "E_SCHEMA") return 5;
  if (code == "E_CONTRACT") return 6;
  if (code == "E_NUMERIC") return 7;
  if (code == "E_DIM") return 8;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-granular transformer motion prediction on synthetic driving scenes"};
  app.require_subcommand(1);

  CommonArgs gen_args, cluster_args, train_args, eval_args, predict_args, tok_args;

  auto* gen = app.add_subcommand("gen-data", "generate synthetic train/val scenario files");
  add_common(gen, gen_args);
  int val_count = 0;
  gen->add_option("--val-count", val_count, "validation scenario count (default: train/4)");

  auto* cluster = app.add_subcommand("cluster-intentions",
                                     "k-means intention goals from training endpoints");
  add_common(cluster, cluster_args);
  std::string goals_out = "goals.json";
  cluster->add_option("--out", goals_out, "output goals JSON path");

  auto* train = app.add_subcommand("train", "train the model");
  add_common(train, train_args);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_args);
  std::string eval_ckpt, eval_data, eval_out;
  bool eval_loose = false;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--data", eval_data, "scenario NDJSON path")->required();
  eval->add_option("--out", eval_out, "write the report JSON here");
  eval->add_flag("--allow-hash-mismatch", eval_loose, "skip the config hash check");

  auto* predict = app.add_subcommand("predict", "predict trajectories for every target");
  add_common(predict, predict_args);
  std::string pr_ckpt, pr_data, pr_out = "predictions.json", pr_plots;
  bool pr_loose = false;
  predict->add_option("--checkpoint", pr_ckpt, "checkpoint path")->required();
  predict->add_option("--data", pr_data, "scenario NDJSON path")->required();
  predict->add_option("--out", pr_out, "output predictions JSON");
  predict->add_option("--plot", pr_plots, "directory for SVG plots");
  predict->add_flag("--allow-hash-mismatch", pr_loose, "skip the config hash check");

  auto* tok = app.add_subcommand("tokenize", "token statistics for scenarios");
  add_common(tok, tok_args);
  std::string tok_data;
  bool tok_dump = false;
  int tok_limit = 0;
  tok->add_option("--data", tok_data, "scenario NDJSON path")->required();
  tok->add_flag("--dump", tok_dump, "emit token counts and ref positions as JSON");
  tok->add_option("--limit", tok_limit, "only process the first N scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::fprintf(stderr, "E_ARGS: %s\n", e.what());
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(resolve_config(gen_args), val_count);
    if (cluster->parsed()) return cmd_cluster_intentions(resolve_config(cluster_args), goals_out);
    if (train->parsed()) return cmd_train(resolve_config(train_args));
    if (eval->parsed())
      return cmd_eval(resolve_config(eval_args), eval_ckpt, eval_data, eval_out, eval_loose);
    if (predict->parsed())
      return cmd_predict(resolve_config(predict_args), pr_ckpt, pr_data, pr_out, pr_plots,
                         pr_loose);
    if (tok->parsed()) return cmd_tokenize(resolve_config(tok_args), tok_data, tok_dump, tok_limit);
  } catch (const Error& e) {
    std::fprintf(stderr, "%s: %s\n", e.code(), e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "E_INTERNAL: %s\n", e.what());
    return 1;
  }
  return 0;
}
