#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chunkgrpo/checkpoint.hpp"
#include "chunkgrpo/config.hpp"
#include "chunkgrpo/dynamics.hpp"
#include "chunkgrpo/error.hpp"
#include "chunkgrpo/harness.hpp"
#include "chunkgrpo/prop_oracle.hpp"
#include "chunkgrpo/serialize.hpp"

namespace fs = std::filesystem;
using namespace chunkgrpo;

namespace {

/// --config plus one --section.key option per config field.
struct ConfigOptions {
  std::string config_file;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "INI run configuration")->check(CLI::ExistingFile);
    for (const auto& f : config_fields()) {
      app->add_option("--" + f.key, overrides[f.key], f.help)->group("Config overrides");
    }
  }

  RunConfig resolve(CLI::App* app) const {
    RunConfig cfg = config_file.empty() ? RunConfig{} : read_ini(config_file);
    for (const auto& [key, value] : overrides) {
      if (app->count("--" + key) > 0) {
        set_config_value(cfg, key, value);
      }
    }
    cfg.validate();
    return cfg;
  }
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (std::size_t v : parse_size_list(text)) {
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chunk-level GRPO for flow-matching toy models"};
  app.require_subcommand(1);

  std::map<std::string, ConfigOptions> opts;
  auto sub = [&](const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    opts[name].attach(s);
    return s;
  };

  CLI::App* pretrain_cmd = sub("pretrain", "pretrain the flow-matching policy and save a checkpoint");
  std::string pretrain_out;
  pretrain_cmd->add_option("--out", pretrain_out, "checkpoint path (default <run>/checkpoints/pretrained.ckpt)");

  CLI::App* profile_cmd = sub("profile", "measure relative L1 profiles of the pretrained policy");
  std::string profile_out;
  profile_cmd->add_option("--out", profile_out, "profile.json path (default <run>/profile.json)");

  CLI::App* segment_cmd = sub("segment", "segment a profile into a chunk plan");
  std::string segment_profile;
  std::string segment_out;
  segment_cmd->add_option("--profile", segment_profile, "profile.json (default <run>/profile.json)");
  segment_cmd->add_option("--out", segment_out, "plan.json path (default <run>/plan.json)");

  sub("train", "run the full pipeline: pretrain, profile, segment, train, evaluate");

  CLI::App* eval_cmd = sub("eval", "evaluate a trained checkpoint with hybrid sampling");
  std::string eval_checkpoint;
  long eval_split = -1;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", eval_split, "steps sampled with the trained policy (default from config)");

  CLI::App* oracle_cmd = app.add_subcommand("oracle", "(T, m) win-region table and heatmap");
  std::size_t oracle_max = 12;
  std::string oracle_out = "oracle";
  oracle_cmd->add_option("--max-steps", oracle_max, "largest T")->check(CLI::Range(2, 60));
  oracle_cmd->add_option("--out", oracle_out, "output directory");

  CLI::App* ablate_cmd = sub("ablate", "run an ablation suite over seeds");
  std::string suite = "chunk-settings";
  std::string seeds_text = "0,1,2,3,4";
  std::size_t jobs = 1;
  ablate_cmd->add_option("--suite", suite, "chunk-settings | specific-chunks | weighted-sampling");
  ablate_cmd->add_option("--seeds", seeds_text, "comma-separated seeds");
  ablate_cmd->add_option("--jobs", jobs, "concurrent runs")->check(CLI::PositiveNumber);

  CLI::App* report_cmd = app.add_subcommand("report", "markdown summary and plots for run directories");
  std::vector<std::string> report_runs;
  std::string report_out = "report";
  report_cmd->add_option("runs", report_runs, "run directories");
  report_cmd->add_option("--out", report_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pretrain_cmd->parsed()) {
      const Context ctx(opts["pretrain"].resolve(pretrain_cmd));
      const ParamVector p = pretrained_policy(ctx, &std::cerr);
      const fs::path out = pretrain_out.empty() ? ctx.config.run_dir() / "checkpoints" / "pretrained.ckpt"
                                                : fs::path(pretrain_out);
      fs::create_directories(out.parent_path());
      save_checkpoint(p, out);
      std::cout << out.string() << '\n';
    } else if (profile_cmd->parsed()) {
      const Context ctx(opts["profile"].resolve(profile_cmd));
      const ParamVector p = pretrained_policy(ctx, &std::cerr);
      const ProfileSet set = profile_policy(ctx, p);
      Json doc{{"pretrained", to_json(set.pooled)}, {"per_condition", Json::array()}};
      for (const auto& q : set.per_condition) {
        doc["per_condition"].push_back(to_json(q));
      }
      doc["invariance"] = to_json(set.invariance);
      const fs::path out = profile_out.empty() ? ctx.config.run_dir() / "profile.json" : fs::path(profile_out);
      fs::create_directories(out.parent_path());
      write_json(doc, out);
      std::cout << out.string() << '\n';
      if (set.invariance.min_correlation) {
        std::cout << "min pairwise correlation " << *set.invariance.min_correlation << '\n';
      }
    } else if (segment_cmd->parsed()) {
      RunConfig cfg = opts["segment"].resolve(segment_cmd);
      const fs::path in = segment_profile.empty() ? cfg.run_dir() / "profile.json" : fs::path(segment_profile);
      const Json doc = read_json(in);
      const DynamicsProfile profile = profile_from_json(doc.contains("pretrained") ? doc["pretrained"] : doc);
      ChunkPlan plan = segment_chunks(profile, cfg.chunk_count, {cfg.first_chunk});
      if (cfg.grpo.weighted_sampling) {
        plan.weights = sampling_weights(profile, plan);
      }
      const fs::path out = segment_out.empty() ? cfg.run_dir() / "plan.json" : fs::path(segment_out);
      fs::create_directories(out.parent_path());
      write_json(to_json(plan), out);
      std::cout << format_size_list(plan.sizes) << '\n';
    } else if (app.got_subcommand("train")) {
      const RunSummary s = run_pipeline(opts["train"].resolve(app.get_subcommand("train")), &std::cerr);
      std::cout << s.dir.string() << '\n';
    } else if (eval_cmd->parsed()) {
      const Context ctx(opts["eval"].resolve(eval_cmd));
      const ParamVector reference = pretrained_policy(ctx, &std::cerr);
      const ParamVector trained = load_checkpoint(eval_checkpoint);
      std::optional<std::size_t> split;
      if (eval_split >= 0) {
        split = static_cast<std::size_t>(eval_split);
      }
      const EvalResult r = evaluate(ctx, trained, reference, split);
      const EvalResult base = evaluate(ctx, reference, reference, split);
      std::cout << Json{{"split", r.split},
                        {"reward", r.mean_reward},
                        {"per_condition", r.per_condition},
                        {"baseline_reward", base.mean_reward}}
                       .dump(2)
                << '\n';
    } else if (oracle_cmd->parsed()) {
      write_oracle_outputs(oracle_max, oracle_out);
      std::cout << (fs::path(oracle_out) / "win_region.csv").string() << '\n';
    } else if (ablate_cmd->parsed()) {
      const RunConfig base = opts["ablate"].resolve(ablate_cmd);
      const AblationReport r = ablation_suite(parse_suite(suite), base, parse_seeds(seeds_text), jobs, &std::cerr);
      for (std::size_t i = 0; i < r.rows.size(); ++i) {
        std::cout << i + 1 << ". " << r.rows[i].label << "  " << r.rows[i].mean << " +- " << r.rows[i].stddev
                  << '\n';
      }
      std::cout << (r.dir / "ablation.md").string() << '\n';
    } else if (report_cmd->parsed()) {
      std::vector<fs::path> runs(report_runs.begin(), report_runs.end());
      std::cout << emit_report(runs, report_out).string() << '\n';
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
