#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "prema/commands.hpp"

namespace {

struct CliArgs {
  std::string config_path;
  std::string seed;
  std::string variant;
  std::string missing;
  std::string occluder_scale;
  std::string clutter;
  std::string out;
  std::string checkpoint;
  std::string split;
  std::string data_dir;
  bool export_conf = false;
};

void add_common(CLI::App* cmd, CliArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value config file");
  cmd->add_option("--seed", args.seed, "override train_seed");
  cmd->add_option("--variant", args.variant,
                  "PREMA | DoubleLSTMs | MaxPoolOnly | SingleDirectionPREMA");
  cmd->add_option("--missing", args.missing, "missing-view count for evaluation");
  cmd->add_option("--occluder-scale", args.occluder_scale, "occluder scale for evaluation");
  cmd->add_option("--clutter", args.clutter, "background distractor count");
  cmd->add_option("--out", args.out, "output directory");
  cmd->add_option("--checkpoint", args.checkpoint, "checkpoint path (evaluate/robust)");
  cmd->add_option("--split", args.split, "dataset split to evaluate");
  cmd->add_option("--data-dir", args.data_dir, "dataset directory");
  cmd->add_flag("--export-conf", args.export_conf, "export per-view confidence maps");
}

int build_config(const CliArgs& args, prema::RunConfig& config) {
  try {
    if (!args.config_path.empty()) config = prema::RunConfig::load(args.config_path);
    if (!args.seed.empty()) config.set("train_seed", args.seed);
    if (!args.variant.empty()) config.set("variant", args.variant);
    if (!args.missing.empty()) config.set("missing", args.missing);
    if (!args.occluder_scale.empty()) config.set("occluder_scale", args.occluder_scale);
    if (!args.clutter.empty()) config.set("clutter", args.clutter);
    if (!args.out.empty()) config.set("out_dir", args.out);
    if (!args.checkpoint.empty()) config.set("checkpoint", args.checkpoint);
    if (!args.split.empty()) config.set("split", args.split);
    if (!args.data_dir.empty()) config.set("data_dir", args.data_dir);
    if (args.export_conf) config.set("export_conf", "true");
  } catch (const prema::io_error& e) {
    std::cerr << e.what() << "\n";
    return prema::kExitIo;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return prema::kExitValidation;
  }
  return prema::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PREMA multi-view aggregation: dataset generation, two-stage training, "
               "retrieval evaluation, ablations and robustness sweeps"};
  app.require_subcommand(1);
  CliArgs args;

  CLI::App* generate = app.add_subcommand("generate", "generate the synthetic multi-view dataset");
  CLI::App* train = app.add_subcommand("train", "two-stage training, writes checkpoints");
  CLI::App* evaluate = app.add_subcommand("evaluate", "retrieval + classification metrics");
  CLI::App* ablate = app.add_subcommand("ablate", "compare aggregation variants");
  CLI::App* robust = app.add_subcommand("robust", "missing/occlusion/clutter sweeps");
  for (CLI::App* cmd : {generate, train, evaluate, ablate, robust}) add_common(cmd, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? prema::kExitOk : prema::kExitValidation;
  }

  prema::RunConfig config;
  const int rc = build_config(args, config);
  if (rc != prema::kExitOk) return rc;

  if (generate->parsed()) return prema::cmd_generate(config);
  if (train->parsed()) return prema::cmd_train(config);
  if (evaluate->parsed()) return prema::cmd_evaluate(config);
  if (ablate->parsed()) return prema::cmd_ablate(config);
  if (robust->parsed()) return prema::cmd_robust(config);
  return prema::kExitValidation;
}
