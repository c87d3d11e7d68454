#include "lpcdet/commands.hpp"
#include "lpcdet/config.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Common {
  std::string profile = "desk";
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> assignments;
  std::string out = "run";
};

lpcdet::RunConfig resolve(const Common& c, const std::optional<std::string>& refine = {}) {
  lpcdet::RunConfig cfg = lpcdet::RunConfig::profile(c.profile);
  if (!c.config_path.empty()) cfg.merge_file(c.config_path);
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  for (const auto& a : c.assignments) cfg.merge_assignment(a);
  if (refine) cfg.set("model.refine", *refine);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anchor-query transformer detector for synthetic point clouds"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--profile", common.profile, "Default profile")
      ->check(CLI::IsMember({"desk", "paper-shape"}));
  app.add_option("--config", common.config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", common.seed, "Run seed");
  app.add_option("--set", common.assignments, "Override a config key (key=value), repeatable");
  app.add_option("--out", common.out, "Output directory");

  std::string data_dir, checkpoint, scene_file, init, aam;
  std::optional<std::string> refine;
  std::optional<double> nms_overlap;
  int count = 10, eval_count = 0, query = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate synthetic scenes");
  gen->add_option("--count", count, "Scenes to generate (train split when --eval-count is set)")
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--eval-count", eval_count, "Also write train/ and eval/ splits")
      ->check(CLI::NonNegativeNumber);

  auto* train = app.add_subcommand("train", "Stage-1 training, or stage 2 with --refine");
  train->add_option("--data", data_dir, "Scene directory")->required();
  train->add_option("--refine", refine, "Refinement layers for stage 2, e.g. 1,3 or all");
  train->add_option("--init", init, "Stage-1 checkpoint to continue from")->check(CLI::ExistingFile);
  train->add_option("--aam", aam, "AAM checkpoint (stage 2)")->check(CLI::ExistingFile);

  auto* train_aam = app.add_subcommand("train-aam", "Fit the anchor alignment module");
  train_aam->add_option("--checkpoint", checkpoint, "Stage-1 checkpoint")->required()->check(CLI::ExistingFile);
  train_aam->add_option("--data", data_dir, "Scene directory")->required();
  train_aam->add_option("--refine", refine, "Refinement layers whose inputs the AAM serves");

  auto* eval = app.add_subcommand("eval", "AP / ATE / ASE / AOE on a scene directory");
  eval->add_option("--checkpoint", checkpoint, "Detector checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_dir, "Scene directory")->required();
  eval->add_option("--nms", nms_overlap, "Also report with NMS at this BEV IoU");
  eval->add_option("--refine", refine, "Override the checkpoint's refinement layers");

  auto* ablate = app.add_subcommand("ablate", "Refinement schedule ablation");
  ablate->add_option("--data", data_dir, "Directory with train/ and eval/ splits")->required();

  auto* travel = app.add_subcommand("analyze-travel", "Query travel length vs location error");
  travel->add_option("--checkpoint", checkpoint, "Detector checkpoint")->required()->check(CLI::ExistingFile);
  travel->add_option("--data", data_dir, "Scene directory")->required();

  auto* attention = app.add_subcommand("dump-attention", "Per-layer cross-attention of one query");
  attention->add_option("--checkpoint", checkpoint, "Detector checkpoint")->required()->check(CLI::ExistingFile);
  attention->add_option("--scene", scene_file, "Scene file")->required()->check(CLI::ExistingFile);
  attention->add_option("--query", query, "Query index")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      lpcdet::cmd_gen_data(resolve(common), count, eval_count, common.out, std::cout);
    } else if (train->parsed()) {
      lpcdet::TrainOptions opts;
      opts.refine = refine;
      if (!init.empty()) opts.init = init;
      if (!aam.empty()) opts.aam = aam;
      lpcdet::cmd_train(resolve(common), data_dir, common.out, opts, std::cout);
    } else if (train_aam->parsed()) {
      lpcdet::cmd_train_aam(resolve(common, refine), checkpoint, data_dir, common.out, std::cout);
    } else if (eval->parsed()) {
      lpcdet::cmd_eval(resolve(common), checkpoint, data_dir, common.out, nms_overlap, refine, std::cout);
    } else if (ablate->parsed()) {
      lpcdet::cmd_ablate(resolve(common), data_dir, common.out, std::cout);
    } else if (travel->parsed()) {
      lpcdet::cmd_analyze_travel(resolve(common), checkpoint, data_dir, common.out, std::cout);
    } else if (attention->parsed()) {
      lpcdet::cmd_dump_attention(resolve(common), checkpoint, scene_file, query, common.out, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
