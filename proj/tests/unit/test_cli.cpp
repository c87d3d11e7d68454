#include "lpcdet/checkpoint.hpp"
#include "lpcdet/commands.hpp"
#include "lpcdet/config.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lpcdet;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
  RunConfig cfg = RunConfig::profile("desk");
  cfg.merge_text(R"(
extent.x_min = -6
extent.x_max = 6
extent.y_min = -6
extent.y_max = 6
scene.min_objects = 1
scene.max_objects = 2
scene.clutter_points = 20
scene.surface_density = 2
scene.min_gap = 0.3
class.width = 1
class.length = 2
class.height = 1.5
grid.cell_size = 1.5
model.d = 8
model.layers = 3
model.heads = 2
model.queries = 6
model.ffn_dim = 16
train.epochs = 2
stage2.epochs = 1
aam.epochs = 2
aam.batch_size = 16
data.train_scenes = 6
data.eval_scenes = 3
)");
  return cfg;
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("lpcdet_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) {
    if (!l.empty()) out.push_back(l);
  }
  return out;
}

}  // namespace

TEST_CASE("profiles provide the desk and paper-shape defaults") {
  CHECK(RunConfig::profiles() == std::set<std::string>{"desk", "paper-shape"});
  const auto desk = RunConfig::profile("desk").detector_config();
  CHECK(desk.grid.cells() == 1024);
  CHECK(desk.decoder.queries == 25);
  CHECK(desk.decoder.d == 64);
  CHECK(desk.decoder.layers == 4);
  const auto large = RunConfig::profile("paper-shape").detector_config();
  CHECK(large.grid.cells() == 16384);
  CHECK(large.decoder.queries == 100);
  CHECK(large.decoder.d == 256);
  CHECK(large.decoder.layers == 6);
  CHECK_THROWS_AS(RunConfig::profile("laptop"), ConfigError);
}

TEST_CASE("unknown keys and malformed values are rejected") {
  RunConfig cfg = RunConfig::profile("desk");
  CHECK_THROWS_AS(cfg.set("model.depth", "3"), ConfigError);
  CHECK_THROWS_AS(cfg.set("model.d", "sixty"), ConfigError);
  CHECK_THROWS_AS(cfg.set("model.mask_empty_cells", "maybe"), ConfigError);
  CHECK_THROWS_AS(cfg.merge_assignment("model.d"), ConfigError);
  CHECK_THROWS_WITH_AS(cfg.merge_text("# comment\nmodel.d = 32\nbogus = 1\n", "run.cfg"),
                       doctest::Contains("run.cfg:3"), ConfigError);
  cfg.merge_assignment("model.d=32");
  CHECK(cfg.integer("model.d") == 32);
}

TEST_CASE("inconsistent settings fail validation") {
  RunConfig cfg = RunConfig::profile("desk");
  cfg.set("model.heads", "5");
  CHECK_THROWS(cfg.validate());
  cfg = RunConfig::profile("desk");
  cfg.set("model.refine", "1,4");
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("the config echo round-trips") {
  RunConfig cfg = tiny_config();
  cfg.merge_assignment("model.refine=1,2");
  cfg.merge_assignment("seed=42");
  const std::string echo = cfg.echo();
  CHECK(echo.rfind("# profile: desk", 0) == 0);
  RunConfig back = RunConfig::profile("paper-shape");
  back.merge_text(echo);
  CHECK(back.values() == cfg.values());
  CHECK(back.refine_layers() == std::set<int>{1, 2});
}

TEST_CASE("refinement specs parse and format") {
  CHECK(parse_refine_spec("none", 4).empty());
  CHECK(parse_refine_spec("", 4).empty());
  CHECK(parse_refine_spec("all", 4) == std::set<int>{1, 2, 3});
  CHECK(parse_refine_spec("3,1", 4) == std::set<int>{1, 3});
  CHECK(parse_refine_spec(" 1 , 5 ", 6) == std::set<int>{1, 5});
  CHECK_THROWS_AS(parse_refine_spec("0", 4), ConfigError);
  CHECK_THROWS_AS(parse_refine_spec("4", 4), ConfigError);
  CHECK_THROWS_AS(parse_refine_spec("1,x", 4), ConfigError);
  CHECK(format_refine_spec({}) == "none");
  CHECK(format_refine_spec({1, 3}) == "1,3");
  CHECK(parse_refine_spec(format_refine_spec({1, 2, 5}), 6) == std::set<int>{1, 2, 5});
}

TEST_CASE("checkpoints round-trip parameters and the Fourier basis") {
  const auto cfg = tiny_config();
  Detector a(cfg.detector_config());
  const auto dir = temp_dir("ckpt");
  write_checkpoint(checkpoint_with_config(a, cfg), dir / "a.ckpt");
  const Checkpoint read = read_checkpoint(dir / "a.ckpt");
  CHECK(read.tensors.count(kFourierTensor) == 1);

  auto other_cfg = cfg;
  other_cfg.set("seed", "99");
  Detector b(other_cfg.detector_config());
  CHECK(nn::fingerprint(b.parameters()) != nn::fingerprint(a.parameters()));
  load_detector(b, read);
  CHECK(nn::fingerprint(b.parameters()) == nn::fingerprint(a.parameters()));
  CHECK(b.decoder.encoder.basis.matrix == a.decoder.encoder.basis.matrix);

  const RunConfig restored = config_from_checkpoint(read, RunConfig::profile("desk"));
  CHECK(restored.integer("model.d") == 8);
  CHECK(restored.number("extent.x_max") == 6.0);

  RunConfig user = RunConfig::profile("desk");
  user.set("stage2.epochs", "3");
  user.set("seed", "5");
  user.set("model.detach_refined_anchors", "true");
  const RunConfig kept = config_from_checkpoint(read, user);
  CHECK(kept.integer("stage2.epochs") == 3);
  CHECK(kept.integer("seed") == 5);
  CHECK(kept.flag("model.detach_refined_anchors"));
  CHECK(kept.integer("model.ffn_dim") == 16);
  fs::remove_all(dir);
}

TEST_CASE("checkpoints with wrong shapes or bad syntax are rejected") {
  auto cfg = tiny_config();
  Detector a(cfg.detector_config());
  cfg.set("model.ffn_dim", "24");
  Detector b(cfg.detector_config());
  CHECK_THROWS_AS(load_detector(b, make_checkpoint(a)), CheckpointError);

  Checkpoint partial = make_checkpoint(a);
  partial.tensors.erase(partial.tensors.begin());
  Detector c(tiny_config().detector_config());
  const auto before = nn::fingerprint(c.parameters());
  CHECK_THROWS_AS(load_detector(c, partial), CheckpointError);
  CHECK(nn::fingerprint(c.parameters()) == before);

  const auto dir = temp_dir("ckpt_bad");
  std::ofstream(dir / "bad.ckpt") << "CKPT v1\nTENSOR x 2 2\n1 2\n3\nEND\n";
  CHECK_THROWS_AS(read_checkpoint(dir / "bad.ckpt"), CheckpointError);
  std::ofstream(dir / "v2.ckpt") << "CKPT v2\nEND\n";
  CHECK_THROWS_AS(read_checkpoint(dir / "v2.ckpt"), CheckpointError);
  CHECK_THROWS(read_checkpoint(dir / "missing.ckpt"));
  fs::remove_all(dir);
}

TEST_CASE("alignment checkpoints carry only the module") {
  Detector a(tiny_config().detector_config());
  nn::Rng rng(3);
  a.decoder.aam.ffn.fc2.weight.mutable_value() = nn::normal_matrix(8, 8, 1.0, rng);
  const Checkpoint ck = make_aam_checkpoint(a);
  Detector b(tiny_config().detector_config());
  const auto rest = nn::fingerprint(b.detector_parameters());
  load_aam(b, ck);
  CHECK(nn::fingerprint(b.aam_parameters()) == nn::fingerprint(a.aam_parameters()));
  CHECK(nn::fingerprint(b.detector_parameters()) == rest);
}

TEST_CASE("gen-data writes reloadable deterministic scenes") {
  const auto cfg = tiny_config();
  const auto dir = temp_dir("gen");
  std::ostringstream log;
  cmd_gen_data(cfg, 10, 3, dir / "a", log);
  cmd_gen_data(cfg, 10, 3, dir / "b", log);
  const auto files = list_scene_files(dir / "a" / "train");
  REQUIRE(files.size() == 10);
  CHECK(list_scene_files(dir / "a" / "eval").size() == 3);
  const auto expected = generate_scenes(cfg, 0, 10);
  for (std::size_t i = 0; i < files.size(); ++i) {
    CHECK(load_scene(files[i]) == expected[i]);
    CHECK(read_file(files[i]) == read_file(dir / "b" / "train" / files[i].filename()));
  }
  CHECK(generate_scenes(cfg, 1, 3) != generate_scenes(cfg, 0, 3));
  fs::remove_all(dir);
}

TEST_CASE("train, train-aam, eval and analysis commands produce their reports") {
  const auto cfg = tiny_config();
  const auto dir = temp_dir("pipeline");
  std::ostringstream log;
  cmd_gen_data(cfg, 6, 3, dir / "data", log);
  cmd_train(cfg, dir / "data", dir / "s1", {}, log);
  const auto s1 = dir / "s1" / "checkpoints" / "detector.ckpt";
  REQUIRE(fs::exists(s1));
  const auto train_log = lines_of(read_file(dir / "s1" / "logs" / "train.csv"));
  REQUIRE(train_log.size() == 3);
  CHECK(train_log[0] == "epoch, lr, loss_total, loss_reg, loss_cls, stage");
  CHECK(fs::exists(dir / "s1" / "config.echo"));

  cmd_train_aam(cfg, s1, dir / "data", dir / "aam", log);
  const auto aam = dir / "aam" / "checkpoints" / "aam.ckpt";
  REQUIRE(fs::exists(aam));
  CHECK(fs::exists(dir / "aam" / "logs" / "train_aam.csv"));

  TrainOptions stage2;
  stage2.refine = "1,2";
  stage2.init = s1;
  stage2.aam = aam;
  cmd_train(cfg, dir / "data", dir / "s2", stage2, log);
  const auto s2 = dir / "s2" / "checkpoints" / "detector.ckpt";
  REQUIRE(fs::exists(s2));
  CHECK(read_checkpoint(s2).meta.at("config.model.refine") == "1,2");

  cmd_eval(cfg, s2, dir / "data", dir / "eval", 0.1, std::nullopt, log);
  const auto metrics = lines_of(read_file(dir / "eval" / "reports" / "metrics.csv"));
  REQUIRE(metrics.size() == 3);
  CHECK(metrics[0] == "method, AP, ATE, ASE, AOE");
  CHECK(metrics[1].rfind("no NMS,", 0) == 0);
  CHECK(metrics[2].rfind("NMS 0.1,", 0) == 0);
  CHECK(fs::exists(dir / "eval" / "reports" / "metrics.svg"));

  cmd_eval(cfg, s2, dir / "data", dir / "eval2", 0.1, std::nullopt, log);
  CHECK(read_file(dir / "eval" / "reports" / "metrics.csv") ==
        read_file(dir / "eval2" / "reports" / "metrics.csv"));

  cmd_analyze_travel(cfg, s2, dir / "data", dir / "travel", log);
  const auto travel = lines_of(read_file(dir / "travel" / "reports" / "travel.csv"));
  REQUIRE_FALSE(travel.empty());
  CHECK(travel[0] == "bin_lo, bin_hi, median, q25, q75, hist_count_LQ");

  cmd_dump_attention(cfg, s2, list_scene_files(dir / "data" / "eval")[0], 2, dir / "att", log);
  for (int k = 0; k < 3; ++k) {
    const auto stem = dir / "att" / "reports" / ("attention_layer" + std::to_string(k) + "_query2");
    CHECK(fs::exists(stem.string() + ".txt"));
    CHECK(fs::exists(stem.string() + ".svg"));
  }
  CHECK_THROWS(cmd_dump_attention(cfg, s2, list_scene_files(dir / "data" / "eval")[0], 6, dir / "att", log));

  TrainOptions missing;
  missing.refine = "1";
  CHECK_THROWS(cmd_train(cfg, dir / "data", dir / "bad", missing, log));
  CHECK_THROWS(cmd_eval(cfg, dir / "nope.ckpt", dir / "data", dir / "bad", std::nullopt, std::nullopt, log));
  fs::remove_all(dir);
}

TEST_CASE("ablate reports one row per refinement schedule") {
  const auto cfg = tiny_config();
  const auto dir = temp_dir("ablate");
  std::ostringstream log;
  cmd_gen_data(cfg, 6, 3, dir / "data", log);
  cmd_ablate(cfg, dir / "data", dir / "run", log);
  const auto rows = lines_of(read_file(dir / "run" / "reports" / "ablation.csv"));
  REQUIRE(rows.size() == 5);
  CHECK(rows[1].rfind("Propagation,", 0) == 0);
  CHECK(rows[2].rfind("Once,", 0) == 0);
  CHECK(rows[3].rfind("Every 2nd,", 0) == 0);
  CHECK(rows[4].rfind("After each,", 0) == 0);
  CHECK(fs::exists(dir / "run" / "reports" / "ablation.svg"));
  fs::remove_all(dir);
}

TEST_CASE("refinement schedules for four layers") {
  const auto v = schedule_variants(4);
  REQUIRE(v.size() == 4);
  CHECK(v[0].refine.empty());
  CHECK(v[1].refine == std::set<int>{1});
  CHECK(v[2].refine == std::set<int>{1, 3});
  CHECK(v[3].refine == std::set<int>{1, 2, 3});
}
