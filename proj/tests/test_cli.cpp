#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fade/checkpoint.hpp"
#include "fade/cli_commands.hpp"
#include "fade/diffusion.hpp"
#include "fade/io_util.hpp"
#include "fade/rng.hpp"
#include "fade/world.hpp"

using namespace fade;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// one shared scratch tree, recreated per process
const fs::path& scratch() {
  static const fs::path root = [] {
    const fs::path p = fs::temp_directory_path() / "fade_cli_suite";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

std::string write_config(const std::string& name, std::int64_t pretrain_steps,
                         std::int64_t fade_iters) {
  json j;
  j["seed"] = 0;
  j["output_dir"] = (scratch() / "default_out").string();
  j["world"] = json::object();
  j["schedule"] = {{"steps", 5}, {"beta_start", 1e-4}, {"beta_end", 0.2}};
  j["pretrain"] = {{"steps", pretrain_steps}, {"batch", 16}, {"lr", 1e-3}, {"cond_dropout", 0.1}};
  j["fade"] = {{"max_iterations", fade_iters}, {"batch", 8},   {"saliency_batch", 32},
               {"disc_pretrain_steps", 10},    {"stop_window", 50}};
  j["eval"] = {{"n_samples", 100}, {"grid_bins", 8}};
  const std::string path = (scratch() / name).string();
  write_text_file_atomic(path, j.dump(1));
  return path;
}

int cli(std::vector<std::string> args) { return run_cli(args); }

std::int64_t line_count(const std::string& path) {
  const std::string text = read_text_file(path);
  std::int64_t n = 0;
  for (const char c : text) n += c == '\n';
  return n;
}

std::string dir(const std::string& name) { return (scratch() / name).string(); }

}  // namespace

TEST_CASE("pipeline runs end to end and writes every artifact") {
  const std::string cfg = write_config("cfg.json", 60, 4);

  REQUIRE(cli({"pretrain", "--config", cfg, "--out", dir("pre")}) == 0);
  CHECK(fs::exists(dir("pre") + "/pretrained.json"));
  CHECK(line_count(dir("pre") + "/pretrain_loss.csv") == 61);  // header + one row per step

  REQUIRE(cli({"erase", "--config", cfg, "--checkpoint", dir("pre") + "/pretrained.json",
               "--out", dir("er")}) == 0);
  CHECK(fs::exists(dir("er") + "/erased.json"));
  CHECK(fs::exists(dir("er") + "/discriminator.json"));
  const json summary = json::parse(read_text_file(dir("er") + "/erase_run.json"));
  CHECK(summary.at("stop_reason") == "max_iterations");
  CHECK(summary.at("iterations").get<std::int64_t>() == 4);
  CHECK(summary.at("mask_included").get<std::int64_t>() > 0);
  CHECK(line_count(dir("er") + "/erase_run.csv") == 5);  // header + 4 iterations
  const std::string header = read_text_file(dir("er") + "/erase_run.csv");
  CHECK(header.rfind("iter,l_rem,l_pres,l_total,l_adv_d,val_acc\n", 0) == 0);

  REQUIRE(cli({"eval", "--config", cfg, "--checkpoint", dir("er") + "/erased.json",
               "--reference", dir("pre") + "/pretrained.json", "--out", dir("ev")}) == 0);
  CHECK(fs::exists(dir("ev") + "/probe.json"));
  CHECK(line_count(dir("ev") + "/metrics.csv") == 2);
  const json metrics = json::parse(read_text_file(dir("ev") + "/metrics.json"));
  CHECK(metrics.at("stage") == "erased");
  for (const char* key : {"acc_concept", "fidelity_proxy", "adherence", "ref_fidelity_proxy",
                          "ref_adherence", "concept_mi_nats", "e", "f", "h"})
    CHECK(metrics.at("metrics").contains(key));

  // a pretrained checkpoint evaluates against itself
  REQUIRE(cli({"eval", "--config", cfg, "--checkpoint", dir("pre") + "/pretrained.json",
               "--out", dir("ev_pre")}) == 0);
  const json pre_metrics = json::parse(read_text_file(dir("ev_pre") + "/metrics.json"));
  CHECK(pre_metrics.at("stage") == "pretrained");
  CHECK(pre_metrics.at("metrics").at("ref_fidelity_proxy") ==
        pre_metrics.at("metrics").at("fidelity_proxy"));
}

TEST_CASE("zero pretraining steps reproduce the seeded initialization") {
  const std::string cfg = write_config("cfg0.json", 0, 1);
  REQUIRE(cli({"pretrain", "--config", cfg, "--out", dir("pre0")}) == 0);
  CHECK(line_count(dir("pre0") + "/pretrain_loss.csv") == 1);  // header only

  const Checkpoint ckpt = load_checkpoint(dir("pre0") + "/pretrained.json");
  const DenoiserModel loaded = denoiser_from_checkpoint(ckpt);
  // the documented expansion: model init seed = derive(derive(seed, 1), 0)
  const DenoiserModel fresh = make_denoiser(WorldConfig::default_world(), {128, 128, 128},
                                            rng::derive(rng::derive(0, kSeedStagePretrain), 0));
  const std::vector<double> fa = loaded.params.flatten();
  const std::vector<double> fb = fresh.params.flatten();
  REQUIRE(fa.size() == fb.size());
  CHECK(fa == fb);
}

TEST_CASE("identical invocations write byte-identical outputs") {
  const std::string cfg = write_config("cfg_det.json", 30, 3);
  REQUIRE(cli({"pretrain", "--config", cfg, "--out", dir("det_pre")}) == 0);

  for (const char* out : {"det_a", "det_b"}) {
    REQUIRE(cli({"erase", "--config", cfg, "--checkpoint", dir("det_pre") + "/pretrained.json",
                 "--out", dir(out)}) == 0);
    REQUIRE(cli({"eval", "--config", cfg, "--checkpoint", dir(out) + "/erased.json",
                 "--reference", dir("det_pre") + "/pretrained.json",
                 "--out", dir(std::string(out) + "_ev")}) == 0);
  }
  CHECK(read_text_file(dir("det_a") + "/erase_run.csv") ==
        read_text_file(dir("det_b") + "/erase_run.csv"));
  CHECK(read_text_file(dir("det_a") + "/erased.json") ==
        read_text_file(dir("det_b") + "/erased.json"));
  CHECK(read_text_file(dir("det_a_ev") + "/metrics.csv") ==
        read_text_file(dir("det_b_ev") + "/metrics.csv"));
  CHECK(read_text_file(dir("det_a_ev") + "/metrics.json") ==
        read_text_file(dir("det_b_ev") + "/metrics.json"));
}

TEST_CASE("the seed override lands in the outputs") {
  const std::string cfg = write_config("cfg_seed.json", 0, 1);
  REQUIRE(cli({"pretrain", "--config", cfg, "--out", dir("seed_pre")}) == 0);
  REQUIRE(cli({"eval", "--config", cfg, "--checkpoint", dir("seed_pre") + "/pretrained.json",
               "--seed", "7", "--out", dir("seed_ev")}) == 0);
  const json metrics = json::parse(read_text_file(dir("seed_ev") + "/metrics.json"));
  CHECK(metrics.at("seed").get<std::uint64_t>() == 7);

  // a different seed must change the probe and the sampled metrics file
  REQUIRE(cli({"eval", "--config", cfg, "--checkpoint", dir("seed_pre") + "/pretrained.json",
               "--out", dir("seed_ev0")}) == 0);
  CHECK(read_text_file(dir("seed_ev") + "/metrics.csv") !=
        read_text_file(dir("seed_ev0") + "/metrics.csv"));
}

TEST_CASE("misuse exits nonzero instead of throwing") {
  const std::string cfg = write_config("cfg_err.json", 0, 1);
  REQUIRE(cli({"pretrain", "--config", cfg, "--out", dir("err_pre")}) == 0);
  const std::string pre = dir("err_pre") + "/pretrained.json";

  CHECK(cli({"no-such-command"}) != 0);
  CHECK(cli({"pretrain"}) != 0);                                    // missing --config
  CHECK(cli({"pretrain", "--config", dir("missing.json")}) != 0);   // unreadable config
  CHECK(cli({"erase", "--config", cfg, "--checkpoint", dir("nothing.json")}) != 0);

  // stage guards
  REQUIRE(cli({"erase", "--config", cfg, "--checkpoint", pre, "--out", dir("err_er")}) == 0);
  const std::string erased = dir("err_er") + "/erased.json";
  CHECK(cli({"erase", "--config", cfg, "--checkpoint", erased}) != 0);
  CHECK(cli({"eval", "--config", cfg, "--checkpoint", erased}) != 0);  // reference missing
  CHECK(cli({"eval", "--config", cfg, "--checkpoint", pre, "--reference", pre}) != 0);
  CHECK(cli({"eval", "--config", cfg, "--checkpoint", erased, "--reference", erased}) != 0);
  REQUIRE(cli({"eval", "--config", cfg, "--checkpoint", dir("err_ev") + "/nope.json"}) != 0);

  // a probe checkpoint is not a model
  REQUIRE(cli({"eval", "--config", cfg, "--checkpoint", pre, "--out", dir("err_ev")}) == 0);
  CHECK(cli({"erase", "--config", cfg, "--checkpoint", dir("err_ev") + "/probe.json"}) != 0);

  // schedule mismatch between config and checkpoint
  json j = json::parse(read_text_file(cfg));
  j["schedule"]["steps"] = 7;
  const std::string cfg7 = (scratch() / "cfg_mismatch.json").string();
  write_text_file_atomic(cfg7, j.dump(1));
  CHECK(cli({"eval", "--config", cfg7, "--checkpoint", pre}) != 0);
}

TEST_CASE("ablation writes four arms in the fixed order") {
  const std::string cfg = write_config("cfg_abl.json", 30, 2);
  REQUIRE(cli({"pretrain", "--config", cfg, "--out", dir("abl_pre")}) == 0);
  REQUIRE(cli({"ablate", "--config", cfg, "--checkpoint", dir("abl_pre") + "/pretrained.json",
               "--out", dir("abl")}) == 0);

  CHECK(line_count(dir("abl") + "/ablation.csv") == 5);
  const json j = json::parse(read_text_file(dir("abl") + "/ablation.json"));
  const json& arms = j.at("arms");
  REQUIRE(arms.size() == 4);
  CHECK(arms[0].at("arm") == "Full");
  CHECK(arms[1].at("arm") == "w/o Adv");
  CHECK(arms[2].at("arm") == "w/o Pres");
  CHECK(arms[3].at("arm") == "w/o Saliency");
  // the Full arm never touches parameters its own mask excludes
  CHECK(arms[0].at("changed_outside_full_mask").get<std::int64_t>() == 0);
  for (const auto& arm : arms) {
    CHECK(arm.at("iterations").get<std::int64_t>() == 2);
    CHECK(arm.at("changed_params").get<std::int64_t>() > 0);
  }
}

TEST_CASE("theorem verification sweeps and pair files") {
  REQUIRE(cli({"verify-theory", "--count", "50", "--out", dir("th")}) == 0);
  const json j = json::parse(read_text_file(dir("th") + "/theory.json"));
  CHECK(j.at("total").get<std::int64_t>() == 50);
  CHECK(j.at("failed").get<std::int64_t>() == 0);
  CHECK(j.at("pairs").size() == 50);

  const std::string pair_file = (scratch() / "pairs.txt").string();
  write_text_file_atomic(pair_file,
                         "2 0.5 0.5 0.5 0.5\n"
                         "3 0.8 0.1 0.1 0.1 0.8 0.1\n");
  REQUIRE(cli({"verify-theory", "--pairs", pair_file, "--out", dir("th2")}) == 0);
  const json j2 = json::parse(read_text_file(dir("th2") + "/theory.json"));
  CHECK(j2.at("total").get<std::int64_t>() == 2);
  CHECK(j2.at("failed").get<std::int64_t>() == 0);
  CHECK(j2.at("pairs")[0].at("tv").get<double>() == 0.0);
  CHECK(j2.at("pairs")[1].at("tv").get<double>() == doctest::Approx(0.7).epsilon(1e-12));

  // tau = 1 puts every pair on the forward branch; tau = 0 on the separation
  // branch; both sides of the statement must hold for random pairs
  REQUIRE(cli({"verify-theory", "--count", "5", "--tol", "1.0", "--out", dir("th3")}) == 0);
  CHECK(json::parse(read_text_file(dir("th3") + "/theory.json")).at("failed") == 0);
  REQUIRE(cli({"verify-theory", "--count", "5", "--tol", "1e-30", "--out", dir("th3b")}) == 0);
  CHECK(json::parse(read_text_file(dir("th3b") + "/theory.json")).at("failed") == 0);
  CHECK(cli({"verify-theory", "--count", "5", "--tol", "0.0"}) != 0);  // tau must be positive
  CHECK(cli({"verify-theory", "--count", "0"}) != 0);

  const std::string bad = (scratch() / "bad_pairs.txt").string();
  write_text_file_atomic(bad, "2 0.5\n");
  CHECK(cli({"verify-theory", "--pairs", bad, "--out", dir("th4")}) != 0);
  write_text_file_atomic(bad, "2 0.5 0.5 0.5 0.5 9\n");
  CHECK(cli({"verify-theory", "--pairs", bad, "--out", dir("th4")}) != 0);
}
