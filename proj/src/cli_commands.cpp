#include "fade/cli_commands.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fade/checkpoint.hpp"
#include "fade/errors.hpp"
#include "fade/fade_trainer.hpp"
#include "fade/io_util.hpp"
#include "fade/metrics.hpp"
#include "fade/probe.hpp"
#include "fade/rng.hpp"
#include "fade/run_config.hpp"
#include "fade/theory.hpp"

namespace fade {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct LoadedRun {
  RunConfig cfg;
  std::string hash;
};

LoadedRun load_run(const std::string& config_path, const CommandOverrides& ov) {
  LoadedRun run;
  run.cfg = load_run_config(config_path, &run.hash);
  if (ov.seed) run.cfg.seed = *ov.seed;
  if (ov.out_dir) run.cfg.output_dir = *ov.out_dir;
  fs::create_directories(run.cfg.output_dir);
  return run;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.output_dir) / name).string();
}

void require_stage(const Checkpoint& ckpt, const std::string& want, const std::string& role) {
  if (ckpt.stage != want) {
    throw CheckpointError(CheckpointError::Kind::stage_mismatch,
                          role + " has stage '" + ckpt.stage + "', expected '" + want + "'");
  }
}

// A checkpoint trained under one schedule or world must not be continued
// under another; both mismatches are silent corruption otherwise.
void require_compatible(const Checkpoint& ckpt, const DenoiserModel& model, const RunConfig& cfg) {
  if (model.cond_width != cfg.world.cond_width()) {
    throw ValidationError("checkpoint conditioning width " + std::to_string(model.cond_width) +
                          " does not match the configured world (" +
                          std::to_string(cfg.world.cond_width()) + ")");
  }
  const auto steps = ckpt.schedule.at("steps").get<std::int64_t>();
  const auto b0 = ckpt.schedule.at("beta_start").get<double>();
  const auto b1 = ckpt.schedule.at("beta_end").get<double>();
  if (steps != cfg.schedule_steps || b0 != cfg.beta_start || b1 != cfg.beta_end) {
    throw ValidationError("checkpoint schedule (steps=" + std::to_string(steps) +
                          ", beta=[" + format_g17(b0) + ", " + format_g17(b1) +
                          "]) does not match the config");
  }
}

std::string stop_reason_name(StopReason r) {
  return r == StopReason::converged ? "converged" : "max_iterations";
}

json metrics_to_json(const MetricsReport& m) {
  return json{{"acc_concept", m.acc_concept},
              {"fidelity_proxy", m.fidelity_proxy},
              {"adherence", m.adherence},
              {"adherence_vacuous", m.adherence_vacuous},
              {"ref_fidelity_proxy", m.ref_fidelity_proxy},
              {"ref_adherence", m.ref_adherence},
              {"concept_mi_nats", m.concept_mi_nats},
              {"e", m.e},
              {"f", m.f},
              {"h", m.h}};
}

void write_json(const std::string& path, const json& j) {
  write_text_file_atomic(path, j.dump(1) + "\n");
}

ProbeClassifier trained_probe(const RunConfig& cfg) {
  return train_probe(cfg.world, ProbeTrainConfig{}, rng::derive(cfg.seed, kSeedStageProbe));
}

EvalConfig eval_config(const RunConfig& cfg) {
  return EvalConfig{cfg.eval_samples, cfg.fade.omega, cfg.grid_bins};
}

}  // namespace

void cmd_pretrain(const std::string& config_path, const CommandOverrides& ov) {
  const LoadedRun run = load_run(config_path, ov);
  const RunConfig& cfg = run.cfg;
  const NoiseSchedule schedule = cfg.make_schedule();
  const std::uint64_t stage_seed = rng::derive(cfg.seed, kSeedStagePretrain);

  DenoiserModel model = make_denoiser(cfg.world, {128, 128, 128}, rng::derive(stage_seed, 0));
  const PretrainResult result =
      pretrain_base(model, cfg.world, schedule, cfg.pretrain, rng::derive(stage_seed, 1));

  const std::string ckpt_path = out_path(cfg, "pretrained.json");
  save_checkpoint(ckpt_path, checkpoint_from_denoiser(model, schedule, cfg.beta_start,
                                                      cfg.beta_end, "pretrained", run.hash,
                                                      cfg.seed));

  std::ostringstream csv;
  csv << "iter,loss\n";
  for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
    csv << (i + 1) << ',' << format_g17(result.loss_curve[i]) << '\n';
  }
  write_text_file_atomic(out_path(cfg, "pretrain_loss.csv"), csv.str());

  std::cout << "pretrain: " << result.loss_curve.size() << " steps, final loss "
            << (result.loss_curve.empty() ? 0.0 : result.loss_curve.back()) << "\n"
            << "  " << ckpt_path << "\n";
}

void cmd_erase(const std::string& config_path, const std::string& checkpoint_path,
               const CommandOverrides& ov) {
  const LoadedRun run = load_run(config_path, ov);
  const RunConfig& cfg = run.cfg;
  const NoiseSchedule schedule = cfg.make_schedule();

  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  require_stage(ckpt, "pretrained", "input checkpoint");
  const DenoiserModel pretrained = denoiser_from_checkpoint(ckpt);
  require_compatible(ckpt, pretrained, cfg);

  FadeConfig fcfg = cfg.fade;
  fcfg.seed = rng::derive(cfg.seed, kSeedStageErase);
  const FadeResult result = run_fade(pretrained, schedule, cfg.world, fcfg);

  const std::string erased_path = out_path(cfg, "erased.json");
  save_checkpoint(erased_path,
                  checkpoint_from_denoiser(result.model, schedule, cfg.beta_start, cfg.beta_end,
                                           "erased", run.hash, cfg.seed));
  save_checkpoint(out_path(cfg, "discriminator.json"),
                  checkpoint_from_discriminator(result.disc, run.hash, cfg.seed));

  std::ostringstream csv;
  csv << "iter,l_rem,l_pres,l_total,l_adv_d,val_acc\n";
  for (std::size_t i = 0; i < result.record.history.size(); ++i) {
    const IterationMetrics& m = result.record.history[i];
    csv << (i + 1) << ',' << format_g17(m.l_rem) << ',' << format_g17(m.l_pres) << ','
        << format_g17(m.l_total) << ',' << format_g17(m.l_adv_d) << ','
        << format_g17(m.val_acc) << '\n';
  }
  write_text_file_atomic(out_path(cfg, "erase_run.csv"), csv.str());

  json summary{{"stop_reason", stop_reason_name(result.record.stop_reason)},
               {"iterations", result.record.history.size()},
               {"mask_included", result.mask.included},
               {"mask_total", result.mask.include.size()}};
  if (!result.record.history.empty()) {
    const IterationMetrics& last = result.record.history.back();
    summary["final"] = json{{"l_rem", last.l_rem},
                            {"l_pres", last.l_pres},
                            {"l_total", last.l_total},
                            {"l_adv_d", last.l_adv_d},
                            {"val_acc", last.val_acc}};
  }
  write_json(out_path(cfg, "erase_run.json"), summary);

  std::cout << "erase: " << result.record.history.size() << " iterations, "
            << stop_reason_name(result.record.stop_reason) << "\n"
            << "  " << erased_path << "\n";
}

void cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
              const std::optional<std::string>& reference_path, const CommandOverrides& ov) {
  const LoadedRun run = load_run(config_path, ov);
  const RunConfig& cfg = run.cfg;
  const NoiseSchedule schedule = cfg.make_schedule();

  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  if (ckpt.stage != "pretrained" && ckpt.stage != "erased") {
    throw CheckpointError(CheckpointError::Kind::stage_mismatch,
                          "cannot evaluate a checkpoint with stage '" + ckpt.stage + "'");
  }
  const DenoiserModel model = denoiser_from_checkpoint(ckpt);
  require_compatible(ckpt, model, cfg);

  const ProbeClassifier probe = trained_probe(cfg);
  const std::uint64_t eval_seed = rng::derive(cfg.seed, kSeedStageEval);

  MetricsReport report;
  if (ckpt.stage == "erased") {
    if (!reference_path) {
      throw ValidationError(
          "evaluating an erased checkpoint needs the pretrained checkpoint as --reference");
    }
    const Checkpoint ref_ckpt = load_checkpoint(*reference_path);
    require_stage(ref_ckpt, "pretrained", "reference checkpoint");
    const DenoiserModel ref_model = denoiser_from_checkpoint(ref_ckpt);
    require_compatible(ref_ckpt, ref_model, cfg);
    // identical eval seed: the reference and the erased model face the same
    // prompts and noise draws, so their proxy/adherence numbers are paired
    const MetricsReport ref_report =
        evaluate_model(ref_model, schedule, cfg.world, probe, eval_config(cfg), eval_seed, nullptr);
    const ReferenceMetrics refs{ref_report.fidelity_proxy, ref_report.adherence};
    report = evaluate_model(model, schedule, cfg.world, probe, eval_config(cfg), eval_seed, &refs);
  } else {
    if (reference_path) {
      throw ValidationError("--reference only applies when evaluating an erased checkpoint");
    }
    report = evaluate_model(model, schedule, cfg.world, probe, eval_config(cfg), eval_seed, nullptr);
  }

  json j{{"stage", ckpt.stage},
         {"seed", cfg.seed},
         {"config_hash", run.hash},
         {"metrics", metrics_to_json(report)}};
  write_json(out_path(cfg, "metrics.json"), j);

  std::ostringstream csv;
  csv << "stage,acc_concept,fidelity_proxy,adherence,adherence_vacuous,ref_fidelity_proxy,"
         "ref_adherence,concept_mi_nats,e,f,h\n";
  csv << ckpt.stage << ',' << format_g17(report.acc_concept) << ','
      << format_g17(report.fidelity_proxy) << ',' << format_g17(report.adherence) << ','
      << (report.adherence_vacuous ? 1 : 0) << ',' << format_g17(report.ref_fidelity_proxy) << ','
      << format_g17(report.ref_adherence) << ',' << format_g17(report.concept_mi_nats) << ','
      << format_g17(report.e) << ',' << format_g17(report.f) << ',' << format_g17(report.h)
      << '\n';
  write_text_file_atomic(out_path(cfg, "metrics.csv"), csv.str());

  save_checkpoint(out_path(cfg, "probe.json"), checkpoint_from_probe(probe, run.hash, cfg.seed));

  std::cout << "eval (" << ckpt.stage << "): acc_concept " << report.acc_concept << ", H "
            << report.h << "\n"
            << "  " << out_path(cfg, "metrics.json") << "\n";
}

void cmd_ablate(const std::string& config_path, const std::string& checkpoint_path,
                const CommandOverrides& ov) {
  const LoadedRun run = load_run(config_path, ov);
  const RunConfig& cfg = run.cfg;
  const NoiseSchedule schedule = cfg.make_schedule();

  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  require_stage(ckpt, "pretrained", "input checkpoint");
  const DenoiserModel pretrained = denoiser_from_checkpoint(ckpt);
  require_compatible(ckpt, pretrained, cfg);

  const ProbeClassifier probe = trained_probe(cfg);
  FadeConfig fcfg = cfg.fade;
  // same stage seed as cmd_erase, so the Full arm is that run replayed
  fcfg.seed = rng::derive(cfg.seed, kSeedStageErase);
  const std::uint64_t eval_seed = rng::derive(cfg.seed, kSeedStageEval);

  const std::vector<AblationArm> arms =
      run_ablation(pretrained, schedule, cfg.world, fcfg, probe, eval_config(cfg), eval_seed);

  std::ostringstream csv;
  csv << "arm,iterations,stop_reason,acc_concept,fidelity_proxy,adherence,e,f,h,"
         "concept_mi_nats,changed_params,changed_outside_full_mask\n";
  json arms_json = json::array();
  for (const AblationArm& arm : arms) {
    const MetricsReport& m = arm.metrics;
    csv << arm.name << ',' << arm.record.history.size() << ','
        << stop_reason_name(arm.record.stop_reason) << ',' << format_g17(m.acc_concept) << ','
        << format_g17(m.fidelity_proxy) << ',' << format_g17(m.adherence) << ','
        << format_g17(m.e) << ',' << format_g17(m.f) << ',' << format_g17(m.h) << ','
        << format_g17(m.concept_mi_nats) << ',' << arm.changed_params << ','
        << arm.changed_outside_full_mask << '\n';
    arms_json.push_back(json{{"arm", arm.name},
                             {"iterations", arm.record.history.size()},
                             {"stop_reason", stop_reason_name(arm.record.stop_reason)},
                             {"metrics", metrics_to_json(m)},
                             {"changed_params", arm.changed_params},
                             {"changed_outside_full_mask", arm.changed_outside_full_mask}});
  }
  write_text_file_atomic(out_path(cfg, "ablation.csv"), csv.str());
  write_json(out_path(cfg, "ablation.json"),
             json{{"seed", cfg.seed}, {"config_hash", run.hash}, {"arms", arms_json}});

  std::cout << "ablate: " << arms.size() << " arms\n  " << out_path(cfg, "ablation.csv") << "\n";
}

namespace {

std::vector<double> dirichlet_flat(rng::Stream& s, std::int64_t m) {
  std::vector<double> g(static_cast<std::size_t>(m));
  double sum = 0.0;
  for (double& gi : g) {
    // exponential draw; reject the measure-zero u = 0 so every cell is positive
    do {
      gi = -std::log(1.0 - s.uniform());
    } while (!(gi > 0.0));
    sum += gi;
  }
  for (double& gi : g) gi /= sum;
  return g;
}

std::vector<DiscretePairedDistribution> pairs_from_file(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<DiscretePairedDistribution> out;
  std::istringstream lines(text);
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    std::istringstream iss(line);
    std::int64_t m = 0;
    if (!(iss >> m)) {
      if (iss.eof()) continue;  // blank line
      throw ValidationError("line " + std::to_string(line_no) + ": expected a support size");
    }
    if (m < 1) {
      throw ValidationError("line " + std::to_string(line_no) + ": support size must be >= 1");
    }
    std::vector<double> p1(static_cast<std::size_t>(m)), p0(static_cast<std::size_t>(m));
    for (double& v : p1) {
      if (!(iss >> v)) {
        throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                              std::to_string(2 * m) + " values after the support size");
      }
    }
    for (double& v : p0) {
      if (!(iss >> v)) {
        throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                              std::to_string(2 * m) + " values after the support size");
      }
    }
    std::string extra;
    if (iss >> extra) {
      throw ValidationError("line " + std::to_string(line_no) + ": unexpected trailing tokens");
    }
    try {
      out.emplace_back(std::move(p1), std::move(p0), 0.5);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

TheoryRunSummary cmd_verify_theory(const std::optional<std::string>& pairs_path,
                                   std::int64_t count, std::uint64_t seed, double tolerance,
                                   const std::string& out_dir) {
  if (!(tolerance > 0.0)) throw ValidationError("tolerance must be positive");

  std::vector<DiscretePairedDistribution> pairs;
  if (pairs_path) {
    pairs = pairs_from_file(*pairs_path);
    if (pairs.empty()) throw ValidationError("pair file holds no distributions");
  } else {
    if (count < 1) throw ValidationError("count must be >= 1");
    rng::Stream root(rng::derive(seed, kSeedStageVerify));
    pairs.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
      rng::Stream s = root.child(static_cast<std::uint64_t>(i));
      const std::int64_t m = 1 + static_cast<std::int64_t>(s.below(16));
      auto p1 = dirichlet_flat(s, m);
      auto p0 = dirichlet_flat(s, m);
      pairs.emplace_back(std::move(p1), std::move(p0), 0.5);
    }
  }

  TheoryRunSummary summary;
  summary.total = static_cast<std::int64_t>(pairs.size());
  json results = json::array();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const TheoremReport r = verify_theorem_equilibrium(pairs[i], tolerance);
    if (!r.all_pass) ++summary.failed;
    results.push_back(json{{"index", i},
                           {"support", pairs[i].support()},
                           {"tv", r.tv},
                           {"i_nats", r.i_nats},
                           {"best_accuracy", r.best_accuracy},
                           {"rem_at_dstar", r.rem_at_dstar},
                           {"rem_excess", r.rem_excess},
                           {"accuracy_residual", r.accuracy_residual},
                           {"forward_bound_i", r.forward_bound_i},
                           {"forward_bound_rem", r.forward_bound_rem},
                           {"separation_margin", r.separation_margin},
                           {"checks",
                            json{{"accuracy_identity", r.checks.accuracy_identity},
                                 {"equilibrium_forward", r.checks.equilibrium_forward},
                                 {"separation", r.checks.separation},
                                 {"rem_never_below_ln2", r.checks.rem_never_below_ln2}}},
                           {"all_pass", r.all_pass}});
  }

  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / "theory.json").string();
  write_json(path, json{{"tolerance", tolerance},
                        {"total", summary.total},
                        {"failed", summary.failed},
                        {"pairs", results}});

  std::cout << "verify-theory: " << summary.total << " pairs, " << summary.failed
            << " failed\n  " << path << "\n";
  return summary;
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"conditional diffusion concept erasure pipeline"};
  app.require_subcommand(1);

  std::string config, checkpoint, reference, pairs, out = "out";
  std::uint64_t seed = 0;
  std::int64_t count = 1000;
  double tol = 1e-9;
  bool seed_set = false, out_set = false;

  auto add_common = [&](CLI::App* sub, bool needs_checkpoint) {
    sub->add_option("--config", config, "run configuration file")->required();
    sub->add_option("--seed", seed, "override the config seed")
        ->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--out", out, "override the output directory")
        ->each([&](const std::string&) { out_set = true; });
    if (needs_checkpoint) {
      sub->add_option("--checkpoint", checkpoint, "input model checkpoint")->required();
    }
  };

  CLI::App* sub_pre = app.add_subcommand("pretrain", "train the base conditional denoiser");
  add_common(sub_pre, false);
  CLI::App* sub_erase = app.add_subcommand("erase", "run adversarial concept erasure");
  add_common(sub_erase, true);
  CLI::App* sub_eval = app.add_subcommand("eval", "score a checkpoint");
  add_common(sub_eval, true);
  sub_eval->add_option("--reference", reference,
                       "pretrained checkpoint used to normalize fidelity");
  CLI::App* sub_ablate = app.add_subcommand("ablate", "run the four-arm component comparison");
  add_common(sub_ablate, true);

  CLI::App* sub_theory = app.add_subcommand("verify-theory", "check the equilibrium theorem");
  sub_theory->add_option("--pairs", pairs, "file of distribution pairs (m p1.. p0.. per line)");
  sub_theory->add_option("--count", count, "random pairs to generate when no file is given");
  sub_theory->add_option("--seed", seed, "seed for random pair generation");
  sub_theory->add_option("--tol", tol, "equivalence tolerance");
  sub_theory->add_option("--out", out, "output directory");

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CommandOverrides ov;
  if (seed_set) ov.seed = seed;
  if (out_set) ov.out_dir = out;

  try {
    if (sub_pre->parsed()) {
      cmd_pretrain(config, ov);
    } else if (sub_erase->parsed()) {
      cmd_erase(config, checkpoint, ov);
    } else if (sub_eval->parsed()) {
      std::optional<std::string> ref;
      if (!reference.empty()) ref = reference;
      cmd_eval(config, checkpoint, ref, ov);
    } else if (sub_ablate->parsed()) {
      cmd_ablate(config, checkpoint, ov);
    } else if (sub_theory->parsed()) {
      std::optional<std::string> pair_file;
      if (!pairs.empty()) pair_file = pairs;
      const TheoryRunSummary s = cmd_verify_theory(pair_file, count, seed, tol, out);
      if (s.failed > 0) return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace fade
