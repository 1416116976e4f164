#include "fade/fade_trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>

#include "fade/errors.hpp"
#include "fade/rng.hpp"
#include "fade/theory.hpp"

namespace fade {

void FadeConfig::validate(const NoiseSchedule& schedule) const {
  const std::int64_t t0 = resolved_t0(schedule);
  if (t0 < 1 || t0 > schedule.steps())
    throw ValidationError("preservation horizon must lie in [1, steps]");
  if (!(rho > 0.0 && rho <= 1.0))
    throw ValidationError("saliency fraction must lie in (0, 1]: an empty mask is forbidden");
  if (!(lambda >= 0.0)) throw ValidationError("preservation weight must be nonnegative");
  if (!(stop_delta > 0.0 && stop_delta < 0.5))
    throw ValidationError("stopping band half-width must lie in (0, 0.5)");
  if (max_iterations < 0) throw ValidationError("iteration cap must be nonnegative");
  if (batch < 1 || prompt_pairs < 1 || stop_window < 1 || disc_pretrain_steps < 0)
    throw ValidationError("batch, prompt pairs, stopping window must be positive");
  if (saliency_batch < 1) throw ValidationError("saliency sample count must be positive");
  if (val_pool_iters < 1)
    throw ValidationError("validation pool depth must be positive");
  if (!(gen_lr > 0.0) || !(disc_lr > 0.0)) throw ValidationError("learning rates must be positive");
  if (trunc_backprop_steps != -1 && (trunc_backprop_steps < 1 || trunc_backprop_steps > schedule.steps()))
    throw ValidationError("backprop truncation must be -1 or in [1, steps]");
}

std::int64_t FadeConfig::resolved_t0(const NoiseSchedule& schedule) const {
  return t0_cutoff == -1 ? std::max<std::int64_t>(1, schedule.steps() / 2) : t0_cutoff;
}

SaliencyMask all_inclusive_mask(const ParameterStore& params) {
  SaliencyMask m;
  m.include.assign(static_cast<std::size_t>(params.total_scalars()), 1);
  m.included = params.total_scalars();
  return m;
}

namespace {

std::vector<PromptLabel> cycle_labels(const std::vector<PromptLabel>& pool, std::int64_t n) {
  if (pool.empty()) throw ValidationError("prompt list is empty");
  std::vector<PromptLabel> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out.push_back(pool[static_cast<std::size_t>(i) % pool.size()]);
  return out;
}

Tensor single_row(const Tensor& batch, std::int64_t row) {
  Tensor r({1, batch.cols()});
  for (std::int64_t c = 0; c < batch.cols(); ++c) r.at(0, c) = batch.at(row, c);
  return r;
}

}  // namespace

SaliencyMask compute_saliency_mask(const DenoiserModel& model, const DenoiserModel& frozen,
                                   const NoiseSchedule& schedule, const WorldConfig& world,
                                   const PromptSetPair& prompts, double rho, double omega,
                                   std::int64_t batch, std::uint64_t seed) {
  if (!(rho > 0.0 && rho <= 1.0))
    throw ValidationError("saliency fraction must lie in (0, 1]: an empty mask is forbidden");
  if (batch < 1) throw ValidationError("saliency batch must be positive");
  const std::vector<PromptLabel> y_c = cycle_labels(prompts.concept_prompts, batch);
  const std::vector<PromptLabel> y_n = cycle_labels(prompts.neutral_prompts, batch);

  // probe points: what the frozen model currently draws for concept prompts
  const SamplerConfig sampler{omega, -1, false};
  const Tensor x0 =
      ancestral_sample(frozen, schedule, world, y_c, sampler, rng::derive(seed, 0)).x0;

  const std::int64_t total = model.params.total_scalars();
  std::vector<double> saliency(static_cast<std::size_t>(total), 0.0);
  for (std::int64_t i = 0; i < batch; ++i) {
    rng::Stream s(rng::derive(seed, static_cast<std::uint64_t>(1 + i)));
    const auto t = static_cast<std::int64_t>(1 + s.below(static_cast<std::uint64_t>(schedule.steps())));
    Tensor eps({1, 2});
    eps.at(0, 0) = s.normal();
    eps.at(0, 1) = s.normal();
    const Tensor z = forward_noise(single_row(x0, i), schedule, t, eps);

    GradientRecord rec(model.params);
    const ValueId zi = rec.constant(z);
    const Tensor cond_c = encode_label(world, y_c[static_cast<std::size_t>(i)])
                              .reshaped({1, world.cond_width()});
    const Tensor cond_n = encode_label(world, y_n[static_cast<std::size_t>(i)])
                              .reshaped({1, world.cond_width()});
    const ValueId diff = rec.sub(predict_eps(rec, model, schedule, zi, cond_c, t),
                                 predict_eps(rec, model, schedule, zi, cond_n, t));
    const ValueId loss = rec.sum_all(rec.square(diff));
    const Gradients g = rec.backpropagate(loss, Tensor::scalar(1.0));
    for (std::int64_t j = 0; j < total; ++j)
      saliency[static_cast<std::size_t>(j)] += std::abs(g.flat[static_cast<std::size_t>(j)]);
  }

  const auto k = static_cast<std::int64_t>(
      std::ceil(rho * static_cast<double>(total)));
  std::vector<std::int64_t> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    const double sa = saliency[static_cast<std::size_t>(a)];
    const double sb = saliency[static_cast<std::size_t>(b)];
    return sa != sb ? sa > sb : a < b;  // ties keep the lower flat index
  });
  SaliencyMask mask;
  mask.include.assign(static_cast<std::size_t>(total), 0);
  mask.included = std::min(k, total);
  for (std::int64_t i = 0; i < mask.included; ++i)
    mask.include[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
  return mask;
}

ValueId preservation_loss(GradientRecord& rec, const DenoiserModel& model,
                          const DenoiserModel& frozen, const NoiseSchedule& schedule,
                          const WorldConfig& world, const std::vector<PromptLabel>& y_neg,
                          std::int64_t t0, std::uint64_t seed) {
  if (y_neg.empty()) throw ValidationError("preservation batch is empty");
  if (t0 < 1 || t0 > schedule.steps())
    throw ValidationError("preservation horizon must lie in [1, steps]");
  const auto n = static_cast<std::int64_t>(y_neg.size());

  // per-sample draws, then grouped by timestep so each group shares one t
  std::map<std::int64_t, std::vector<std::int64_t>> by_t;
  Tensor z_all({n, 2});
  for (std::int64_t i = 0; i < n; ++i) {
    const Tensor x0 = sample_world(world, y_neg[static_cast<std::size_t>(i)], 1,
                                   rng::derive(seed, static_cast<std::uint64_t>(2 * i)));
    rng::Stream s(rng::derive(seed, static_cast<std::uint64_t>(2 * i + 1)));
    const auto t = static_cast<std::int64_t>(1 + s.below(static_cast<std::uint64_t>(t0)));
    Tensor eps({1, 2});
    eps.at(0, 0) = s.normal();
    eps.at(0, 1) = s.normal();
    const Tensor z = forward_noise(x0, schedule, t, eps);
    z_all.at(i, 0) = z.at(0, 0);
    z_all.at(i, 1) = z.at(0, 1);
    by_t[t].push_back(i);
  }

  ValueId acc = -1;
  for (const auto& [t, rows] : by_t) {
    const auto m = static_cast<std::int64_t>(rows.size());
    Tensor z({m, 2});
    std::vector<std::optional<PromptLabel>> labels(static_cast<std::size_t>(m));
    for (std::int64_t r = 0; r < m; ++r) {
      const std::int64_t src = rows[static_cast<std::size_t>(r)];
      z.at(r, 0) = z_all.at(src, 0);
      z.at(r, 1) = z_all.at(src, 1);
      labels[static_cast<std::size_t>(r)] = y_neg[static_cast<std::size_t>(src)];
    }
    const Tensor cond = encode_labels(world, labels);
    const ValueId zi = rec.constant(z);
    const ValueId e_model = predict_eps(rec, model, schedule, zi, cond, t);
    const ValueId e_frozen = rec.constant(predict_eps(frozen, schedule, z, cond, t));
    const ValueId term = rec.sum_all(rec.square(rec.sub(e_model, e_frozen)));
    acc = acc < 0 ? term : rec.add(acc, term);
  }
  return rec.scale(acc, 1.0 / static_cast<double>(n));
}

double preservation_loss(const DenoiserModel& model, const DenoiserModel& frozen,
                         const NoiseSchedule& schedule, const WorldConfig& world,
                         const std::vector<PromptLabel>& y_neg, std::int64_t t0,
                         std::uint64_t seed) {
  // evaluate through the same traced arithmetic so logged values are
  // bit-identical with the training path
  GradientRecord rec(model.params);
  const ValueId v = preservation_loss(rec, model, frozen, schedule, world, y_neg, t0, seed);
  return rec.value(v).at(0);
}

IterationMetrics fade_iteration(FadeState& state, const NoiseSchedule& schedule,
                                const WorldConfig& world, const PromptSetPair& prompts,
                                std::uint64_t iteration_seed) {
  const FadeConfig& cfg = state.cfg;
  const std::int64_t batch = cfg.batch;
  const std::vector<PromptLabel> labels_c = cycle_labels(prompts.concept_prompts, batch);
  const std::vector<PromptLabel> labels_n = cycle_labels(prompts.neutral_prompts, batch);
  const SamplerConfig sampler{cfg.omega, cfg.trunc_backprop_steps, false};

  // paired generation: concept and neutral chains consume the same frozen
  // noise, so the pairing isolates the effect of the prompt
  const std::uint64_t noise_seed = rng::derive(iteration_seed, 0);
  GradientRecord rec(state.model.params);
  const ValueId xc_id =
      ancestral_sample(rec, state.model, schedule, world, labels_c, sampler, noise_seed);
  const Tensor x_c = rec.value(xc_id);
  const Tensor x_neg =
      ancestral_sample(state.model, schedule, world, labels_n, sampler, noise_seed).x0;

  IterationMetrics metrics;

  // held-out accuracy on this fresh batch, before any update touches phi;
  // the rolling mean over recent batches is the stopping monitor
  {
    Tensor stacked({2 * batch, 2});
    std::vector<std::uint8_t> is_concept(static_cast<std::size_t>(2 * batch), 0);
    for (std::int64_t i = 0; i < batch; ++i) {
      stacked.at(i, 0) = x_c.at(i, 0);
      stacked.at(i, 1) = x_c.at(i, 1);
      stacked.at(batch + i, 0) = x_neg.at(i, 0);
      stacked.at(batch + i, 1) = x_neg.at(i, 1);
      is_concept[static_cast<std::size_t>(i)] = 1;
    }
    metrics.batch_acc = discriminator_accuracy(state.disc, stacked, is_concept, 0);
    state.recent_batch_acc.push_back(metrics.batch_acc);
    const auto depth = static_cast<std::size_t>(cfg.val_pool_iters);
    if (state.recent_batch_acc.size() > depth)
      state.recent_batch_acc.erase(state.recent_batch_acc.begin());
    double sum = 0.0;
    for (const double a : state.recent_batch_acc) sum += a;
    metrics.val_acc = sum / static_cast<double>(state.recent_batch_acc.size());
  }
  metrics.l_adv_d = discriminator_loss(state.disc, x_c, x_neg, 0);

  if (!cfg.disable_adv) {
    GradientRecord rec_d(state.disc.params);
    const ValueId loss_d = discriminator_loss(rec_d, state.disc, rec_d.constant(x_c),
                                              rec_d.constant(x_neg), 0);
    if (!std::isfinite(rec_d.value(loss_d).at(0)))
      throw DivergenceError("discriminator loss diverged");
    const Gradients gd = rec_d.backpropagate(loss_d, Tensor::scalar(1.0));
    masked_adam_step(state.disc.params, gd.flat, nullptr, state.disc_opt, AdamConfig{cfg.disc_lr});
  }

  // generator objective, traced through the sampling chain; the updated
  // discriminator enters as constants
  ValueId rem_id;
  if (cfg.disable_adv) {
    // naive paired L2 pulls concept samples onto their neutral twins
    rem_id = rec.scale(rec.sum_all(rec.square(rec.sub(xc_id, rec.constant(x_neg)))),
                       1.0 / static_cast<double>(batch));
  } else {
    rem_id = removal_loss(rec, state.disc, xc_id, 0);
  }
  const ValueId pres_id =
      preservation_loss(rec, state.model, *state.frozen, schedule, world, labels_n,
                        cfg.resolved_t0(schedule), rng::derive(iteration_seed, 2));
  const ValueId total_id = rec.add(rem_id, rec.scale(pres_id, cfg.effective_lambda()));

  metrics.l_rem = rec.value(rem_id).at(0);
  metrics.l_pres = rec.value(pres_id).at(0);
  metrics.l_total = rec.value(total_id).at(0);
  if (!std::isfinite(metrics.l_total)) throw DivergenceError("generator loss diverged");

  const Gradients g = rec.backpropagate(total_id, Tensor::scalar(1.0));
  masked_adam_step(state.model.params, g.flat, &state.mask.include, state.gen_opt,
                   AdamConfig{cfg.gen_lr});
  return metrics;
}

namespace {

void pretrain_discriminator(Discriminator& disc, AdamState& opt, const Tensor& pool_c,
                            const Tensor& pool_n, const FadeConfig& cfg, std::uint64_t seed) {
  const std::int64_t n_pool = pool_c.rows();
  rng::Stream root(seed);
  for (std::int64_t step = 0; step < cfg.disc_pretrain_steps; ++step) {
    rng::Stream s = root.child(static_cast<std::uint64_t>(step));
    Tensor mb_c({cfg.batch, 2});
    Tensor mb_n({cfg.batch, 2});
    for (std::int64_t i = 0; i < cfg.batch; ++i) {
      const auto rc = static_cast<std::int64_t>(s.below(static_cast<std::uint64_t>(n_pool)));
      const auto rn = static_cast<std::int64_t>(s.below(static_cast<std::uint64_t>(n_pool)));
      mb_c.at(i, 0) = pool_c.at(rc, 0);
      mb_c.at(i, 1) = pool_c.at(rc, 1);
      mb_n.at(i, 0) = pool_n.at(rn, 0);
      mb_n.at(i, 1) = pool_n.at(rn, 1);
    }
    GradientRecord rec(disc.params);
    const ValueId loss =
        discriminator_loss(rec, disc, rec.constant(mb_c), rec.constant(mb_n), 0);
    if (!std::isfinite(rec.value(loss).at(0)))
      throw DivergenceError("discriminator pre-training diverged at step " + std::to_string(step));
    const Gradients g = rec.backpropagate(loss, Tensor::scalar(1.0));
    masked_adam_step(disc.params, g.flat, nullptr, opt, AdamConfig{cfg.disc_lr});
  }
}

bool window_in_band(const std::vector<IterationMetrics>& history, std::int64_t window,
                    double delta) {
  if (static_cast<std::int64_t>(history.size()) < window) return false;
  for (std::size_t i = history.size() - static_cast<std::size_t>(window); i < history.size(); ++i)
    if (history[i].val_acc < 0.5 - delta || history[i].val_acc > 0.5 + delta) return false;
  return true;
}

}  // namespace

FadeResult run_fade(const DenoiserModel& pretrained, const NoiseSchedule& schedule,
                    const WorldConfig& world, const FadeConfig& cfg) {
  cfg.validate(schedule);

  FadeResult result;
  result.model = pretrained;
  result.disc = make_discriminator(2, 1, rng::derive(cfg.seed, 3));
  result.mask = all_inclusive_mask(pretrained.params);
  if (cfg.max_iterations == 0) return result;

  const DenoiserModel frozen = pretrained;
  const PromptSetPair prompts = build_prompt_sets(world, cfg.prompt_pairs, rng::derive(cfg.seed, 1));

  if (!cfg.disable_saliency)
    result.mask = compute_saliency_mask(result.model, frozen, schedule, world, prompts, cfg.rho,
                                        cfg.omega, cfg.saliency_batch, rng::derive(cfg.seed, 2));

  FadeState state;
  state.model = std::move(result.model);
  state.frozen = &frozen;
  state.disc = std::move(result.disc);
  state.gen_opt = AdamState::for_store(state.model.params);
  state.disc_opt = AdamState::for_store(state.disc.params);
  state.mask = result.mask;
  state.cfg = cfg;

  // warm up the discriminator on a fixed pool drawn from the unedited model
  {
    const SamplerConfig sampler{cfg.omega, cfg.trunc_backprop_steps, false};
    const std::int64_t n_pool = 4 * cfg.batch;
    const std::vector<PromptLabel> pool_yc = cycle_labels(prompts.concept_prompts, n_pool);
    const std::vector<PromptLabel> pool_yn = cycle_labels(prompts.neutral_prompts, n_pool);
    const std::uint64_t pool_seed = rng::derive(cfg.seed, 4);
    const Tensor pool_c = ancestral_sample(state.model, schedule, world, pool_yc, sampler, pool_seed).x0;
    const Tensor pool_n = ancestral_sample(state.model, schedule, world, pool_yn, sampler, pool_seed).x0;
    pretrain_discriminator(state.disc, state.disc_opt, pool_c, pool_n, cfg, rng::derive(cfg.seed, 6));
  }

  for (std::int64_t i = 0; i < cfg.max_iterations; ++i) {
    IterationMetrics m;
    try {
      m = fade_iteration(state, schedule, world, prompts,
                         rng::derive(cfg.seed, static_cast<std::uint64_t>(1000 + i)));
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " at iteration " + std::to_string(i));
    }
    result.record.history.push_back(m);
    if (window_in_band(result.record.history, cfg.stop_window, cfg.stop_delta)) {
      result.record.stop_reason = StopReason::converged;
      break;
    }
  }

  result.model = std::move(state.model);
  result.disc = std::move(state.disc);
  return result;
}

MetricsReport evaluate_model(const DenoiserModel& model, const NoiseSchedule& schedule,
                             const WorldConfig& world, const ProbeClassifier& probe,
                             const EvalConfig& cfg, std::uint64_t seed,
                             const ReferenceMetrics* refs) {
  if (cfg.n_samples < 100)
    throw ValidationError("evaluation needs at least 100 samples per class");
  std::vector<PromptLabel> pool_c, pool_n;
  for (std::int64_t code = 0; code < world.assignment_count(); ++code) {
    const PromptLabel label = world.label_from_code(code);
    (world.concept_on(label) ? pool_c : pool_n).push_back(label);
  }
  const std::vector<PromptLabel> labels_c = cycle_labels(pool_c, cfg.n_samples);
  const std::vector<PromptLabel> labels_n = cycle_labels(pool_n, cfg.n_samples);

  const SamplerConfig sampler{cfg.omega, -1, false};
  const Tensor x_c =
      ancestral_sample(model, schedule, world, labels_c, sampler, rng::derive(seed, 1)).x0;
  const Tensor x_n =
      ancestral_sample(model, schedule, world, labels_n, sampler, rng::derive(seed, 2)).x0;

  // ground-truth reference for the fidelity proxy: world draws under the
  // same neutral label mix
  std::map<std::int64_t, std::int64_t> counts;
  for (const PromptLabel& l : labels_n) ++counts[world.assignment_code(l)];
  Tensor x_ref({cfg.n_samples, 2});
  std::int64_t row = 0;
  for (const auto& [code, count] : counts) {
    const Tensor pts = sample_world(world, world.label_from_code(code), count,
                                    rng::derive(seed, static_cast<std::uint64_t>(100 + code)));
    for (std::int64_t i = 0; i < count; ++i, ++row) {
      x_ref.at(row, 0) = pts.at(i, 0);
      x_ref.at(row, 1) = pts.at(i, 1);
    }
  }

  const double acc = concept_accuracy(probe, x_c);
  const AdherenceResult adh = adherence_score(probe, x_n, labels_n);
  const double proxy = frechet_proxy(x_n, x_ref);
  const double mi = empirical_concept_mi(x_c, x_n, GridSpec::for_world(world, cfg.grid_bins));

  const double ref_proxy = refs ? refs->fidelity_proxy : proxy;
  const double ref_adh = refs ? refs->adherence : adh.score;
  return emit_report(acc, proxy, adh, ref_proxy, ref_adh, mi);
}

std::vector<AblationArm> run_ablation(const DenoiserModel& pretrained,
                                      const NoiseSchedule& schedule, const WorldConfig& world,
                                      const FadeConfig& base_cfg, const ProbeClassifier& probe,
                                      const EvalConfig& eval_cfg, std::uint64_t eval_seed) {
  const MetricsReport base_report =
      evaluate_model(pretrained, schedule, world, probe, eval_cfg, eval_seed, nullptr);
  const ReferenceMetrics refs{base_report.fidelity_proxy, base_report.adherence};
  const std::vector<double> base_flat = pretrained.params.flatten();

  std::vector<AblationArm> arms(4);
  arms[0].name = "Full";
  arms[1].name = "w/o Adv";
  arms[1].cfg.disable_adv = true;
  arms[2].name = "w/o Pres";
  arms[2].cfg.disable_pres = true;
  arms[3].name = "w/o Saliency";
  arms[3].cfg.disable_saliency = true;

  SaliencyMask full_mask;
  for (auto& arm : arms) {
    const bool da = arm.cfg.disable_adv, dp = arm.cfg.disable_pres, ds = arm.cfg.disable_saliency;
    arm.cfg = base_cfg;
    arm.cfg.disable_adv = da;
    arm.cfg.disable_pres = dp;
    arm.cfg.disable_saliency = ds;

    FadeResult r = run_fade(pretrained, schedule, world, arm.cfg);
    if (arm.name == "Full") full_mask = r.mask;
    arm.record = std::move(r.record);
    arm.metrics = evaluate_model(r.model, schedule, world, probe, eval_cfg, eval_seed, &refs);

    const std::vector<double> flat = r.model.params.flatten();
    for (std::size_t j = 0; j < flat.size(); ++j) {
      if (std::bit_cast<std::uint64_t>(flat[j]) != std::bit_cast<std::uint64_t>(base_flat[j])) {
        ++arm.changed_params;
        if (!full_mask.include[j]) ++arm.changed_outside_full_mask;
      }
    }
  }
  return arms;
}

}  // namespace fade
