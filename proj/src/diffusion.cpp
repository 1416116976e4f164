#include "fade/diffusion.hpp"

#include <cmath>
#include <string>

#include "fade/errors.hpp"
#include "fade/optimizer.hpp"

namespace fade {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
  if (beta_.empty()) throw ValidationError("schedule needs at least one step");
  alpha_.resize(beta_.size());
  alpha_bar_.resize(beta_.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < beta_.size(); ++i) {
    if (!(beta_[i] > 0.0 && beta_[i] < 1.0))
      throw ValidationError("betas must lie strictly inside (0, 1)");
    alpha_[i] = 1.0 - beta_[i];
    prod *= alpha_[i];
    alpha_bar_[i] = prod;
    if (i > 0 && !(alpha_bar_[i] < alpha_bar_[i - 1]))
      throw ValidationError("alpha_bar must be strictly decreasing");
  }
}

NoiseSchedule NoiseSchedule::linear(std::int64_t steps, double beta_start, double beta_end) {
  if (steps < 1) throw ValidationError("schedule needs at least one step");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (std::int64_t t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(steps - 1);
    betas[static_cast<std::size_t>(t)] = beta_start + frac * (beta_end - beta_start);
  }
  return NoiseSchedule(std::move(betas));
}

std::size_t NoiseSchedule::index(std::int64_t t) const {
  if (t < 1 || t > steps())
    throw ValidationError("timestep " + std::to_string(t) + " outside [1, " +
                          std::to_string(steps()) + "]");
  return static_cast<std::size_t>(t - 1);
}

DenoiserModel make_denoiser(const WorldConfig& world, std::vector<std::int64_t> hidden,
                            std::uint64_t seed) {
  DenoiserModel m;
  m.cond_width = world.cond_width();
  m.arch.widths.push_back(m.input_width());
  for (auto h : hidden) m.arch.widths.push_back(h);
  m.arch.widths.push_back(m.data_dim);
  m.arch.act = Activation::silu;
  rng::Stream stream(seed);
  init_mlp(m.params, m.arch, stream);
  return m;
}

Tensor time_embedding(std::int64_t t, std::int64_t steps) {
  const double frac = static_cast<double>(t) / static_cast<double>(steps);
  const double a = 6.283185307179586476925286766559 * frac;
  return Tensor({3}, {frac, std::sin(a), std::cos(a)});
}

Tensor forward_noise(const Tensor& x0, const NoiseSchedule& schedule, std::int64_t t,
                     const Tensor& eps) {
  if (!x0.same_shape(eps)) throw ShapeError("forward_noise: x0 and eps shapes differ");
  const double ab = schedule.alpha_bar(t);
  const double s0 = std::sqrt(ab);
  const double s1 = std::sqrt(1.0 - ab);
  Tensor out = x0;
  double* o = out.data();
  const double* e = eps.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) o[i] = s0 * o[i] + s1 * e[i];
  return out;
}

namespace {

// assemble [z | temb | cond] for a batch sharing one timestep
Tensor build_input(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& z,
                   const Tensor& cond, std::int64_t t) {
  if (z.rank() != 2 || z.cols() != model.data_dim)
    throw ShapeError("denoiser input z must be (n, " + std::to_string(model.data_dim) + ")");
  if (cond.rank() != 2 || cond.cols() != model.cond_width || cond.rows() != z.rows())
    throw ShapeError("condition block must be (n, " + std::to_string(model.cond_width) + ")");
  const Tensor temb = time_embedding(t, schedule.steps());
  const std::int64_t n = z.rows();
  Tensor in({n, model.input_width()});
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t c = 0;
    for (std::int64_t j = 0; j < model.data_dim; ++j) in.at(i, c++) = z.at(i, j);
    for (std::int64_t j = 0; j < model.time_width; ++j) in.at(i, c++) = temb.at(j);
    for (std::int64_t j = 0; j < model.cond_width; ++j) in.at(i, c++) = cond.at(i, j);
  }
  return in;
}

Tensor tile_rows(const Tensor& row, std::int64_t n) {
  Tensor out({n, row.numel()});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < row.numel(); ++j) out.at(i, j) = row.at(j);
  return out;
}

}  // namespace

Tensor predict_eps(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& z,
                   const Tensor& cond, std::int64_t t) {
  return apply_network(model.params, model.arch, build_input(model, schedule, z, cond, t));
}

ValueId predict_eps(GradientRecord& rec, const DenoiserModel& model, const NoiseSchedule& schedule,
                    ValueId z, const Tensor& cond, std::int64_t t) {
  const Tensor& zv = rec.value(z);
  if (zv.rank() != 2 || zv.cols() != model.data_dim)
    throw ShapeError("denoiser input z must be (n, " + std::to_string(model.data_dim) + ")");
  if (cond.rank() != 2 || cond.cols() != model.cond_width || cond.rows() != zv.rows())
    throw ShapeError("condition block must be (n, " + std::to_string(model.cond_width) + ")");
  const ValueId temb = rec.constant(tile_rows(time_embedding(t, schedule.steps()), zv.rows()));
  const ValueId cnd = rec.constant(cond);
  const ValueId parts[] = {z, temb, cnd};
  const ValueId in = rec.concat_cols(parts);
  return apply_network(rec, model.params, model.arch, in);
}

Tensor predict_eps_point(const DenoiserModel& model, const NoiseSchedule& schedule,
                         const WorldConfig& world, const Tensor& z,
                         const std::optional<PromptLabel>& y, std::int64_t t) {
  const Tensor zb = z.rank() == 1 ? z.reshaped({1, z.numel()}) : z;
  const Tensor cond = tile_rows(encode_label(world, y), zb.rows());
  Tensor out = predict_eps(model, schedule, zb, cond, t);
  return z.rank() == 1 ? out.reshaped({out.numel()}) : out;
}

Tensor guided_eps(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& z,
                  const Tensor& cond, std::int64_t t, double omega) {
  const Tensor eps_c = predict_eps(model, schedule, z, cond, t);
  Tensor eps_n = predict_eps(model, schedule, z, Tensor({z.rows(), model.cond_width}), t);
  double* n = eps_n.data();
  const double* c = eps_c.data();
  for (std::int64_t i = 0; i < eps_n.numel(); ++i) n[i] += omega * (c[i] - n[i]);
  return eps_n;
}

ValueId guided_eps(GradientRecord& rec, const DenoiserModel& model, const NoiseSchedule& schedule,
                   ValueId z, const Tensor& cond, std::int64_t t, double omega) {
  const ValueId eps_c = predict_eps(rec, model, schedule, z, cond, t);
  const ValueId eps_n =
      predict_eps(rec, model, schedule, z, Tensor({rec.value(z).rows(), model.cond_width}), t);
  return rec.add(eps_n, rec.scale(rec.sub(eps_c, eps_n), omega));
}

Tensor guided_eps_point(const DenoiserModel& model, const NoiseSchedule& schedule,
                        const WorldConfig& world, const Tensor& z,
                        const std::optional<PromptLabel>& y, std::int64_t t, double omega) {
  const Tensor zb = z.rank() == 1 ? z.reshaped({1, z.numel()}) : z;
  const Tensor cond = tile_rows(encode_label(world, y), zb.rows());
  Tensor out = guided_eps(model, schedule, zb, cond, t, omega);
  return z.rank() == 1 ? out.reshaped({out.numel()}) : out;
}

namespace {

struct FrozenNoise {
  Tensor z_start;               // (n, 2)
  std::vector<Tensor> xi;       // for t = T .. 2, in that order
};

FrozenNoise draw_noise(std::int64_t n, std::int64_t dim, std::int64_t steps, std::uint64_t seed) {
  rng::Stream stream(seed);
  FrozenNoise fz;
  fz.z_start = Tensor({n, dim});
  for (double& v : fz.z_start.values()) v = stream.normal();
  fz.xi.reserve(static_cast<std::size_t>(steps > 0 ? steps - 1 : 0));
  for (std::int64_t t = steps; t >= 2; --t) {
    Tensor x({n, dim});
    for (double& v : x.values()) v = stream.normal();
    fz.xi.push_back(std::move(x));
  }
  return fz;
}

struct StepCoeffs {
  double eps_coef, rescale, sigma;
};

StepCoeffs step_coeffs(const NoiseSchedule& s, std::int64_t t) {
  StepCoeffs c;
  c.eps_coef = s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t));
  c.rescale = 1.0 / std::sqrt(s.alpha(t));
  if (t > 1) {
    const double tilde = (1.0 - s.alpha_bar(t - 1)) / (1.0 - s.alpha_bar(t)) * s.beta(t);
    c.sigma = std::sqrt(tilde);
  } else {
    c.sigma = 0.0;  // the final step adds no noise
  }
  return c;
}

}  // namespace

SampleBatchResult ancestral_sample(const DenoiserModel& model, const NoiseSchedule& schedule,
                                   const WorldConfig& world, std::span<const PromptLabel> labels,
                                   const SamplerConfig& cfg, std::uint64_t seed) {
  const auto n = static_cast<std::int64_t>(labels.size());
  if (n == 0) throw ValidationError("ancestral_sample needs at least one label");
  std::vector<std::optional<PromptLabel>> opt(labels.begin(), labels.end());
  const Tensor cond = encode_labels(world, opt);
  FrozenNoise fz = draw_noise(n, model.data_dim, schedule.steps(), seed);

  SampleBatchResult result;
  Tensor z = std::move(fz.z_start);
  if (cfg.record_trajectory) result.trajectory.push_back(z);
  for (std::int64_t t = schedule.steps(); t >= 1; --t) {
    const StepCoeffs c = step_coeffs(schedule, t);
    const Tensor ehat = guided_eps(model, schedule, z, cond, t, cfg.omega);
    double* zp = z.data();
    const double* ep = ehat.data();
    const Tensor* xi = t > 1 ? &fz.xi[static_cast<std::size_t>(schedule.steps() - t)] : nullptr;
    for (std::int64_t i = 0; i < z.numel(); ++i) {
      zp[i] = c.rescale * (zp[i] - c.eps_coef * ep[i]);
      if (xi) zp[i] += c.sigma * xi->data()[i];
    }
    if (!z.all_finite())
      throw DivergenceError("sampling diverged at step t=" + std::to_string(t));
    if (cfg.record_trajectory) result.trajectory.push_back(z);
  }
  result.x0 = std::move(z);
  return result;
}

ValueId ancestral_sample(GradientRecord& rec, const DenoiserModel& model,
                         const NoiseSchedule& schedule, const WorldConfig& world,
                         std::span<const PromptLabel> labels, const SamplerConfig& cfg,
                         std::uint64_t seed) {
  const auto n = static_cast<std::int64_t>(labels.size());
  if (n == 0) throw ValidationError("ancestral_sample needs at least one label");
  const std::int64_t steps = schedule.steps();
  std::int64_t k = cfg.trunc_backprop_steps < 0 ? steps : cfg.trunc_backprop_steps;
  if (k > steps) k = steps;
  if (k < 1) throw ValidationError("trunc_backprop_steps must be at least 1 (or -1 for the full chain)");

  std::vector<std::optional<PromptLabel>> opt(labels.begin(), labels.end());
  const Tensor cond = encode_labels(world, opt);
  FrozenNoise fz = draw_noise(n, model.data_dim, steps, seed);

  // untraced prefix: steps T .. k+1
  Tensor z = std::move(fz.z_start);
  for (std::int64_t t = steps; t >= k + 1; --t) {
    const StepCoeffs c = step_coeffs(schedule, t);
    const Tensor ehat = guided_eps(model, schedule, z, cond, t, cfg.omega);
    double* zp = z.data();
    const double* ep = ehat.data();
    const Tensor& xi = fz.xi[static_cast<std::size_t>(steps - t)];  // t >= 2 here
    for (std::int64_t i = 0; i < z.numel(); ++i)
      zp[i] = c.rescale * (zp[i] - c.eps_coef * ep[i]) + c.sigma * xi.data()[i];
    if (!z.all_finite())
      throw DivergenceError("sampling diverged at step t=" + std::to_string(t));
  }

  // traced suffix: steps k .. 1
  ValueId zid = rec.constant(std::move(z));
  for (std::int64_t t = k; t >= 1; --t) {
    const StepCoeffs c = step_coeffs(schedule, t);
    const ValueId ehat = guided_eps(rec, model, schedule, zid, cond, t, cfg.omega);
    zid = rec.scale(rec.sub(zid, rec.scale(ehat, c.eps_coef)), c.rescale);
    if (t > 1) {
      Tensor noise = fz.xi[static_cast<std::size_t>(steps - t)];
      for (double& v : noise.values()) v *= c.sigma;
      zid = rec.add(zid, rec.constant(std::move(noise)));
    }
    if (!rec.value(zid).all_finite())
      throw DivergenceError("sampling diverged at step t=" + std::to_string(t));
  }
  return zid;
}

PretrainResult pretrain_base(DenoiserModel& model, const WorldConfig& world,
                             const NoiseSchedule& schedule, const PretrainConfig& cfg,
                             std::uint64_t seed) {
  if (cfg.steps < 0) throw ValidationError("pretrain step count must be non-negative");
  if (cfg.batch < 1) throw ValidationError("pretrain batch must be at least 1");
  if (cfg.cond_dropout < 0.0 || cfg.cond_dropout > 1.0)
    throw ValidationError("condition dropout must lie in [0, 1]");

  PretrainResult result;
  result.loss_curve.reserve(static_cast<std::size_t>(cfg.steps));
  AdamState opt = AdamState::for_store(model.params);
  const AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
  const std::int64_t in_w = model.input_width();
  const std::int64_t count = world.assignment_count();

  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    rng::Stream stream = rng::Stream(seed).child(static_cast<std::uint64_t>(step));
    Tensor input({cfg.batch, in_w});
    Tensor target({cfg.batch, model.data_dim});
    for (std::int64_t i = 0; i < cfg.batch; ++i) {
      const auto code = static_cast<std::int64_t>(stream.below(static_cast<std::uint64_t>(count)));
      const PromptLabel label = world.label_from_code(code);
      const GaussianComponent& comp = world.component(label);
      const double g0 = stream.normal(), g1 = stream.normal();
      const double x0 = comp.mean[0] + comp.chol[0] * g0;
      const double x1 = comp.mean[1] + comp.chol[2] * g0 + comp.chol[3] * g1;
      const bool drop = stream.uniform() < cfg.cond_dropout;
      const auto t = static_cast<std::int64_t>(1 + stream.below(static_cast<std::uint64_t>(schedule.steps())));
      const double e0 = stream.normal(), e1 = stream.normal();
      const double ab = schedule.alpha_bar(t);
      const double s0 = std::sqrt(ab), s1 = std::sqrt(1.0 - ab);

      std::int64_t c = 0;
      input.at(i, c++) = s0 * x0 + s1 * e0;
      input.at(i, c++) = s0 * x1 + s1 * e1;
      const Tensor temb = time_embedding(t, schedule.steps());
      for (std::int64_t j = 0; j < model.time_width; ++j) input.at(i, c++) = temb.at(j);
      if (!drop) {
        const Tensor enc = encode_label(world, label);
        for (std::int64_t j = 0; j < model.cond_width; ++j) input.at(i, c + j) = enc.at(j);
      }
      target.at(i, 0) = e0;
      target.at(i, 1) = e1;
    }

    GradientRecord rec(model.params);
    const ValueId out = apply_network(rec, model.params, model.arch, rec.constant(std::move(input)));
    const ValueId diff = rec.sub(out, rec.constant(std::move(target)));
    const ValueId loss = rec.scale(rec.sum_all(rec.square(diff)),
                                   1.0 / static_cast<double>(cfg.batch * model.data_dim));
    const double loss_v = rec.value(loss).at(0);
    if (!std::isfinite(loss_v))
      throw DivergenceError("pretraining diverged at step " + std::to_string(step));
    const Gradients grads = rec.backpropagate(loss, Tensor::scalar(1.0));
    masked_adam_step(model.params, grads.flat, nullptr, opt, adam);
    result.loss_curve.push_back(loss_v);
  }
  return result;
}

}  // namespace fade
