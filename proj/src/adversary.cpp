#include "fade/adversary.hpp"

#include <cmath>
#include <string>

#include "fade/errors.hpp"

namespace fade {

namespace {

void check_head(const Discriminator& d, std::int64_t head) {
  if (head < 0 || head >= d.heads)
    throw ValidationError("discriminator head " + std::to_string(head) + " out of range");
}

void check_points(const Discriminator& d, const Tensor& x, const char* who) {
  if (x.rank() != 2 || x.cols() != d.data_dim)
    throw ShapeError(std::string(who) + " must be (n, " + std::to_string(d.data_dim) + ")");
  if (x.rows() == 0) throw ValidationError(std::string(who) + " must be non-empty");
}

double clamp_prob(double p) {
  return p < kProbClamp ? kProbClamp : (p > 1.0 - kProbClamp ? 1.0 - kProbClamp : p);
}

}  // namespace

Discriminator make_discriminator(std::int64_t data_dim, std::int64_t heads, std::uint64_t seed) {
  if (heads < 1) throw ValidationError("discriminator needs at least one head");
  Discriminator d;
  d.data_dim = data_dim;
  d.heads = heads;
  // wide enough to track the optimal critic closely; an underpowered critic
  // lets the stop rule fire while real signal is still present
  d.arch.widths = {data_dim, 128, 128, heads};
  d.arch.act = Activation::silu;
  rng::Stream stream(seed);
  init_mlp(d.params, d.arch, stream);
  return d;
}

Tensor discriminator_probs(const Discriminator& d, const Tensor& x) {
  check_points(d, x, "discriminator input");
  Tensor out = apply_network(d.params, d.arch, x);
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

ValueId discriminator_probs(GradientRecord& rec, const Discriminator& d, ValueId x) {
  check_points(d, rec.value(x), "discriminator input");
  return rec.logistic(apply_network(rec, d.params, d.arch, x));
}

double discriminator_loss(const Discriminator& d, const Tensor& x_concept,
                          const Tensor& x_neutral, std::int64_t head) {
  check_head(d, head);
  const Tensor pc = discriminator_probs(d, x_concept);
  const Tensor pn = discriminator_probs(d, x_neutral);
  double loss = 0.0;
  for (std::int64_t i = 0; i < pc.rows(); ++i)
    loss -= std::log(clamp_prob(pc.at(i, head))) / static_cast<double>(pc.rows());
  for (std::int64_t i = 0; i < pn.rows(); ++i)
    loss -= std::log(1.0 - clamp_prob(pn.at(i, head))) / static_cast<double>(pn.rows());
  return loss;
}

namespace {

// -mean log p or -mean log (1 - p) of one head column, on the tape
ValueId head_log_term(GradientRecord& rec, ValueId probs, std::int64_t head, bool complement) {
  const std::int64_t n = rec.value(probs).rows();
  ValueId p = rec.clamp(rec.slice_cols(probs, head, head + 1), kProbClamp, 1.0 - kProbClamp);
  if (complement) p = rec.add_scalar(rec.scale(p, -1.0), 1.0);
  return rec.scale(rec.sum_all(rec.log(p)), -1.0 / static_cast<double>(n));
}

}  // namespace

ValueId discriminator_loss(GradientRecord& rec, const Discriminator& d, ValueId x_concept,
                           ValueId x_neutral, std::int64_t head) {
  check_head(d, head);
  const ValueId pc = discriminator_probs(rec, d, x_concept);
  const ValueId pn = discriminator_probs(rec, d, x_neutral);
  return rec.add(head_log_term(rec, pc, head, false), head_log_term(rec, pn, head, true));
}

double removal_loss(const Discriminator& d, const Tensor& x_concept, std::int64_t head) {
  check_head(d, head);
  const Tensor pc = discriminator_probs(d, x_concept);
  double loss = 0.0;
  for (std::int64_t i = 0; i < pc.rows(); ++i)
    loss -= std::log(1.0 - clamp_prob(pc.at(i, head))) / static_cast<double>(pc.rows());
  return loss;
}

ValueId removal_loss(GradientRecord& rec, const Discriminator& d, ValueId x_concept,
                     std::int64_t head) {
  check_head(d, head);
  return head_log_term(rec, discriminator_probs(rec, d, x_concept), head, true);
}

double discriminator_accuracy(const Discriminator& d, const Tensor& x,
                              const std::vector<std::uint8_t>& is_concept, std::int64_t head) {
  check_head(d, head);
  if (static_cast<std::int64_t>(is_concept.size()) != x.rows())
    throw ShapeError("origin flag count does not match the sample count");
  const Tensor p = discriminator_probs(d, x);
  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < x.rows(); ++i) {
    const double v = p.at(i, head);
    // exact 1/2 counts as incorrect for both classes
    if (is_concept[static_cast<std::size_t>(i)] ? v > 0.5 : v < 0.5) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(x.rows());
}

}  // namespace fade
