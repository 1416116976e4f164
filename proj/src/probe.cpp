#include "fade/probe.hpp"

#include <cmath>
#include <string>

#include "fade/autodiff.hpp"
#include "fade/errors.hpp"
#include "fade/optimizer.hpp"
#include "fade/rng.hpp"

namespace fade {

std::int64_t ProbeClassifier::head_offset(std::size_t attr_index) const {
  if (attr_index >= attributes.size()) throw LookupError("attribute index out of range");
  std::int64_t off = 0;
  for (std::size_t i = 0; i < attr_index; ++i) off += attributes[i].arity;
  return off;
}

std::int64_t ProbeClassifier::output_width() const {
  std::int64_t w = 0;
  for (const Attribute& a : attributes) w += a.arity;
  return w;
}

ProbeClassifier make_probe(const WorldConfig& world, std::int64_t hidden, std::uint64_t seed) {
  ProbeClassifier probe;
  probe.attributes = world.attributes();
  probe.concept_index = world.concept_index();
  std::int64_t out = 0;
  for (const Attribute& a : probe.attributes) out += a.arity;
  probe.arch = MlpArch{{2, hidden, hidden, out}, Activation::silu, "probe."};
  rng::Stream stream(seed);
  init_mlp(probe.params, probe.arch, stream);
  return probe;
}

namespace {

// one-hot attribute targets laid out like the logit heads
Tensor one_hot_targets(const ProbeClassifier& probe, const std::vector<PromptLabel>& labels) {
  const std::int64_t width = probe.output_width();
  Tensor t({static_cast<std::int64_t>(labels.size()), width});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    std::int64_t off = 0;
    for (std::size_t a = 0; a < probe.attributes.size(); ++a) {
      t.at(static_cast<std::int64_t>(r), off + labels[r].values[a]) = 1.0;
      off += probe.attributes[a].arity;
    }
  }
  return t;
}

}  // namespace

ProbeClassifier train_probe(const WorldConfig& world, const ProbeTrainConfig& cfg,
                            std::uint64_t seed) {
  if (cfg.samples_per_class < 1 || cfg.steps < 0 || cfg.batch < 1 || !(cfg.lr > 0.0))
    throw ValidationError("probe training configuration is not positive");
  ProbeClassifier probe = make_probe(world, 64, rng::derive(seed, 1));

  // ground-truth training pool: every assignment contributes equally
  const std::int64_t codes = world.assignment_count();
  const std::int64_t total = codes * cfg.samples_per_class;
  Tensor x({total, 2});
  std::vector<PromptLabel> labels;
  labels.reserve(static_cast<std::size_t>(total));
  for (std::int64_t code = 0; code < codes; ++code) {
    const PromptLabel label = world.label_from_code(code);
    const Tensor pts =
        sample_world(world, label, cfg.samples_per_class, rng::derive(seed, 100 + code));
    for (std::int64_t i = 0; i < cfg.samples_per_class; ++i) {
      const std::int64_t r = code * cfg.samples_per_class + i;
      x.at(r, 0) = pts.at(i, 0);
      x.at(r, 1) = pts.at(i, 1);
      labels.push_back(label);
    }
  }
  const Tensor targets = one_hot_targets(probe, labels);

  AdamState state = AdamState::for_store(probe.params);
  const AdamConfig adam{cfg.lr};
  rng::Stream root(rng::derive(seed, 2));
  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    rng::Stream s = root.child(static_cast<std::uint64_t>(step));
    Tensor bx({cfg.batch, 2});
    Tensor bt({cfg.batch, probe.output_width()});
    for (std::int64_t i = 0; i < cfg.batch; ++i) {
      const auto r = static_cast<std::int64_t>(s.below(static_cast<std::uint64_t>(total)));
      bx.at(i, 0) = x.at(r, 0);
      bx.at(i, 1) = x.at(r, 1);
      for (std::int64_t c = 0; c < bt.cols(); ++c) bt.at(i, c) = targets.at(r, c);
    }

    GradientRecord rec(probe.params);
    const ValueId logits = apply_network(rec, probe.params, probe.arch, rec.constant(bx));
    std::vector<ValueId> heads;
    std::int64_t off = 0;
    for (const Attribute& a : probe.attributes) {
      heads.push_back(rec.log_softmax_rows(rec.slice_cols(logits, off, off + a.arity)));
      off += a.arity;
    }
    const ValueId logp = rec.concat_cols(heads);
    const ValueId loss = rec.scale(rec.sum_all(rec.mul(logp, rec.constant(bt))),
                                   -1.0 / static_cast<double>(cfg.batch));
    const double loss_value = rec.value(loss).at(0);
    if (!std::isfinite(loss_value))
      throw DivergenceError("probe loss diverged at step " + std::to_string(step));
    const Gradients g = rec.backpropagate(loss, Tensor::scalar(1.0));
    masked_adam_step(probe.params, g.flat, nullptr, state, adam);
  }
  return probe;
}

Tensor probe_logits(const ProbeClassifier& probe, const Tensor& x) {
  return apply_network(probe.params, probe.arch, x);
}

std::vector<PromptLabel> probe_predictions(const ProbeClassifier& probe, const Tensor& x) {
  const Tensor logits = probe_logits(probe, x);
  std::vector<PromptLabel> out(static_cast<std::size_t>(logits.rows()));
  for (std::int64_t r = 0; r < logits.rows(); ++r) {
    PromptLabel label;
    std::int64_t off = 0;
    for (std::size_t a = 0; a < probe.attributes.size(); ++a) {
      const std::int64_t arity = probe.attributes[a].arity;
      std::int64_t pick = 0;
      if (static_cast<std::int64_t>(a) == probe.concept_index) {
        // concept head: softmax probability of the on-value against 1/2
        const double p1 = 1.0 / (1.0 + std::exp(logits.at(r, off) - logits.at(r, off + 1)));
        pick = p1 > 0.5 ? 1 : 0;
      } else {
        for (std::int64_t v = 1; v < arity; ++v)
          if (logits.at(r, off + v) > logits.at(r, off + pick)) pick = v;
      }
      label.values.push_back(pick);
      off += arity;
    }
    out[static_cast<std::size_t>(r)] = std::move(label);
  }
  return out;
}

std::vector<double> probe_concept_probability(const ProbeClassifier& probe, const Tensor& x) {
  const Tensor logits = probe_logits(probe, x);
  const std::int64_t off = probe.head_offset(static_cast<std::size_t>(probe.concept_index));
  std::vector<double> p(static_cast<std::size_t>(logits.rows()));
  for (std::int64_t r = 0; r < logits.rows(); ++r)
    p[static_cast<std::size_t>(r)] =
        1.0 / (1.0 + std::exp(logits.at(r, off) - logits.at(r, off + 1)));
  return p;
}

double probe_heldout_accuracy(const ProbeClassifier& probe, const WorldConfig& world,
                              std::int64_t per_class, std::uint64_t seed) {
  if (per_class < 1) throw ValidationError("need at least one held-out sample per class");
  std::int64_t correct = 0;
  std::int64_t total = 0;
  for (std::int64_t code = 0; code < world.assignment_count(); ++code) {
    const PromptLabel label = world.label_from_code(code);
    const Tensor pts = sample_world(world, label, per_class, rng::derive(seed, 500 + code));
    const std::vector<PromptLabel> pred = probe_predictions(probe, pts);
    for (const PromptLabel& p : pred) {
      correct += (p == label) ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace fade
