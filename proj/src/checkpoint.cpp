#include "fade/checkpoint.hpp"

#include <exception>

#include "fade/errors.hpp"
#include "fade/io_util.hpp"

namespace fade {

namespace {

using nlohmann::json;

[[noreturn]] void corrupt(const std::string& what) {
  throw CheckpointError(CheckpointError::Kind::corrupt, "corrupt checkpoint: " + what);
}

json params_to_json(const ParameterStore& store) {
  json arr = json::array();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& e = store.entry(i);
    arr.push_back({{"name", e.name},
                   {"shape", e.tensor.shape()},
                   {"values", e.tensor.values()}});
  }
  return arr;
}

ParameterStore params_from_json(const json& arr) {
  if (!arr.is_array()) corrupt("params is not an array");
  ParameterStore store;
  for (const auto& e : arr) {
    if (!e.is_object() || !e.contains("name") || !e.contains("shape") || !e.contains("values"))
      corrupt("parameter entry missing name/shape/values");
    std::vector<std::int64_t> shape = e.at("shape").get<std::vector<std::int64_t>>();
    std::vector<double> values = e.at("values").get<std::vector<double>>();
    store.add(e.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values)));
  }
  return store;
}

}  // namespace

bool is_known_stage(const std::string& stage) {
  return stage == "pretrained" || stage == "erased" || stage == "discriminator" ||
         stage == "probe";
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  if (!is_known_stage(ckpt.stage)) throw ValidationError("unknown stage tag: " + ckpt.stage);
  json j;
  j["format_version"] = ckpt.format_version;
  j["stage"] = ckpt.stage;
  j["provenance"] = {{"config_hash", ckpt.config_hash}, {"seed", ckpt.seed}};
  j["meta"] = ckpt.meta;
  j["schedule"] = ckpt.schedule;
  j["params"] = params_to_json(ckpt.params);
  write_text_file_atomic(path, j.dump(1));
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    corrupt(e.what());
  }
  try {
    if (!j.is_object()) corrupt("top level is not an object");
    if (!j.contains("format_version") || !j.at("format_version").is_number_integer())
      corrupt("missing format_version");
    const auto version = j.at("format_version").get<std::int64_t>();
    if (version != kCheckpointFormatVersion)
      throw CheckpointError(CheckpointError::Kind::version_mismatch,
                            "checkpoint format_version " + std::to_string(version) +
                                " is not supported (expected " +
                                std::to_string(kCheckpointFormatVersion) + ")");
    Checkpoint ckpt;
    ckpt.format_version = version;
    ckpt.stage = j.at("stage").get<std::string>();
    if (!is_known_stage(ckpt.stage)) corrupt("unknown stage tag: " + ckpt.stage);
    const json& prov = j.at("provenance");
    ckpt.config_hash = prov.at("config_hash").get<std::string>();
    ckpt.seed = prov.at("seed").get<std::uint64_t>();
    ckpt.meta = j.at("meta");
    ckpt.schedule = j.at("schedule");
    ckpt.params = params_from_json(j.at("params"));
    return ckpt;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    corrupt(e.what());
  }
}

Checkpoint checkpoint_from_denoiser(const DenoiserModel& model, const NoiseSchedule& schedule,
                                    double beta_start, double beta_end, const std::string& stage,
                                    const std::string& config_hash, std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.stage = stage;
  ckpt.config_hash = config_hash;
  ckpt.seed = seed;
  ckpt.meta = {{"kind", "denoiser"},
               {"widths", model.arch.widths},
               {"activation", model.arch.act == Activation::silu ? "silu" : "identity"},
               {"prefix", model.arch.prefix},
               {"data_dim", model.data_dim},
               {"cond_width", model.cond_width},
               {"time_width", model.time_width}};
  ckpt.schedule = {{"steps", schedule.steps()},
                   {"beta_start", beta_start},
                   {"beta_end", beta_end}};
  ckpt.params = model.params;
  return ckpt;
}

DenoiserModel denoiser_from_checkpoint(const Checkpoint& ckpt) {
  try {
    if (ckpt.meta.at("kind").get<std::string>() != "denoiser")
      corrupt("checkpoint does not hold a denoiser");
    DenoiserModel m;
    m.arch.widths = ckpt.meta.at("widths").get<std::vector<std::int64_t>>();
    const auto act = ckpt.meta.at("activation").get<std::string>();
    m.arch.act = act == "silu" ? Activation::silu : Activation::identity;
    m.arch.prefix = ckpt.meta.at("prefix").get<std::string>();
    m.data_dim = ckpt.meta.at("data_dim").get<std::int64_t>();
    m.cond_width = ckpt.meta.at("cond_width").get<std::int64_t>();
    m.time_width = ckpt.meta.at("time_width").get<std::int64_t>();
    m.arch.validate();
    if (m.arch.widths.front() != m.input_width())
      corrupt("denoiser widths do not match data/time/condition dimensions");
    m.params = ckpt.params;
    // every named layer tensor must be present with the recorded shape
    for (std::int64_t l = 0; l < m.arch.layers(); ++l) {
      if (!m.params.contains(m.arch.weight_name(l)) || !m.params.contains(m.arch.bias_name(l)))
        corrupt("missing layer parameters for layer " + std::to_string(l));
    }
    return m;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    corrupt(e.what());
  }
}

Checkpoint checkpoint_from_discriminator(const Discriminator& disc, const std::string& config_hash,
                                         std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.stage = "discriminator";
  ckpt.config_hash = config_hash;
  ckpt.seed = seed;
  ckpt.meta = {{"kind", "discriminator"},
               {"widths", disc.arch.widths},
               {"prefix", disc.arch.prefix},
               {"heads", disc.heads},
               {"data_dim", disc.data_dim}};
  ckpt.schedule = nlohmann::json::object();
  ckpt.params = disc.params;
  return ckpt;
}

Checkpoint checkpoint_from_probe(const ProbeClassifier& probe, const std::string& config_hash,
                                 std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.stage = "probe";
  ckpt.config_hash = config_hash;
  ckpt.seed = seed;
  nlohmann::json attrs = nlohmann::json::array();
  for (const Attribute& a : probe.attributes) attrs.push_back({{"name", a.name}, {"arity", a.arity}});
  ckpt.meta = {{"kind", "probe"},
               {"widths", probe.arch.widths},
               {"prefix", probe.arch.prefix},
               {"attributes", attrs},
               {"concept_index", probe.concept_index}};
  ckpt.schedule = nlohmann::json::object();
  ckpt.params = probe.params;
  return ckpt;
}

}  // namespace fade
