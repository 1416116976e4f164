#include "fade/run_config.hpp"

#include <exception>
#include <initializer_list>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fade/errors.hpp"
#include "fade/io_util.hpp"

namespace fade {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::string& section,
                         std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ValidationError("section '" + section + "' must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) { known = true; break; }
    if (!known)
      throw ValidationError("unknown key '" + item.key() + "' in section '" + section + "'");
  }
}

const json& require_section(const json& j, const char* name) {
  if (!j.contains(name)) throw ValidationError(std::string("missing section '") + name + "'");
  return j.at(name);
}

template <typename T>
T field_or(const json& j, const char* key, T fallback, const std::string& section) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception&) {
    throw ValidationError("key '" + std::string(key) + "' in section '" + section +
                          "' has the wrong type");
  }
}

WorldConfig parse_world(const json& j) {
  reject_unknown_keys(j, "world", {"attributes", "concept", "components"});
  if (!j.contains("attributes") && !j.contains("concept") && !j.contains("components"))
    return WorldConfig::default_world();
  if (!j.contains("attributes") || !j.contains("concept") || !j.contains("components"))
    throw ValidationError("section 'world' must give attributes, concept and components together");

  std::vector<Attribute> attributes;
  for (const auto& a : j.at("attributes")) {
    reject_unknown_keys(a, "world.attributes[]", {"name", "arity"});
    attributes.push_back({field_or<std::string>(a, "name", "", "world.attributes[]"),
                          field_or<std::int64_t>(a, "arity", 0, "world.attributes[]")});
  }
  std::vector<std::pair<std::map<std::string, std::int64_t>, GaussianComponent>> components;
  for (const auto& c : j.at("components")) {
    reject_unknown_keys(c, "world.components[]", {"assignment", "mean", "cov"});
    std::map<std::string, std::int64_t> assignment;
    for (const auto& kv : c.at("assignment").items())
      assignment[kv.key()] = kv.value().get<std::int64_t>();
    GaussianComponent g;
    const auto mean = c.at("mean").get<std::vector<double>>();
    const auto cov = c.at("cov").get<std::vector<std::vector<double>>>();
    if (mean.size() != 2 || cov.size() != 2 || cov[0].size() != 2 || cov[1].size() != 2)
      throw ValidationError("world components need a 2-vector mean and a 2x2 cov");
    g.mean = {mean[0], mean[1]};
    g.cov = {cov[0][0], cov[0][1], cov[1][0], cov[1][1]};
    components.emplace_back(std::move(assignment), g);
  }
  return WorldConfig::create(std::move(attributes),
                             field_or<std::string>(j, "concept", "", "world"),
                             std::move(components));
}

json world_to_json(const WorldConfig& world) {
  json attrs = json::array();
  for (const Attribute& a : world.attributes())
    attrs.push_back({{"name", a.name}, {"arity", a.arity}});
  json comps = json::array();
  for (std::int64_t code = 0; code < world.assignment_count(); ++code) {
    const PromptLabel label = world.label_from_code(code);
    const GaussianComponent& g = world.component(label);
    json assignment = json::object();
    for (std::size_t i = 0; i < world.attributes().size(); ++i)
      assignment[world.attributes()[i].name] = label.values[i];
    comps.push_back({{"assignment", assignment},
                     {"mean", {g.mean[0], g.mean[1]}},
                     {"cov", {{g.cov[0], g.cov[1]}, {g.cov[2], g.cov[3]}}}});
  }
  return {{"attributes", attrs}, {"concept", world.concept_attribute()}, {"components", comps}};
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  reject_unknown_keys(j, "(top level)",
                      {"seed", "output_dir", "world", "schedule", "pretrain", "fade", "eval"});
  RunConfig cfg;
  cfg.seed = field_or<std::uint64_t>(j, "seed", 0, "(top level)");
  cfg.output_dir = field_or<std::string>(j, "output_dir", "out", "(top level)");

  cfg.world = parse_world(require_section(j, "world"));

  const json& sched = require_section(j, "schedule");
  reject_unknown_keys(sched, "schedule", {"steps", "beta_start", "beta_end"});
  cfg.schedule_steps = field_or<std::int64_t>(sched, "steps", 50, "schedule");
  cfg.beta_start = field_or<double>(sched, "beta_start", 1e-4, "schedule");
  cfg.beta_end = field_or<double>(sched, "beta_end", 0.2, "schedule");

  const json& pre = require_section(j, "pretrain");
  reject_unknown_keys(pre, "pretrain", {"steps", "batch", "lr", "cond_dropout"});
  cfg.pretrain.steps = field_or<std::int64_t>(pre, "steps", 5000, "pretrain");
  cfg.pretrain.batch = field_or<std::int64_t>(pre, "batch", 128, "pretrain");
  cfg.pretrain.lr = field_or<double>(pre, "lr", 1e-3, "pretrain");
  cfg.pretrain.cond_dropout = field_or<double>(pre, "cond_dropout", 0.1, "pretrain");

  const json& fd = require_section(j, "fade");
  reject_unknown_keys(fd, "fade",
                      {"lambda", "omega", "max_iterations", "t0_cutoff", "rho", "batch",
                       "saliency_batch", "gen_lr", "disc_lr", "disc_pretrain_steps", "stop_window",
                       "stop_delta", "val_pool_iters", "prompt_pairs", "trunc_backprop_steps",
                       "disable_adv", "disable_pres", "disable_saliency"});
  FadeConfig defaults;
  cfg.fade.lambda = field_or<double>(fd, "lambda", defaults.lambda, "fade");
  cfg.fade.omega = field_or<double>(fd, "omega", defaults.omega, "fade");
  cfg.fade.max_iterations = field_or<std::int64_t>(fd, "max_iterations", defaults.max_iterations, "fade");
  cfg.fade.t0_cutoff = field_or<std::int64_t>(fd, "t0_cutoff", defaults.t0_cutoff, "fade");
  cfg.fade.rho = field_or<double>(fd, "rho", defaults.rho, "fade");
  cfg.fade.batch = field_or<std::int64_t>(fd, "batch", defaults.batch, "fade");
  cfg.fade.saliency_batch =
      field_or<std::int64_t>(fd, "saliency_batch", defaults.saliency_batch, "fade");
  cfg.fade.gen_lr = field_or<double>(fd, "gen_lr", defaults.gen_lr, "fade");
  cfg.fade.disc_lr = field_or<double>(fd, "disc_lr", defaults.disc_lr, "fade");
  cfg.fade.disc_pretrain_steps =
      field_or<std::int64_t>(fd, "disc_pretrain_steps", defaults.disc_pretrain_steps, "fade");
  cfg.fade.stop_window = field_or<std::int64_t>(fd, "stop_window", defaults.stop_window, "fade");
  cfg.fade.stop_delta = field_or<double>(fd, "stop_delta", defaults.stop_delta, "fade");
  cfg.fade.val_pool_iters =
      field_or<std::int64_t>(fd, "val_pool_iters", defaults.val_pool_iters, "fade");
  cfg.fade.prompt_pairs = field_or<std::int64_t>(fd, "prompt_pairs", defaults.prompt_pairs, "fade");
  cfg.fade.trunc_backprop_steps =
      field_or<std::int64_t>(fd, "trunc_backprop_steps", defaults.trunc_backprop_steps, "fade");
  cfg.fade.disable_adv = field_or<bool>(fd, "disable_adv", false, "fade");
  cfg.fade.disable_pres = field_or<bool>(fd, "disable_pres", false, "fade");
  cfg.fade.disable_saliency = field_or<bool>(fd, "disable_saliency", false, "fade");

  const json& ev = require_section(j, "eval");
  reject_unknown_keys(ev, "eval", {"n_samples", "grid_bins"});
  cfg.eval_samples = field_or<std::int64_t>(ev, "n_samples", 500, "eval");
  cfg.grid_bins = field_or<std::int64_t>(ev, "grid_bins", 16, "eval");

  // fail fast on invalid numbers before any stage runs
  cfg.fade.validate(cfg.make_schedule());
  if (cfg.pretrain.steps < 0 || cfg.pretrain.batch < 1 || !(cfg.pretrain.lr > 0.0) ||
      cfg.pretrain.cond_dropout < 0.0 || cfg.pretrain.cond_dropout > 1.0)
    throw ValidationError("section 'pretrain' has out-of-range values");
  if (cfg.eval_samples < 100 || cfg.grid_bins < 1)
    throw ValidationError("section 'eval' has out-of-range values");
  return cfg;
}

RunConfig load_run_config(const std::string& path, std::string* config_hash) {
  const std::string text = read_text_file(path);
  if (config_hash) *config_hash = to_hex64(fnv1a64(text));
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["world"] = world_to_json(cfg.world);
  j["schedule"] = {{"steps", cfg.schedule_steps},
                   {"beta_start", cfg.beta_start},
                   {"beta_end", cfg.beta_end}};
  j["pretrain"] = {{"steps", cfg.pretrain.steps},
                   {"batch", cfg.pretrain.batch},
                   {"lr", cfg.pretrain.lr},
                   {"cond_dropout", cfg.pretrain.cond_dropout}};
  j["fade"] = {{"lambda", cfg.fade.lambda},
               {"omega", cfg.fade.omega},
               {"max_iterations", cfg.fade.max_iterations},
               {"t0_cutoff", cfg.fade.t0_cutoff},
               {"rho", cfg.fade.rho},
               {"batch", cfg.fade.batch},
               {"saliency_batch", cfg.fade.saliency_batch},
               {"gen_lr", cfg.fade.gen_lr},
               {"disc_lr", cfg.fade.disc_lr},
               {"disc_pretrain_steps", cfg.fade.disc_pretrain_steps},
               {"stop_window", cfg.fade.stop_window},
               {"stop_delta", cfg.fade.stop_delta},
               {"val_pool_iters", cfg.fade.val_pool_iters},
               {"prompt_pairs", cfg.fade.prompt_pairs},
               {"trunc_backprop_steps", cfg.fade.trunc_backprop_steps},
               {"disable_adv", cfg.fade.disable_adv},
               {"disable_pres", cfg.fade.disable_pres},
               {"disable_saliency", cfg.fade.disable_saliency}};
  j["eval"] = {{"n_samples", cfg.eval_samples}, {"grid_bins", cfg.grid_bins}};
  return j;
}

}  // namespace fade
