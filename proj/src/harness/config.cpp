#include "adaptraj/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "adaptraj/numcore/errors.hpp"

namespace adaptraj::harness {

std::string Toggles::label() const {
  if (!ttt) return "no-adapt";
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += "+";
    s += name;
  };
  add(mp, "MP");
  add(dlo, "DLO");
  add(hsd, "HSD");
  return s.empty() ? "fixed" : s;
}

ExperimentConfig::ExperimentConfig() {
  ttt.interval = 0;
  // calibrated on the default benchmark; AdamW steps, not raw gradients
  ttt.hypergrad_direction = ttt::HypergradDirection::kUpdate;
  ttt.gamma = 3e-6;
  auto& s = source.family;
  s.speed_mean = {8.0, 0.5};
  s.speed_std = {0.8, 0.2};
  s.yaw_rate_scale = {0.01, 0.005};
  s.process_noise_std = {0.03, 0.01};
  s.interaction_gain = {0.2, 0.05};
  s.curvature_min = -0.001;
  s.curvature_max = 0.001;
  source.corpus = {40, 3, 5, 96};

  auto& t = target.family;
  t.speed_mean = {12.0, 0.5};
  t.speed_std = {1.2, 0.3};
  t.yaw_rate_scale = {0.02, 0.01};
  t.process_noise_std = {0.05, 0.02};
  t.interaction_gain = {0.5, 0.1};
  t.curvature_min = 0.003;
  t.curvature_max = 0.006;
  target.corpus = {24, 4, 5, 96};
}

namespace {

struct Horizon {
  std::size_t past, future;
  double dt;
};

Horizon horizon_of(const std::string& name) {
  if (name == "long") return {4, 12, 0.5};
  if (name == "short") return {10, 30, 0.1};
  throw ConfigError("horizon.preset must be 'long' or 'short' (got '" + name + "')");
}

}  // namespace

scenegen::SceneLayout ExperimentConfig::layout() const {
  const auto h = horizon_of(horizon);
  scenegen::SceneLayout l;
  l.past_steps = h.past;
  l.future_steps = h.future;
  l.dt = h.dt;
  l.inner_steps = meta.inner_steps;
  l.interval = interval();
  return l;
}

std::size_t ExperimentConfig::interval() const {
  return ttt.interval == 0 ? horizon_of(horizon).future : ttt.interval;
}

predictor::PredictorConfig ExperimentConfig::model_config() const {
  auto m = model;
  const auto h = horizon_of(horizon);
  m.past_steps = h.past;
  m.future_steps = h.future;
  return m;
}

pretrain::MetaConfig ExperimentConfig::meta_config(double alpha_init) const {
  auto m = meta;
  m.interval = interval();
  if (meta_alpha_follows_ttt) m.alpha_in = alpha_init;
  return m;
}

ttt::TttConfig ExperimentConfig::ttt_config(const Toggles& tg, double alpha_init, std::size_t frequency) const {
  auto t = ttt;
  t.interval = interval();
  t.alpha_init = alpha_init;
  t.update_frequency = frequency;
  t.dlo = tg.dlo;
  t.hsd = tg.hsd;
  return t;
}

namespace {

void check(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key + " " + what);
}

void validate_family(const DomainSpec& d, const std::string& prefix, std::size_t min_len) {
  const auto& f = d.family;
  const std::pair<const scenegen::NormalDraw*, const char*> draws[] = {
      {&f.speed_mean, "speed_mean"},       {&f.speed_std, "speed_std"},
      {&f.yaw_rate_scale, "yaw_rate"},     {&f.process_noise_std, "noise"},
      {&f.interaction_gain, "interaction"}};
  for (const auto& [dr, name] : draws) {
    check(std::isfinite(dr->mean), prefix + "." + name, "must be finite");
    check(dr->stddev >= 0.0, prefix + "." + name + "_spread", "must be >= 0");
  }
  check(f.speed_mean.mean > 0.0, prefix + ".speed_mean", "must be > 0");
  check(f.curvature_min <= f.curvature_max, prefix + ".curvature_min", "must be <= curvature_max");
  check(d.corpus.scenes >= 1, prefix + ".scenes", "must be >= 1");
  check(d.corpus.min_agents >= 1, prefix + ".min_agents", "must be >= 1");
  check(d.corpus.max_agents >= d.corpus.min_agents, prefix + ".max_agents", "must be >= min_agents");
  check(d.corpus.length >= min_len, prefix + ".length",
        "must be >= " + std::to_string(min_len) + " (t_h + (K_inner + 1) * tau + t_f)");
}

}  // namespace

void ExperimentConfig::validate() const {
  const auto h = horizon_of(horizon);
  const auto l = layout();
  validate_family(source, "source", l.min_scene_length());
  validate_family(target, "target", l.min_scene_length());
  check(target.corpus.max_agents <= model.token_capacity, "model.token_capacity",
        "must be >= target.max_agents");
  model_config().validate();
  offline.validate();
  meta_config(ttt.alpha_init).validate();
  check(ttt.interval == 0 || ttt.interval >= h.future, "ttt.interval", "must be 0 (= t_f) or >= t_f");
  ttt_config(toggles, ttt.alpha_init, ttt.update_frequency).validate(h.future);
  check(eval_k >= 1 && eval_k <= model.modes, "eval.k", "must be in [1, model.modes]");
  check(miss_threshold > 0.0, "eval.miss_threshold", "must be > 0");
  check(!seeds.empty(), "run.seeds", "must not be empty");
  check(!sweep_alphas.empty(), "sweep.alphas", "must not be empty");
  for (double a : sweep_alphas) check(a >= ttt.alpha_min && a <= ttt.alpha_max, "sweep.alphas", "outside alpha bounds");
  check(!sweep_frequencies.empty(), "sweep.frequencies", "must not be empty");
  for (auto f : sweep_frequencies) check(f >= 1, "sweep.frequencies", "entries must be >= 1");
  check(!fewshot_budgets.empty(), "fewshot.budgets", "must not be empty");
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip
  return std::string(buf, r.ptr);
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (v.empty() || r.ec != std::errc() || r.ptr != end)
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (v.empty() || r.ec != std::errc() || r.ptr != end)
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  if (v == "inf") return std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Binding {
  KeyInfo info;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <typename Ref>
Binding dbl(std::string name, std::string doc, Ref ref) {
  Binding b;
  b.info = {name, KeyType::kDouble, "", std::move(doc)};
  b.get = [ref](const ExperimentConfig& c) { return format_double(ref(const_cast<ExperimentConfig&>(c))); };
  b.set = [ref, name](ExperimentConfig& c, const std::string& v) { ref(c) = parse_double(name, v); };
  return b;
}

template <typename Ref>
Binding uns(std::string name, std::string doc, Ref ref) {
  Binding b;
  b.info = {name, KeyType::kUint, "", std::move(doc)};
  b.get = [ref](const ExperimentConfig& c) { return std::to_string(ref(const_cast<ExperimentConfig&>(c))); };
  b.set = [ref, name](ExperimentConfig& c, const std::string& v) {
    const auto x = parse_int(name, v);
    if (x < 0) throw ConfigError(name + " must be >= 0");
    ref(c) = static_cast<std::remove_reference_t<decltype(ref(c))>>(x);
  };
  return b;
}

template <typename Ref>
Binding boo(std::string name, std::string doc, Ref ref) {
  Binding b;
  b.info = {name, KeyType::kBool, "", std::move(doc)};
  b.get = [ref](const ExperimentConfig& c) { return ref(const_cast<ExperimentConfig&>(c)) ? "true" : "false"; };
  b.set = [ref, name](ExperimentConfig& c, const std::string& v) { ref(c) = parse_bool(name, v); };
  return b;
}

Binding str(std::string name, std::string doc,
            std::function<std::string(const ExperimentConfig&)> get,
            std::function<void(ExperimentConfig&, const std::string&)> set) {
  Binding b;
  b.info = {std::move(name), KeyType::kString, "", std::move(doc)};
  b.get = std::move(get);
  b.set = std::move(set);
  return b;
}

void add_family(std::vector<Binding>& v, const std::string& p, DomainSpec ExperimentConfig::*spec) {
  auto fam = [spec](ExperimentConfig& c) -> scenegen::DomainFamily& { return (c.*spec).family; };
  auto cor = [spec](ExperimentConfig& c) -> scenegen::CorpusSpec& { return (c.*spec).corpus; };
  using NormalRef = scenegen::NormalDraw scenegen::DomainFamily::*;
  const std::pair<const char*, NormalRef> draws[] = {
      {"speed_mean", &scenegen::DomainFamily::speed_mean},
      {"speed_std", &scenegen::DomainFamily::speed_std},
      {"yaw_rate", &scenegen::DomainFamily::yaw_rate_scale},
      {"noise", &scenegen::DomainFamily::process_noise_std},
      {"interaction", &scenegen::DomainFamily::interaction_gain}};
  const char* units[] = {"m/s", "m/s", "rad/s", "m", "1/s"};
  for (std::size_t i = 0; i < 5; ++i) {
    const auto mem = draws[i].second;
    v.push_back(dbl(p + "." + draws[i].first, std::string("per-scene mean of ") + draws[i].first + " (" + units[i] + ")", [fam, mem](ExperimentConfig& c) -> double& { return (fam(c).*mem).mean; }));
    v.push_back(dbl(p + "." + draws[i].first + "_spread",
                    std::string("std of the per-scene ") + draws[i].first + " draw",
                    [fam, mem](ExperimentConfig& c) -> double& { return (fam(c).*mem).stddev; }));
  }
  v.push_back(dbl(p + ".curvature_min", "path curvature lower bound (1/m)",
                  [fam](ExperimentConfig& c) -> double& { return fam(c).curvature_min; }));
  v.push_back(dbl(p + ".curvature_max", "path curvature upper bound (1/m)",
                  [fam](ExperimentConfig& c) -> double& { return fam(c).curvature_max; }));
  v.push_back(uns(p + ".scenes", "scenes in the corpus",
                  [cor](ExperimentConfig& c) -> std::size_t& { return cor(c).scenes; }));
  v.push_back(uns(p + ".min_agents", "fewest agents per scene",
                  [cor](ExperimentConfig& c) -> std::size_t& { return cor(c).min_agents; }));
  v.push_back(uns(p + ".max_agents", "most agents per scene",
                  [cor](ExperimentConfig& c) -> std::size_t& { return cor(c).max_agents; }));
  v.push_back(uns(p + ".length", "scene length t_s (timesteps)",
                  [cor](ExperimentConfig& c) -> std::size_t& { return cor(c).length; }));
}

std::string join_uints(const std::vector<std::uint64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = [] {
    using C = ExperimentConfig;
    std::vector<Binding> v;
    v.push_back(str(
        "horizon.preset", "long (t_h=4, t_f=12, dt=0.5 s) or short (t_h=10, t_f=30, dt=0.1 s)",
        [](const C& c) { return c.horizon; },
        [](C& c, const std::string& s) {
          horizon_of(s);
          c.horizon = s;
        }));
    add_family(v, "source", &C::source);
    add_family(v, "target", &C::target);

    v.push_back(uns("model.embed_dim", "embedding width E", [](C& c) -> std::size_t& { return c.model.embed_dim; }));
    v.push_back(uns("model.hidden_dim", "encoder width H", [](C& c) -> std::size_t& { return c.model.hidden_dim; }));
    v.push_back(uns("model.modes", "mode heads K (best-of-K)", [](C& c) -> std::size_t& { return c.model.modes; }));
    v.push_back(uns("model.token_capacity", "actor-token rows per scene",
                    [](C& c) -> std::size_t& { return c.model.token_capacity; }));
    v.push_back(dbl("model.coord_scale", "meters to network units", [](C& c) -> double& { return c.model.coord_scale; }));
    v.push_back(dbl("model.curvature_scale", "curvature feature scale",
                    [](C& c) -> double& { return c.model.curvature_scale; }));
    v.push_back(dbl("model.mask_ratio", "fraction of past points masked for reconstruction",
                    [](C& c) -> double& { return c.model.mask_ratio; }));
    v.push_back(dbl("model.init_gain", "weight init gain", [](C& c) -> double& { return c.model.init_gain; }));
    v.push_back(boo("model.cv_residual", "mode heads predict offsets from constant-velocity extrapolation",
                    [](C& c) -> bool& { return c.model.cv_residual; }));

    v.push_back(uns("offline.epochs", "offline pretraining epochs", [](C& c) -> std::size_t& { return c.offline.epochs; }));
    v.push_back(uns("offline.batch", "samples per offline step", [](C& c) -> std::size_t& { return c.offline.batch_size; }));
    v.push_back(dbl("offline.lr", "offline AdamW learning rate", [](C& c) -> double& { return c.offline.learning_rate; }));
    v.push_back(dbl("offline.weight_decay", "decoupled weight decay", [](C& c) -> double& { return c.offline.weight_decay; }));
    v.push_back(uns("offline.stride", "use every n-th timestep", [](C& c) -> std::size_t& { return c.offline.sample_stride; }));
    v.push_back(dbl("offline.val_fraction", "scenes held out for validation",
                    [](C& c) -> double& { return c.offline.validation_fraction; }));

    v.push_back(uns("meta.batch", "tasks per outer step B", [](C& c) -> std::size_t& { return c.meta.batch; }));
    v.push_back(uns("meta.inner_steps", "inner steps K_inner", [](C& c) -> std::size_t& { return c.meta.inner_steps; }));
    v.push_back(boo("meta.alpha_in_follows_ttt", "alpha_in = ttt.alpha_init",
                    [](C& c) -> bool& { return c.meta_alpha_follows_ttt; }));
    v.push_back(dbl("meta.alpha_in", "inner learning rate when not following ttt.alpha_init",
                    [](C& c) -> double& { return c.meta.alpha_in; }));
    v.push_back(dbl("meta.beta_init", "outer rate at the first step", [](C& c) -> double& { return c.meta.beta_init; }));
    v.push_back(dbl("meta.beta_final", "outer rate at the last step (cosine)", [](C& c) -> double& { return c.meta.beta_final; }));
    v.push_back(uns("meta.epochs", "passes over the task set", [](C& c) -> std::size_t& { return c.meta.epochs; }));
    v.push_back(str(
        "meta.inner_optimizer", "sgd | adamw",
        [](const C& c) { return numcore::to_string(c.meta.inner_optimizer); },
        [](C& c, const std::string& s) { c.meta.inner_optimizer = numcore::parse_optimizer_kind(s); }));
    v.push_back(str(
        "meta.outer_optimizer", "sgd | adamw",
        [](const C& c) { return numcore::to_string(c.meta.outer_optimizer); },
        [](C& c, const std::string& s) { c.meta.outer_optimizer = numcore::parse_optimizer_kind(s); }));
    v.push_back(dbl("meta.weight_decay", "outer AdamW weight decay", [](C& c) -> double& { return c.meta.weight_decay; }));
    v.push_back(boo("meta.inner_tokens", "actor tokens active in the inner loop",
                    [](C& c) -> bool& { return c.meta.inner_tokens; }));

    v.push_back(uns("ttt.interval", "supervision interval tau; 0 means t_f", [](C& c) -> std::size_t& { return c.ttt.interval; }));
    v.push_back(uns("ttt.frequency", "regular update every f-th opportunity",
                    [](C& c) -> std::size_t& { return c.ttt.update_frequency; }));
    v.push_back(dbl("ttt.alpha_init", "initial online learning rate", [](C& c) -> double& { return c.ttt.alpha_init; }));
    v.push_back(dbl("ttt.alpha_min", "lower clamp for alpha", [](C& c) -> double& { return c.ttt.alpha_min; }));
    v.push_back(dbl("ttt.alpha_max", "upper clamp for alpha", [](C& c) -> double& { return c.ttt.alpha_max; }));
    v.push_back(dbl("ttt.gamma", "learning rate of alpha", [](C& c) -> double& { return c.ttt.gamma; }));
    v.push_back(uns("ttt.alpha_window", "gradient averaging window tau_alpha",
                    [](C& c) -> std::size_t& { return c.ttt.alpha_window; }));
    v.push_back(boo("ttt.strict_alpha_interval", "update alpha only every tau_alpha steps",
                    [](C& c) -> bool& { return c.ttt.strict_alpha_interval; }));
    v.push_back(str(
        "ttt.hypergrad_direction", "gradient | update: past-step vector paired with the current gradient",
        [](const C& c) { return ttt::to_string(c.ttt.hypergrad_direction); },
        [](C& c, const std::string& s) { c.ttt.hypergrad_direction = ttt::parse_hypergrad_direction(s); }));
    v.push_back(dbl("ttt.k", "hard-sample threshold multiplier", [](C& c) -> double& { return c.ttt.k; }));
    v.push_back(dbl("ttt.stat_decay", "EMA rate of the error statistics", [](C& c) -> double& { return c.ttt.stat_decay; }));
    v.push_back(uns("ttt.stat_warmup", "samples averaged exactly before EMA",
                    [](C& c) -> std::size_t& { return c.ttt.stat_warmup; }));
    v.push_back(str(
        "ttt.error_signal", "reg | total: loss used as the hard-sample error",
        [](const C& c) { return ttt::to_string(c.ttt.error_signal); },
        [](C& c, const std::string& s) { c.ttt.error_signal = ttt::parse_error_signal(s); }));
    v.push_back(str(
        "ttt.optimizer", "sgd | adamw", [](const C& c) { return numcore::to_string(c.ttt.optimizer); },
        [](C& c, const std::string& s) { c.ttt.optimizer = numcore::parse_optimizer_kind(s); }));
    v.push_back(dbl("ttt.weight_decay", "online AdamW weight decay", [](C& c) -> double& { return c.ttt.adamw.weight_decay; }));
    v.push_back(boo("ttt.reset_tokens", "zero actor tokens at scene boundaries",
                    [](C& c) -> bool& { return c.ttt.reset_tokens_per_scene; }));
    v.push_back(boo("ttt.use_tokens", "actor tokens during TTT", [](C& c) -> bool& { return c.ttt.use_tokens; }));

    v.push_back(boo("toggles.ttt", "test-time training on", [](C& c) -> bool& { return c.toggles.ttt; }));
    v.push_back(boo("toggles.mp", "meta pretraining", [](C& c) -> bool& { return c.toggles.mp; }));
    v.push_back(boo("toggles.dlo", "dynamic learning-rate optimisation", [](C& c) -> bool& { return c.toggles.dlo; }));
    v.push_back(boo("toggles.hsd", "hard-sample-driven updates", [](C& c) -> bool& { return c.toggles.hsd; }));

    v.push_back(uns("eval.k", "K for best-of-K metrics", [](C& c) -> std::size_t& { return c.eval_k; }));
    v.push_back(dbl("eval.miss_threshold", "miss if min-mode FDE exceeds this (m)",
                    [](C& c) -> double& { return c.miss_threshold; }));

    v.push_back(str(
        "run.seeds", "comma-separated seeds", [](const C& c) { return join_uints(c.seeds); },
        [](C& c, const std::string& s) {
          c.seeds.clear();
          for (const auto& x : split_list(s)) c.seeds.push_back(parse_uint("run.seeds", x));
        }));
    v.push_back(boo("run.step_log", "write per-timestep TTT step logs", [](C& c) -> bool& { return c.step_log; }));
    v.push_back(boo("run.trace", "enable access tracing and the causality audit",
                    [](C& c) -> bool& { return c.trace; }));
    v.push_back(str(
        "sweep.alphas", "alpha_init values for lr-sweep",
        [](const C& c) {
          std::string s;
          for (std::size_t i = 0; i < c.sweep_alphas.size(); ++i) s += (i ? "," : "") + format_double(c.sweep_alphas[i]);
          return s;
        },
        [](C& c, const std::string& s) {
          c.sweep_alphas.clear();
          for (const auto& x : split_list(s)) c.sweep_alphas.push_back(parse_double("sweep.alphas", x));
        }));
    v.push_back(str(
        "sweep.frequencies", "update frequencies for freq-sweep",
        [](const C& c) {
          std::string s;
          for (std::size_t i = 0; i < c.sweep_frequencies.size(); ++i)
            s += (i ? "," : "") + std::to_string(c.sweep_frequencies[i]);
          return s;
        },
        [](C& c, const std::string& s) {
          c.sweep_frequencies.clear();
          for (const auto& x : split_list(s)) c.sweep_frequencies.push_back(parse_uint("sweep.frequencies", x));
        }));
    v.push_back(str(
        "fewshot.budgets", "supervision budgets (agent samples) for fewshot",
        [](const C& c) {
          std::string s;
          for (std::size_t i = 0; i < c.fewshot_budgets.size(); ++i)
            s += (i ? "," : "") + std::to_string(c.fewshot_budgets[i]);
          return s;
        },
        [](C& c, const std::string& s) {
          c.fewshot_budgets.clear();
          for (const auto& x : split_list(s)) c.fewshot_budgets.push_back(parse_uint("fewshot.budgets", x));
        }));
    v.push_back(uns("fewshot.budget", "budget for single-cell commands; 0 = unlimited",
                    [](C& c) -> std::size_t& { return c.fewshot_budget; }));

    const ExperimentConfig defaults;
    for (auto& b : v) b.info.default_value = b.get(defaults);
    return v;
  }();
  return table;
}

const Binding& binding(const std::string& key) {
  static const std::map<std::string, std::size_t> index = [] {
    std::map<std::string, std::size_t> m;
    for (std::size_t i = 0; i < bindings().size(); ++i) m[bindings()[i].info.name] = i;
    return m;
  }();
  const auto it = index.find(key);
  if (it == index.end()) throw ConfigError("unknown config key: " + key);
  return bindings()[it->second];
}

}  // namespace

const std::vector<KeyInfo>& config_keys() {
  static const std::vector<KeyInfo> keys = [] {
    std::vector<KeyInfo> k;
    for (const auto& b : bindings()) k.push_back(b.info);
    return k;
  }();
  return keys;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  binding(key).set(cfg, value);
}

std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) { return binding(key).get(cfg); }

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> unknown;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      binding(key);
    } catch (const ConfigError&) {
      unknown.push_back(key);
      continue;
    }
    set_config_value(cfg, key, value);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& b : bindings()) out += b.info.name + " = " + b.get(cfg) + "\n";
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : dump_config(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace adaptraj::harness
