#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adaptraj/predictor/predictor.hpp"
#include "adaptraj/pretrain/pretrain.hpp"
#include "adaptraj/scenegen/scene.hpp"
#include "adaptraj/ttt/engine.hpp"

namespace adaptraj::harness {

struct Toggles {
  bool ttt = true;
  bool mp = false;
  bool dlo = false;
  bool hsd = false;

  std::string label() const;
  bool operator==(const Toggles&) const = default;
};

struct DomainSpec {
  scenegen::DomainFamily family;
  scenegen::CorpusSpec corpus;
};

struct ExperimentConfig {
  std::string horizon = "long";  // long | short
  DomainSpec source;
  DomainSpec target;
  predictor::PredictorConfig model;
  pretrain::OfflineConfig offline;
  pretrain::MetaConfig meta;
  bool meta_alpha_follows_ttt = true;
  ttt::TttConfig ttt;
  Toggles toggles;
  std::size_t eval_k = 6;
  double miss_threshold = 2.0;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<double> sweep_alphas{0.01, 0.001, 0.0001};
  std::vector<std::size_t> sweep_frequencies{1, 2, 3, 5};
  std::vector<std::size_t> fewshot_budgets{200, 500, 1000};
  std::size_t fewshot_budget = 0;  // 0: unlimited (single-cell commands)
  bool step_log = false;
  bool trace = false;

  ExperimentConfig();

  /// Horizon-derived settings applied to model/ttt/meta.
  scenegen::SceneLayout layout() const;
  std::size_t interval() const;
  /// Resolved copies with horizon and cross-key defaults applied.
  predictor::PredictorConfig model_config() const;
  pretrain::MetaConfig meta_config(double alpha_init) const;
  ttt::TttConfig ttt_config(const Toggles& toggles, double alpha_init, std::size_t frequency) const;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

enum class KeyType { kBool, kUint, kDouble, kString, kUintList, kDoubleList };

struct KeyInfo {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string doc;
};

/// Every recognised key, in dump order.
const std::vector<KeyInfo>& config_keys();

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Applies one `key=value` assignment (CLI overrides).
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& cfg, const std::string& key);
/// Canonical dump: every key in table order, doubles round-trip exact.
std::string dump_config(const ExperimentConfig& cfg);
/// FNV-1a of the canonical dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

std::string format_double(double v);

}  // namespace adaptraj::harness
