#pragma once

// Experiment configuration: one JSON file per experiment. The whole tree is
// schema-checked before any work starts, so a misspelled key fails the run
// instead of silently training with a default.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dibjscc/attack.hpp"
#include "dibjscc/dataset.hpp"
#include "dibjscc/errors.hpp"
#include "dibjscc/hash.hpp"
#include "dibjscc/io.hpp"
#include "dibjscc/models.hpp"
#include "dibjscc/training.hpp"

namespace dibjscc {

using nlohmann::json;

namespace detail {

inline std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) {
    throw config_error("config: " + (path.empty() ? "root" : path) +
                       " must be an object");
  }
}

inline void reject_unknown_keys(const json& j,
                                std::initializer_list<const char*> allowed,
                                const std::string& path) {
  for (const auto& item : j.items()) {
    bool known = std::any_of(allowed.begin(), allowed.end(),
                             [&](const char* k) { return item.key() == k; });
    if (!known) {
      throw config_error("config: unknown key '" +
                         join_path(path, item.key()) + "'");
    }
  }
}

inline const json& require_key(const json& j, const char* key,
                               const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw config_error("config: missing key '" + join_path(path, key) + "'");
  }
  return *it;
}

inline double as_double(const json& v, const std::string& where) {
  if (!v.is_number()) {
    throw config_error("config: '" + where + "' must be a number");
  }
  return v.get<double>();
}

inline std::int64_t as_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) {
    throw config_error("config: '" + where + "' must be an integer");
  }
  return v.get<std::int64_t>();
}

inline std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) {
    throw config_error("config: '" + where + "' must be a string");
  }
  return v.get<std::string>();
}

inline bool as_bool(const json& v, const std::string& where) {
  if (!v.is_boolean()) {
    throw config_error("config: '" + where + "' must be a boolean");
  }
  return v.get<bool>();
}

inline std::vector<double> as_double_list(const json& v,
                                          const std::string& where) {
  if (!v.is_array()) {
    throw config_error("config: '" + where + "' must be an array of numbers");
  }
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(as_double(e, where));
  return out;
}

inline double get_double(const json& j, const char* key,
                         const std::string& path) {
  return as_double(require_key(j, key, path), join_path(path, key));
}

inline double get_double_or(const json& j, const char* key, double fallback,
                            const std::string& path) {
  auto it = j.find(key);
  return it == j.end() ? fallback : as_double(*it, join_path(path, key));
}

inline std::int64_t get_int(const json& j, const char* key,
                            const std::string& path) {
  return as_int(require_key(j, key, path), join_path(path, key));
}

inline std::int64_t get_int_or(const json& j, const char* key,
                               std::int64_t fallback,
                               const std::string& path) {
  auto it = j.find(key);
  return it == j.end() ? fallback : as_int(*it, join_path(path, key));
}

inline std::string get_string(const json& j, const char* key,
                              const std::string& path) {
  return as_string(require_key(j, key, path), join_path(path, key));
}

// Case-insensitive recursive scan for eavesdropper-channel keys inside the
// split-codeword training section. Training there must stay blind to the
// eavesdropper's channel quality, and this check makes that auditable even
// if the allowed-key list grows.
inline void reject_eavesdropper_snr_keys(const json& j,
                                         const std::string& path) {
  if (!j.is_object()) return;
  for (const auto& item : j.items()) {
    std::string lower = item.key();
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (lower.find("snr_ae") != std::string::npos ||
        lower.find("snr_eve") != std::string::npos) {
      throw config_error(
          "config: '" + join_path(path, item.key()) +
          "' is forbidden: split-codeword training must not depend on the "
          "eavesdropper's channel quality");
    }
    reject_eavesdropper_snr_keys(item.value(), join_path(path, item.key()));
  }
}

}  // namespace detail

// One trained baseline model per entry of snr_ae_train_db; the baseline is
// the only place an eavesdropper SNR may parameterize training.
struct BaselineSettings {
  bool enabled = false;
  double lambda = 0.5;
  std::vector<double> snr_ae_train_db;

  void validate() const {
    if (!enabled) return;
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw config_error("baseline: lambda must be finite and >= 0");
    }
    if (snr_ae_train_db.empty()) {
      throw config_error("baseline: enabled but snr_ae_train_db is empty");
    }
    for (double s : snr_ae_train_db) {
      if (!std::isfinite(s)) {
        throw config_error("baseline: snr_ae_train_db must be finite");
      }
    }
  }
};

struct ExperimentConfig {
  std::string name;
  std::uint64_t seed = 1;
  std::string output_root = "runs";

  DatasetSpec dataset;
  std::size_t dataset_count = 0;      // images synthesized before the split
  double palette_saturation = 0.55;   // colored_mnist only
  std::string utkface_dir;            // utkface only

  ArchSpec arch;
  TrainConfig dib;
  EveConfig eve;
  std::vector<double> attack_snr_grid_db;
  BaselineSettings baseline;

  void validate() const {
    if (name.empty()) throw config_error("config: name must be non-empty");
    for (char c : name) {
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' &&
          c != '_') {
        throw config_error(
            "config: name must be filesystem-safe ([A-Za-z0-9_-]), got '" +
            name + "'");
      }
    }
    if (dataset_count == 0) {
      throw config_error("config: dataset.count must be >= 1");
    }
    if (dataset.name == "colored_mnist" &&
        (!(palette_saturation > 0.0) || palette_saturation > 1.0)) {
      throw config_error("config: dataset.palette_saturation must be in (0,1]");
    }
    if (dataset.name == "utkface" && utkface_dir.empty()) {
      throw config_error("config: dataset.dir required for utkface");
    }
    if (attack_snr_grid_db.empty()) {
      throw config_error("config: attack.snr_grid_db must be non-empty");
    }
    for (double s : attack_snr_grid_db) {
      if (!std::isfinite(s)) {
        throw config_error("config: attack.snr_grid_db must be finite");
      }
    }
    dataset.validate();
    arch.validate();
    dib.validate();
    eve.validate();
    baseline.validate();
  }

  // Canonical form: every effective setting materialized, keys sorted by the
  // JSON object representation. Hashing this makes two files with the same
  // meaning hash identically regardless of key order or omitted defaults.
  json to_json() const {
    json dataset_j = {{"kind", dataset.name},
                      {"count", dataset_count},
                      {"height", dataset.height},
                      {"width", dataset.width},
                      {"train_fraction", dataset.train_fraction},
                      {"val_fraction", dataset.val_fraction},
                      {"test_fraction", dataset.test_fraction}};
    if (dataset.name == "colored_mnist") {
      dataset_j["palette_saturation"] = palette_saturation;
    } else {
      dataset_j["dir"] = utkface_dir;
    }
    return json{
        {"name", name},
        {"seed", seed},
        {"output_root", output_root},
        {"dataset", dataset_j},
        {"arch",
         {{"m_t", arch.m_t},
          {"m_s", arch.m_s},
          {"classifier_hidden", arch.classifier_hidden},
          {"discriminator_hidden", arch.discriminator_hidden}}},
        {"dib",
         {{"alpha", dib.alpha},
          {"beta", dib.beta},
          {"snr_ab_db", dib.snr_ab_db},
          {"stage1_epochs", dib.stage1_epochs},
          {"stage2_epochs", dib.stage2_epochs},
          {"finetune_epochs", dib.finetune_epochs},
          {"disc_updates", dib.disc_updates},
          {"batch_size", dib.batch_size},
          {"lr_stage1", dib.lr_stage1},
          {"lr_stage2", dib.lr_stage2},
          {"lr_disc", dib.lr_disc},
          {"lr_finetune", dib.lr_finetune}}},
        {"attack",
         {{"snr_grid_db", attack_snr_grid_db},
          {"eve_epochs", eve.epochs},
          {"eve_batch_size", eve.batch_size},
          {"eve_lr", eve.lr}}},
        {"baseline",
         {{"enabled", baseline.enabled},
          {"lambda", baseline.lambda},
          {"snr_ae_train_db", baseline.snr_ae_train_db}}}};
  }

  std::string hash() const { return sha256_hex(to_json().dump()); }
};

inline ExperimentConfig parse_experiment_config(const json& root) {
  using namespace detail;
  require_object(root, "");
  reject_unknown_keys(root,
                      {"name", "seed", "output_root", "dataset", "arch", "dib",
                       "attack", "baseline"},
                      "");

  ExperimentConfig cfg;
  cfg.name = get_string(root, "name", "");
  std::int64_t seed = get_int(root, "seed", "");
  if (seed < 0) throw config_error("config: 'seed' must be >= 0");
  cfg.seed = static_cast<std::uint64_t>(seed);
  if (auto it = root.find("output_root"); it != root.end()) {
    cfg.output_root = as_string(*it, "output_root");
  }

  const json& ds = require_key(root, "dataset", "");
  require_object(ds, "dataset");
  std::string kind = get_string(ds, "kind", "dataset");
  if (kind == "colored_mnist") {
    reject_unknown_keys(ds,
                        {"kind", "count", "height", "width", "train_fraction",
                         "val_fraction", "test_fraction",
                         "palette_saturation"},
                        "dataset");
    cfg.palette_saturation =
        get_double_or(ds, "palette_saturation", 0.55, "dataset");
    cfg.dataset.private_classes = 10;
  } else if (kind == "utkface") {
    reject_unknown_keys(ds,
                        {"kind", "count", "height", "width", "train_fraction",
                         "val_fraction", "test_fraction", "dir"},
                        "dataset");
    cfg.utkface_dir = get_string(ds, "dir", "dataset");
    cfg.dataset.private_classes = 5;
  } else {
    throw config_error("config: 'dataset.kind' must be 'colored_mnist' or "
                       "'utkface', got '" +
                       kind + "'");
  }
  cfg.dataset.name = kind;
  std::int64_t count = get_int(ds, "count", "dataset");
  if (count < 1) throw config_error("config: 'dataset.count' must be >= 1");
  cfg.dataset_count = static_cast<std::size_t>(count);
  std::int64_t h = get_int_or(ds, "height", 28, "dataset");
  std::int64_t w = get_int_or(ds, "width", 28, "dataset");
  if (h < 1 || w < 1) {
    throw config_error("config: dataset image dimensions must be >= 1");
  }
  cfg.dataset.height = static_cast<std::size_t>(h);
  cfg.dataset.width = static_cast<std::size_t>(w);
  cfg.dataset.train_fraction = get_double(ds, "train_fraction", "dataset");
  cfg.dataset.val_fraction = get_double(ds, "val_fraction", "dataset");
  cfg.dataset.test_fraction = get_double(ds, "test_fraction", "dataset");
  cfg.dataset.seed = derive_seed(cfg.seed, "data");

  const json& arch = require_key(root, "arch", "");
  require_object(arch, "arch");
  reject_unknown_keys(
      arch, {"m_t", "m_s", "classifier_hidden", "discriminator_hidden"},
      "arch");
  std::int64_t m_t = get_int(arch, "m_t", "arch");
  std::int64_t m_s = get_int(arch, "m_s", "arch");
  if (m_t < 1 || m_s < 1) {
    throw config_error("config: arch.m_t and arch.m_s must be >= 1");
  }
  cfg.arch.m_t = static_cast<std::size_t>(m_t);
  cfg.arch.m_s = static_cast<std::size_t>(m_s);
  std::int64_t ch = get_int_or(arch, "classifier_hidden", 64, "arch");
  std::int64_t dh = get_int_or(arch, "discriminator_hidden", 128, "arch");
  if (ch < 1 || dh < 1) {
    throw config_error("config: arch hidden widths must be >= 1");
  }
  cfg.arch.classifier_hidden = static_cast<std::size_t>(ch);
  cfg.arch.discriminator_hidden = static_cast<std::size_t>(dh);
  cfg.arch.image_height = cfg.dataset.height;
  cfg.arch.image_width = cfg.dataset.width;
  cfg.arch.private_classes = cfg.dataset.private_classes;

  const json& dib = require_key(root, "dib", "");
  require_object(dib, "dib");
  reject_eavesdropper_snr_keys(dib, "dib");
  reject_unknown_keys(dib,
                      {"alpha", "beta", "snr_ab_db", "stage1_epochs",
                       "stage2_epochs", "finetune_epochs", "disc_updates",
                       "batch_size", "lr_stage1", "lr_stage2", "lr_disc",
                       "lr_finetune"},
                      "dib");
  cfg.dib.alpha = get_double_or(dib, "alpha", 1.0, "dib");
  cfg.dib.beta = get_double_or(dib, "beta", 1.0, "dib");
  cfg.dib.snr_ab_db = get_double(dib, "snr_ab_db", "dib");
  cfg.dib.stage1_epochs =
      static_cast<int>(get_int(dib, "stage1_epochs", "dib"));
  cfg.dib.stage2_epochs =
      static_cast<int>(get_int(dib, "stage2_epochs", "dib"));
  cfg.dib.finetune_epochs =
      static_cast<int>(get_int(dib, "finetune_epochs", "dib"));
  cfg.dib.disc_updates =
      static_cast<int>(get_int_or(dib, "disc_updates", 1, "dib"));
  std::int64_t bs = get_int(dib, "batch_size", "dib");
  if (bs < 0) throw config_error("config: 'dib.batch_size' must be >= 0");
  cfg.dib.batch_size = static_cast<std::size_t>(bs);
  cfg.dib.lr_stage1 = get_double_or(dib, "lr_stage1", 1e-3, "dib");
  cfg.dib.lr_stage2 = get_double_or(dib, "lr_stage2", 1e-3, "dib");
  cfg.dib.lr_disc = get_double_or(dib, "lr_disc", 1e-3, "dib");
  cfg.dib.lr_finetune = get_double_or(dib, "lr_finetune", 1e-3, "dib");
  cfg.dib.seed = derive_seed(cfg.seed, "train");

  const json& attack = require_key(root, "attack", "");
  require_object(attack, "attack");
  reject_unknown_keys(
      attack, {"snr_grid_db", "eve_epochs", "eve_batch_size", "eve_lr"},
      "attack");
  cfg.attack_snr_grid_db = as_double_list(
      require_key(attack, "snr_grid_db", "attack"), "attack.snr_grid_db");
  cfg.eve.epochs = static_cast<int>(get_int_or(attack, "eve_epochs",
                                               cfg.eve.epochs, "attack"));
  std::int64_t ebs =
      get_int_or(attack, "eve_batch_size",
                 static_cast<std::int64_t>(cfg.eve.batch_size), "attack");
  if (ebs < 0) throw config_error("config: 'attack.eve_batch_size' must be >= 0");
  cfg.eve.batch_size = static_cast<std::size_t>(ebs);
  cfg.eve.lr = get_double_or(attack, "eve_lr", cfg.eve.lr, "attack");

  if (auto it = root.find("baseline"); it != root.end()) {
    const json& bl = *it;
    require_object(bl, "baseline");
    reject_unknown_keys(bl, {"enabled", "lambda", "snr_ae_train_db"},
                        "baseline");
    cfg.baseline.enabled =
        detail::as_bool(require_key(bl, "enabled", "baseline"),
                        "baseline.enabled");
    cfg.baseline.lambda = get_double_or(bl, "lambda", 0.5, "baseline");
    if (auto st = bl.find("snr_ae_train_db"); st != bl.end()) {
      cfg.baseline.snr_ae_train_db =
          as_double_list(*st, "baseline.snr_ae_train_db");
    }
  }

  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_experiment_config(
    const std::filesystem::path& path) {
  return parse_experiment_config(load_json_file(path));
}

}  // namespace dibjscc
