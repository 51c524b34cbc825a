// Experiment driver: wires config files to dataset synthesis, the training
// stages, attack sweeps, and artifact emission. One experiment at a time,
// everything under runs/<name>/, deterministic given (config, seed).

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fcntl.h>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <unistd.h>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "dibjscc/attack.hpp"
#include "dibjscc/baseline.hpp"
#include "dibjscc/config.hpp"
#include "dibjscc/dataset.hpp"
#include "dibjscc/image.hpp"
#include "dibjscc/io.hpp"
#include "dibjscc/models.hpp"
#include "dibjscc/plot.hpp"
#include "dibjscc/selftest.hpp"
#include "dibjscc/training.hpp"
#include "dibjscc/version.hpp"

namespace fs = std::filesystem;
using namespace dibjscc;

namespace {

struct RunPaths {
  fs::path run_dir, checkpoints, logs, metrics, figures, data;
};

RunPaths resolve_paths(const ExperimentConfig& cfg) {
  const char* env_root = std::getenv("DIBJSCC_OUT_ROOT");
  fs::path root = env_root && *env_root ? fs::path(env_root)
                                        : fs::path(cfg.output_root);
  RunPaths p;
  p.run_dir = root / cfg.name;
  p.checkpoints = p.run_dir / "checkpoints";
  p.logs = p.run_dir / "logs";
  p.metrics = p.run_dir / "metrics";
  p.figures = p.run_dir / "figures";
  p.data = p.run_dir / "data";
  return p;
}

// Exclusive lock file per run directory; commands that mutate the run
// refuse to overlap.
class RunLock {
 public:
  explicit RunLock(const fs::path& run_dir) : path_(run_dir / ".lock") {
    fs::create_directories(run_dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST) {
        throw precondition_error(
            "another command holds the run lock " + path_.string() +
            " (remove the file if the owner crashed)");
      }
      throw io_error("cannot create run lock " + path_.string() + ": " +
                     std::strerror(errno));
    }
  }
  ~RunLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

ExperimentConfig load_config(const std::string& path,
                             std::optional<std::uint64_t> seed_override) {
  json root = load_json_file(path);
  if (seed_override) {
    if (!root.is_object()) {
      throw config_error("config: root must be an object");
    }
    root["seed"] = *seed_override;
  }
  return parse_experiment_config(root);
}

// Identity of the cached dataset: the dataset subtree plus its derived
// seed. Training keys must not invalidate a cache.
std::string dataset_fingerprint(const ExperimentConfig& cfg) {
  json fp = cfg.to_json().at("dataset");
  fp["data_seed"] = cfg.dataset.seed;
  return sha256_hex(fp.dump());
}

std::string snr_tag(double snr_db) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%gdb", snr_db);
  return buf;
}

std::string baseline_label(double snr_db) {
  return "adversarial_baseline_" + snr_tag(snr_db);
}

Dataset resize_images(const Dataset& src, std::size_t h, std::size_t w) {
  Dataset out;
  out.name = src.name;
  out.public_classes = src.public_classes;
  out.private_classes = src.private_classes;
  out.public_labels = src.public_labels;
  out.private_labels = src.private_labels;
  out.images = Tensor({src.count(), 3, h, w});
  std::size_t src_px = src.pixels_per_image();
  std::size_t dst_px = 3 * h * w;
  for (std::size_t i = 0; i < src.count(); ++i) {
    Tensor tile({3, src.height(), src.width()});
    std::memcpy(tile.data(), src.images.data() + i * src_px,
                src_px * sizeof(double));
    Tensor scaled = resize_bilinear(tile, h, w);
    std::memcpy(out.images.data() + i * dst_px, scaled.data(),
                dst_px * sizeof(double));
  }
  return out;
}

int cmd_make_data(const ExperimentConfig& cfg, bool force) {
  RunPaths paths = resolve_paths(cfg);
  RunLock lock(paths.run_dir);
  std::string fingerprint = dataset_fingerprint(cfg);

  fs::path manifest_path = paths.data / "manifest.json";
  if (fs::exists(manifest_path)) {
    json manifest = load_json_file(manifest_path);
    std::string have = manifest.at("spec").value("fingerprint", "");
    if (have == fingerprint && !force) {
      std::cout << "[make-data] cache up to date (" << fingerprint.substr(0, 12)
                << ")\n";
      return 0;
    }
    if (!force) {
      throw precondition_error(
          "dataset cache at " + paths.data.string() +
          " was built from a different dataset spec; pass --force to rebuild");
    }
  }

  Dataset data;
  if (cfg.dataset.name == "colored_mnist") {
    GrayscaleDigits glyphs =
        synthesize_digit_glyphs(cfg.dataset_count, cfg.dataset.seed);
    data = synthesize_colored_mnist(glyphs, make_palette(cfg.palette_saturation),
                                    cfg.dataset.seed);
    if (data.height() != cfg.dataset.height ||
        data.width() != cfg.dataset.width) {
      data = resize_images(data, cfg.dataset.height, cfg.dataset.width);
    }
  } else {
    data = load_utkface(cfg.utkface_dir, cfg.dataset.height,
                        cfg.dataset.width);
    if (data.count() > cfg.dataset_count) {
      Rng rng(derive_seed(cfg.dataset.seed, "utk-cap"));
      std::vector<std::size_t> order = rng.permutation(data.count());
      order.resize(cfg.dataset_count);
      data = data.subset(order);
    }
  }

  SplitDataset splits = split_dataset(data, cfg.dataset);
  json extra;
  extra["fingerprint"] = fingerprint;
  extra["config_hash"] = cfg.hash();
  extra["dataset"] = cfg.to_json().at("dataset");
  save_dataset_cache(paths.data, splits, extra);
  std::cout << "[make-data] wrote " << splits.train.count() << "/"
            << splits.val.count() << "/" << splits.test.count()
            << " train/val/test images to " << paths.data.string() << "\n";
  return 0;
}

SplitDataset require_cache(const RunPaths& paths) {
  if (!fs::exists(paths.data / "manifest.json")) {
    throw precondition_error("no dataset cache under " + paths.data.string() +
                             "; run make-data first");
  }
  return load_dataset_cache(paths.data);
}

ModelBundle load_stage_checkpoint(const ExperimentConfig& cfg,
                                  const RunPaths& paths,
                                  const std::string& stage) {
  fs::path ckpt = paths.checkpoints / (stage + "_last.ckpt");
  if (!fs::exists(ckpt)) {
    throw precondition_error("missing " + stage + " checkpoint " +
                             ckpt.string() + "; run --stage " + stage +
                             " first");
  }
  ModelBundle b = load_checkpoint(ckpt, cfg.arch);
  if (b.config_hash != cfg.hash()) {
    throw precondition_error(
        "checkpoint " + ckpt.string() +
        " was trained under a different config (hash " +
        b.config_hash.substr(0, 12) + " vs " + cfg.hash().substr(0, 12) +
        "); stages of one run must share a config");
  }
  return b;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& stage) {
  RunPaths paths = resolve_paths(cfg);
  RunLock lock(paths.run_dir);
  SplitDataset splits = require_cache(paths);
  fs::create_directories(paths.checkpoints);
  fs::create_directories(paths.logs);

  bool all = stage == "all";
  ModelBundle bundle;
  if (all || stage == "stage1") {
    bundle = ModelBundle::create(cfg.arch, derive_seed(cfg.dib.seed, "model"));
    bundle.config_hash = cfg.hash();
    TrainingLog log(paths.logs / "stage1.jsonl");
    train_stage1(splits.train, splits.val, bundle, cfg.dib, log,
                 paths.checkpoints);
    std::cout << "[train] stage1 done\n";
  }
  if (all || stage == "stage2") {
    if (!all) bundle = load_stage_checkpoint(cfg, paths, "stage1");
    TrainingLog log(paths.logs / "stage2.jsonl");
    train_stage2(splits.train, splits.val, bundle, cfg.dib, log,
                 paths.checkpoints);
    std::cout << "[train] stage2 done\n";
  }
  if (all || stage == "finetune") {
    if (!all) bundle = load_stage_checkpoint(cfg, paths, "stage2");
    TrainingLog log(paths.logs / "finetune.jsonl");
    finetune_decoder(splits.train, splits.val, bundle, cfg.dib, log,
                     paths.checkpoints);
    std::cout << "[train] finetune done\n";
  }
  if ((all && cfg.baseline.enabled) || stage == "baseline") {
    if (!cfg.baseline.enabled) {
      throw precondition_error(
          "baseline training requested but baseline.enabled is false");
    }
    for (std::size_t i = 0; i < cfg.baseline.snr_ae_train_db.size(); ++i) {
      double snr = cfg.baseline.snr_ae_train_db[i];
      TrainConfig tc = cfg.dib;
      tc.seed = derive_seed(cfg.dib.seed, "baseline", i);
      TrainingLog log(paths.logs / ("baseline_" + snr_tag(snr) + ".jsonl"));
      BaselineBundle b = train_adversarial_baseline(
          splits.train, splits.val, cfg.arch, snr, cfg.baseline.lambda, tc,
          log);
      b.config_hash = cfg.hash();
      save_baseline_checkpoint(
          paths.checkpoints / ("baseline_" + snr_tag(snr) + ".ckpt"), b);
      std::cout << "[train] baseline at " << snr << " dB done\n";
    }
  }
  return 0;
}

struct EvaluatedModel {
  std::string label;
  std::vector<AttackResult> attacks;
  json extra;  // per-model metrics beyond the sweep
};

int cmd_evaluate(const ExperimentConfig& cfg,
                 const std::vector<std::string>& model_filter) {
  RunPaths paths = resolve_paths(cfg);
  RunLock lock(paths.run_dir);
  SplitDataset splits = require_cache(paths);
  fs::create_directories(paths.metrics);
  fs::create_directories(paths.figures);

  auto wanted = [&](const std::string& label) {
    if (model_filter.empty()) return true;
    for (const std::string& f : model_filter) {
      if (f == label) return true;
      if (f == "adversarial_baseline" &&
          label.rfind("adversarial_baseline", 0) == 0) {
        return true;
      }
    }
    return false;
  };
  for (const std::string& f : model_filter) {
    bool known = f == "dib" || f == "noise_control" ||
                 f == "adversarial_baseline";
    for (double snr : cfg.baseline.snr_ae_train_db) {
      if (f == baseline_label(snr)) known = true;
    }
    if (!known) throw input_error("evaluate: unknown model id '" + f + "'");
  }

  std::vector<EvaluatedModel> evaluated;
  json reconstruction = json::array();

  if (wanted("dib")) {
    fs::path ckpt = paths.checkpoints / "finetune_last.ckpt";
    if (!fs::exists(ckpt)) {
      throw precondition_error("missing checkpoint " + ckpt.string() +
                               "; run train first");
    }
    ModelBundle b = load_checkpoint(ckpt, cfg.arch);
    EvaluatedModel m;
    m.label = "dib";
    m.attacks = eavesdropping_sweep(b, splits.train, splits.test,
                                    cfg.attack_snr_grid_db,
                                    derive_seed(cfg.seed, "attack-dib"),
                                    cfg.eve);
    MetricsRecord rec = reconstruction_metrics(
        b, splits.test, cfg.dib.snr_ab_db, derive_seed(cfg.seed, "recon-dib"));
    rec.attacks = m.attacks;
    reconstruction.push_back(rec.to_json());
    dump_reconstruction_grid(b, splits.test, cfg.dib.snr_ab_db,
                             derive_seed(cfg.seed, "grid-dib"),
                             paths.figures / "reconstruction_dib.ppm");
    DisentanglementReport probes = probe_disentanglement(
        b, splits.train, splits.test, derive_seed(cfg.seed, "probes"));
    export_embeddings(b, splits.test, paths.metrics / "embeddings");
    m.extra["checkpoint_config_hash"] = b.config_hash;
    m.extra["disentanglement"] = probes.to_json();
    evaluated.push_back(std::move(m));
    std::cout << "[evaluate] dib swept\n";
  }

  for (double snr : cfg.baseline.snr_ae_train_db) {
    std::string label = baseline_label(snr);
    if (!wanted(label)) continue;
    fs::path ckpt = paths.checkpoints / ("baseline_" + snr_tag(snr) + ".ckpt");
    if (!fs::exists(ckpt)) {
      throw precondition_error("missing checkpoint " + ckpt.string() +
                               "; run train --stage baseline first");
    }
    BaselineBundle b = load_baseline_checkpoint(ckpt);
    EvaluatedModel m;
    m.label = label;
    m.attacks = eavesdropping_sweep(b, splits.train, splits.test,
                                    cfg.attack_snr_grid_db,
                                    derive_seed(cfg.seed, "attack-" + label),
                                    cfg.eve);
    MetricsRecord rec = reconstruction_metrics(
        b, splits.test, cfg.dib.snr_ab_db,
        derive_seed(cfg.seed, "recon-" + label));
    rec.model_id = label;
    rec.attacks = m.attacks;
    reconstruction.push_back(rec.to_json());
    dump_reconstruction_grid(
        b, splits.test, cfg.dib.snr_ab_db,
        derive_seed(cfg.seed, "grid-" + label),
        paths.figures / ("reconstruction_" + label + ".ppm"));
    m.extra["checkpoint_config_hash"] = b.config_hash;
    m.extra["snr_ae_train_db"] = snr;
    m.extra["lambda"] = b.lambda;
    evaluated.push_back(std::move(m));
    std::cout << "[evaluate] " << label << " swept\n";
  }

  if (wanted("noise_control")) {
    RandomCodewordModel control(cfg.arch, derive_seed(cfg.seed, "noise-model"));
    EvaluatedModel m;
    m.label = "noise_control";
    m.attacks = eavesdropping_sweep(control, splits.train, splits.test,
                                    cfg.attack_snr_grid_db,
                                    derive_seed(cfg.seed, "attack-noise"),
                                    cfg.eve);
    evaluated.push_back(std::move(m));
    std::cout << "[evaluate] noise control swept\n";
  }

  if (evaluated.empty()) {
    throw input_error("evaluate: model filter matched nothing");
  }

  std::vector<std::pair<std::string, AttackResult>> csv_rows;
  std::vector<Series> curves;
  json attack_curves = json::object();
  for (const EvaluatedModel& m : evaluated) {
    Series s;
    s.label = m.label;
    json arr = json::array();
    for (const AttackResult& r : m.attacks) {
      csv_rows.push_back({m.label, r});
      s.points.push_back({r.snr_ae_db, r.eavesdrop_accuracy});
      arr.push_back(r.to_json());
    }
    attack_curves[m.label] = std::move(arr);
    curves.push_back(std::move(s));
  }
  write_text_file(paths.metrics / "attack_results.csv",
                  attack_results_csv(csv_rows));

  json metrics;
  metrics["config_hash"] = cfg.hash();
  metrics["tool_version"] = kVersion;
  metrics["seed"] = cfg.seed;
  metrics["snr_ab_db"] = cfg.dib.snr_ab_db;
  metrics["attack_curves"] = std::move(attack_curves);
  metrics["reconstruction"] = std::move(reconstruction);
  for (const EvaluatedModel& m : evaluated) {
    if (!m.extra.empty()) metrics["models"][m.label] = m.extra;
  }
  save_json_file(paths.metrics / "metrics.json", metrics);

  PlotSpec spec;
  spec.title = "eavesdropping accuracy vs eavesdropper snr";
  spec.x_label = "eavesdropper snr (dB)";
  spec.y_label = "private top-1 accuracy";
  spec.footnote =
      "config " + cfg.hash().substr(0, 12) + " | dibjscc " + kVersion;
  write_text_file(paths.figures / "eavesdropping.svg",
                  render_line_chart_svg(spec, curves));
  std::cout << "[evaluate] wrote " << (paths.metrics / "attack_results.csv")
            << ", metrics.json, figures\n";
  return 0;
}

int cmd_selftest(std::uint64_t seed, const std::string& inject) {
  selftest::FaultPlan fault;
  if (inject == "discriminator-sign") {
    fault.flip_discriminator_sign = true;
  } else if (!inject.empty()) {
    throw config_error("selftest: unknown fault '" + inject +
                       "' (known: discriminator-sign)");
  }
  std::vector<selftest::CheckResult> results =
      selftest::run_all_checks(seed, fault);
  std::cout << selftest::format_report(results);
  return selftest::all_passed(results) ? 0 : 2;
}

int run(int argc, char** argv) {
  CLI::App app{"disentangled split-codeword image transmission experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  bool force = false;
  std::string stage = "all";
  std::string models_csv;
  std::string inject_fault;
  std::uint64_t selftest_seed = 1;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file")
        ->required();
    sub->add_option("--seed", seed_override,
                    "override the config's global seed");
  };

  CLI::App* make_data =
      app.add_subcommand("make-data", "synthesize and cache the dataset");
  add_config(make_data);
  make_data->add_flag("--force", force, "rebuild a mismatched cache");

  CLI::App* train = app.add_subcommand("train", "run training stages");
  add_config(train);
  train->add_option("--stage", stage,
                    "stage1|stage2|finetune|baseline|all (default all)")
      ->check(CLI::IsMember({"stage1", "stage2", "finetune", "baseline",
                             "all"}));

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "attack sweeps, metrics, figures");
  add_config(evaluate);
  evaluate->add_option(
      "--models", models_csv,
      "comma-separated model ids (dib, adversarial_baseline[_<snr>db], "
      "noise_control); default all");

  CLI::App* selftest_cmd =
      app.add_subcommand("selftest", "fast invariant checks");
  selftest_cmd->add_option("--seed", selftest_seed, "check seed (default 1)");
  selftest_cmd->add_option("--inject-fault", inject_fault,
                           "deliberately break a primitive (smoke test)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (selftest_cmd->parsed()) {
    return cmd_selftest(selftest_seed, inject_fault);
  }

  ExperimentConfig cfg = load_config(config_path, seed_override);
  if (make_data->parsed()) return cmd_make_data(cfg, force);
  if (train->parsed()) return cmd_train(cfg, stage);

  std::vector<std::string> model_filter;
  if (!models_csv.empty()) {
    std::size_t start = 0;
    while (start <= models_csv.size()) {
      std::size_t comma = models_csv.find(',', start);
      std::string tok = models_csv.substr(
          start, comma == std::string::npos ? std::string::npos
                                            : comma - start);
      if (!tok.empty()) model_filter.push_back(tok);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return cmd_evaluate(cfg, model_filter);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const numeric_error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const io_error& e) {
    std::cerr << "io failure: " << e.what() << "\n";
    return 3;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const precondition_error& e) {
    std::cerr << "precondition failed: " << e.what() << "\n";
    return 1;
  } catch (const input_error& e) {
    std::cerr << "bad input: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
