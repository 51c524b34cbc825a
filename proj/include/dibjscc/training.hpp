#pragma once

// Two-step training of the split-codeword design plus the decoder
// fine-tune. The eavesdropper's channel quality is deliberately unknown
// here: nothing in this file takes or reads an eavesdropper SNR.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dibjscc/channel.hpp"
#include "dibjscc/errors.hpp"
#include "dibjscc/models.hpp"
#include "dibjscc/dataset.hpp"
#include "dibjscc/nn/adam.hpp"
#include "dibjscc/objectives.hpp"
#include "dibjscc/probes.hpp"
#include "dibjscc/rng.hpp"
#include "dibjscc/selftest.hpp"

namespace dibjscc {

struct TrainConfig {
  double alpha = 1.0;
  double beta = 1.0;  // private-information weight, realized by stage 1
  double snr_ab_db = 10.0;
  int stage1_epochs = 10;
  int stage2_epochs = 30;
  int finetune_epochs = 5;
  int disc_updates = 1;  // discriminator steps per encoder/decoder step
  std::size_t batch_size = 128;
  double lr_stage1 = 1e-3;
  double lr_stage2 = 1e-3;
  double lr_disc = 1e-3;
  double lr_finetune = 1e-3;
  std::uint64_t seed = 1;

  void validate() const {
    if (stage1_epochs < 1 || stage2_epochs < 1 || finetune_epochs < 1) {
      throw config_error("train config: every stage needs >= 1 epoch");
    }
    if (disc_updates < 1) {
      throw config_error("train config: disc_updates must be >= 1");
    }
    if (batch_size < 2) {
      throw config_error(
          "train config: batch_size must be >= 2 (marginal permutation)");
    }
    if (!(lr_stage1 > 0.0) || !(lr_stage2 > 0.0) || !(lr_disc > 0.0) ||
        !(lr_finetune > 0.0)) {
      throw config_error("train config: learning rates must be positive");
    }
    if (!std::isfinite(snr_ab_db)) {
      throw config_error("train config: snr_ab_db must be finite");
    }
    if (!(alpha >= 0.0) || !(beta >= 0.0)) {
      throw config_error("train config: alpha and beta must be >= 0");
    }
  }

  nlohmann::json to_json() const {
    return {{"alpha", alpha},
            {"beta", beta},
            {"snr_ab_db", snr_ab_db},
            {"stage1_epochs", stage1_epochs},
            {"stage2_epochs", stage2_epochs},
            {"finetune_epochs", finetune_epochs},
            {"disc_updates", disc_updates},
            {"batch_size", batch_size},
            {"lr_stage1", lr_stage1},
            {"lr_stage2", lr_stage2},
            {"lr_disc", lr_disc},
            {"lr_finetune", lr_finetune},
            {"seed", seed}};
  }
};

// Append-only JSONL record stream, kept in memory and optionally mirrored
// to a file. Every record carries a wall-clock "t" field; consumers that
// compare logs for determinism strip it.
class TrainingLog {
 public:
  TrainingLog() = default;
  explicit TrainingLog(const std::filesystem::path& path) {
    out_.open(path, std::ios::trunc);
    if (!out_) throw io_error("cannot open training log " + path.string());
  }

  void record(nlohmann::json j) {
    j["t"] = std::chrono::duration<double>(
                 std::chrono::system_clock::now().time_since_epoch())
                 .count();
    if (out_.is_open()) {
      out_ << j.dump() << '\n';
      out_.flush();
    }
    records_.push_back(std::move(j));
  }

  void step(const std::string& stage, int epoch, int step_index,
            const LossReport& report) {
    nlohmann::json j = report.to_json();
    j["kind"] = "step";
    j["stage"] = stage;
    j["epoch"] = epoch;
    j["step"] = step_index;
    record(std::move(j));
  }

  void epoch(const std::string& stage, int epoch_index,
             nlohmann::json metrics) {
    metrics["kind"] = "epoch";
    metrics["stage"] = stage;
    metrics["epoch"] = epoch_index;
    record(std::move(metrics));
  }

  void event(const std::string& kind, nlohmann::json payload) {
    payload["kind"] = kind;
    record(std::move(payload));
  }

  const std::vector<nlohmann::json>& records() const { return records_; }

 private:
  std::ofstream out_;
  std::vector<nlohmann::json> records_;
};

// Codeword layout helper: public part followed by an all-zero private part,
// exactly what leaves the transmitter after training.
inline Tensor zeroed_private_concat(const Tensor& y_t, std::size_t m_s) {
  if (y_t.rank() != 2) {
    throw input_error("zeroed_private_concat: need 2-D codewords");
  }
  Tensor zeros({y_t.dim(0), m_s});
  return hconcat(y_t, zeros);
}

namespace detail {

inline std::vector<int> gather_labels(const std::vector<int>& labels,
                                      const std::vector<std::size_t>& idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
  return out;
}

[[noreturn]] inline void abort_non_finite(const std::string& stage, int epoch,
                                          int step, const LossReport& report,
                                          TrainingLog& log) {
  nlohmann::json snapshot = report.to_json();
  snapshot["stage"] = stage;
  snapshot["epoch"] = epoch;
  snapshot["step"] = step;
  log.event("abort_non_finite", snapshot);
  throw numeric_error("training " + stage + ": non-finite loss at epoch " +
                      std::to_string(epoch) + " step " + std::to_string(step) +
                      "; diagnostic snapshot appended to log");
}

inline void maybe_checkpoint(const std::filesystem::path& dir,
                             ModelBundle& bundle, const std::string& stage,
                             bool improved) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / (stage + "_last.ckpt"), bundle);
  if (improved) save_checkpoint(dir / (stage + "_best.ckpt"), bundle);
}

// Mean squared error of the full pipeline on a validation set, with the
// private part either live or zeroed. Normalization spans the whole set,
// mirroring how evaluation batches are transmitted.
inline double validation_mse(ModelBundle& b, const Dataset& val,
                             double snr_db, std::uint64_t noise_seed,
                             bool zero_private) {
  Tensor yt = forward_chunked(b.phi_t, val.images);
  Tensor y;
  if (zero_private) {
    y = zeroed_private_concat(yt, b.arch.m_s);
  } else {
    y = hconcat(yt, forward_chunked(b.phi_s, val.images));
  }
  AwgnChannel chan({snr_db, noise_seed});
  Tensor x_hat = forward_chunked(b.theta_b, chan.transmit(normalize_power(y)));
  return reconstruction_loss(val.images, x_hat);
}

}  // namespace detail

// Stage 1: private encoder + classifier trained jointly so the private
// subcodeword carries the private label. Channel-free by design.
inline void train_stage1(const Dataset& train, const Dataset& val,
                         ModelBundle& b, const TrainConfig& cfg,
                         TrainingLog& log,
                         const std::filesystem::path& ckpt_dir = {}) {
  cfg.validate();
  if (b.stage != "init") {
    throw precondition_error("stage1 expects a freshly created bundle, got '" +
                             b.stage + "'");
  }
  if (train.private_classes != b.arch.private_classes) {
    throw precondition_error("stage1: dataset/arch private class mismatch");
  }

  auto params = b.phi_s.parameters();
  auto gp = b.gamma.parameters();
  params.insert(params.end(), gp.begin(), gp.end());
  nn::Adam opt(params, cfg.lr_stage1);

  Rng shuffle_rng(derive_seed(cfg.seed, "stage1-shuffle"));
  std::size_t n = train.count();
  double best_val_acc = -1.0;
  log.event("stage_start", {{"stage", "stage1"}, {"epochs", cfg.stage1_epochs}});
  for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
    std::vector<std::size_t> order = shuffle_rng.permutation(n);
    int step_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + start,
                                   order.begin() + stop);
      Tensor xb = train.gather_images(idx);
      std::vector<int> lb = detail::gather_labels(train.private_labels, idx);

      opt.zero_grad();
      Tensor ys = b.phi_s.forward(xb, true);
      Tensor probs = b.gamma.forward(ys, true);
      double loss = cross_entropy(probs, lb);

      LossReport report;
      report.total = loss;
      report.components["private_bound"] = -loss;
      report.batch_size = idx.size();
      if (!std::isfinite(loss)) {
        detail::abort_non_finite("stage1", epoch, step_index, report, log);
      }
      Tensor g_ys = b.gamma.backward(cross_entropy_grad(probs, lb));
      b.phi_s.backward(g_ys);
      opt.step();
      log.step("stage1", epoch, step_index++, report);
    }

    Tensor ys_val = forward_chunked(b.phi_s, val.images);
    Tensor probs_val = forward_chunked(b.gamma, ys_val);
    double val_acc = accuracy_against(argmax_rows(probs_val),
                                      val.private_labels);
    double val_loss = cross_entropy(probs_val, val.private_labels);
    log.epoch("stage1", epoch,
              {{"val_private_acc", val_acc}, {"val_loss", val_loss}});
    bool improved = val_acc > best_val_acc;
    if (improved) best_val_acc = val_acc;
    b.stage = "stage1";  // tag before writing checkpoints
    detail::maybe_checkpoint(ckpt_dir, b, "stage1", improved);
  }
  b.stage = "stage1";
}

// Stage 2: the private encoder is frozen bitwise; the discriminator
// alternates with the public encoder + decoder, which minimize distortion
// plus the weighted dependence estimate. The decoder sees the legitimate
// channel; the dependence scores are computed on the clean power-normalized
// codeword. Normalization matters: the frozen private encoder emits large
// activations, and raw-scale inputs pin the discriminator's sigmoid at its
// clamps, freezing the dependence game at a useless plateau.
inline void train_stage2(const Dataset& train, const Dataset& val,
                         ModelBundle& b, const TrainConfig& cfg,
                         TrainingLog& log,
                         const std::filesystem::path& ckpt_dir = {}) {
  cfg.validate();
  if (b.stage != "stage1") {
    throw precondition_error("stage2 requires a stage1 bundle, got '" +
                             b.stage + "'");
  }
  const std::string frozen_phi_s = b.phi_s.checksum();

  auto params = b.phi_t.parameters();
  auto dp = b.theta_b.parameters();
  params.insert(params.end(), dp.begin(), dp.end());
  nn::Adam opt_enc(params, cfg.lr_stage2);
  nn::Adam opt_dis(b.epsilon.parameters(), cfg.lr_disc);

  AwgnChannel chan({cfg.snr_ab_db, derive_seed(cfg.seed, "stage2-channel")});
  Rng shuffle_rng(derive_seed(cfg.seed, "stage2-shuffle"));
  std::size_t n = train.count();
  std::uint64_t perm_counter = 0;
  double best_val_mse = std::numeric_limits<double>::infinity();
  log.event("stage_start", {{"stage", "stage2"}, {"epochs", cfg.stage2_epochs}});
  for (int epoch = 0; epoch < cfg.stage2_epochs; ++epoch) {
    std::vector<std::size_t> order = shuffle_rng.permutation(n);
    int step_index = 0;
    double disc_loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::size_t stop = std::min(n, start + cfg.batch_size);
      if (stop - start < 2) break;  // marginal permutation needs >= 2 rows
      std::vector<std::size_t> idx(order.begin() + start,
                                   order.begin() + stop);
      Tensor xb = train.gather_images(idx);
      Tensor ys = b.phi_s.forward(xb, false);

      // Discriminator phase: k updates on this batch's codeword pairs,
      // fresh negative pairings each update. One shared scale for both
      // halves, so pairing is the only cue.
      Tensor yt_d = b.phi_t.forward(xb, false);
      auto [ynt_d, yns_d] = hsplit(normalize_power(hconcat(yt_d, ys)),
                                   b.arch.m_t);
      double dloss = 0.0;
      for (int j = 0; j < cfg.disc_updates; ++j) {
        dloss = selftest::discriminator_step(
            b.epsilon, opt_dis, ynt_d, yns_d,
            derive_seed(cfg.seed, "stage2-perm", perm_counter++));
      }
      disc_loss_sum += dloss;

      // Encoder/decoder phase.
      opt_enc.zero_grad();
      Tensor yt = b.phi_t.forward(xb, true);
      Tensor y = hconcat(yt, ys);
      auto [yn, scale] = normalize_power_with_scale(y);
      Tensor y_hat = chan.transmit(yn);
      Tensor x_hat = b.theta_b.forward(y_hat, true);
      Tensor scores = b.epsilon.forward(yn, true);

      LossReport report = step2_objective(xb, x_hat, scores, cfg.alpha);
      report.components["discriminator_bce"] = dloss;
      if (!std::isfinite(report.total)) {
        detail::abort_non_finite("stage2", epoch, step_index, report, log);
      }

      // Both heads read the normalized codeword: the decoder through the
      // additive channel (identity jacobian), the discriminator directly.
      // Their gradients join before the full normalization derivative.
      Tensor g_yn = b.theta_b.backward(reconstruction_loss_grad(xb, x_hat));
      Tensor g_scores = mi_ts_estimate_grad(scores);
      for (std::size_t i = 0; i < g_scores.size(); ++i) {
        g_scores[i] *= cfg.alpha;
      }
      Tensor g_pair = b.epsilon.backward(g_scores);
      for (std::size_t i = 0; i < g_yn.size(); ++i) {
        g_yn[i] += g_pair[i];
      }
      Tensor g_y = normalize_power_backward(g_yn, yn, scale);
      auto [g_yt, g_ys_unused] = hsplit(g_y, b.arch.m_t);
      b.phi_t.backward(g_yt);
      opt_enc.step();
      log.step("stage2", epoch, step_index++, report);
    }

    double val_mse = detail::validation_mse(
        b, val, cfg.snr_ab_db, derive_seed(cfg.seed, "stage2-val", epoch),
        false);

    // Monitoring probes on the validation codes: color readability from the
    // public part should fall as training proceeds; digit readability
    // exposes the degenerate collapse if a run is misconfigured.
    Tensor yt_val = forward_chunked(b.phi_t, val.images);
    ProbeResult color_probe = fit_probe(
        yt_val, val.private_labels, yt_val, val.private_labels,
        b.arch.private_classes, true, derive_seed(cfg.seed, "probe-s", epoch));
    ProbeResult public_probe = fit_probe(
        yt_val, val.public_labels, yt_val, val.public_labels,
        train.public_classes, true, derive_seed(cfg.seed, "probe-p", epoch));

    std::size_t steps = std::max<std::size_t>(1, std::size_t(step_index));
    log.epoch("stage2", epoch,
              {{"val_mse", val_mse},
               {"probe_yt_private_acc", color_probe.eval_accuracy},
               {"probe_yt_public_acc", public_probe.eval_accuracy},
               {"disc_loss_mean", disc_loss_sum / double(steps)}});
    bool improved = val_mse < best_val_mse;
    if (improved) best_val_mse = val_mse;
    b.stage = "stage2";
    detail::maybe_checkpoint(ckpt_dir, b, "stage2", improved);
  }

  if (b.phi_s.checksum() != frozen_phi_s) {
    throw precondition_error(
        "stage2 invariant violation: frozen private encoder changed");
  }
  b.stage = "stage2";
}

// Decoder fine-tune for deployment: the private slots carry zeros on the
// air, so the decoder re-learns to reconstruct from the public part alone.
// Both encoders stay frozen.
inline void finetune_decoder(const Dataset& train, const Dataset& val,
                             ModelBundle& b, const TrainConfig& cfg,
                             TrainingLog& log,
                             const std::filesystem::path& ckpt_dir = {}) {
  cfg.validate();
  if (b.stage != "stage2") {
    throw precondition_error("finetune requires a stage2 bundle, got '" +
                             b.stage + "'");
  }
  const std::string frozen_phi_t = b.phi_t.checksum();
  const std::string frozen_phi_s = b.phi_s.checksum();

  double before_mse = detail::validation_mse(
      b, val, cfg.snr_ab_db, derive_seed(cfg.seed, "finetune-val", 0), true);
  double with_private_mse = detail::validation_mse(
      b, val, cfg.snr_ab_db, derive_seed(cfg.seed, "finetune-val", 0), false);
  log.event("finetune_baseline", {{"val_mse_zeroed_before", before_mse},
                                  {"val_mse_with_private", with_private_mse}});

  nn::Adam opt(b.theta_b.parameters(), cfg.lr_finetune);
  AwgnChannel chan({cfg.snr_ab_db, derive_seed(cfg.seed, "finetune-channel")});
  Rng shuffle_rng(derive_seed(cfg.seed, "finetune-shuffle"));
  std::size_t n = train.count();
  double best_val_mse = std::numeric_limits<double>::infinity();
  log.event("stage_start",
            {{"stage", "finetune"}, {"epochs", cfg.finetune_epochs}});
  for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
    std::vector<std::size_t> order = shuffle_rng.permutation(n);
    int step_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + start,
                                   order.begin() + stop);
      Tensor xb = train.gather_images(idx);
      Tensor yt = b.phi_t.forward(xb, false);
      Tensor y = zeroed_private_concat(yt, b.arch.m_s);
      Tensor y_hat = chan.transmit(normalize_power(y));

      opt.zero_grad();
      Tensor x_hat = b.theta_b.forward(y_hat, true);
      LossReport report;
      report.total = reconstruction_loss(xb, x_hat);
      report.components["mse"] = report.total;
      report.batch_size = idx.size();
      if (!std::isfinite(report.total)) {
        detail::abort_non_finite("finetune", epoch, step_index, report, log);
      }
      b.theta_b.backward(reconstruction_loss_grad(xb, x_hat));
      opt.step();
      log.step("finetune", epoch, step_index++, report);
    }

    double val_mse = detail::validation_mse(
        b, val, cfg.snr_ab_db, derive_seed(cfg.seed, "finetune-val", epoch + 1),
        true);
    log.epoch("finetune", epoch, {{"val_mse_zeroed", val_mse}});
    bool improved = val_mse < best_val_mse;
    if (improved) best_val_mse = val_mse;
    b.stage = "finetune";
    detail::maybe_checkpoint(ckpt_dir, b, "finetune", improved);
  }

  double after_mse = detail::validation_mse(
      b, val, cfg.snr_ab_db, derive_seed(cfg.seed, "finetune-val", 0), true);
  log.event("finetune_result",
            {{"val_mse_zeroed_before", before_mse},
             {"val_mse_zeroed_after", after_mse},
             {"gap_to_private", after_mse - with_private_mse}});

  if (b.phi_t.checksum() != frozen_phi_t ||
      b.phi_s.checksum() != frozen_phi_s) {
    throw precondition_error(
        "finetune invariant violation: frozen encoder changed");
  }
  b.stage = "finetune";
}

}  // namespace dibjscc
