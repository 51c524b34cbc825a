#pragma once

// Adversarially trained JSCC baseline: one undivided codeword, trained
// min-max against an internal adversary that listens at a single assumed
// eavesdropper SNR. Everything about that assumption lives here, separate
// from the split-codeword training paths, which never see it.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dibjscc/channel.hpp"
#include "dibjscc/models.hpp"
#include "dibjscc/nn/adam.hpp"
#include "dibjscc/objectives.hpp"
#include "dibjscc/probes.hpp"
#include "dibjscc/training.hpp"

namespace dibjscc {

// Trains encoder/decoder to minimize MSE - lambda * (adversary CE) while
// the adversary maximizes its own private-label likelihood on the noisy
// codeword it can hear at snr_ae_train_db. lambda = 0 degenerates to plain
// JSCC with a passively trained adversary probe.
inline BaselineBundle train_adversarial_baseline(
    const Dataset& train, const Dataset& val, const ArchSpec& arch,
    double snr_ae_train_db, double lambda, const TrainConfig& cfg,
    TrainingLog& log) {
  cfg.validate();
  if (!std::isfinite(snr_ae_train_db)) {
    throw config_error("baseline: snr_ae_train_db must be finite");
  }
  if (!(lambda >= 0.0)) {
    throw config_error("baseline: lambda must be >= 0");
  }
  if (train.private_classes != arch.private_classes) {
    throw precondition_error("baseline: dataset/arch private class mismatch");
  }

  BaselineBundle b =
      BaselineBundle::create(arch, snr_ae_train_db, lambda, cfg.seed);
  b.config_hash = "";

  auto enc_params = b.encoder.parameters();
  auto dec_params = b.decoder.parameters();
  enc_params.insert(enc_params.end(), dec_params.begin(), dec_params.end());
  nn::Adam opt_enc(enc_params, cfg.lr_stage2);
  nn::Adam opt_adv(b.adversary.parameters(), cfg.lr_disc);

  AwgnChannel chan_bob({cfg.snr_ab_db, derive_seed(cfg.seed, "baseline-bob")});
  AwgnChannel chan_eve(
      {snr_ae_train_db, derive_seed(cfg.seed, "baseline-eve")});
  Rng shuffle_rng(derive_seed(cfg.seed, "baseline-shuffle"));

  std::size_t n = train.count();
  log.event("stage_start",
            {{"stage", "baseline"},
             {"epochs", cfg.stage2_epochs},
             {"snr_ae_train_db", snr_ae_train_db},
             {"lambda", lambda}});
  for (int epoch = 0; epoch < cfg.stage2_epochs; ++epoch) {
    std::vector<std::size_t> order = shuffle_rng.permutation(n);
    int step_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + start,
                                   order.begin() + stop);
      Tensor xb = train.gather_images(idx);
      std::vector<int> lb = detail::gather_labels(train.private_labels, idx);

      // Adversary phase: fit the listener on what it can actually hear,
      // with fresh channel noise per update.
      {
        Tensor y = b.encoder.forward(xb, false);
        Tensor yn_adv = normalize_power(y);
        for (int j = 0; j < cfg.disc_updates; ++j) {
          Tensor y_eve = chan_eve.transmit(yn_adv);
          opt_adv.zero_grad();
          Tensor probs = b.adversary.forward(y_eve, true);
          double adv_loss = cross_entropy(probs, lb);
          if (!std::isfinite(adv_loss)) {
            LossReport r;
            r.total = adv_loss;
            r.batch_size = idx.size();
            detail::abort_non_finite("baseline-adversary", epoch, step_index,
                                     r, log);
          }
          b.adversary.backward(cross_entropy_grad(probs, lb));
          opt_adv.step();
        }
      }

      // Encoder/decoder phase.
      opt_enc.zero_grad();
      Tensor y = b.encoder.forward(xb, true);
      auto [yn, scale] = normalize_power_with_scale(y);
      Tensor y_bob = chan_bob.transmit(yn);
      Tensor x_hat = b.decoder.forward(y_bob, true);
      double mse = reconstruction_loss(xb, x_hat);

      Tensor g_yn = b.decoder.backward(reconstruction_loss_grad(xb, x_hat));

      double adv_ce = 0.0;
      if (lambda > 0.0) {
        Tensor y_eve = chan_eve.transmit(yn);
        Tensor probs = b.adversary.forward(y_eve, true);
        adv_ce = cross_entropy(probs, lb);
        // Maximizing the adversary's loss = descending on -lambda * CE.
        Tensor g_probs = cross_entropy_grad(probs, lb);
        for (std::size_t i = 0; i < g_probs.size(); ++i) {
          g_probs[i] *= -lambda;
        }
        Tensor g_eve = b.adversary.backward(g_probs);
        for (std::size_t i = 0; i < g_eve.size(); ++i) {
          g_yn[i] += g_eve[i];
        }
      }
      b.encoder.backward(normalize_power_backward(g_yn, yn, scale));
      opt_enc.step();

      LossReport report;
      report.total = mse - lambda * adv_ce;
      report.components["mse"] = mse;
      report.components["adversary_ce"] = adv_ce;
      report.batch_size = idx.size();
      if (!std::isfinite(report.total)) {
        detail::abort_non_finite("baseline", epoch, step_index, report, log);
      }
      log.step("baseline", epoch, step_index++, report);
    }

    // Validation: Bob-side distortion and the adversary's accuracy at its
    // own training SNR.
    Tensor yv = forward_chunked(b.encoder, val.images);
    Tensor yv_n = normalize_power(yv);
    AwgnChannel val_bob(
        {cfg.snr_ab_db, derive_seed(cfg.seed, "baseline-val-bob", epoch)});
    AwgnChannel val_eve(
        {snr_ae_train_db, derive_seed(cfg.seed, "baseline-val-eve", epoch)});
    Tensor x_hat_val =
        forward_chunked(b.decoder, val_bob.transmit(yv_n));
    double val_mse = reconstruction_loss(val.images, x_hat_val);
    double adv_acc = accuracy_against(
        argmax_rows(forward_chunked(b.adversary, val_eve.transmit(yv_n))),
        val.private_labels);
    log.epoch("baseline", epoch,
              {{"val_mse", val_mse}, {"val_adversary_acc", adv_acc}});
  }

  b.stage = "trained";
  return b;
}

}  // namespace dibjscc
