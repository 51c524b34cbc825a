#pragma once

// Eavesdropper attack harness and evaluation metrics: post-hoc attacker
// training at configurable listener SNRs, accuracy sweeps, reconstruction
// quality, disentanglement probes, and embedding export. The attacker only
// ever sees what goes on the air: the zero-padded public subcodeword for
// split models, the full codeword for the undivided baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dibjscc/baseline.hpp"
#include "dibjscc/channel.hpp"
#include "dibjscc/dataset.hpp"
#include "dibjscc/errors.hpp"
#include "dibjscc/io.hpp"
#include "dibjscc/models.hpp"
#include "dibjscc/probes.hpp"
#include "dibjscc/rng.hpp"
#include "dibjscc/training.hpp"

namespace dibjscc {

struct AttackResult {
  double snr_ae_db = 0.0;
  double eavesdrop_accuracy = 0.0;
  std::string attacker_descriptor;
  std::size_t n_test = 0;

  nlohmann::json to_json() const {
    return {{"snr_ae_db", snr_ae_db},
            {"eavesdrop_accuracy", eavesdrop_accuracy},
            {"attacker", attacker_descriptor},
            {"n_test", n_test}};
  }
};

inline double psnr_from_mse(double mse) {
  if (mse < 0.0) throw input_error("psnr: negative mse");
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

struct MetricsRecord {
  std::string model_id;
  double snr_ab_db = 0.0;
  double mse = 0.0;
  double psnr = 0.0;
  std::vector<AttackResult> attacks;

  nlohmann::json to_json() const {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : attacks) a.push_back(r.to_json());
    return {{"model", model_id},
            {"snr_ab_db", snr_ab_db},
            {"mse", mse},
            {"psnr_db", psnr},
            {"attacks", a}};
  }
};

// Negative control: codewords are seeded noise carrying no information about
// the input. Any attacker accuracy notably above chance against this model
// indicates a harness bug.
struct RandomCodewordModel {
  ArchSpec arch;
  Rng rng;

  RandomCodewordModel(const ArchSpec& a, std::uint64_t seed)
      : arch(a), rng(derive_seed(seed, "noise-codeword")) {}
};

// Pre-noise, pre-normalization codeword as transmitted at deployment time.
inline Tensor clean_eval_codeword(ModelBundle& m, const Tensor& x) {
  if (m.stage != "stage2" && m.stage != "finetune") {
    throw precondition_error("attack: split model not trained (stage '" +
                             m.stage + "')");
  }
  return zeroed_private_concat(forward_chunked(m.phi_t, x), m.arch.m_s);
}

inline Tensor clean_eval_codeword(BaselineBundle& m, const Tensor& x) {
  if (m.stage != "trained") {
    throw precondition_error("attack: baseline not trained (stage '" +
                             m.stage + "')");
  }
  return forward_chunked(m.encoder, x);
}

inline Tensor clean_eval_codeword(RandomCodewordModel& m, const Tensor& x) {
  Tensor y({x.dim(0), m.arch.total_code()});
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = m.rng.gaussian();
  return y;
}

inline std::string model_id(const ModelBundle&) { return "dib"; }
inline std::string model_id(const BaselineBundle&) {
  return "adversarial_baseline";
}
inline std::string model_id(const RandomCodewordModel&) {
  return "noise_control";
}

template <class Model>
Tensor transmit_for_eval(Model& model, const Tensor& x,
                         const ChannelSpec& spec) {
  return awgn_transmit(normalize_power(clean_eval_codeword(model, x)), spec);
}

struct EveConfig {
  int epochs = 40;
  std::size_t batch_size = 128;
  double lr = 1e-3;

  void validate() const {
    if (epochs < 1) throw config_error("eve: epochs must be >= 1");
    if (batch_size < 1) throw config_error("eve: batch_size must be >= 1");
    if (!(lr > 0.0)) throw config_error("eve: lr must be positive");
  }
};

// Strongest-practical-attack protocol: Eve owns labeled (heard, s) samples
// drawn at her true SNR and fits a classifier of the same family as the
// defender's private-information head, with fresh channel noise every epoch.
template <class Model>
nn::Sequential train_eavesdropper(Model& model, const Dataset& train,
                                  double snr_ae_db, std::uint64_t seed,
                                  const EveConfig& cfg = {}) {
  cfg.validate();
  if (!std::isfinite(snr_ae_db)) {
    throw input_error("eve: snr_ae_db must be finite");
  }
  if (train.private_classes != model.arch.private_classes) {
    throw precondition_error("eve: dataset/arch private class mismatch");
  }
  Tensor clean = clean_eval_codeword(model, train.images);
  Tensor clean_n = normalize_power(clean);

  // Attacker net: whitening affine in front of the defender's classifier
  // family. Power normalization fixes the batch mean square, not the
  // per-feature offsets; a codeword with a large common offset leaves the
  // informative deviations tiny next to the bias scale and a cold MLP
  // stalls. The affine starts at the z-score of the heard signal (clean
  // feature variance plus channel noise in quadrature) and stays trainable.
  std::size_t m = model.arch.total_code();
  std::size_t n_train = clean_n.dim(0);
  double sigma = noise_sigma(ChannelSpec{snr_ae_db, 0}, 1.0);
  std::vector<double> mu(m, 0.0), sd(m, 0.0);
  for (std::size_t i = 0; i < n_train; ++i) {
    for (std::size_t j = 0; j < m; ++j) mu[j] += clean_n(i, j);
  }
  for (std::size_t j = 0; j < m; ++j) mu[j] /= double(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double d = clean_n(i, j) - mu[j];
      sd[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    sd[j] = std::sqrt(sd[j] / double(n_train) + sigma * sigma);
    sd[j] = std::max(sd[j], 1e-3);
  }

  nn::Sequential eve;
  eve.add(std::make_unique<nn::Dense>(m, m));
  eve.add(std::make_unique<nn::Dense>(m, model.arch.classifier_hidden));
  eve.add(std::make_unique<nn::ReLU>());
  eve.add(std::make_unique<nn::Dense>(model.arch.classifier_hidden,
                                      std::size_t(model.arch.private_classes)));
  eve.add(std::make_unique<nn::Softmax>());
  Rng init_rng(derive_seed(seed, "eve-init"));
  eve.init(init_rng);
  for (auto& p : eve.parameters()) {
    if (p.name == "layer0.weight") {
      p.value->fill(0.0);
      for (std::size_t j = 0; j < m; ++j) (*p.value)(j, j) = 1.0 / sd[j];
    } else if (p.name == "layer0.bias") {
      for (std::size_t j = 0; j < m; ++j) p.value->data()[j] = -mu[j] / sd[j];
    }
  }
  nn::Adam opt(eve.parameters(), cfg.lr);
  Rng shuffle_rng(derive_seed(seed, "eve-shuffle"));

  std::size_t n = train.count();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tensor heard = awgn_transmit(
        clean_n, {snr_ae_db, derive_seed(seed, "eve-noise", epoch)});
    std::vector<std::size_t> order = shuffle_rng.permutation(n);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + start,
                                   order.begin() + stop);
      Tensor yb = take_rows(heard, idx);
      std::vector<int> lb = detail::gather_labels(train.private_labels, idx);
      opt.zero_grad();
      Tensor probs = eve.forward(yb, true);
      double loss = cross_entropy(probs, lb);
      if (!std::isfinite(loss)) {
        throw numeric_error("eve: non-finite loss at snr " +
                            std::to_string(snr_ae_db) + " dB, epoch " +
                            std::to_string(epoch));
      }
      eve.backward(cross_entropy_grad(probs, lb));
      opt.step();
    }
  }
  return eve;
}

// One freshly trained attacker per grid point, scored on held-out data.
// Results come back sorted by SNR ascending regardless of grid order.
template <class Model>
std::vector<AttackResult> eavesdropping_sweep(Model& model,
                                              const Dataset& eve_train,
                                              const Dataset& test,
                                              std::vector<double> snr_grid,
                                              std::uint64_t seed,
                                              const EveConfig& cfg = {}) {
  if (snr_grid.empty()) throw input_error("sweep: empty snr grid");
  std::sort(snr_grid.begin(), snr_grid.end());
  std::vector<AttackResult> results;
  results.reserve(snr_grid.size());
  for (std::size_t i = 0; i < snr_grid.size(); ++i) {
    double snr = snr_grid[i];
    nn::Sequential eve = train_eavesdropper(
        model, eve_train, snr, derive_seed(seed, "eve-point", i), cfg);
    Tensor heard = transmit_for_eval(model, test.images,
                                     {snr, derive_seed(seed, "eve-eval", i)});
    AttackResult r;
    r.snr_ae_db = snr;
    r.eavesdrop_accuracy = accuracy_against(
        argmax_rows(forward_chunked(eve, heard)), test.private_labels);
    r.attacker_descriptor = eve.descriptor().dump();
    r.n_test = test.count();
    results.push_back(std::move(r));
  }
  return results;
}

inline Tensor reconstruct_from_air(ModelBundle& m, const Tensor& heard) {
  if (m.stage != "finetune") {
    throw precondition_error(
        "metrics: split model decoder not adapted to the zeroed private "
        "part (stage '" +
        m.stage + "')");
  }
  return forward_chunked(m.theta_b, heard);
}

inline Tensor reconstruct_from_air(BaselineBundle& m, const Tensor& heard) {
  return forward_chunked(m.decoder, heard);
}

template <class Model>
MetricsRecord reconstruction_metrics(Model& model, const Dataset& test,
                                     double snr_ab_db, std::uint64_t seed) {
  Tensor heard = transmit_for_eval(
      model, test.images, {snr_ab_db, derive_seed(seed, "metrics-noise")});
  Tensor x_hat = reconstruct_from_air(model, heard);
  MetricsRecord rec;
  rec.model_id = model_id(model);
  rec.snr_ab_db = snr_ab_db;
  rec.mse = reconstruction_loss(test.images, x_hat);
  rec.psnr = psnr_from_mse(rec.mse);
  return rec;
}

// Original row over reconstruction row, lossless output.
template <class Model>
void dump_reconstruction_grid(Model& model, const Dataset& test,
                              double snr_ab_db, std::uint64_t seed,
                              const std::filesystem::path& path,
                              std::size_t count = 10) {
  count = std::min(count, test.count());
  if (count == 0) throw input_error("grid dump: empty test set");
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  Tensor x = test.gather_images(idx);
  Tensor heard = transmit_for_eval(
      model, x, {snr_ab_db, derive_seed(seed, "grid-noise")});
  Tensor x_hat = reconstruct_from_air(model, heard);
  auto slice = [](const Tensor& batch, std::size_t i) {
    Tensor tile({batch.dim(1), batch.dim(2), batch.dim(3)});
    std::size_t px = tile.size();
    for (std::size_t p = 0; p < px; ++p) tile[p] = batch[i * px + p];
    return tile;
  };
  std::vector<Tensor> tiles;
  tiles.reserve(2 * count);
  for (std::size_t i = 0; i < count; ++i) tiles.push_back(slice(x, i));
  for (std::size_t i = 0; i < count; ++i) tiles.push_back(slice(x_hat, i));
  write_ppm(path, compose_grid(tiles, count));
}

struct DisentanglementReport {
  double yt_private_acc = 0.0;
  double yt_public_acc = 0.0;
  double ys_private_acc = 0.0;
  double ys_public_acc = 0.0;

  nlohmann::json to_json() const {
    return {{"yt_private_acc", yt_private_acc},
            {"yt_public_acc", yt_public_acc},
            {"ys_private_acc", ys_private_acc},
            {"ys_public_acc", ys_public_acc}};
  }
};

// Four shallow probes on the clean subcodewords, scored on held-out data.
// High ys_private + low yt_private is the disentanglement signature.
inline DisentanglementReport probe_disentanglement(ModelBundle& m,
                                                   const Dataset& probe_train,
                                                   const Dataset& test,
                                                   std::uint64_t seed) {
  if (m.stage != "stage2" && m.stage != "finetune") {
    throw precondition_error("probes: split model not trained (stage '" +
                             m.stage + "')");
  }
  Tensor yt_train = forward_chunked(m.phi_t, probe_train.images);
  Tensor ys_train = forward_chunked(m.phi_s, probe_train.images);
  Tensor yt_test = forward_chunked(m.phi_t, test.images);
  Tensor ys_test = forward_chunked(m.phi_s, test.images);

  DisentanglementReport rep;
  rep.yt_private_acc =
      fit_probe(yt_train, probe_train.private_labels, yt_test,
                test.private_labels, m.arch.private_classes, false,
                derive_seed(seed, "probe-yt-private"))
          .eval_accuracy;
  rep.yt_public_acc =
      fit_probe(yt_train, probe_train.public_labels, yt_test,
                test.public_labels, probe_train.public_classes, false,
                derive_seed(seed, "probe-yt-public"))
          .eval_accuracy;
  rep.ys_private_acc =
      fit_probe(ys_train, probe_train.private_labels, ys_test,
                test.private_labels, m.arch.private_classes, false,
                derive_seed(seed, "probe-ys-private"))
          .eval_accuracy;
  rep.ys_public_acc =
      fit_probe(ys_train, probe_train.public_labels, ys_test,
                test.public_labels, probe_train.public_classes, false,
                derive_seed(seed, "probe-ys-public"))
          .eval_accuracy;
  return rep;
}

namespace detail {

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string embedding_csv(const Tensor& codes, const std::string& stem,
                                 const std::vector<int>& public_labels,
                                 const std::vector<int>& private_labels) {
  std::string out;
  std::size_t n = codes.dim(0), m = codes.dim(1);
  for (std::size_t j = 0; j < m; ++j) {
    out += stem + "_" + std::to_string(j) + ",";
  }
  out += "public_label,private_label\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      out += format_value(codes(i, j));
      out += ',';
    }
    out += std::to_string(public_labels[i]);
    out += ',';
    out += std::to_string(private_labels[i]);
    out += '\n';
  }
  return out;
}

}  // namespace detail

// One CSV per subcodeword, row per sample, both labels trailing. Determinism
// of the byte content follows from deterministic forwards and %.17g.
inline void export_embeddings(ModelBundle& m, const Dataset& test,
                              const std::filesystem::path& dir) {
  if (m.stage != "stage2" && m.stage != "finetune") {
    throw precondition_error("export: split model not trained (stage '" +
                             m.stage + "')");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  Tensor yt = forward_chunked(m.phi_t, test.images);
  Tensor ys = forward_chunked(m.phi_s, test.images);
  write_text_file(dir / "yt_embeddings.csv",
                  detail::embedding_csv(yt, "yt", test.public_labels,
                                        test.private_labels));
  write_text_file(dir / "ys_embeddings.csv",
                  detail::embedding_csv(ys, "ys", test.public_labels,
                                        test.private_labels));
}

inline std::string attack_results_csv(
    const std::vector<std::pair<std::string, AttackResult>>& rows) {
  std::string out = "model,snr_ae_db,accuracy,n_test\n";
  for (const auto& [id, r] : rows) {
    out += id;
    out += ',';
    out += detail::format_value(r.snr_ae_db);
    out += ',';
    out += detail::format_value(r.eavesdrop_accuracy);
    out += ',';
    out += std::to_string(r.n_test);
    out += '\n';
  }
  return out;
}

}  // namespace dibjscc
