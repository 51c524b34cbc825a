#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "dibjscc/baseline.hpp"
#include "dibjscc/dataset.hpp"
#include "dibjscc/training.hpp"

using namespace dibjscc;
namespace fs = std::filesystem;

namespace {

ArchSpec mini_arch() {
  ArchSpec a;
  a.m_t = 12;
  a.m_s = 8;
  a.private_classes = 10;
  a.discriminator_hidden = 64;
  return a;
}

TrainConfig mini_config() {
  TrainConfig cfg;
  cfg.stage1_epochs = 6;
  cfg.stage2_epochs = 2;
  cfg.finetune_epochs = 1;
  cfg.batch_size = 64;
  cfg.lr_stage1 = 2e-3;
  cfg.seed = 7;
  return cfg;
}

SplitDataset mini_data(std::uint64_t seed) {
  GrayscaleDigits src = synthesize_digit_glyphs(640, seed);
  Dataset d = synthesize_colored_mnist(src, make_palette(), seed);
  DatasetSpec spec;
  spec.name = "colored_mnist";
  spec.private_classes = 10;
  spec.height = 28;
  spec.width = 28;
  spec.train_fraction = 0.8;
  spec.val_fraction = 0.1;
  spec.test_fraction = 0.1;
  spec.seed = seed;
  return split_dataset(d, spec);
}

double private_ce(ModelBundle& b, const Dataset& d) {
  Tensor probs = forward_chunked(b.gamma, forward_chunked(b.phi_s, d.images));
  return cross_entropy(probs, d.private_labels);
}

}  // namespace

TEST_CASE("stage gating enforces the training order", "[training]") {
  SplitDataset data = mini_data(1);
  ModelBundle b = ModelBundle::create(mini_arch(), 1);
  TrainConfig cfg = mini_config();
  TrainingLog log;
  REQUIRE_THROWS_AS(train_stage2(data.train, data.val, b, cfg, log),
                    precondition_error);
  REQUIRE_THROWS_AS(finetune_decoder(data.train, data.val, b, cfg, log),
                    precondition_error);
}

TEST_CASE("train config validation", "[training]") {
  TrainConfig cfg = mini_config();
  REQUIRE_NOTHROW(cfg.validate());
  cfg.batch_size = 1;
  REQUIRE_THROWS_AS(cfg.validate(), config_error);
  cfg = mini_config();
  cfg.stage2_epochs = 0;
  REQUIRE_THROWS_AS(cfg.validate(), config_error);
  cfg = mini_config();
  cfg.lr_disc = 0.0;
  REQUIRE_THROWS_AS(cfg.validate(), config_error);
  cfg = mini_config();
  cfg.alpha = -1.0;
  REQUIRE_THROWS_AS(cfg.validate(), config_error);
}

TEST_CASE("stage1 learns the private label and is deterministic",
          "[training][slow]") {
  SplitDataset data = mini_data(2);
  TrainConfig cfg = mini_config();

  ModelBundle b = ModelBundle::create(mini_arch(), 11);
  double initial_loss = private_ce(b, data.train);
  TrainingLog log;
  train_stage1(data.train, data.val, b, cfg, log);
  REQUIRE(b.stage == "stage1");

  double final_loss = private_ce(b, data.train);
  REQUIRE(final_loss < initial_loss);

  // Color is low-entropy; even a mini-run should classify it well.
  double val_acc = accuracy_against(
      argmax_rows(forward_chunked(
          b.gamma, forward_chunked(b.phi_s, data.val.images))),
      data.val.private_labels);
  CAPTURE(val_acc);
  REQUIRE(val_acc > 0.8);

  // Bitwise repeatability.
  ModelBundle b2 = ModelBundle::create(mini_arch(), 11);
  TrainingLog log2;
  train_stage1(data.train, data.val, b2, cfg, log2);
  REQUIRE(b2.phi_s.checksum() == b.phi_s.checksum());
  REQUIRE(b2.gamma.checksum() == b.gamma.checksum());

  // Log streams agree once wall-clock stamps are stripped.
  REQUIRE(log.records().size() == log2.records().size());
  for (std::size_t i = 0; i < log.records().size(); ++i) {
    nlohmann::json a = log.records()[i];
    nlohmann::json c = log2.records()[i];
    a.erase("t");
    c.erase("t");
    REQUIRE(a == c);
  }

  ModelBundle fresh = ModelBundle::create(mini_arch(), 12);
  TrainingLog log3;
  train_stage1(data.train, data.val, fresh, cfg, log3);
  REQUIRE(fresh.phi_s.checksum() != b.phi_s.checksum());
}

TEST_CASE("stage2 freezes the private encoder and improves distortion",
          "[training][slow]") {
  SplitDataset data = mini_data(3);
  TrainConfig cfg = mini_config();
  ModelBundle b = ModelBundle::create(mini_arch(), 13);
  TrainingLog log;
  train_stage1(data.train, data.val, b, cfg, log);

  std::string phi_s_before = b.phi_s.checksum();
  std::string gamma_before = b.gamma.checksum();
  double mse_before = detail::validation_mse(b, data.val, cfg.snr_ab_db,
                                             derive_seed(99, "probe"), false);
  train_stage2(data.train, data.val, b, cfg, log);
  REQUIRE(b.stage == "stage2");
  REQUIRE(b.phi_s.checksum() == phi_s_before);
  REQUIRE(b.gamma.checksum() == gamma_before);

  double mse_after = detail::validation_mse(b, data.val, cfg.snr_ab_db,
                                            derive_seed(99, "probe"), false);
  CAPTURE(mse_before, mse_after);
  REQUIRE(mse_after < mse_before);

  // Epoch records carry the monitoring probes.
  bool saw_epoch = false;
  for (const auto& r : log.records()) {
    if (r.value("kind", "") == "epoch" && r.value("stage", "") == "stage2") {
      saw_epoch = true;
      REQUIRE(r.contains("val_mse"));
      REQUIRE(r.contains("probe_yt_private_acc"));
      REQUIRE(r.contains("probe_yt_public_acc"));
    }
  }
  REQUIRE(saw_epoch);
}

TEST_CASE("finetune retrains only the decoder and helps the zeroed path",
          "[training][slow]") {
  SplitDataset data = mini_data(4);
  TrainConfig cfg = mini_config();
  cfg.finetune_epochs = 2;
  ModelBundle b = ModelBundle::create(mini_arch(), 14);
  TrainingLog log;
  train_stage1(data.train, data.val, b, cfg, log);
  train_stage2(data.train, data.val, b, cfg, log);

  std::string phi_t_before = b.phi_t.checksum();
  std::string phi_s_before = b.phi_s.checksum();
  std::uint64_t probe_seed = derive_seed(123, "finetune-check");
  double zeroed_before = detail::validation_mse(b, data.val, cfg.snr_ab_db,
                                                probe_seed, true);
  finetune_decoder(data.train, data.val, b, cfg, log);
  REQUIRE(b.stage == "finetune");
  REQUIRE(b.phi_t.checksum() == phi_t_before);
  REQUIRE(b.phi_s.checksum() == phi_s_before);

  double zeroed_after = detail::validation_mse(b, data.val, cfg.snr_ab_db,
                                               probe_seed, true);
  CAPTURE(zeroed_before, zeroed_after);
  REQUIRE(zeroed_after <= zeroed_before);

  // The measured gap to the live-private path lands in the log.
  bool saw_gap = false;
  for (const auto& r : log.records()) {
    if (r.value("kind", "") == "finetune_result") {
      saw_gap = true;
      REQUIRE(r.contains("gap_to_private"));
    }
  }
  REQUIRE(saw_gap);
}

TEST_CASE("checkpoint cadence writes last and best files", "[training][slow]") {
  fs::path dir = fs::temp_directory_path() / "dibjscc-ckpt-test";
  fs::remove_all(dir);
  SplitDataset data = mini_data(8);
  TrainConfig cfg = mini_config();
  cfg.stage1_epochs = 2;
  ModelBundle b = ModelBundle::create(mini_arch(), 15);
  TrainingLog log;
  train_stage1(data.train, data.val, b, cfg, log, dir);
  REQUIRE(fs::exists(dir / "stage1_last.ckpt"));
  REQUIRE(fs::exists(dir / "stage1_best.ckpt"));

  // The last checkpoint restores to the in-memory bundle bit for bit.
  ModelBundle restored = load_checkpoint(dir / "stage1_last.ckpt", b.arch);
  REQUIRE(restored.phi_s.checksum() == b.phi_s.checksum());
  REQUIRE(restored.stage == "stage1");
  fs::remove_all(dir);
}

TEST_CASE("training log writes parseable line-delimited records",
          "[training]") {
  fs::path dir = fs::temp_directory_path() / "dibjscc-log-test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  fs::path file = dir / "train.jsonl";
  {
    TrainingLog log(file);
    LossReport r;
    r.total = 1.5;
    r.components["mse"] = 1.5;
    r.batch_size = 4;
    log.step("stage1", 0, 0, r);
    log.epoch("stage1", 0, {{"val_private_acc", 0.5}});
    log.event("stage_start", {{"stage", "stage2"}});
  }
  std::ifstream in(file);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    nlohmann::json j = nlohmann::json::parse(line);
    REQUIRE(j.contains("t"));
    REQUIRE(j.contains("kind"));
    ++lines;
  }
  REQUIRE(lines == 3);
  fs::remove_all(dir);
}

namespace {

// Best constant predictor: train-set pixel means scored on val.
double constant_predictor_mse(const SplitDataset& data) {
  std::size_t px = data.train.pixels_per_image();
  std::vector<double> mean(px, 0.0);
  for (std::size_t i = 0; i < data.train.count(); ++i) {
    for (std::size_t p = 0; p < px; ++p) {
      mean[p] += data.train.images[i * px + p];
    }
  }
  for (auto& m : mean) m /= static_cast<double>(data.train.count());
  double mse = 0.0;
  for (std::size_t i = 0; i < data.val.count(); ++i) {
    for (std::size_t p = 0; p < px; ++p) {
      double d = data.val.images[i * px + p] - mean[p];
      mse += d * d;
    }
  }
  return mse / static_cast<double>(data.val.count() * px);
}

double adversary_train_accuracy(BaselineBundle& b, const Dataset& train) {
  Tensor y = forward_chunked(b.encoder, train.images);
  AwgnChannel eve({b.snr_ae_train_db, 31337});
  return accuracy_against(
      argmax_rows(forward_chunked(b.adversary,
                                  eve.transmit(normalize_power(y)))),
      train.private_labels);
}

}  // namespace

TEST_CASE("baseline learns reconstruction and lambda buys privacy",
          "[training][slow]") {
  SplitDataset data = mini_data(5);
  TrainConfig cfg = mini_config();
  cfg.stage2_epochs = 10;
  cfg.disc_updates = 3;
  cfg.lr_disc = 3e-3;
  double floor = constant_predictor_mse(data);

  TrainingLog log_plain;
  BaselineBundle plain = train_adversarial_baseline(
      data.train, data.val, mini_arch(), 10.0, 0.0, cfg, log_plain);
  REQUIRE(plain.stage == "trained");
  REQUIRE(plain.snr_ae_train_db == 10.0);
  REQUIRE(plain.lambda == 0.0);

  double mse_plain = 0.0;
  for (const auto& r : log_plain.records()) {
    if (r.value("kind", "") == "epoch") mse_plain = r.value("val_mse", 0.0);
  }
  CAPTURE(mse_plain, floor);
  REQUIRE(mse_plain < 0.8 * floor);

  // Plain JSCC leaks: the in-loop listener beats chance (0.1) clearly.
  double adv_plain = adversary_train_accuracy(plain, data.train);
  CAPTURE(adv_plain);
  REQUIRE(adv_plain > 0.15);

  // Same seed, privacy pressure on: the listener does strictly worse.
  TrainingLog log_priv;
  BaselineBundle priv = train_adversarial_baseline(
      data.train, data.val, mini_arch(), 10.0, 2.0, cfg, log_priv);
  double adv_priv = adversary_train_accuracy(priv, data.train);
  CAPTURE(adv_plain, adv_priv);
  REQUIRE(adv_priv < adv_plain);
}

TEST_CASE("baseline training is deterministic", "[training][slow]") {
  SplitDataset data = mini_data(6);
  TrainConfig cfg = mini_config();
  cfg.stage2_epochs = 2;
  TrainingLog log1, log2;
  BaselineBundle a = train_adversarial_baseline(
      data.train, data.val, mini_arch(), 5.0, 0.5, cfg, log1);
  BaselineBundle b = train_adversarial_baseline(
      data.train, data.val, mini_arch(), 5.0, 0.5, cfg, log2);
  REQUIRE(a.encoder.checksum() == b.encoder.checksum());
  REQUIRE(a.decoder.checksum() == b.decoder.checksum());
  REQUIRE(a.adversary.checksum() == b.adversary.checksum());
}
