#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "dibjscc/attack.hpp"
#include "dibjscc/dataset.hpp"

using namespace dibjscc;
namespace fs = std::filesystem;

namespace {

ArchSpec attack_arch() {
  ArchSpec a;
  a.m_t = 12;
  a.m_s = 8;
  a.private_classes = 10;
  return a;
}

SplitDataset attack_data(std::uint64_t seed, std::size_t count = 640) {
  GrayscaleDigits src = synthesize_digit_glyphs(count, seed);
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

// A bundle whose stage tag is set by hand: attack-path mechanics (shapes,
// zero positions, schema, determinism) do not depend on training quality.
ModelBundle staged_bundle(const std::string& stage, std::uint64_t seed = 3) {
  ModelBundle b = ModelBundle::create(attack_arch(), seed);
  b.stage = stage;
  return b;
}

}  // namespace

// Transparent positive control: the codeword is the normalized chroma of the
// image, which is exactly the palette color regardless of digit shape.
struct ChromaModel {
  ArchSpec arch;
};

Tensor clean_eval_codeword(ChromaModel& m, const Tensor& x) {
  std::size_t n = x.dim(0), plane = x.dim(2) * x.dim(3);
  Tensor y({n, 3});
  for (std::size_t i = 0; i < n; ++i) {
    double mean[3] = {0.0, 0.0, 0.0};
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        mean[c] += x[(i * 3 + c) * plane + p];
      }
    }
    double total = mean[0] + mean[1] + mean[2] + 1e-12;
    for (std::size_t c = 0; c < 3; ++c) y(i, c) = mean[c] / total;
  }
  return y;
}

std::string model_id(const ChromaModel&) { return "chroma_control"; }

TEST_CASE("psnr definition and sentinels", "[attack]") {
  REQUIRE(psnr_from_mse(0.01) == Catch::Approx(20.0).margin(1e-9));
  REQUIRE(psnr_from_mse(1.0) == Catch::Approx(0.0).margin(1e-9));
  REQUIRE(std::isinf(psnr_from_mse(0.0)));
  REQUIRE(psnr_from_mse(0.0) > 0);
  REQUIRE_THROWS_AS(psnr_from_mse(-1e-12), input_error);
}

TEST_CASE("eval transmission zeroes the private positions exactly",
          "[attack]") {
  SplitDataset data = attack_data(21);
  ModelBundle b = staged_bundle("stage2");
  double inf = std::numeric_limits<double>::infinity();

  Tensor onair = transmit_for_eval(b, data.test.images, {inf, 99});
  REQUIRE(onair.dim(0) == data.test.count());
  REQUIRE(onair.dim(1) == b.arch.total_code());
  for (std::size_t i = 0; i < onair.dim(0); ++i) {
    for (std::size_t j = b.arch.m_t; j < b.arch.total_code(); ++j) {
      REQUIRE(onair(i, j) == 0.0);
    }
  }
  // Public positions survive normalization at nonzero amplitude.
  double power = 0.0;
  for (std::size_t i = 0; i < onair.dim(0); ++i) {
    for (std::size_t j = 0; j < b.arch.m_t; ++j) {
      power += onair(i, j) * onair(i, j);
    }
  }
  REQUIRE(power / static_cast<double>(onair.size()) ==
          Catch::Approx(1.0).epsilon(1e-6));

  // With noise on, private positions are noise-only.
  Tensor noisy = transmit_for_eval(b, data.test.images, {0.0, 99});
  bool any_nonzero = false;
  for (std::size_t i = 0; i < noisy.dim(0); ++i) {
    for (std::size_t j = b.arch.m_t; j < b.arch.total_code(); ++j) {
      if (noisy(i, j) != 0.0) any_nonzero = true;
    }
  }
  REQUIRE(any_nonzero);

  ModelBundle untrained = staged_bundle("init");
  REQUIRE_THROWS_AS(transmit_for_eval(untrained, data.test.images, {inf, 9}),
                    precondition_error);
  ModelBundle s1 = staged_bundle("stage1");
  REQUIRE_THROWS_AS(transmit_for_eval(s1, data.test.images, {inf, 9}),
                    precondition_error);
}

TEST_CASE("baseline transmits its full codeword", "[attack]") {
  SplitDataset data = attack_data(22);
  BaselineBundle b = BaselineBundle::create(attack_arch(), 5.0, 0.0, 4);
  double inf = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_AS(transmit_for_eval(b, data.test.images, {inf, 9}),
                    precondition_error);
  b.stage = "trained";
  Tensor onair = transmit_for_eval(b, data.test.images, {inf, 9});
  REQUIRE(onair.dim(1) == b.arch.total_code());
  std::size_t zero_cols = 0;
  for (std::size_t j = 0; j < onair.dim(1); ++j) {
    bool all_zero = true;
    for (std::size_t i = 0; i < onair.dim(0); ++i) {
      if (onair(i, j) != 0.0) all_zero = false;
    }
    if (all_zero) ++zero_cols;
  }
  REQUIRE(zero_cols == 0);
}

TEST_CASE("noise codewords hold the eavesdropper at chance",
          "[attack][slow]") {
  SplitDataset data = attack_data(23);
  RandomCodewordModel control(attack_arch(), 77);
  nn::Sequential eve = train_eavesdropper(control, data.train, 15.0, 55);
  // No-information control: score on the train set itself; there is nothing
  // to generalize.
  Tensor heard = transmit_for_eval(control, data.train.images, {15.0, 56});
  double acc = accuracy_against(argmax_rows(forward_chunked(eve, heard)),
                                data.train.private_labels);
  CAPTURE(acc);
  REQUIRE(acc > 0.1 - 0.05);
  REQUIRE(acc < 0.1 + 0.05);
}

TEST_CASE("readable codewords push the eavesdropper far above chance",
          "[attack][slow]") {
  SplitDataset data = attack_data(24);
  ArchSpec mean_arch = attack_arch();
  mean_arch.m_t = 2;
  mean_arch.m_s = 1;  // codeword is the 3 channel means
  ChromaModel control{mean_arch};
  // 25 dB keeps the channel out of the way: the palette constellation has
  // min inter-class distance ~0.3 after power normalization, so the noise
  // floor itself caps accuracy well below 1 at low SNR.
  nn::Sequential eve = train_eavesdropper(control, data.train, 25.0, 57);
  Tensor heard = transmit_for_eval(control, data.test.images, {25.0, 58});
  double acc = accuracy_against(argmax_rows(forward_chunked(eve, heard)),
                                data.test.private_labels);
  CAPTURE(acc);
  REQUIRE(acc > 0.8);

  // Determinism: retraining with the same seed gives the same attacker.
  nn::Sequential eve2 = train_eavesdropper(control, data.train, 25.0, 57);
  REQUIRE(eve2.checksum() == eve.checksum());
}

TEST_CASE("sweep sorts by snr and brackets between the controls",
          "[attack][slow]") {
  SplitDataset data = attack_data(25);
  EveConfig quick;
  quick.epochs = 10;

  RandomCodewordModel noise(attack_arch(), 78);
  std::vector<AttackResult> rs =
      eavesdropping_sweep(noise, data.train, data.test, {15.0, -5.0, 5.0},
                          91, quick);
  REQUIRE(rs.size() == 3);
  REQUIRE(rs[0].snr_ae_db == -5.0);
  REQUIRE(rs[1].snr_ae_db == 5.0);
  REQUIRE(rs[2].snr_ae_db == 15.0);
  for (const auto& r : rs) {
    REQUIRE(r.n_test == data.test.count());
    REQUIRE(r.eavesdrop_accuracy >= 0.0);
    REQUIRE(r.eavesdrop_accuracy <= 0.35);
    REQUIRE_FALSE(r.attacker_descriptor.empty());
  }

  REQUIRE_THROWS_AS(
      eavesdropping_sweep(noise, data.train, data.test, {}, 91, quick),
      input_error);

  // Determinism across identical sweeps.
  RandomCodewordModel noise2(attack_arch(), 78);
  std::vector<AttackResult> rs2 =
      eavesdropping_sweep(noise2, data.train, data.test, {15.0, -5.0, 5.0},
                          91, quick);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    REQUIRE(rs[i].eavesdrop_accuracy == rs2[i].eavesdrop_accuracy);
  }
}

TEST_CASE("reconstruction metrics are definitionally consistent", "[attack]") {
  SplitDataset data = attack_data(26);
  ModelBundle b = staged_bundle("finetune");
  MetricsRecord rec = reconstruction_metrics(b, data.test, 10.0, 7);
  REQUIRE(rec.model_id == "dib");
  REQUIRE(rec.snr_ab_db == 10.0);
  REQUIRE(rec.mse > 0.0);
  REQUIRE(rec.psnr == Catch::Approx(10.0 * std::log10(1.0 / rec.mse))
                          .margin(1e-9));

  ModelBundle s2 = staged_bundle("stage2");
  REQUIRE_THROWS_AS(reconstruction_metrics(s2, data.test, 10.0, 7),
                    precondition_error);

  nlohmann::json j = rec.to_json();
  REQUIRE(j["model"] == "dib");
  REQUIRE(j.contains("psnr_db"));
}

TEST_CASE("reconstruction grid dump is a decodable image", "[attack]") {
  SplitDataset data = attack_data(27);
  ModelBundle b = staged_bundle("finetune");
  fs::path dir = fs::temp_directory_path() / "dibjscc-grid-test";
  fs::create_directories(dir);
  fs::path file = dir / "grid.ppm";
  dump_reconstruction_grid(b, data.test, 10.0, 7, file, 6);
  RgbImage img = decode_ppm(file);
  // 6 tiles per row, 2 rows, 2px gutters.
  REQUIRE(img.width == 6 * 28 + 7 * 2);
  REQUIRE(img.height == 2 * 28 + 3 * 2);
  fs::remove_all(dir);
}

TEST_CASE("disentanglement probes report four held-out accuracies",
          "[attack][slow]") {
  SplitDataset data = attack_data(28);
  ModelBundle b = staged_bundle("stage2");
  DisentanglementReport rep =
      probe_disentanglement(b, data.train, data.test, 5);
  for (double acc : {rep.yt_private_acc, rep.yt_public_acc,
                     rep.ys_private_acc, rep.ys_public_acc}) {
    REQUIRE(acc >= 0.0);
    REQUIRE(acc <= 1.0);
  }
  nlohmann::json j = rep.to_json();
  REQUIRE(j.contains("yt_private_acc"));
  REQUIRE(j.contains("ys_public_acc"));

  ModelBundle untrained = staged_bundle("stage1");
  REQUIRE_THROWS_AS(probe_disentanglement(untrained, data.train, data.test, 5),
                    precondition_error);
}

TEST_CASE("embedding export schema and byte determinism", "[attack]") {
  SplitDataset data = attack_data(29);
  ModelBundle b = staged_bundle("stage2");
  fs::path dir = fs::temp_directory_path() / "dibjscc-embed-test";
  fs::remove_all(dir);
  export_embeddings(b, data.test, dir);

  std::string yt = read_text_file(dir / "yt_embeddings.csv");
  std::string ys = read_text_file(dir / "ys_embeddings.csv");

  auto count_lines = [](const std::string& s) {
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
  };
  REQUIRE(count_lines(yt) == data.test.count() + 1);
  REQUIRE(count_lines(ys) == data.test.count() + 1);

  std::string yt_header = yt.substr(0, yt.find('\n'));
  REQUIRE(count_lines(yt.substr(0, yt.find('\n') + 1)) == 1);
  std::size_t yt_cols =
      static_cast<std::size_t>(std::count(yt_header.begin(), yt_header.end(),
                                          ',')) + 1;
  REQUIRE(yt_cols == b.arch.m_t + 2);
  REQUIRE(yt_header.rfind("public_label,private_label") != std::string::npos);
  std::string ys_header = ys.substr(0, ys.find('\n'));
  std::size_t ys_cols =
      static_cast<std::size_t>(std::count(ys_header.begin(), ys_header.end(),
                                          ',')) + 1;
  REQUIRE(ys_cols == b.arch.m_s + 2);

  // Re-export is byte-identical.
  export_embeddings(b, data.test, dir);
  REQUIRE(read_text_file(dir / "yt_embeddings.csv") == yt);
  REQUIRE(read_text_file(dir / "ys_embeddings.csv") == ys);

  // Target under a regular file: unwritable.
  fs::path blocked = dir / "yt_embeddings.csv";
  REQUIRE_THROWS_AS(export_embeddings(b, data.test, blocked / "sub"),
                    io_error);
  fs::remove_all(dir);
}

TEST_CASE("attack csv table layout", "[attack]") {
  AttackResult a;
  a.snr_ae_db = -5.0;
  a.eavesdrop_accuracy = 0.125;
  a.n_test = 2000;
  AttackResult b;
  b.snr_ae_db = 15.0;
  b.eavesdrop_accuracy = 0.5;
  b.n_test = 2000;
  std::string csv = attack_results_csv({{"dib", a}, {"adversarial_baseline", b}});
  REQUIRE(csv ==
          "model,snr_ae_db,accuracy,n_test\n"
          "dib,-5,0.125,2000\n"
          "adversarial_baseline,15,0.5,2000\n");
}
