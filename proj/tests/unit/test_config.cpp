#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <string>

#include "dibjscc/config.hpp"
#include "dibjscc/io.hpp"

using namespace dibjscc;

namespace {

json minimal_config() {
  return json{
      {"name", "mini"},
      {"seed", 11},
      {"dataset",
       {{"kind", "colored_mnist"},
        {"count", 640},
        {"train_fraction", 0.8},
        {"val_fraction", 0.1},
        {"test_fraction", 0.1}}},
      {"arch", {{"m_t", 12}, {"m_s", 8}}},
      {"dib",
       {{"snr_ab_db", 10.0},
        {"stage1_epochs", 2},
        {"stage2_epochs", 2},
        {"finetune_epochs", 1},
        {"batch_size", 64}}},
      {"attack", {{"snr_grid_db", {-5.0, 5.0, 15.0}}}}};
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("dibjscc-config-" + std::to_string(std::rand()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("minimal config parses and materializes defaults", "[config]") {
  ExperimentConfig cfg = parse_experiment_config(minimal_config());
  CHECK(cfg.name == "mini");
  CHECK(cfg.seed == 11);
  CHECK(cfg.output_root == "runs");
  CHECK(cfg.dataset.name == "colored_mnist");
  CHECK(cfg.dataset.private_classes == 10);
  CHECK(cfg.dataset_count == 640);
  CHECK(cfg.dataset.height == 28);
  CHECK(cfg.palette_saturation == Catch::Approx(0.55));
  CHECK(cfg.arch.m_t == 12);
  CHECK(cfg.arch.m_s == 8);
  CHECK(cfg.arch.image_height == 28);
  CHECK(cfg.arch.private_classes == 10);
  CHECK(cfg.dib.alpha == Catch::Approx(1.0));
  CHECK(cfg.dib.disc_updates == 1);
  CHECK(cfg.dib.lr_stage2 == Catch::Approx(1e-3));
  CHECK(cfg.eve.epochs == 40);
  CHECK(cfg.eve.batch_size == 128);
  CHECK(cfg.attack_snr_grid_db == std::vector<double>{-5.0, 5.0, 15.0});
  CHECK_FALSE(cfg.baseline.enabled);

  // Sub-seeds derive from the global seed, so one knob moves everything.
  CHECK(cfg.dataset.seed == derive_seed(11, "data"));
  CHECK(cfg.dib.seed == derive_seed(11, "train"));
}

TEST_CASE("unknown keys are rejected with their path", "[config]") {
  json top = minimal_config();
  top["outputs"] = "runs";  // misspelled output_root
  REQUIRE_THROWS_WITH(parse_experiment_config(top),
                      Catch::Matchers::ContainsSubstring("'outputs'"));

  json nested = minimal_config();
  nested["dib"]["warmup_epochs"] = 3;
  REQUIRE_THROWS_WITH(parse_experiment_config(nested),
                      Catch::Matchers::ContainsSubstring("'dib.warmup_epochs'"));

  json ds = minimal_config();
  ds["dataset"]["dir"] = "/tmp";  // utkface-only key under colored_mnist
  REQUIRE_THROWS_AS(parse_experiment_config(ds), config_error);
}

TEST_CASE("eavesdropper snr keys are forbidden in the dib section",
          "[config]") {
  json j = minimal_config();
  j["dib"]["snr_ae_db"] = 5.0;
  REQUIRE_THROWS_WITH(
      parse_experiment_config(j),
      Catch::Matchers::ContainsSubstring("eavesdropper") &&
          Catch::Matchers::ContainsSubstring("'dib.snr_ae_db'"));

  // Case variations and embedded occurrences are caught too.
  json j2 = minimal_config();
  j2["dib"]["train_SNR_AE"] = 5.0;
  REQUIRE_THROWS_AS(parse_experiment_config(j2), config_error);
  json j3 = minimal_config();
  j3["dib"]["snr_eve_db"] = 5.0;
  REQUIRE_THROWS_AS(parse_experiment_config(j3), config_error);

  // The baseline section legitimately trains against an assumed SNR_AE.
  json ok = minimal_config();
  ok["baseline"] = {{"enabled", true},
                    {"lambda", 2.0},
                    {"snr_ae_train_db", {-5.0}}};
  ExperimentConfig cfg = parse_experiment_config(ok);
  CHECK(cfg.baseline.enabled);
  CHECK(cfg.baseline.lambda == Catch::Approx(2.0));
  CHECK(cfg.baseline.snr_ae_train_db == std::vector<double>{-5.0});
}

TEST_CASE("schema violations name the offending key", "[config]") {
  json missing = minimal_config();
  missing["dataset"].erase("count");
  REQUIRE_THROWS_WITH(parse_experiment_config(missing),
                      Catch::Matchers::ContainsSubstring("'dataset.count'"));

  json wrong_type = minimal_config();
  wrong_type["dib"]["stage1_epochs"] = "two";
  REQUIRE_THROWS_WITH(
      parse_experiment_config(wrong_type),
      Catch::Matchers::ContainsSubstring("'dib.stage1_epochs'"));

  json fractional = minimal_config();
  fractional["dib"]["batch_size"] = 64.5;
  REQUIRE_THROWS_AS(parse_experiment_config(fractional), config_error);

  json bad_split = minimal_config();
  bad_split["dataset"]["test_fraction"] = 0.3;  // sums to 1.2
  REQUIRE_THROWS_AS(parse_experiment_config(bad_split), config_error);

  json empty_grid = minimal_config();
  empty_grid["attack"]["snr_grid_db"] = json::array();
  REQUIRE_THROWS_AS(parse_experiment_config(empty_grid), config_error);

  json bad_name = minimal_config();
  bad_name["name"] = "../escape";
  REQUIRE_THROWS_AS(parse_experiment_config(bad_name), config_error);

  json not_object = json::array({1, 2, 3});
  REQUIRE_THROWS_AS(parse_experiment_config(not_object), config_error);
}

TEST_CASE("config hash is canonical and value-sensitive", "[config]") {
  ExperimentConfig a = parse_experiment_config(minimal_config());
  REQUIRE(a.hash().size() == 64);
  REQUIRE(a.hash().find_first_not_of("0123456789abcdef") == std::string::npos);

  // Same meaning, different key order in the source text: same hash.
  std::string reordered = R"({
    "attack": {"snr_grid_db": [-5.0, 5.0, 15.0]},
    "dib": {"batch_size": 64, "finetune_epochs": 1, "stage2_epochs": 2,
            "stage1_epochs": 2, "snr_ab_db": 10.0},
    "arch": {"m_s": 8, "m_t": 12},
    "dataset": {"test_fraction": 0.1, "val_fraction": 0.1,
                "train_fraction": 0.8, "count": 640,
                "kind": "colored_mnist"},
    "seed": 11,
    "name": "mini"
  })";
  ExperimentConfig b = parse_experiment_config(json::parse(reordered));
  REQUIRE(b.hash() == a.hash());

  // Any effective value change moves the hash.
  json c = minimal_config();
  c["seed"] = 12;
  REQUIRE(parse_experiment_config(c).hash() != a.hash());
  json d = minimal_config();
  d["dib"]["alpha"] = 0.5;
  REQUIRE(parse_experiment_config(d).hash() != a.hash());
}

TEST_CASE("parsed config round-trips through its canonical form",
          "[config]") {
  json with_baseline = minimal_config();
  with_baseline["baseline"] = {{"enabled", true},
                               {"lambda", 0.5},
                               {"snr_ae_train_db", {-5.0, 15.0}}};
  ExperimentConfig a = parse_experiment_config(with_baseline);
  ExperimentConfig b = parse_experiment_config(a.to_json());
  REQUIRE(b.hash() == a.hash());
  REQUIRE(b.to_json() == a.to_json());
}

TEST_CASE("config files load with schema and io errors split", "[config]") {
  TempDir tmp;
  auto good = tmp.path / "exp.json";
  save_json_file(good, minimal_config());
  ExperimentConfig cfg = load_experiment_config(good);
  CHECK(cfg.name == "mini");

  auto malformed = tmp.path / "broken.json";
  write_text_file(malformed, "{\"name\": ");
  REQUIRE_THROWS_AS(load_experiment_config(malformed), io_error);

  REQUIRE_THROWS_AS(load_experiment_config(tmp.path / "absent.json"),
                    io_error);

  auto bad_schema = tmp.path / "bad.json";
  json j = minimal_config();
  j["dib"]["snr_ae_db"] = 0.0;
  save_json_file(bad_schema, j);
  REQUIRE_THROWS_AS(load_experiment_config(bad_schema), config_error);
}
