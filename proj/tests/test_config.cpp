#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "slsr/common.hpp"
#include "slsr/config.hpp"

using namespace slsr;

namespace {

bool throws_mentioning(const std::string& text, const std::string& needle) {
  try {
    (void)config::from_json(text);
  } catch (const ConfigError& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults round trip through the canonical form") {
  const config::PipelineConfig def;
  const std::string text = config::to_json(def);
  const config::PipelineConfig back = config::from_json(text);
  CHECK(config::to_json(back) == text);
  CHECK(config::config_hash(back) == config::config_hash(def));
  CHECK(config::config_hash(def).size() == 16);
}

TEST_CASE("explicit keys land in their fields") {
  const std::string text = R"({
    "seed": 99,
    "workers": 4,
    "uniform_generation": true,
    "train": {"base_lr": 0.02, "epochs": 7, "k": 4, "generated_total": 123,
              "generated_scheme": "lsro", "generated_loss_scale": 0.5},
    "backbone": {"architecture": "resnet_style", "embedding_dim": 32,
                 "input_size": 64, "base_channels": 8, "feature_source": "conv_map"},
    "stage1": {"epochs": 3, "lr": 0.005},
    "gan": {"latent_dim": 16, "image_size": 48, "epochs": 2, "strict_minimax": true},
    "preprocess": {"resize_size": 72, "crop_size": 64, "mean": [0.4, 0.4, 0.4]},
    "synth": {"n_identities": 12, "n_families": 2},
    "eval": {"protocol": "market_multi", "rerank": true, "rerank_k1": 8, "rerank_k2": 3},
    "paths": {"dataset_dir": "d", "output_dir": "o"}
  })";
  const config::PipelineConfig cfg = config::from_json(text);
  CHECK(cfg.seed == 99);
  CHECK(cfg.workers == 4);
  CHECK(cfg.uniform_generation);
  CHECK(cfg.train.base_lr == 0.02);
  CHECK(cfg.train.epochs == 7);
  CHECK(cfg.train.k == 4);
  CHECK(cfg.train.generated_total == 123);
  CHECK(cfg.train.generated_scheme == labels::Scheme::lsro);
  CHECK(cfg.train.generated_loss_scale == 0.5);
  CHECK(cfg.train.momentum == 0.9);  // untouched default
  CHECK(cfg.backbone.architecture == backbone::Arch::resnet_style);
  CHECK(cfg.backbone.feature_source == backbone::FeatureSource::conv_map);
  CHECK(cfg.stage1.epochs == 3);
  CHECK(cfg.stage1.lr == 0.005);
  CHECK(cfg.gan.latent_dim == 16);
  CHECK(cfg.gan.strict_minimax);
  CHECK(cfg.preprocess.resize_size == 72);
  CHECK(cfg.preprocess.mean == std::vector<double>{0.4, 0.4, 0.4});
  CHECK(cfg.synth.n_identities == 12);
  CHECK(cfg.eval.protocol == eval::Protocol::market_multi);
  CHECK(cfg.eval.rerank);
  CHECK(cfg.eval.rerank_k1 == 8);
  CHECK(cfg.paths.dataset_dir == "d");
  CHECK(cfg.paths.output_dir == "o");
}

TEST_CASE("unknown keys are rejected with their field path") {
  CHECK(throws_mentioning(R"({"frobnicate": 1})", "frobnicate"));
  CHECK(throws_mentioning(R"({"train": {"lr": 0.1}})", "train.lr"));
  CHECK(throws_mentioning(R"({"eval": {"reranking": true}})", "eval.reranking"));
  CHECK(throws_mentioning(R"({"paths": {"output": "x"}})", "paths.output"));
}

TEST_CASE("ill-typed values are rejected with their field path") {
  CHECK(throws_mentioning(R"({"train": {"epochs": "many"}})", "train.epochs"));
  CHECK(throws_mentioning(R"({"train": {"base_lr": "fast"}})", "train.base_lr"));
  CHECK(throws_mentioning(R"({"seed": -4})", "seed"));
  CHECK(throws_mentioning(R"({"preprocess": {"mean": [1.0, 2.0]}})", "preprocess.mean"));
  CHECK(throws_mentioning(R"({"gan": {"strict_minimax": "yes"}})", "gan.strict_minimax"));
  CHECK(throws_mentioning(R"({"train": 5})", "train"));
  CHECK(throws_mentioning(R"({"train": {"generated_scheme": "bogus"}})",
                          "train.generated_scheme"));
  CHECK_THROWS_AS((void)config::from_json("{"), ConfigError);
  CHECK_THROWS_AS((void)config::from_json("[1,2]"), ConfigError);
}

TEST_CASE("hash tracks content but not execution width") {
  config::PipelineConfig a;
  config::PipelineConfig b;
  b.workers = 16;
  CHECK(config::config_hash(a) == config::config_hash(b));

  b.seed = 8;
  CHECK(config::config_hash(a) != config::config_hash(b));

  config::PipelineConfig c;
  c.train.generated_total = 1;
  CHECK(config::config_hash(a) != config::config_hash(c));
}

TEST_CASE("presets are valid and carry the published settings") {
  const config::PipelineConfig desk = config::desk_preset();
  CHECK_NOTHROW(config::validate(desk));
  CHECK(desk.synth.n_identities == 30);
  CHECK(desk.synth.n_families == 3);
  CHECK(desk.synth.images_per_id == 10);
  CHECK(desk.train.k == 3);
  CHECK(desk.train.generated_total == 300);
  CHECK(desk.train.epochs == 20);
  CHECK(desk.paths.dataset_dir.empty());

  const config::PipelineConfig market = config::market_preset();
  CHECK_NOTHROW(config::validate(market));
  CHECK(market.train.epochs == 130);
  CHECK(market.train.batch_size == 32);
  CHECK(market.train.base_lr == 0.01);
  CHECK(market.train.generated_total == 12000);
  CHECK(market.stage1.epochs == 40);
  CHECK(market.stage1.lr == 0.001);
  CHECK(market.gan.epochs == 30);
  CHECK(market.gan.adam_lr == 2e-4);
  CHECK(market.gan.adam_beta1 == 0.5);
  CHECK(market.preprocess.resize_size == 256);
  CHECK(market.preprocess.crop_size == 224);
}

TEST_CASE("validation rejects inconsistent settings") {
  auto broken = [](auto mutate) {
    config::PipelineConfig c;
    mutate(c);
    CHECK_THROWS_AS(config::validate(c), ConfigError);
  };
  broken([](config::PipelineConfig& c) { c.workers = 0; });
  broken([](config::PipelineConfig& c) { c.paths.output_dir = ""; });
  broken([](config::PipelineConfig& c) { c.preprocess.crop_size = 0; });
  broken([](config::PipelineConfig& c) { c.preprocess.resize_size = 10; });
  broken([](config::PipelineConfig& c) { c.preprocess.flip_prob = 2.0; });
  broken([](config::PipelineConfig& c) { c.synth.n_cameras = 1; });
  broken([](config::PipelineConfig& c) {
    c.eval.rerank = true;
    c.eval.rerank_k1 = 3;
    c.eval.rerank_k2 = 3;
  });
  broken([](config::PipelineConfig& c) {
    c.eval.rerank = true;
    c.eval.rerank_lambda = -0.1;
  });
  broken([](config::PipelineConfig& c) { c.train.base_lr = 0.0; });
}

TEST_CASE("the shipped preset files match the built-in presets") {
  auto slurp = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  const std::string root = SLSR_SOURCE_DIR;
  CHECK(slurp(root + "/configs/desk.json") == config::to_json(config::desk_preset()) + "\n");
  CHECK(slurp(root + "/configs/market.json") == config::to_json(config::market_preset()) + "\n");
}

TEST_CASE("config files load from disk") {
  const std::string path = "config_test_tmp.json";
  {
    std::ofstream out(path);
    out << R"({"seed": 5, "train": {"epochs": 2}})";
  }
  const config::PipelineConfig cfg = config::load_file(path);
  CHECK(cfg.seed == 5);
  CHECK(cfg.train.epochs == 2);
  std::remove(path.c_str());

  CHECK_THROWS_AS((void)config::load_file("no_such_config.json"), MissingInputError);
}

}  // TEST_SUITE
