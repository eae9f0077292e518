#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "latentpath/gradcheck.hpp"
#include "latentpath/models.hpp"
#include "latentpath/optim.hpp"
#include "latentpath/rng.hpp"

using namespace latentpath;

namespace {

Tensor random_batch(std::size_t n, std::size_t s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t = Tensor::zeros({n, 3, s, s});
  for (double& v : t.values()) v = rng.next_double();
  return t;
}

void zero_all(std::vector<Tensor> params) {
  for (auto& p : params) std::fill(p.values().begin(), p.values().end(), 0.0);
}

}  // namespace

TEST_CASE("build_models stage counts follow the patch size") {
  ArchConfig config;
  config.patch_size = 256;
  EncoderModel enc256(config, 1);
  CHECK(enc256.stage_count() == 6);  // 256 / 2^6 = 4

  config.patch_size = 64;
  EncoderModel enc64(config, 1);
  CHECK(enc64.stage_count() == 4);  // 64 / 2^4 = 4

  CHECK(ArchConfig{}.latent_dim == 128);

  config.patch_size = 63;
  CHECK_THROWS_AS(EncoderModel(config, 1), ConfigError);
  config.patch_size = 8;
  CHECK_THROWS_AS(EncoderModel(config, 1), ConfigError);
}

TEST_CASE("encode contract") {
  ArchConfig config;
  config.patch_size = 16;
  config.latent_dim = 128;
  EncoderModel encoder(config, 42);

  SECTION("single patch gives [1,128]") {
    const Tensor latents = encoder.encode(random_batch(1, 16, 3));
    CHECK(latents.shape() == std::vector<std::size_t>({1, 128}));
  }
  SECTION("duplicated input rows give identical latent rows") {
    Tensor batch = Tensor::zeros({2, 3, 16, 16});
    Tensor one = random_batch(1, 16, 9);
    std::copy(one.data(), one.data() + one.numel(), batch.data());
    std::copy(one.data(), one.data() + one.numel(), batch.data() + one.numel());
    const Tensor latents = encoder.encode(batch);
    for (std::size_t j = 0; j < 128; ++j) {
      CHECK(latents.data()[j] == latents.data()[128 + j]);
    }
  }
  SECTION("zeroed weights leave only the dense bias") {
    EncoderModel zeroed(config, 7);
    zero_all(zeroed.parameters());
    auto params = zeroed.named_parameters();
    for (auto& named : params) {
      if (named.name == "encoder.dense.bias") {
        for (std::size_t j = 0; j < named.tensor.numel(); ++j) {
          named.tensor.data()[j] = 0.25 * static_cast<double>(j % 7);
        }
      }
    }
    const Tensor latents = zeroed.encode(random_batch(2, 16, 5));
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t j = 0; j < 128; ++j) {
        CHECK(latents.data()[n * 128 + j] == 0.25 * static_cast<double>(j % 7));
      }
    }
  }
  SECTION("wrong spatial size is an input error") {
    CHECK_THROWS_AS(encoder.encode(random_batch(1, 32, 1)), InputError);
  }
}

TEST_CASE("decoder mirrors the encoder across patch sizes") {
  for (std::size_t patch : {16u, 32u, 64u}) {
    ArchConfig config;
    config.patch_size = patch;
    config.latent_dim = 32;
    AutoencoderModel model(config, 11);
    const Tensor batch = random_batch(2, patch, patch);
    const Tensor recon = model.reconstruct(batch);
    CHECK(recon.shape() == batch.shape());
  }
}

TEST_CASE("decode output stays in the sigmoid range") {
  ArchConfig config;
  config.patch_size = 16;
  config.latent_dim = 8;
  AutoencoderModel model(config, 2);
  Rng rng(6);
  Tensor latents = Tensor::zeros({3, 8});
  for (double& v : latents.values()) v = rng.uniform(-5.0, 5.0);
  const Tensor out = model.decode(latents);
  for (double v : out.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  Tensor wrong = Tensor::zeros({1, 9});
  CHECK_THROWS_AS(model.decode(wrong), InputError);
}

TEST_CASE("classify_latent is an affine map") {
  ClassifierHead head(4, 3);
  SECTION("zero weights yield the bias in every row") {
    zero_all(head.parameters());
    head.bias.data()[0] = 0.3;
    head.bias.data()[1] = -0.2;
    head.bias.data()[2] = 0.9;
    Tensor latents = Tensor::from_values({2, 4}, {1, 2, 3, 4, -1, -2, -3, -4});
    const Tensor logits = classify_latent(head, latents);
    for (std::size_t n = 0; n < 2; ++n) {
      CHECK(logits.data()[n * 3 + 0] == 0.3);
      CHECK(logits.data()[n * 3 + 1] == -0.2);
      CHECK(logits.data()[n * 3 + 2] == 0.9);
    }
  }
  SECTION("one-hot weight column recovers the selected coordinate") {
    zero_all(head.parameters());
    head.weights.data()[2 * 3 + 1] = 1.0;  // logit 1 reads latent coordinate 2
    Tensor latents = Tensor::from_values({1, 4}, {5.0, 6.0, 7.0, 8.0});
    CHECK(classify_latent(head, latents).at({0, 1}) == 7.0);
  }
  SECTION("width mismatch") {
    CHECK_THROWS_AS(classify_latent(head, Tensor::zeros({1, 5})), InputError);
  }
}

TEST_CASE("supervised classifier") {
  ArchConfig config;
  config.patch_size = 16;
  config.latent_dim = 8;

  SECTION("gradient reaches the first conv kernel") {
    SupervisedClassifier model(config, 31);
    const Tensor batch = random_batch(2, 16, 8);
    backward(softmax_cross_entropy(model.classify(batch), {0, 2}));
    const Tensor first_kernel = model.encoder().stages()[0].kernel;
    REQUIRE(first_kernel.has_grad());
    double norm = 0.0;
    for (double g : first_kernel.grad()) norm += std::abs(g);
    CHECK(norm > 0.0);
  }
  SECTION("frozen encoder sees no gradient when latents are detached") {
    SupervisedClassifier model(config, 31);
    Tensor latents;
    {
      NoGradGuard guard;
      latents = model.encoder().encode(random_batch(2, 16, 8));
    }
    backward(softmax_cross_entropy(classify_latent(model.head(), latents), {1, 2}));
    CHECK_FALSE(model.encoder().stages()[0].kernel.has_grad());
    CHECK(model.head().weights.has_grad());
  }
  SECTION("same seed bit-identical, different seed differs") {
    SupervisedClassifier a(config, 5), b(config, 5), c(config, 6);
    const Tensor batch = random_batch(1, 16, 2);
    NoGradGuard guard;
    const Tensor la = a.classify(batch);
    const Tensor lb = b.classify(batch);
    const Tensor lc = c.classify(batch);
    for (std::size_t j = 0; j < 3; ++j) CHECK(la.data()[j] == lb.data()[j]);
    bool any_diff = false;
    for (std::size_t j = 0; j < 3; ++j) any_diff = any_diff || la.data()[j] != lc.data()[j];
    CHECK(any_diff);
  }
  SECTION("bundle supervised init is independent of the autoencoder") {
    const ModelBundle bundle = build_models(config, 77);
    const auto ae_kernel = bundle.autoencoder.encoder().stages()[0].kernel;
    const auto sup_kernel = bundle.supervised.encoder().stages()[0].kernel;
    bool any_diff = false;
    for (std::size_t j = 0; j < ae_kernel.numel(); ++j) {
      any_diff = any_diff || ae_kernel.data()[j] != sup_kernel.data()[j];
    }
    CHECK(any_diff);
  }
}

TEST_CASE("checkpoint metadata rebuilds the architecture") {
  ArchConfig config;
  config.patch_size = 32;
  config.latent_dim = 16;
  config.channel_cap = 64;
  config.target_stain = TargetStain::CrossStain;
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "lp_model_meta.lpth";
  AutoencoderModel model(config, 9);
  save_model(path, model, config);

  const auto blocks = load_checkpoint(path);
  const ArchConfig loaded = arch_from_blocks(blocks);
  CHECK(loaded.patch_size == 32);
  CHECK(loaded.latent_dim == 16);
  CHECK(loaded.channel_cap == 64);
  CHECK(loaded.target_stain == TargetStain::CrossStain);

  AutoencoderModel rebuilt(loaded, 0);
  load_parameters(blocks, rebuilt.named_parameters());
  const Tensor batch = random_batch(1, 32, 4);
  NoGradGuard guard;
  const Tensor a = model.reconstruct(batch);
  const Tensor b = rebuilt.reconstruct(batch);
  for (std::size_t j = 0; j < a.numel(); ++j) CHECK(a.data()[j] == b.data()[j]);
  std::filesystem::remove(path);
}

TEST_CASE("end-to-end gradients on the tiny model (sampled coordinates)") {
  ArchConfig config;
  config.patch_size = 16;
  config.latent_dim = 8;
  const Tensor batch = random_batch(2, 16, 123);
  const std::vector<int> labels = {0, 2};

  SupervisedClassifier model(config, 55);
  auto params = model.parameters();
  zero_grads(params);
  backward(softmax_cross_entropy(model.classify(batch), labels));

  Rng rng(321);
  const double eps = 1e-5;
  for (auto& p : params) {
    REQUIRE(p.has_grad());
    for (int probe = 0; probe < 4; ++probe) {
      const std::size_t i = rng.next_index(p.numel());
      const double saved = p.data()[i];
      double up, down;
      {
        NoGradGuard guard;
        p.data()[i] = saved + eps;
        up = softmax_cross_entropy(model.classify(batch), labels).item();
        p.data()[i] = saved - eps;
        down = softmax_cross_entropy(model.classify(batch), labels).item();
        p.data()[i] = saved;
      }
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p.grad()[i];
      const double rel = std::abs(analytic - numeric) /
                         std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      CHECK(rel < 1e-3);
    }
  }
}
