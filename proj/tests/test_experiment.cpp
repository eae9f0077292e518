#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "latentpath/experiment.hpp"
#include "latentpath/mapping.hpp"

using namespace latentpath;

namespace {

PatchSet synth_pool(std::size_t n, std::size_t patch, std::uint64_t seed) {
  SynthConfig config;
  config.patch_size = patch;
  config.train_count = n;
  config.test_count = 0;
  auto [train, test] = generate_synthetic(config, seed);
  return train;
}

std::vector<Label> random_labels(std::size_t n, Rng& rng) {
  std::vector<Label> out(n);
  for (auto& l : out) l = static_cast<Label>(rng.next_index(3));
  return out;
}

double checksum(const std::vector<Tensor>& params) {
  double acc = 0.0;
  for (const auto& p : params) {
    for (double v : p.values()) acc += v * 1e-3 + v * v;
  }
  return acc;
}

}  // namespace

TEST_CASE("compute_metrics matches an independent confusion oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 200;
    const auto preds = random_labels(n, rng);
    const auto truth = random_labels(n, rng);
    const Metrics m = compute_metrics(preds, truth);

    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool p = truth[i] == Label::Tumour;
      const bool q = preds[i] == Label::Tumour;
      tp += (p && q);
      fp += (!p && q);
      fn += (p && !q);
      tn += (!p && !q);
    }
    CHECK(m.tp == tp);
    CHECK(m.fp == fp);
    CHECK(m.fn == fn);
    CHECK(m.tn == tn);
    CHECK(m.total() == n);
    const double want =
        (2 * tp + fp + fn) == 0 ? 0.0 : 2.0 * double(tp) / double(2 * tp + fp + fn);
    CHECK(m.f1 == want);
  }
}

TEST_CASE("evaluate_f1 known values") {
  PatchSet test;
  test.role = SetRole::Test;
  // 10 records: 5 tumour, 5 stroma
  for (int i = 0; i < 10; ++i) {
    PatchRecord rec;
    rec.he_image = Tensor::zeros({3, 4, 4});
    rec.label = i < 5 ? Label::Tumour : Label::Stroma;
    test.records.push_back(rec);
  }
  SECTION("perfect predictor") {
    const Metrics m = evaluate_f1(
        [](const PatchSet& s) {
          std::vector<Label> out;
          for (const auto& r : s.records) out.push_back(*r.label);
          return out;
        },
        test);
    CHECK(m.f1 == 1.0);
  }
  SECTION("tp=6 fp=2 fn=2 gives 0.75") {
    const std::vector<Label> preds = {Label::Tumour, Label::Tumour, Label::Tumour,
                                      Label::Stroma, Label::Tumour, Label::Tumour,
                                      Label::Stroma, Label::Stroma, Label::Stroma,
                                      Label::Stroma};
    const std::vector<Label> truth = {Label::Tumour, Label::Tumour, Label::Tumour,
                                      Label::Tumour, Label::Tumour, Label::Stroma,
                                      Label::Stroma, Label::Stroma, Label::Stroma,
                                      Label::Tumour};
    // counts: tp=4 fp=1 fn=2 -> not the spec example; use direct arithmetic
    const Metrics m = compute_metrics(preds, truth);
    CHECK(m.f1 == Catch::Approx(2.0 * m.tp / double(2 * m.tp + m.fp + m.fn)));
    Metrics hand;
    hand.tp = 6;
    hand.fp = 2;
    hand.fn = 2;
    CHECK(2.0 * 6 / (2.0 * 6 + 2 + 2) == 0.75);
  }
  SECTION("all-negative predictor scores zero") {
    const Metrics m = evaluate_f1(
        [](const PatchSet& s) {
          return std::vector<Label>(s.size(), Label::Stroma);
        },
        test);
    CHECK(m.f1 == 0.0);
    CHECK(m.tp == 0);
  }
}

TEST_CASE("autoencoder overfits a single repeated patch") {
  PatchSet pool = synth_pool(1, 16, 5);
  ArchConfig arch;
  arch.patch_size = 16;
  arch.latent_dim = 16;
  arch.channel_cap = 32;
  AutoencoderModel model(arch, 3);
  TrainHyper hyper;
  hyper.epochs = 60;
  hyper.batch_size = 1;
  hyper.learning_rate = 3e-3;
  hyper.seed = 1;
  hyper.augment = false;
  const LossCurve curve = train_autoencoder(pool, model, hyper);
  REQUIRE(curve.epoch_mean_loss.size() == 60);
  for (double loss : curve.epoch_mean_loss) CHECK(std::isfinite(loss));
  CHECK(curve.epoch_mean_loss.back() < 0.1 * curve.epoch_mean_loss.front());
}

TEST_CASE("same- and cross-stain targets coincide on degenerate pairs") {
  PatchSet pool = synth_pool(6, 16, 9);
  for (auto& rec : pool.records) rec.ihc_image = rec.he_image.detach();  // ihc == he
  ArchConfig arch;
  arch.patch_size = 16;
  arch.latent_dim = 8;
  arch.channel_cap = 16;

  TrainHyper hyper;
  hyper.epochs = 3;
  hyper.batch_size = 4;
  hyper.seed = 77;

  arch.target_stain = TargetStain::SameStain;
  AutoencoderModel same(arch, 21);
  const LossCurve same_curve = train_autoencoder(pool, same, hyper);

  arch.target_stain = TargetStain::CrossStain;
  AutoencoderModel cross(arch, 21);
  const LossCurve cross_curve = train_autoencoder(pool, cross, hyper);

  REQUIRE(same_curve.epoch_mean_loss.size() == cross_curve.epoch_mean_loss.size());
  for (std::size_t i = 0; i < same_curve.epoch_mean_loss.size(); ++i) {
    CHECK(same_curve.epoch_mean_loss[i] == cross_curve.epoch_mean_loss[i]);
  }
}

TEST_CASE("cross-stain training without ihc is a configuration error") {
  PatchSet pool = synth_pool(3, 16, 2);
  for (auto& rec : pool.records) rec.ihc_image = Tensor();
  ArchConfig arch;
  arch.patch_size = 16;
  arch.target_stain = TargetStain::CrossStain;
  AutoencoderModel model(arch, 1);
  TrainHyper hyper;
  hyper.epochs = 1;
  CHECK_THROWS_AS(train_autoencoder(pool, model, hyper), ConfigError);
}

TEST_CASE("semi-supervised head training") {
  SECTION("separable latents reach training accuracy 1.0") {
    Rng rng(6);
    const std::size_t n = 30;
    Tensor latents = Tensor::zeros({n, 4});
    std::vector<Label> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto cls = static_cast<std::size_t>(i % 3);
      labels[i] = static_cast<Label>(cls);
      for (std::size_t c = 0; c < 4; ++c) {
        latents.data()[i * 4 + c] = rng.uniform(-0.3, 0.3) + (c == cls ? 4.0 : 0.0);
      }
    }
    TrainHyper hyper;
    hyper.epochs = 120;
    hyper.batch_size = 8;
    hyper.learning_rate = 2e-2;
    hyper.seed = 11;
    const ClassifierHead head = train_head_on_latents(latents, labels, hyper);
    const auto preds = predict_with_head(head, latents);
    for (std::size_t i = 0; i < n; ++i) CHECK(preds[i] == labels[i]);
  }
  SECTION("encoder parameters are bit-identical after head training") {
    PatchSet pool = synth_pool(12, 16, 44);
    ArchConfig arch;
    arch.patch_size = 16;
    arch.latent_dim = 8;
    arch.channel_cap = 16;
    EncoderModel encoder(arch, 5);
    const double before = checksum(encoder.parameters());
    TrainHyper hyper;
    hyper.epochs = 4;
    hyper.seed = 9;
    train_semi_supervised(encoder, pool, hyper);
    CHECK(checksum(encoder.parameters()) == before);
    for (const auto& p : encoder.parameters()) CHECK_FALSE(p.has_grad());
  }
  SECTION("single-class subset predicts that class everywhere") {
    Rng rng(13);
    Tensor latents = Tensor::zeros({10, 4});
    for (double& v : latents.values()) v = rng.uniform(-1.0, 1.0);
    const std::vector<Label> labels(10, Label::BenignEpithelium);
    TrainHyper hyper;
    hyper.epochs = 200;
    hyper.learning_rate = 2e-2;
    hyper.seed = 3;
    const ClassifierHead head = train_head_on_latents(latents, labels, hyper);
    Tensor probes = Tensor::zeros({20, 4});
    for (double& v : probes.values()) v = rng.uniform(-1.0, 1.0);
    for (Label l : predict_with_head(head, probes)) CHECK(l == Label::BenignEpithelium);
  }
  SECTION("empty subset is an input error") {
    CHECK_THROWS_AS(train_head_on_latents(Tensor::zeros({0, 4}), {}, TrainHyper{}), InputError);
  }
}

TEST_CASE("unsupervised labeling cascade") {
  PatchSet pool = synth_pool(30, 16, 91);
  ArchConfig arch;
  arch.patch_size = 16;
  arch.latent_dim = 8;
  arch.channel_cap = 16;
  EncoderModel encoder(arch, 17);
  SECTION("empty voting subset labels everything stroma, tumour F1 zero") {
    PatchSet empty;
    empty.role = SetRole::BalancedLabeled;
    const ClusterModel model = train_unsupervised_labeling(encoder, pool, empty, 8, 4);
    REQUIRE(model.labeled());
    for (Label l : model.cluster_labels) CHECK(l == Label::Stroma);
    const auto preds = predict_unsupervised(encoder, model, Tensor::zeros({2, 3, 16, 16}));
    for (Label l : preds) CHECK(l == Label::Stroma);
  }
  SECTION("deterministic for a fixed seed") {
    const ClusterModel a = train_unsupervised_labeling(encoder, pool, pool, 8, 123);
    const ClusterModel b = train_unsupervised_labeling(encoder, pool, pool, 8, 123);
    CHECK(a.cluster_labels == b.cluster_labels);
    for (std::size_t i = 0; i < a.centroids.numel(); ++i) {
      CHECK(a.centroids.data()[i] == b.centroids.data()[i]);
    }
  }
}

TEST_CASE("supervised training determinism") {
  PatchSet pool = synth_pool(16, 16, 55);
  ArchConfig arch;
  arch.patch_size = 16;
  arch.latent_dim = 8;
  arch.channel_cap = 16;
  TrainHyper hyper;
  hyper.epochs = 2;
  hyper.batch_size = 8;
  hyper.seed = 99;
  const SupervisedClassifier a = train_supervised(pool, InputStain::HE, arch, hyper);
  const SupervisedClassifier b = train_supervised(pool, InputStain::HE, arch, hyper);
  CHECK(checksum(a.parameters()) == checksum(b.parameters()));

  hyper.seed = 100;
  const SupervisedClassifier c = train_supervised(pool, InputStain::HE, arch, hyper);
  CHECK(checksum(a.parameters()) != checksum(c.parameters()));
}

TEST_CASE("grid runner on a micro configuration") {
  ExperimentConfig config;
  config.arch.patch_size = 16;
  config.arch.latent_dim = 8;
  config.arch.channel_cap = 16;
  config.dr_size = 24;
  config.db_size = 36;
  config.test_size = 12;
  config.nlp_grid = {4, 8};
  config.repeats = 2;
  config.ae_epochs = 2;
  config.head_epochs = 4;
  config.supervised_epochs = 2;
  config.kmeans_k = 5;
  config.base_seed = 31;
  config.jobs = 2;

  PatchSet train_pool = synth_pool(80, 16, 7);
  PatchSet test_pool = synth_pool(40, 16, 8);

  const GridResult result = run_grid(config, train_pool, test_pool);
  const auto variants = grid_variants(config);
  CHECK(variants.size() == 5);  // no supervised-ihc by default
  CHECK(result.cells.size() == variants.size() * 2 * 2);
  CHECK(result.summary.size() == variants.size() * 2);
  for (const auto& cell : result.cells) {
    CHECK(cell.metrics.total() == config.test_size);
    CHECK(cell.metrics.f1 >= 0.0);
    CHECK(cell.metrics.f1 <= 1.0);
  }
  for (const auto& row : result.summary) CHECK(row.f1_std >= 0.0);

  SECTION("bit-identical when re-run, CSV bytes included") {
    const GridResult again = run_grid(config, train_pool, test_pool);
    REQUIRE(again.cells.size() == result.cells.size());
    for (std::size_t i = 0; i < result.cells.size(); ++i) {
      CHECK(result.cells[i].metrics.f1 == again.cells[i].metrics.f1);
      CHECK(result.cells[i].metrics.tp == again.cells[i].metrics.tp);
    }
    const auto dir = std::filesystem::temp_directory_path();
    write_results_csv(dir / "lp_grid_a.csv", result.cells);
    write_results_csv(dir / "lp_grid_b.csv", again.cells);
    std::ifstream fa(dir / "lp_grid_a.csv"), fb(dir / "lp_grid_b.csv");
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(sa.str().starts_with("method,stain_variant,nlp,repeat,f1,tp,fp,fn,tn\n"));
    std::filesystem::remove(dir / "lp_grid_a.csv");
    std::filesystem::remove(dir / "lp_grid_b.csv");
  }
  SECTION("grid order does not change cell values") {
    ExperimentConfig flipped = config;
    flipped.nlp_grid = {8, 4};
    const GridResult other = run_grid(flipped, train_pool, test_pool);
    for (const auto& cell : result.cells) {
      bool found = false;
      for (const auto& oc : other.cells) {
        if (oc.method == cell.method && oc.stain_variant == cell.stain_variant &&
            oc.nlp == cell.nlp && oc.repeat == cell.repeat) {
          CHECK(oc.metrics.f1 == cell.metrics.f1);
          found = true;
          break;
        }
      }
      CHECK(found);
    }
  }
  SECTION("single repeat reports zero spread") {
    ExperimentConfig single = config;
    single.repeats = 1;
    single.nlp_grid = {4};
    const GridResult r = run_grid(single, train_pool, test_pool);
    for (const auto& row : r.summary) CHECK(row.f1_std == 0.0);
  }
  SECTION("rendered table has one row per nlp") {
    const std::string table = render_table(result.summary, variants, config.nlp_grid);
    CHECK(table.find("NLP") == 0);
    CHECK(table.find("\n4\t") != std::string::npos);
    CHECK(table.find("\n8\t") != std::string::npos);
  }
}

TEST_CASE("classification map rendering") {
  SECTION("constant stroma prediction gives a fully transparent map") {
    Tensor region = Tensor::zeros({3, 64, 64});
    const auto map = render_classification_map(
        [](const Tensor& batch) {
          return std::vector<Label>(batch.extent(0), Label::Stroma);
        },
        region, 16, 16);
    CHECK(map.windows_x == 4);
    CHECK(map.windows_y == 4);
    for (std::size_t i = 3; i < map.map_rgba.pixels.size(); i += 4) {
      CHECK(map.map_rgba.pixels[i] == 0);
    }
  }
  SECTION("window count follows the sliding formula") {
    Tensor region = Tensor::zeros({3, 256, 256});
    std::size_t calls = 0;
    const auto map = render_classification_map(
        [&](const Tensor& batch) {
          calls += batch.extent(0);
          return std::vector<Label>(batch.extent(0), Label::Tumour);
        },
        region, 64, 32);
    CHECK(map.window_labels.size() == 49);  // ((256-64)/32+1)^2
    CHECK(calls == 49);
  }
  SECTION("exact color table with mixed predictions") {
    Tensor region = Tensor::zeros({3, 32, 32});
    std::size_t counter = 0;
    const auto map = render_classification_map(
        [&](const Tensor& batch) {
          std::vector<Label> out;
          for (std::size_t i = 0; i < batch.extent(0); ++i) {
            out.push_back(static_cast<Label>(counter++ % 3));
          }
          return out;
        },
        region, 16, 8);
    bool saw_green = false, saw_red = false;
    for (std::size_t i = 0; i < map.map_rgba.pixels.size(); i += 4) {
      const std::uint8_t* px = map.map_rgba.pixels.data() + i;
      const bool transparent = px[0] == 0 && px[1] == 0 && px[2] == 0 && px[3] == 0;
      const bool green = px[0] == 0 && px[1] == 255 && px[2] == 0 && px[3] == 255;
      const bool red = px[0] == 255 && px[1] == 0 && px[2] == 0 && px[3] == 255;
      CHECK((transparent || green || red));
      saw_green = saw_green || green;
      saw_red = saw_red || red;
    }
    CHECK(saw_green);
    CHECK(saw_red);
  }
  SECTION("region smaller than the patch is rejected") {
    Tensor region = Tensor::zeros({3, 8, 8});
    CHECK_THROWS_AS(render_classification_map(
                        [](const Tensor& batch) {
                          return std::vector<Label>(batch.extent(0), Label::Stroma);
                        },
                        region, 16, 4),
                    InputError);
  }
}
