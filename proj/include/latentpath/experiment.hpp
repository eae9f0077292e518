#pragma once

// The three training procedures, the labeled-set-size grid with repeats,
// and the results table. Every cell derives its seeds from
// (method, stain variant, nlp, repeat), so cells are independent of
// execution order and may run on worker threads.

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "latentpath/augment.hpp"
#include "latentpath/common.hpp"
#include "latentpath/data.hpp"
#include "latentpath/kmeans.hpp"
#include "latentpath/metrics.hpp"
#include "latentpath/models.hpp"
#include "latentpath/optim.hpp"
#include "latentpath/rng.hpp"
#include "latentpath/synthetic.hpp"
#include "latentpath/tensor.hpp"

namespace latentpath {

enum class Method { Unsupervised, SemiSupervised, Supervised };
enum class InputStain { HE, IHC };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::Unsupervised: return "unsupervised";
    case Method::SemiSupervised: return "semi-supervised";
    case Method::Supervised: return "supervised";
  }
  return "?";
}

struct TrainHyper {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  bool augment = true;
  AugmentRanges augment_ranges;
};

struct LossCurve {
  std::vector<double> epoch_mean_loss;
};

namespace detail {

inline Tensor stack_images(const std::vector<Tensor>& images) {
  const std::size_t n = images.size();
  const std::size_t s = images[0].extent(1);
  Tensor batch = Tensor::zeros({n, 3, s, s});
  const std::size_t stride = 3 * s * s;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(images[i].data(), images[i].data() + stride, batch.data() + i * stride);
  }
  return batch;
}

}  // namespace detail

// Latents of every record's H&E image, computed without graph recording.
inline Tensor encode_all(const EncoderModel& encoder, const PatchSet& set,
                         std::size_t batch_size = 64) {
  NoGradGuard guard;
  const std::size_t latent_dim = encoder.config().latent_dim;
  Tensor out = Tensor::zeros({set.size(), latent_dim});
  std::vector<Tensor> chunk;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, set.size() - start);
    chunk.clear();
    for (std::size_t i = 0; i < count; ++i) chunk.push_back(set.records[start + i].he_image);
    const Tensor latents = encoder.encode(detail::stack_images(chunk));
    std::copy(latents.data(), latents.data() + count * latent_dim,
              out.data() + start * latent_dim);
  }
  return out;
}

// Autoencoder training on the unlabeled pool. The reconstruction input is
// the augmented (flipped + jittered) H&E patch; the target is the
// flip-matched clean H&E patch (SameStain) or the flip-matched IHC pair
// image (CrossStain).
inline LossCurve train_autoencoder(const PatchSet& d_r, AutoencoderModel& model,
                                   const TrainHyper& hyper) {
  if (d_r.size() == 0) throw InputError("train_autoencoder: empty training set");
  const bool cross = model.target_stain() == TargetStain::CrossStain;
  if (cross) {
    for (std::size_t i = 0; i < d_r.size(); ++i) {
      if (!d_r.records[i].has_ihc()) {
        throw ConfigError("train_autoencoder: cross-stain target but record " +
                          std::to_string(i) + " has no ihc image");
      }
    }
  }
  auto params = model.parameters();
  OptimizerState opt = OptimizerState::adam(hyper.learning_rate);
  LossCurve curve;
  std::vector<std::size_t> order(d_r.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Tensor> inputs, targets;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    Rng shuffle_rng(hash_seed(hyper.seed, 0xe0, epoch));
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t count = std::min(hyper.batch_size, order.size() - start);
      inputs.clear();
      targets.clear();
      for (std::size_t i = 0; i < count; ++i) {
        const PatchRecord& rec = d_r.records[order[start + i]];
        const AugmentParams aug_params =
            hyper.augment
                ? sample_augment_params(hyper.augment_ranges,
                                        hash_seed(hyper.seed, 0xa6, epoch, order[start + i]))
                : AugmentParams::identity();
        const PatchRecord augmented = augment(rec, aug_params);
        inputs.push_back(augmented.he_image);
        targets.push_back(cross ? augmented.ihc_image
                                : flipped_copy(rec.he_image, aug_params.flip_h,
                                               aug_params.flip_v));
      }
      Tensor input = detail::stack_images(inputs);
      Tensor target = detail::stack_images(targets);
      zero_grads(params);
      Tensor loss = mse_loss(model.reconstruct(input), target);
      backward(loss);
      optimizer_step(params, opt);
      loss_sum += loss.item();
      ++batches;
    }
    curve.epoch_mean_loss.push_back(loss_sum / static_cast<double>(batches));
  }
  return curve;
}

// Single-layer classifier trained on fixed latent vectors with minibatch
// cross-entropy. The latents are leaves, so nothing upstream can move.
inline ClassifierHead train_head_on_latents(const Tensor& latents,
                                            const std::vector<Label>& labels,
                                            const TrainHyper& hyper) {
  detail::require_rank(latents, 2, "train_head latents");
  const std::size_t n = latents.extent(0), dim = latents.extent(1);
  if (n == 0) throw InputError("train_head_on_latents: empty subset");
  if (labels.size() != n) throw InputError("train_head_on_latents: label count mismatch");
  ClassifierHead head(dim, hash_seed(hyper.seed, 0x4ead));
  auto params = head.parameters();
  OptimizerState opt = OptimizerState::adam(hyper.learning_rate);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    Rng shuffle_rng(hash_seed(hyper.seed, 0xe1, epoch));
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += hyper.batch_size) {
      const std::size_t count = std::min(hyper.batch_size, n - start);
      Tensor batch = Tensor::zeros({count, dim});
      std::vector<int> batch_labels(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t idx = order[start + i];
        std::copy(latents.data() + idx * dim, latents.data() + (idx + 1) * dim,
                  batch.data() + i * dim);
        batch_labels[i] = static_cast<int>(labels[idx]);
      }
      zero_grads(params);
      backward(softmax_cross_entropy(classify_latent(head, batch), batch_labels));
      optimizer_step(params, opt);
    }
  }
  return head;
}

// Frozen-encoder wrapper: latents are computed once without recording, so
// encoder parameters stay bit-identical through head training.
inline ClassifierHead train_semi_supervised(const EncoderModel& encoder,
                                            const PatchSet& d_b_subset,
                                            const TrainHyper& hyper) {
  if (d_b_subset.size() == 0) throw InputError("train_semi_supervised: empty subset");
  if (!d_b_subset.fully_labeled()) {
    throw InputError("train_semi_supervised: subset must be labeled");
  }
  const Tensor latents = encode_all(encoder, d_b_subset);
  std::vector<Label> labels;
  labels.reserve(d_b_subset.size());
  for (const auto& rec : d_b_subset.records) labels.push_back(*rec.label);
  return train_head_on_latents(latents, labels, hyper);
}

// k-means over the unlabeled pool's latents, then majority voting with the
// labeled subset's latents.
inline ClusterModel train_unsupervised_labeling(const EncoderModel& encoder,
                                                const PatchSet& d_r,
                                                const PatchSet& d_b_subset, std::size_t k,
                                                std::uint64_t seed,
                                                std::size_t max_iter = 300,
                                                double tol = 1e-6) {
  if (!d_b_subset.fully_labeled()) {
    throw InputError("train_unsupervised_labeling: voting subset must be labeled");
  }
  const Tensor latents_r = encode_all(encoder, d_r);
  const ClusterModel fitted = kmeans_fit(latents_r, k, seed, max_iter, tol);
  const Tensor latents_b = encode_all(encoder, d_b_subset);
  std::vector<Label> labels;
  for (const auto& rec : d_b_subset.records) labels.push_back(*rec.label);
  return label_clusters(fitted, latents_b, labels);
}

// End-to-end supervised training from fresh initialization.
inline SupervisedClassifier train_supervised(const PatchSet& d_b_subset, InputStain stain,
                                             const ArchConfig& arch, const TrainHyper& hyper) {
  if (d_b_subset.size() == 0) throw InputError("train_supervised: empty subset");
  if (!d_b_subset.fully_labeled()) throw InputError("train_supervised: subset must be labeled");
  if (stain == InputStain::IHC) {
    for (std::size_t i = 0; i < d_b_subset.size(); ++i) {
      if (!d_b_subset.records[i].has_ihc()) {
        throw ConfigError("train_supervised: ihc input but record " + std::to_string(i) +
                          " has no ihc image");
      }
    }
  }
  SupervisedClassifier model(arch, hash_seed(hyper.seed, 0x50b));
  auto params = model.parameters();
  OptimizerState opt = OptimizerState::adam(hyper.learning_rate);
  std::vector<std::size_t> order(d_b_subset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Tensor> images;
  std::vector<int> labels;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    Rng shuffle_rng(hash_seed(hyper.seed, 0xe2, epoch));
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t count = std::min(hyper.batch_size, order.size() - start);
      images.clear();
      labels.clear();
      for (std::size_t i = 0; i < count; ++i) {
        const PatchRecord& rec = d_b_subset.records[order[start + i]];
        const AugmentParams aug_params =
            hyper.augment
                ? sample_augment_params(hyper.augment_ranges,
                                        hash_seed(hyper.seed, 0xa7, epoch, order[start + i]))
                : AugmentParams::identity();
        // color jitter applies to the H&E input; the IHC input only flips
        const PatchRecord augmented = augment(rec, aug_params);
        images.push_back(stain == InputStain::HE ? augmented.he_image : augmented.ihc_image);
        labels.push_back(static_cast<int>(*rec.label));
      }
      zero_grads(params);
      backward(softmax_cross_entropy(model.classify(detail::stack_images(images)), labels));
      optimizer_step(params, opt);
    }
  }
  return model;
}

// argmax over logits; class order fixed as {0=stroma, 1=benign, 2=tumour}
inline std::vector<Label> argmax_labels(const Tensor& logits) {
  const std::size_t n = logits.extent(0), k = logits.extent(1);
  std::vector<Label> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data() + i * k;
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[i] = static_cast<Label>(best);
  }
  return out;
}

inline std::vector<Label> predict_with_head(const ClassifierHead& head, const Tensor& latents) {
  NoGradGuard guard;
  return argmax_labels(classify_latent(head, latents));
}

inline std::vector<Label> predict_supervised(const SupervisedClassifier& model,
                                             const PatchSet& set, InputStain stain,
                                             std::size_t batch_size = 64) {
  NoGradGuard guard;
  std::vector<Label> out;
  out.reserve(set.size());
  std::vector<Tensor> chunk;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, set.size() - start);
    chunk.clear();
    for (std::size_t i = 0; i < count; ++i) {
      const PatchRecord& rec = set.records[start + i];
      if (stain == InputStain::IHC && !rec.has_ihc()) {
        throw ConfigError("predict_supervised: ihc input missing on record");
      }
      chunk.push_back(stain == InputStain::HE ? rec.he_image : rec.ihc_image);
    }
    for (Label l : argmax_labels(model.classify(detail::stack_images(chunk)))) out.push_back(l);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grid runner
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  ArchConfig arch;
  std::size_t dr_size = 2000;
  std::size_t db_size = 2000;
  std::size_t test_size = 1000;
  std::vector<std::size_t> nlp_grid = {30, 100, 300, 1000, 2000};
  std::size_t repeats = 5;
  std::uint64_t base_seed = 42;
  std::size_t ae_epochs = 30;
  std::size_t head_epochs = 100;
  std::size_t supervised_epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t kmeans_k = 50;
  std::size_t kmeans_max_iter = 300;
  double kmeans_tol = 1e-6;
  bool include_cross_stain = true;
  bool include_supervised_ihc = false;
  std::size_t jobs = 1;
  std::array<double, class_count> ratios = default_class_ratios;
  AugmentRanges augment_ranges;
  SynthConfig synth;
};

// One column of the results table.
struct MethodVariant {
  Method method;
  TargetStain target = TargetStain::SameStain;  // autoencoder methods
  InputStain input = InputStain::HE;            // supervised
  std::string stain_code;                       // he_to_he / he_to_ihc / he / ihc
  std::string title;                            // table header
};

inline std::vector<MethodVariant> grid_variants(const ExperimentConfig& config) {
  std::vector<MethodVariant> variants;
  variants.push_back({Method::SemiSupervised, TargetStain::SameStain, InputStain::HE,
                      "he_to_he", "Semi-SV H&E>H&E"});
  variants.push_back({Method::Unsupervised, TargetStain::SameStain, InputStain::HE, "he_to_he",
                      "Un-SV H&E>H&E"});
  if (config.include_cross_stain) {
    variants.push_back({Method::SemiSupervised, TargetStain::CrossStain, InputStain::HE,
                        "he_to_ihc", "Semi-SV H&E>IHC"});
    variants.push_back({Method::Unsupervised, TargetStain::CrossStain, InputStain::HE,
                        "he_to_ihc", "Un-SV H&E>IHC"});
  }
  variants.push_back(
      {Method::Supervised, TargetStain::SameStain, InputStain::HE, "he", "SV H&E"});
  if (config.include_supervised_ihc) {
    variants.push_back(
        {Method::Supervised, TargetStain::SameStain, InputStain::IHC, "ihc", "SV IHC"});
  }
  return variants;
}

struct CellResult {
  std::string method;
  std::string stain_variant;
  std::size_t nlp = 0;
  std::size_t repeat = 0;
  Metrics metrics;
};

struct SummaryRow {
  std::string method;
  std::string stain_variant;
  std::size_t nlp = 0;
  double f1_mean = 0.0;
  double f1_std = 0.0;
};

struct GridResult {
  std::vector<CellResult> cells;
  std::vector<SummaryRow> summary;
  std::map<std::string, LossCurve> ae_losses;       // keyed by stain code
  std::map<std::string, double> stage_seconds;
  std::map<std::string, std::uint64_t> resolved_seeds;
};

namespace detail {

// Seed tags: one per independent stream in a grid run.
inline constexpr std::uint64_t seed_tag_dr = 0xd7;
inline constexpr std::uint64_t seed_tag_db = 0xdb;
inline constexpr std::uint64_t seed_tag_test = 0x7e;
inline constexpr std::uint64_t seed_tag_ae = 0xae;
inline constexpr std::uint64_t seed_tag_subset = 0x5b;
inline constexpr std::uint64_t seed_tag_cell = 0xce;

inline double sample_std(const std::vector<double>& values, double mean) {
  if (values.size() < 2) return 0.0;  // single repeat: spread 0 by convention
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

struct StageTimer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

}  // namespace detail

// Balanced subset as row indices into the source set (shared across methods
// for a given (nlp, repeat)).
inline std::vector<std::size_t> balanced_subset_indices(
    const PatchSet& source, std::size_t n, const std::array<double, class_count>& ratios,
    std::uint64_t seed) {
  std::array<std::vector<std::size_t>, class_count> pools;
  for (std::size_t i = 0; i < source.size(); ++i) {
    pools[static_cast<std::size_t>(*source.records[i].label)].push_back(i);
  }
  const auto counts = balanced_counts(n, ratios);
  for (std::size_t c = 0; c < class_count; ++c) {
    if (counts[c] > pools[c].size()) {
      throw InputError(std::string("balanced subset: class '") +
                       label_name(static_cast<Label>(c)) + "' has " +
                       std::to_string(pools[c].size()) + " members, need " +
                       std::to_string(counts[c]));
    }
  }
  Rng rng(hash_seed(seed));
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t c = 0; c < class_count; ++c) {
    auto& pool = pools[c];
    for (std::size_t i = 0; i < counts[c]; ++i) {
      std::swap(pool[i], pool[i + rng.next_index(pool.size() - i)]);
      out.push_back(pool[i]);
    }
  }
  return out;
}

inline Tensor gather_rows(const Tensor& matrix, const std::vector<std::size_t>& rows) {
  const std::size_t d = matrix.extent(1);
  Tensor out = Tensor::zeros({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(matrix.data() + rows[i] * d, matrix.data() + (rows[i] + 1) * d,
              out.data() + i * d);
  }
  return out;
}

// Runs every (variant, nlp, repeat) cell. Autoencoders are pretrained once
// per stain variant and shared; supervised cells train from scratch.
inline GridResult run_grid(const ExperimentConfig& config, const PatchSet& train_pool,
                           const PatchSet& test_pool) {
  GridResult result;
  detail::StageTimer total_timer;

  // datasets
  const std::uint64_t dr_seed = hash_seed(config.base_seed, detail::seed_tag_dr);
  const std::uint64_t db_seed = hash_seed(config.base_seed, detail::seed_tag_db);
  const std::uint64_t test_seed = hash_seed(config.base_seed, detail::seed_tag_test);
  result.resolved_seeds["d_r"] = dr_seed;
  result.resolved_seeds["d_b"] = db_seed;
  result.resolved_seeds["test"] = test_seed;
  const PatchSet d_r = sample_random(train_pool, config.dr_size, dr_seed);
  PatchSet d_b = sample_balanced(train_pool, config.db_size, config.ratios, db_seed);
  PatchSet test = sample_balanced(test_pool, config.test_size, config.ratios, test_seed);
  test.role = SetRole::Test;

  const auto variants = grid_variants(config);
  const bool need_same =
      std::any_of(variants.begin(), variants.end(), [](const MethodVariant& v) {
        return v.method != Method::Supervised && v.target == TargetStain::SameStain;
      });
  const bool need_cross =
      std::any_of(variants.begin(), variants.end(), [](const MethodVariant& v) {
        return v.method != Method::Supervised && v.target == TargetStain::CrossStain;
      });

  // one autoencoder pretraining per stain variant, reused by every cell;
  // map slots are created up front so both pretrains can run on threads
  std::map<std::string, AutoencoderModel> autoencoders;
  std::map<std::string, Tensor> latents_r, latents_b, latents_test;
  for (const char* code : {"he_to_he", "he_to_ihc"}) {
    if ((std::string(code) == "he_to_he" && need_same) ||
        (std::string(code) == "he_to_ihc" && need_cross)) {
      autoencoders[code];
      result.ae_losses[code];
      result.stage_seconds["pretrain_" + std::string(code)] = 0.0;
      result.resolved_seeds["autoencoder_" + std::string(code)] = 0;
    }
  }
  auto pretrain = [&](TargetStain target, const std::string& code) {
    detail::StageTimer timer;
    ArchConfig arch = config.arch;
    arch.target_stain = target;
    const std::uint64_t seed =
        hash_seed(config.base_seed, detail::seed_tag_ae, target == TargetStain::CrossStain);
    result.resolved_seeds.at("autoencoder_" + code) = seed;
    AutoencoderModel model(arch, seed);
    TrainHyper hyper;
    hyper.epochs = config.ae_epochs;
    hyper.batch_size = config.batch_size;
    hyper.learning_rate = config.learning_rate;
    hyper.seed = hash_seed(seed, 1);
    hyper.augment_ranges = config.augment_ranges;
    result.ae_losses.at(code) = train_autoencoder(d_r, model, hyper);
    autoencoders.at(code) = std::move(model);
    result.stage_seconds.at("pretrain_" + code) = timer.elapsed();
  };
  {
    std::vector<std::thread> workers;
    if (need_same && need_cross && config.jobs >= 2) {
      workers.emplace_back([&] { pretrain(TargetStain::SameStain, "he_to_he"); });
      pretrain(TargetStain::CrossStain, "he_to_ihc");
      workers[0].join();
      workers.clear();
    } else {
      if (need_same) pretrain(TargetStain::SameStain, "he_to_he");
      if (need_cross) pretrain(TargetStain::CrossStain, "he_to_ihc");
    }
  }
  {
    detail::StageTimer timer;
    for (auto& [code, model] : autoencoders) {
      latents_r[code] = encode_all(model.encoder(), d_r);
      latents_b[code] = encode_all(model.encoder(), d_b);
      latents_test[code] = encode_all(model.encoder(), test);
    }
    result.stage_seconds["encode"] = timer.elapsed();
  }

  std::vector<Label> test_truth;
  test_truth.reserve(test.size());
  for (const auto& rec : test.records) test_truth.push_back(*rec.label);

  // enumerate cells in canonical order
  struct CellTask {
    std::size_t variant_index, nlp, repeat, slot;
  };
  std::vector<CellTask> tasks;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (std::size_t nlp : config.nlp_grid) {
      for (std::size_t repeat = 0; repeat < config.repeats; ++repeat) {
        tasks.push_back({v, nlp, repeat, tasks.size()});
      }
    }
  }
  result.cells.resize(tasks.size());

  auto run_cell = [&](const CellTask& task) {
    const MethodVariant& variant = variants[task.variant_index];
    const std::uint64_t subset_seed =
        hash_seed(config.base_seed, detail::seed_tag_subset, task.nlp, task.repeat);
    const std::uint64_t cell_seed =
        hash_seed(config.base_seed, detail::seed_tag_cell,
                  static_cast<std::uint64_t>(variant.method),
                  static_cast<std::uint64_t>(variant.target) * 2 +
                      static_cast<std::uint64_t>(variant.input),
                  task.nlp, task.repeat);
    const auto subset_indices =
        balanced_subset_indices(d_b, task.nlp, config.ratios, subset_seed);
    std::vector<Label> subset_labels;
    subset_labels.reserve(subset_indices.size());
    for (std::size_t idx : subset_indices) subset_labels.push_back(*d_b.records[idx].label);

    std::vector<Label> predictions;
    if (variant.method == Method::Unsupervised) {
      const Tensor& pool_latents = latents_r.at(variant.stain_code);
      const ClusterModel fitted = kmeans_fit(pool_latents, config.kmeans_k, cell_seed,
                                             config.kmeans_max_iter, config.kmeans_tol);
      const ClusterModel labeled = label_clusters(
          fitted, gather_rows(latents_b.at(variant.stain_code), subset_indices),
          subset_labels);
      predictions = predict_latents(labeled, latents_test.at(variant.stain_code));
    } else if (variant.method == Method::SemiSupervised) {
      TrainHyper hyper;
      hyper.epochs = config.head_epochs;
      hyper.batch_size = config.batch_size;
      hyper.learning_rate = config.learning_rate;
      hyper.seed = cell_seed;
      const ClassifierHead head = train_head_on_latents(
          gather_rows(latents_b.at(variant.stain_code), subset_indices), subset_labels, hyper);
      predictions = predict_with_head(head, latents_test.at(variant.stain_code));
    } else {
      PatchSet subset;
      subset.role = SetRole::BalancedLabeled;
      subset.records.reserve(subset_indices.size());
      for (std::size_t idx : subset_indices) subset.records.push_back(d_b.records[idx]);
      TrainHyper hyper;
      hyper.epochs = config.supervised_epochs;
      hyper.batch_size = config.batch_size;
      hyper.learning_rate = config.learning_rate;
      hyper.seed = cell_seed;
      hyper.augment_ranges = config.augment_ranges;
      const SupervisedClassifier model =
          train_supervised(subset, variant.input, config.arch, hyper);
      // all models are validated on H&E except the supervised IHC network
      predictions = predict_supervised(model, test, variant.input);
    }
    CellResult cell;
    cell.method = method_name(variant.method);
    cell.stain_variant = variant.stain_code;
    cell.nlp = task.nlp;
    cell.repeat = task.repeat;
    cell.metrics = compute_metrics(predictions, test_truth);
    result.cells[task.slot] = std::move(cell);
  };

  {
    detail::StageTimer timer;
    const std::size_t jobs = std::max<std::size_t>(1, config.jobs);
    if (jobs == 1) {
      for (const auto& task : tasks) run_cell(task);
    } else {
      std::atomic<std::size_t> next{0};
      auto worker = [&] {
        while (true) {
          const std::size_t i = next.fetch_add(1);
          if (i >= tasks.size()) break;
          run_cell(tasks[i]);
        }
      };
      std::vector<std::thread> pool;
      for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
      worker();
      for (auto& t : pool) t.join();
    }
    result.stage_seconds["cells"] = timer.elapsed();
  }

  // summaries keyed by (variant, nlp) in canonical order
  for (const auto& variant : variants) {
    for (std::size_t nlp : config.nlp_grid) {
      std::vector<double> f1s;
      for (const auto& cell : result.cells) {
        if (cell.method == method_name(variant.method) &&
            cell.stain_variant == variant.stain_code && cell.nlp == nlp) {
          f1s.push_back(cell.metrics.f1);
        }
      }
      SummaryRow row;
      row.method = method_name(variant.method);
      row.stain_variant = variant.stain_code;
      row.nlp = nlp;
      double mean = 0.0;
      for (double f : f1s) mean += f;
      mean /= static_cast<double>(f1s.size());
      row.f1_mean = mean;
      row.f1_std = detail::sample_std(f1s, mean);
      result.summary.push_back(row);
    }
  }
  result.stage_seconds["total"] = total_timer.elapsed();
  return result;
}

// ---------------------------------------------------------------------------
// Results files
// ---------------------------------------------------------------------------

inline void write_results_csv(const std::filesystem::path& path,
                              const std::vector<CellResult>& cells) {
  std::ofstream out(path);
  if (!out) throw IoError("results: cannot open " + path.string() + " for writing");
  out << "method,stain_variant,nlp,repeat,f1,tp,fp,fn,tn\n";
  char line[256];
  for (const auto& cell : cells) {
    std::snprintf(line, sizeof(line), "%s,%s,%zu,%zu,%.6f,%zu,%zu,%zu,%zu\n",
                  cell.method.c_str(), cell.stain_variant.c_str(), cell.nlp, cell.repeat,
                  cell.metrics.f1, cell.metrics.tp, cell.metrics.fp, cell.metrics.fn,
                  cell.metrics.tn);
    out << line;
  }
}

inline void write_summary_csv(const std::filesystem::path& path,
                              const std::vector<SummaryRow>& summary) {
  std::ofstream out(path);
  if (!out) throw IoError("results: cannot open " + path.string() + " for writing");
  out << "method,stain_variant,nlp,f1_mean,f1_std\n";
  char line[256];
  for (const auto& row : summary) {
    std::snprintf(line, sizeof(line), "%s,%s,%zu,%.6f,%.6f\n", row.method.c_str(),
                  row.stain_variant.c_str(), row.nlp, row.f1_mean, row.f1_std);
    out << line;
  }
}

inline void write_loss_csv(const std::filesystem::path& path, const LossCurve& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("loss curve: cannot open " + path.string() + " for writing");
  out << "epoch,mean_loss\n";
  char line[64];
  for (std::size_t i = 0; i < curve.epoch_mean_loss.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.9f\n", i, curve.epoch_mean_loss[i]);
    out << line;
  }
}

// Text rendering in the familiar layout: NLP rows, method columns.
inline std::string render_table(const std::vector<SummaryRow>& summary,
                                const std::vector<MethodVariant>& variants,
                                const std::vector<std::size_t>& nlp_grid) {
  std::string text = "NLP";
  for (const auto& variant : variants) text += "\t" + variant.title;
  text += "\n";
  char buf[64];
  for (std::size_t nlp : nlp_grid) {
    std::snprintf(buf, sizeof(buf), "%zu", nlp);
    text += buf;
    for (const auto& variant : variants) {
      for (const auto& row : summary) {
        if (row.nlp == nlp && row.method == method_name(variant.method) &&
            row.stain_variant == variant.stain_code) {
          std::snprintf(buf, sizeof(buf), "\t%.2f +/- %.2f", row.f1_mean, row.f1_std);
          text += buf;
          break;
        }
      }
    }
    text += "\n";
  }
  return text;
}

}  // namespace latentpath
