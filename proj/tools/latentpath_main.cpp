// latentpath: label-efficiency experiments on paired-stain patches.
// Subcommands: synth, train-ae, cluster, train-head, train-supervised,
// evaluate, map, grid. Exit codes: 0 success, 1 runtime failure, 2 usage.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "latentpath/config.hpp"
#include "latentpath/experiment.hpp"
#include "latentpath/mapping.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace latentpath;

namespace {

std::uint64_t resolve_base_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("LATENTPATH_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw UsageError("LATENTPATH_SEED is not a number: " + std::string(env));
    }
  }
  return 42;
}

void write_json_atomic(const fs::path& path, const json& doc) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << doc.dump(2) << "\n";
  }
  fs::rename(tmp, path);
}

json manifest_skeleton() {
  json doc;
  doc["tool_version"] = version_string;
  return doc;
}

double seconds_since(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

AutoencoderModel load_autoencoder(const fs::path& path) {
  const auto blocks = load_checkpoint(path);
  AutoencoderModel model(arch_from_blocks(blocks), 0);
  load_parameters(blocks, model.named_parameters());
  return model;
}

EncoderModel load_encoder(const fs::path& path) {
  const auto blocks = load_checkpoint(path);
  EncoderModel encoder(arch_from_blocks(blocks), 0);
  load_parameters(blocks, encoder.named_parameters());
  return encoder;
}

SupervisedClassifier load_supervised(const fs::path& path) {
  const auto blocks = load_checkpoint(path);
  SupervisedClassifier model(arch_from_blocks(blocks), 0);
  load_parameters(blocks, model.named_parameters());
  return model;
}

ClassifierHead load_head(const fs::path& path) {
  const auto blocks = load_checkpoint(path);
  const ArchConfig arch = arch_from_blocks(blocks);
  ClassifierHead head(arch.latent_dim, 0);
  load_parameters(blocks, head.named_parameters());
  return head;
}

PatchSet load_pool(const fs::path& data_dir) {
  const fs::path manifest = fs::is_directory(data_dir) ? data_dir / "manifest.csv" : data_dir;
  return load_manifest(manifest);
}

// Balanced labeled voting/training subset drawn from a pool.
PatchSet labeled_subset(const PatchSet& pool, std::size_t n, std::uint64_t seed) {
  if (n == 0) {
    PatchSet empty;
    empty.role = SetRole::BalancedLabeled;
    return empty;
  }
  return sample_balanced(pool, n, default_class_ratios, seed);
}

std::array<std::size_t, class_count> class_counts(const PatchSet& set) {
  std::array<std::size_t, class_count> counts{};
  for (const auto& rec : set.records) {
    if (rec.label) counts[static_cast<std::size_t>(*rec.label)]++;
  }
  return counts;
}

void print_metrics(const Metrics& m) {
  std::printf("F1 %.3f\n", m.f1);
  std::printf("tp %zu  fp %zu  fn %zu  tn %zu\n", m.tp, m.fp, m.fn, m.tn);
  std::printf("confusion (rows=truth, cols=pred):\n");
  for (std::size_t r = 0; r < class_count; ++r) {
    std::printf("  %-7s %6zu %6zu %6zu\n", label_name(static_cast<Label>(r)),
                m.confusion[r][0], m.confusion[r][1], m.confusion[r][2]);
  }
}

// Shared flags for commands that need a trained model to predict with.
struct ModelFlags {
  std::string supervised_path;
  std::string encoder_path;
  std::string head_path;
  std::string clusters_path;
  std::string stain = "he";

  void attach(CLI::App* cmd) {
    cmd->add_option("--supervised", supervised_path, "supervised classifier checkpoint");
    cmd->add_option("--encoder", encoder_path, "autoencoder/encoder checkpoint");
    cmd->add_option("--head", head_path, "classifier head checkpoint (with --encoder)");
    cmd->add_option("--clusters", clusters_path, "cluster model file (with --encoder)");
    cmd->add_option("--stain", stain, "input stain for a supervised model (he|ihc)")
        ->check(CLI::IsMember({"he", "ihc"}));
  }

  // Predictor over patch sets (evaluate) and raw batches (map).
  std::pair<PredictFn, BatchPredictFn> build() const {
    if (!supervised_path.empty()) {
      auto model = std::make_shared<SupervisedClassifier>(load_supervised(supervised_path));
      const InputStain input = stain == "ihc" ? InputStain::IHC : InputStain::HE;
      PredictFn on_set = [model, input](const PatchSet& set) {
        return predict_supervised(*model, set, input);
      };
      BatchPredictFn on_batch = [model](const Tensor& batch) {
        NoGradGuard guard;
        return argmax_labels(model->classify(batch));
      };
      return {on_set, on_batch};
    }
    if (encoder_path.empty()) {
      throw UsageError("need --supervised or --encoder with --head/--clusters");
    }
    auto encoder = std::make_shared<EncoderModel>(load_encoder(encoder_path));
    if (!head_path.empty()) {
      auto head = std::make_shared<ClassifierHead>(load_head(head_path));
      PredictFn on_set = [encoder, head](const PatchSet& set) {
        return predict_with_head(*head, encode_all(*encoder, set));
      };
      BatchPredictFn on_batch = [encoder, head](const Tensor& batch) {
        NoGradGuard guard;
        return argmax_labels(classify_latent(*head, encoder->encode(batch)));
      };
      return {on_set, on_batch};
    }
    if (!clusters_path.empty()) {
      auto clusters = std::make_shared<ClusterModel>(load_cluster_model(clusters_path));
      PredictFn on_set = [encoder, clusters](const PatchSet& set) {
        return predict_latents(*clusters, encode_all(*encoder, set));
      };
      BatchPredictFn on_batch = [encoder, clusters](const Tensor& batch) {
        return predict_unsupervised(*encoder, *clusters, batch);
      };
      return {on_set, on_batch};
    }
    throw UsageError("--encoder requires --head or --clusters");
  }
};

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& out_dir, std::size_t size, std::size_t count,
              std::optional<std::uint64_t> seed_flag, double jitter, double clutter) {
  if (!detail::is_pow2(size) || size < 16 || size > 256) {
    throw UsageError("patch size must be a power of two in [16, 256]");
  }
  SynthConfig config;
  config.patch_size = size;
  config.train_count = count;
  config.test_count = 0;
  config.appearance_jitter = jitter;
  config.clutter = clutter;
  const std::uint64_t seed = resolve_base_seed(seed_flag);
  auto [set, unused] = generate_synthetic(config, seed);
  save_dataset(out_dir, set);
  const auto counts = class_counts(set);
  std::printf("wrote %zu patches (size %zu) to %s\n", set.size(), size, out_dir.c_str());
  std::printf("class counts: stroma %zu, benign %zu, tumour %zu\n", counts[0], counts[1],
              counts[2]);
  return 0;
}

int cmd_train_ae(const std::string& data_dir, const std::string& target,
                 const std::string& config_file, const std::string& out_path,
                 std::string loss_csv, std::optional<std::uint64_t> seed_flag,
                 std::optional<std::size_t> epochs, std::optional<std::size_t> dr_size) {
  const auto started = std::chrono::steady_clock::now();
  ExperimentConfig config = desk_preset();
  if (!config_file.empty()) apply_config_file(config, config_file);
  config.base_seed = resolve_base_seed(seed_flag);
  if (epochs) config.ae_epochs = *epochs;
  if (dr_size) config.dr_size = *dr_size;

  PatchSet pool = load_pool(data_dir);
  if (pool.size() == 0) throw InputError("training pool is empty");
  ArchConfig arch = config.arch;
  arch.patch_size = pool.records[0].patch_size();
  arch.target_stain = target == "cross" ? TargetStain::CrossStain : TargetStain::SameStain;

  const std::size_t n = std::min(config.dr_size, pool.size());
  const PatchSet d_r = sample_random(pool, n, hash_seed(config.base_seed, 0xd7));

  AutoencoderModel model(arch, hash_seed(config.base_seed, 0xae));
  TrainHyper hyper;
  hyper.epochs = config.ae_epochs;
  hyper.batch_size = config.batch_size;
  hyper.learning_rate = config.learning_rate;
  hyper.seed = hash_seed(config.base_seed, 0xae, 1);
  hyper.augment_ranges = config.augment_ranges;
  std::printf("training autoencoder (%s-stain) on %zu patches, %zu epochs\n", target.c_str(), n,
              hyper.epochs);
  const LossCurve curve = train_autoencoder(d_r, model, hyper);
  save_model(out_path, model, arch);
  if (loss_csv.empty()) loss_csv = out_path + ".loss.csv";
  write_loss_csv(loss_csv, curve);
  std::printf("loss: first %.6f, last %.6f\n", curve.epoch_mean_loss.front(),
              curve.epoch_mean_loss.back());

  json manifest = manifest_skeleton();
  manifest["command"] = "train-ae";
  manifest["config"] = config_snapshot(config);
  manifest["config"]["target"] = target;
  manifest["resolved_seeds"] = {{"base", config.base_seed}, {"d_r", hash_seed(config.base_seed, 0xd7)}};
  manifest["artifacts"] = {{"checkpoint", out_path}, {"loss_csv", loss_csv}};
  manifest["stage_seconds"] = {{"total", seconds_since(started)}};
  write_json_atomic(out_path + ".manifest.json", manifest);
  return 0;
}

int cmd_cluster(const std::string& encoder_path, const std::string& data_dir,
                std::size_t labels_n, std::size_t k, std::optional<std::uint64_t> seed_flag,
                const std::string& out_path) {
  const EncoderModel encoder = load_encoder(encoder_path);
  const PatchSet pool = load_pool(data_dir);
  const std::uint64_t seed = resolve_base_seed(seed_flag);
  if (labels_n == 0) {
    std::fprintf(stderr,
                 "warning: --labels-n 0 leaves every cluster with the stroma label\n");
  }
  const PatchSet voters = labeled_subset(pool, labels_n, hash_seed(seed, 0x5b));
  const ClusterModel model =
      train_unsupervised_labeling(encoder, pool, voters, k, hash_seed(seed, 0xce));
  save_cluster_model(out_path, model);
  std::array<std::size_t, class_count> counts{};
  for (Label l : model.cluster_labels) counts[static_cast<std::size_t>(l)]++;
  std::printf("clustered %zu patches into %zu clusters (inertia %.3f)\n", pool.size(), k,
              model.inertia);
  std::printf("cluster labels: stroma %zu, benign %zu, tumour %zu\n", counts[0], counts[1],
              counts[2]);
  return 0;
}

int cmd_train_head(const std::string& encoder_path, const std::string& data_dir,
                   std::size_t labels_n, std::optional<std::size_t> epochs,
                   std::optional<std::uint64_t> seed_flag, const std::string& out_path) {
  const EncoderModel encoder = load_encoder(encoder_path);
  const PatchSet pool = load_pool(data_dir);
  const std::uint64_t seed = resolve_base_seed(seed_flag);
  const PatchSet subset = labeled_subset(pool, labels_n, hash_seed(seed, 0x5b));
  TrainHyper hyper;
  hyper.epochs = epochs.value_or(desk_preset().head_epochs);
  hyper.seed = hash_seed(seed, 0xce);
  const ClassifierHead head = train_semi_supervised(encoder, subset, hyper);
  save_model(out_path, head, encoder.config());
  std::printf("trained head on %zu labeled patches (%zu epochs)\n", subset.size(),
              hyper.epochs);
  return 0;
}

int cmd_train_supervised(const std::string& data_dir, std::size_t labels_n,
                         const std::string& stain, const std::string& config_file,
                         std::optional<std::size_t> epochs,
                         std::optional<std::uint64_t> seed_flag, const std::string& out_path) {
  ExperimentConfig config = desk_preset();
  if (!config_file.empty()) apply_config_file(config, config_file);
  const std::uint64_t seed = resolve_base_seed(seed_flag);
  if (epochs) config.supervised_epochs = *epochs;
  const PatchSet pool = load_pool(data_dir);
  if (pool.size() == 0) throw InputError("training pool is empty");
  ArchConfig arch = config.arch;
  arch.patch_size = pool.records[0].patch_size();
  const PatchSet subset = labeled_subset(pool, labels_n, hash_seed(seed, 0x5b));
  if (subset.size() == 0) throw UsageError("--labels-n must be positive");
  TrainHyper hyper;
  hyper.epochs = config.supervised_epochs;
  hyper.batch_size = config.batch_size;
  hyper.learning_rate = config.learning_rate;
  hyper.seed = hash_seed(seed, 0xce);
  hyper.augment_ranges = config.augment_ranges;
  const InputStain input = stain == "ihc" ? InputStain::IHC : InputStain::HE;
  const SupervisedClassifier model = train_supervised(subset, input, arch, hyper);
  save_model(out_path, model, arch);
  std::printf("trained supervised classifier on %zu labeled patches (%zu epochs)\n",
              subset.size(), hyper.epochs);
  return 0;
}

int cmd_evaluate(const ModelFlags& flags, const std::string& data_dir) {
  auto [on_set, on_batch] = flags.build();
  const PatchSet test = load_pool(data_dir);
  if (!test.fully_labeled()) throw InputError("evaluation set must be fully labeled");
  const Metrics m = evaluate_f1(on_set, test);
  print_metrics(m);
  return 0;
}

int cmd_map(const ModelFlags& flags, const std::string& region_path,
            const std::string& mask_path, std::size_t stride, const std::string& out_path,
            const std::string& overlay_path) {
  auto [on_set, on_batch] = flags.build();
  const Tensor region = image_to_tensor(read_ppm(region_path));
  // patch size comes from the model checkpoint
  std::size_t patch = 0;
  if (!flags.supervised_path.empty()) {
    patch = arch_from_blocks(load_checkpoint(flags.supervised_path)).patch_size;
  } else {
    patch = arch_from_blocks(load_checkpoint(flags.encoder_path)).patch_size;
  }
  const ClassificationMap map = render_classification_map(on_batch, region, patch, stride);
  write_pam_rgba(out_path, map.map_rgba);
  std::printf("rendered %zux%zu windows (patch %zu, stride %zu) to %s\n", map.windows_x,
              map.windows_y, patch, stride, out_path.c_str());
  if (!overlay_path.empty()) {
    write_ppm(overlay_path, overlay_on_region(region, map.map_rgba));
    std::printf("overlay written to %s\n", overlay_path.c_str());
  }
  if (!mask_path.empty()) {
    const ImageU8 mask = read_pgm(mask_path);
    std::size_t agree = 0;
    for (std::size_t wy = 0; wy < map.windows_y; ++wy) {
      for (std::size_t wx = 0; wx < map.windows_x; ++wx) {
        const std::size_t cy = wy * stride + patch / 2;
        const std::size_t cx = wx * stride + patch / 2;
        const std::uint8_t truth = mask.at(cy, cx, 0);
        if (truth < class_count &&
            static_cast<Label>(truth) == map.window_at(wy, wx)) {
          ++agree;
        }
      }
    }
    std::printf("mask agreement: %.3f (%zu / %zu windows)\n",
                static_cast<double>(agree) / static_cast<double>(map.window_labels.size()),
                agree, map.window_labels.size());
  }
  return 0;
}

int cmd_grid(ExperimentConfig config, const std::string& out_dir, const std::string& data_dir,
             const std::string& test_data_dir) {
  const auto started = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);

  PatchSet train_pool, test_pool;
  double synth_seconds = 0.0;
  {
    const auto synth_start = std::chrono::steady_clock::now();
    if (!data_dir.empty()) {
      if (test_data_dir.empty()) {
        throw UsageError("--data requires --test-data (separate test pool)");
      }
      train_pool = load_pool(data_dir);
      test_pool = load_pool(test_data_dir);
    } else {
      SynthConfig synth = config.synth;
      synth.patch_size = config.arch.patch_size;
      std::tie(train_pool, test_pool) =
          generate_synthetic(synth, hash_seed(config.base_seed, 0x5e1));
    }
    synth_seconds = seconds_since(synth_start);
  }
  std::printf("pools ready: train %zu, test %zu (%.1fs)\n", train_pool.size(),
              test_pool.size(), synth_seconds);

  const GridResult result = run_grid(config, train_pool, test_pool);

  const fs::path results_csv = fs::path(out_dir) / "results.csv";
  const fs::path summary_csv = fs::path(out_dir) / "summary.csv";
  const fs::path table_txt = fs::path(out_dir) / "table.txt";
  write_results_csv(results_csv, result.cells);
  write_summary_csv(summary_csv, result.summary);
  const auto variants = grid_variants(config);
  const std::string table = render_table(result.summary, variants, config.nlp_grid);
  {
    std::ofstream out(table_txt);
    out << table;
  }
  json artifacts = {{"results_csv", results_csv.string()},
                    {"summary_csv", summary_csv.string()},
                    {"table_txt", table_txt.string()}};
  for (const auto& [code, curve] : result.ae_losses) {
    const fs::path loss_csv = fs::path(out_dir) / ("loss_" + code + ".csv");
    write_loss_csv(loss_csv, curve);
    artifacts["loss_" + code] = loss_csv.string();
  }

  json manifest = manifest_skeleton();
  manifest["command"] = "grid";
  manifest["config"] = config_snapshot(config);
  manifest["resolved_seeds"] = {{"base", config.base_seed}};
  for (const auto& [name, seed] : result.resolved_seeds) {
    manifest["resolved_seeds"][name] = seed;
  }
  manifest["artifacts"] = artifacts;
  json stages = {{"synth", synth_seconds}, {"total", seconds_since(started)}};
  for (const auto& [stage, secs] : result.stage_seconds) stages[stage] = secs;
  manifest["stage_seconds"] = stages;
  write_json_atomic(fs::path(out_dir) / "manifest.json", manifest);

  std::printf("%s", table.c_str());
  for (const auto& [stage, secs] : result.stage_seconds) {
    std::printf("stage %-18s %8.1fs\n", stage.c_str(), secs);
  }
  std::printf("results in %s\n", out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"label-efficiency experiments on paired-stain image patches"};
  app.require_subcommand(1);

  // synth ------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "emit a synthetic paired-stain dataset");
  std::string synth_out;
  std::size_t synth_size = 64, synth_count = 1000;
  std::optional<std::uint64_t> synth_seed;
  double synth_jitter = 1.0, synth_clutter = 1.0;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--size", synth_size, "patch size (power of two)");
  synth->add_option("--count", synth_count, "patch count");
  synth->add_option("--seed", synth_seed, "seed (falls back to LATENTPATH_SEED, then 42)");
  synth->add_option("--jitter", synth_jitter, "slide-level appearance jitter scale");
  synth->add_option("--clutter", synth_clutter, "off-center structure density");

  // train-ae ---------------------------------------------------------------
  auto* train_ae = app.add_subcommand("train-ae", "pretrain an autoencoder on a dataset");
  std::string ae_data, ae_target = "same", ae_config, ae_out, ae_loss_csv;
  std::optional<std::uint64_t> ae_seed;
  std::optional<std::size_t> ae_epochs, ae_dr_size;
  train_ae->add_option("--data", ae_data, "dataset directory or manifest")->required();
  train_ae->add_option("--target", ae_target, "reconstruction target")
      ->check(CLI::IsMember({"same", "cross"}));
  train_ae->add_option("--config", ae_config, "config file");
  train_ae->add_option("--out", ae_out, "checkpoint output path")->required();
  train_ae->add_option("--loss-csv", ae_loss_csv, "loss curve CSV path");
  train_ae->add_option("--seed", ae_seed, "base seed");
  train_ae->add_option("--epochs", ae_epochs, "training epochs");
  train_ae->add_option("--dr-size", ae_dr_size, "unlabeled pretraining set size");

  // cluster ----------------------------------------------------------------
  auto* cluster = app.add_subcommand("cluster", "k-means + majority voting on latents");
  std::string cl_encoder, cl_data, cl_out;
  std::size_t cl_labels_n = 0, cl_k = 50;
  std::optional<std::uint64_t> cl_seed;
  cluster->add_option("--encoder", cl_encoder, "encoder checkpoint")->required();
  cluster->add_option("--data", cl_data, "dataset directory or manifest")->required();
  cluster->add_option("--labels-n", cl_labels_n, "labeled voting subset size");
  cluster->add_option("--k", cl_k, "cluster count");
  cluster->add_option("--seed", cl_seed, "base seed");
  cluster->add_option("--out", cl_out, "cluster model output path")->required();

  // train-head -------------------------------------------------------------
  auto* train_head = app.add_subcommand("train-head", "train the single-layer classifier");
  std::string th_encoder, th_data, th_out;
  std::size_t th_labels_n = 0;
  std::optional<std::size_t> th_epochs;
  std::optional<std::uint64_t> th_seed;
  train_head->add_option("--encoder", th_encoder, "frozen encoder checkpoint")->required();
  train_head->add_option("--data", th_data, "labeled dataset directory")->required();
  train_head->add_option("--labels-n", th_labels_n, "labeled subset size")->required();
  train_head->add_option("--epochs", th_epochs, "training epochs");
  train_head->add_option("--seed", th_seed, "base seed");
  train_head->add_option("--out", th_out, "head checkpoint output path")->required();

  // train-supervised -------------------------------------------------------
  auto* train_sup = app.add_subcommand("train-supervised", "train the end-to-end classifier");
  std::string ts_data, ts_stain = "he", ts_config, ts_out;
  std::size_t ts_labels_n = 0;
  std::optional<std::size_t> ts_epochs;
  std::optional<std::uint64_t> ts_seed;
  train_sup->add_option("--data", ts_data, "labeled dataset directory")->required();
  train_sup->add_option("--labels-n", ts_labels_n, "labeled subset size")->required();
  train_sup->add_option("--stain", ts_stain, "input stain")
      ->check(CLI::IsMember({"he", "ihc"}));
  train_sup->add_option("--config", ts_config, "config file");
  train_sup->add_option("--epochs", ts_epochs, "training epochs");
  train_sup->add_option("--seed", ts_seed, "base seed");
  train_sup->add_option("--out", ts_out, "checkpoint output path")->required();

  // evaluate ----------------------------------------------------------------
  auto* evaluate = app.add_subcommand("evaluate", "tumour-vs-rest F1 on a labeled set");
  std::string ev_data;
  ModelFlags ev_flags;
  evaluate->add_option("--data", ev_data, "labeled dataset directory")->required();
  ev_flags.attach(evaluate);

  // map ----------------------------------------------------------------------
  auto* map_cmd = app.add_subcommand("map", "render a sliding-window classification map");
  std::string mp_region, mp_mask, mp_out, mp_overlay;
  std::size_t mp_stride = 32;
  ModelFlags mp_flags;
  map_cmd->add_option("--region", mp_region, "H&E region image (PPM)")->required();
  map_cmd->add_option("--mask", mp_mask, "ground-truth class mask (PGM)");
  map_cmd->add_option("--stride", mp_stride, "window stride in pixels");
  map_cmd->add_option("--out", mp_out, "RGBA map output (PAM)")->required();
  map_cmd->add_option("--overlay", mp_overlay, "overlay composite output (PPM)");
  mp_flags.attach(map_cmd);

  // grid ----------------------------------------------------------------------
  auto* grid = app.add_subcommand("grid", "run the full label-budget experiment");
  std::string gr_preset = "desk", gr_config, gr_out, gr_data, gr_test_data, gr_grid;
  std::optional<std::uint64_t> gr_seed;
  std::optional<std::size_t> gr_jobs, gr_repeats, gr_ae_epochs, gr_head_epochs, gr_sup_epochs;
  grid->add_option("--preset", gr_preset, "desk (default) or paper scale")
      ->check(CLI::IsMember({"desk", "paper"}));
  grid->add_option("--config", gr_config, "config file (overrides the preset)");
  grid->add_option("--out-dir", gr_out, "output directory")->required();
  grid->add_option("--data", gr_data, "training pool directory (default: synthetic)");
  grid->add_option("--test-data", gr_test_data, "test pool directory");
  grid->add_option("--grid", gr_grid, "comma-separated labeled-subset sizes");
  grid->add_option("--seed", gr_seed, "base seed");
  grid->add_option("--jobs", gr_jobs, "parallel grid cells");
  grid->add_option("--repeats", gr_repeats, "repeats per cell");
  grid->add_option("--ae-epochs", gr_ae_epochs, "autoencoder epochs");
  grid->add_option("--head-epochs", gr_head_epochs, "head epochs");
  grid->add_option("--supervised-epochs", gr_sup_epochs, "supervised epochs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) {
      return cmd_synth(synth_out, synth_size, synth_count, synth_seed, synth_jitter,
                       synth_clutter);
    }
    if (train_ae->parsed()) {
      return cmd_train_ae(ae_data, ae_target, ae_config, ae_out, ae_loss_csv, ae_seed,
                          ae_epochs, ae_dr_size);
    }
    if (cluster->parsed()) {
      return cmd_cluster(cl_encoder, cl_data, cl_labels_n, cl_k, cl_seed, cl_out);
    }
    if (train_head->parsed()) {
      return cmd_train_head(th_encoder, th_data, th_labels_n, th_epochs, th_seed, th_out);
    }
    if (train_sup->parsed()) {
      return cmd_train_supervised(ts_data, ts_labels_n, ts_stain, ts_config, ts_epochs,
                                  ts_seed, ts_out);
    }
    if (evaluate->parsed()) {
      return cmd_evaluate(ev_flags, ev_data);
    }
    if (map_cmd->parsed()) {
      return cmd_map(mp_flags, mp_region, mp_mask, mp_stride, mp_out, mp_overlay);
    }
    if (grid->parsed()) {
      ExperimentConfig config = preset_by_name(gr_preset);
      if (!gr_config.empty()) apply_config_file(config, gr_config);
      config.base_seed = resolve_base_seed(gr_seed);
      if (gr_grid.size()) apply_config_entry(config, "grid", gr_grid);
      if (gr_jobs) config.jobs = *gr_jobs;
      if (gr_repeats) config.repeats = *gr_repeats;
      if (gr_ae_epochs) config.ae_epochs = *gr_ae_epochs;
      if (gr_head_epochs) config.head_epochs = *gr_head_epochs;
      if (gr_sup_epochs) config.supervised_epochs = *gr_sup_epochs;
      return cmd_grid(config, gr_out, gr_data, gr_test_data);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
