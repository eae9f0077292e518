#pragma once

// The encoder/decoder/classifier zoo: a pyramid of stride-2 convolutions
// compressing a patch to a 4x4 feature map, a dense bottleneck projection,
// and the mirrored decoder. All parameters are seeded He-uniform.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latentpath/checkpoint.hpp"
#include "latentpath/common.hpp"
#include "latentpath/rng.hpp"
#include "latentpath/tensor.hpp"

namespace latentpath {

enum class TargetStain { SameStain, CrossStain };

struct ArchConfig {
  std::size_t patch_size = 64;     // power of 2 in [16, 256]
  std::size_t latent_dim = 128;
  std::size_t channel_cap = 128;
  TargetStain target_stain = TargetStain::SameStain;
};

namespace detail {

inline bool is_pow2(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

inline std::size_t log2_exact(std::size_t v) {
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < v) ++bits;
  return bits;
}

inline void validate_arch(const ArchConfig& config) {
  if (!is_pow2(config.patch_size) || config.patch_size < 16 || config.patch_size > 256) {
    throw ConfigError("patch size must be a power of two in [16, 256], got " +
                      std::to_string(config.patch_size));
  }
  if (config.latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
}

// Doubling schedule from 16, capped.
inline std::vector<std::size_t> channel_schedule(const ArchConfig& config) {
  const std::size_t stages = log2_exact(config.patch_size) - 2;
  std::vector<std::size_t> channels(stages);
  std::size_t c = 16;
  for (std::size_t i = 0; i < stages; ++i) {
    channels[i] = std::min(c, config.channel_cap);
    c *= 2;
  }
  return channels;
}

inline void he_uniform_fill(Tensor& t, std::size_t fan_in, std::uint64_t seed) {
  Rng rng(hash_seed(seed));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
}

}  // namespace detail

struct ConvLayer {
  Tensor kernel;  // [out, in, k, k]
  Tensor bias;    // [out]
  std::size_t stride = 1;
  std::size_t padding = 1;
};

inline ConvLayer make_conv(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                           std::size_t stride, std::size_t padding, std::uint64_t seed) {
  ConvLayer layer;
  layer.kernel = Tensor::zeros({out_ch, in_ch, kernel, kernel}, true);
  layer.bias = Tensor::zeros({out_ch}, true);
  layer.stride = stride;
  layer.padding = padding;
  detail::he_uniform_fill(layer.kernel, in_ch * kernel * kernel, seed);
  return layer;
}

class EncoderModel {
 public:
  EncoderModel() = default;

  EncoderModel(const ArchConfig& config, std::uint64_t seed) : config_(config) {
    detail::validate_arch(config);
    const auto channels = detail::channel_schedule(config);
    std::size_t in_ch = 3;
    for (std::size_t i = 0; i < channels.size(); ++i) {
      stages_.push_back(make_conv(in_ch, channels[i], 3, 2, 1, hash_seed(seed, 1, i)));
      in_ch = channels[i];
    }
    flat_dim_ = in_ch * 4 * 4;
    dense_w_ = Tensor::zeros({flat_dim_, config.latent_dim}, true);
    dense_b_ = Tensor::zeros({config.latent_dim}, true);
    detail::he_uniform_fill(dense_w_, flat_dim_, hash_seed(seed, 2));
  }

  // [N,3,S,S] -> [N, latent_dim]
  Tensor encode(const Tensor& batch) const {
    detail::require_rank(batch, 4, "encode input");
    if (batch.extent(1) != 3 || batch.extent(2) != config_.patch_size ||
        batch.extent(3) != config_.patch_size) {
      throw InputError("encode: expected [N,3," + std::to_string(config_.patch_size) + "," +
                       std::to_string(config_.patch_size) + "], got " +
                       detail::shape_string(batch.shape()));
    }
    Tensor x = batch;
    for (const auto& stage : stages_) {
      x = relu(conv2d(x, stage.kernel, stage.bias, stage.stride, stage.padding));
    }
    return dense(flatten(x), dense_w_, dense_b_);
  }

  const ArchConfig& config() const { return config_; }
  std::size_t flat_dim() const { return flat_dim_; }
  std::size_t stage_count() const { return stages_.size(); }
  const std::vector<ConvLayer>& stages() const { return stages_; }

  std::vector<NamedTensor> named_parameters(const std::string& prefix = "encoder.") const {
    std::vector<NamedTensor> params;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      params.push_back({prefix + "conv" + std::to_string(i) + ".kernel", stages_[i].kernel});
      params.push_back({prefix + "conv" + std::to_string(i) + ".bias", stages_[i].bias});
    }
    params.push_back({prefix + "dense.weight", dense_w_});
    params.push_back({prefix + "dense.bias", dense_b_});
    return params;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (const auto& named : named_parameters()) out.push_back(named.tensor);
    return out;
  }

 private:
  ArchConfig config_;
  std::vector<ConvLayer> stages_;
  std::size_t flat_dim_ = 0;
  Tensor dense_w_, dense_b_;
};

// Exactly one dense layer from latent space to the three class logits.
struct ClassifierHead {
  Tensor weights;  // [latent_dim, 3]
  Tensor bias;     // [3]

  ClassifierHead() = default;
  ClassifierHead(std::size_t latent_dim, std::uint64_t seed) {
    weights = Tensor::zeros({latent_dim, 3}, true);
    bias = Tensor::zeros({3}, true);
    detail::he_uniform_fill(weights, latent_dim, hash_seed(seed, 3));
  }

  std::vector<NamedTensor> named_parameters(const std::string& prefix = "head.") const {
    return {{prefix + "weight", weights}, {prefix + "bias", bias}};
  }
  std::vector<Tensor> parameters() const { return {weights, bias}; }
};

// [N, latent_dim] -> logits [N,3]; affine map only.
inline Tensor classify_latent(const ClassifierHead& head, const Tensor& latents) {
  detail::require_rank(latents, 2, "classify_latent input");
  if (latents.extent(1) != head.weights.extent(0)) {
    throw InputError("classify_latent: latent width " + std::to_string(latents.extent(1)) +
                     " does not match head width " + std::to_string(head.weights.extent(0)));
  }
  return dense(latents, head.weights, head.bias);
}

class AutoencoderModel {
 public:
  AutoencoderModel() = default;

  AutoencoderModel(const ArchConfig& config, std::uint64_t seed)
      : encoder_(config, hash_seed(seed, 10)) {
    const auto channels = detail::channel_schedule(config);
    dense_w_ = Tensor::zeros({config.latent_dim, encoder_.flat_dim()}, true);
    dense_b_ = Tensor::zeros({encoder_.flat_dim()}, true);
    detail::he_uniform_fill(dense_w_, config.latent_dim, hash_seed(seed, 11));
    bottom_channels_ = channels.back();
    std::size_t in_ch = bottom_channels_;
    for (std::size_t i = channels.size(); i-- > 0;) {
      const std::size_t out_ch = (i == 0) ? 3 : channels[i - 1];
      stages_.push_back(make_conv(in_ch, out_ch, 3, 1, 1, hash_seed(seed, 12, i)));
      in_ch = out_ch;
    }
  }

  // [N, latent_dim] -> [N,3,S,S], values in [0,1] via the sigmoid output.
  Tensor decode(const Tensor& latents) const {
    detail::require_rank(latents, 2, "decode input");
    if (latents.extent(1) != encoder_.config().latent_dim) {
      throw InputError("decode: latent width " + std::to_string(latents.extent(1)) +
                       " does not match model latent_dim " +
                       std::to_string(encoder_.config().latent_dim));
    }
    Tensor x = relu(dense(latents, dense_w_, dense_b_));
    x = reshape(x, {latents.extent(0), bottom_channels_, 4, 4});
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      x = conv2d(upsample_nearest(x, 2), stages_[i].kernel, stages_[i].bias, 1, 1);
      x = (i + 1 == stages_.size()) ? sigmoid(x) : relu(x);
    }
    return x;
  }

  Tensor reconstruct(const Tensor& batch) const { return decode(encoder_.encode(batch)); }

  EncoderModel& encoder() { return encoder_; }
  const EncoderModel& encoder() const { return encoder_; }
  TargetStain target_stain() const { return encoder_.config().target_stain; }

  std::vector<NamedTensor> named_parameters() const {
    std::vector<NamedTensor> params = encoder_.named_parameters();
    params.push_back({"decoder.dense.weight", dense_w_});
    params.push_back({"decoder.dense.bias", dense_b_});
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      params.push_back({"decoder.conv" + std::to_string(i) + ".kernel", stages_[i].kernel});
      params.push_back({"decoder.conv" + std::to_string(i) + ".bias", stages_[i].bias});
    }
    return params;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (const auto& named : named_parameters()) out.push_back(named.tensor);
    return out;
  }

 private:
  EncoderModel encoder_;
  Tensor dense_w_, dense_b_;  // latent un-projection
  std::size_t bottom_channels_ = 0;
  std::vector<ConvLayer> stages_;  // upsample+conv mirror of the encoder
};

// Encoder plus head trained end-to-end from fresh initialization; never
// touches an autoencoder checkpoint.
class SupervisedClassifier {
 public:
  SupervisedClassifier() = default;
  SupervisedClassifier(const ArchConfig& config, std::uint64_t seed)
      : encoder_(config, hash_seed(seed, 20)),
        head_(config.latent_dim, hash_seed(seed, 21)) {}

  Tensor classify(const Tensor& batch) const {
    return classify_latent(head_, encoder_.encode(batch));
  }

  EncoderModel& encoder() { return encoder_; }
  const EncoderModel& encoder() const { return encoder_; }
  ClassifierHead& head() { return head_; }
  const ClassifierHead& head() const { return head_; }

  std::vector<NamedTensor> named_parameters() const {
    auto params = encoder_.named_parameters();
    for (auto& named : head_.named_parameters()) params.push_back(named);
    return params;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (const auto& named : named_parameters()) out.push_back(named.tensor);
    return out;
  }

 private:
  EncoderModel encoder_;
  ClassifierHead head_;
};

struct ModelBundle {
  EncoderModel encoder;
  AutoencoderModel autoencoder;
  ClassifierHead head;
  SupervisedClassifier supervised;
};

// The supervised model draws from an independent seed stream, so its
// initialization shares nothing with the autoencoder's.
inline ModelBundle build_models(const ArchConfig& config, std::uint64_t seed) {
  detail::validate_arch(config);
  ModelBundle bundle;
  bundle.autoencoder = AutoencoderModel(config, hash_seed(seed, 100));
  bundle.encoder = bundle.autoencoder.encoder();
  bundle.head = ClassifierHead(config.latent_dim, hash_seed(seed, 101));
  bundle.supervised = SupervisedClassifier(config, hash_seed(seed, 102));
  return bundle;
}

// Checkpoint helpers. Architecture keys ride along as meta.* blocks so a
// checkpoint alone can rebuild its model.
inline std::vector<NamedTensor> arch_meta_blocks(const ArchConfig& config) {
  return {
      {"meta.patch_size", Tensor::scalar(static_cast<double>(config.patch_size))},
      {"meta.latent_dim", Tensor::scalar(static_cast<double>(config.latent_dim))},
      {"meta.channel_cap", Tensor::scalar(static_cast<double>(config.channel_cap))},
      {"meta.target_stain",
       Tensor::scalar(config.target_stain == TargetStain::CrossStain ? 1.0 : 0.0)},
  };
}

inline ArchConfig arch_from_blocks(const std::vector<NamedTensor>& blocks) {
  ArchConfig config;
  bool seen = false;
  for (const auto& block : blocks) {
    if (block.name == "meta.patch_size") {
      config.patch_size = static_cast<std::size_t>(block.tensor.item());
      seen = true;
    } else if (block.name == "meta.latent_dim") {
      config.latent_dim = static_cast<std::size_t>(block.tensor.item());
    } else if (block.name == "meta.channel_cap") {
      config.channel_cap = static_cast<std::size_t>(block.tensor.item());
    } else if (block.name == "meta.target_stain") {
      config.target_stain =
          block.tensor.item() != 0.0 ? TargetStain::CrossStain : TargetStain::SameStain;
    }
  }
  if (!seen) throw IoError("checkpoint carries no architecture metadata");
  return config;
}

template <typename Model>
void save_model(const std::filesystem::path& path, const Model& model,
                const ArchConfig& config) {
  auto blocks = arch_meta_blocks(config);
  for (const auto& named : model.named_parameters()) blocks.push_back(named);
  save_checkpoint(path, blocks);
}

}  // namespace latentpath
