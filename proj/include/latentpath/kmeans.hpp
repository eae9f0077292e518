#pragma once

// Lloyd k-means over latent vectors with k-means++ seeding, plus the
// majority-vote cluster labeling used for unsupervised prediction. Clusters
// that receive no labeled voter take the stroma label.
//
// Seeding draws indices from a seeded stream over a canonical (lexicographic)
// order of the points, so permuting the input order never changes which
// points are selected -- the fitted partition is order-independent.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "latentpath/common.hpp"
#include "latentpath/data.hpp"
#include "latentpath/models.hpp"
#include "latentpath/rng.hpp"
#include "latentpath/tensor.hpp"

namespace latentpath {

struct ClusterModel {
  Tensor centroids;                  // [k, d]
  std::vector<Label> cluster_labels; // one per cluster; empty until voted
  double inertia = 0.0;

  std::size_t cluster_count() const { return centroids.extent(0); }
  std::size_t dim() const { return centroids.extent(1); }
  bool labeled() const { return cluster_labels.size() == cluster_count(); }
};

namespace detail {

inline double squared_distance(const double* a, const double* b, std::size_t d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

inline std::size_t nearest_centroid(const double* point, const double* centroids, std::size_t k,
                                    std::size_t d) {
  std::size_t best = 0;
  double best_dist = squared_distance(point, centroids, d);
  for (std::size_t j = 1; j < k; ++j) {
    const double dist = squared_distance(point, centroids + j * d, d);
    if (dist < best_dist) {  // ties keep the lowest index
      best_dist = dist;
      best = j;
    }
  }
  return best;
}

inline std::vector<std::size_t> canonical_order(const Tensor& points) {
  const std::size_t n = points.extent(0), d = points.extent(1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(points.data() + a * d, points.data() + (a + 1) * d,
                                        points.data() + b * d, points.data() + (b + 1) * d);
  });
  return order;
}

}  // namespace detail

// Lloyd iterations until the max centroid shift drops below tol or max_iter
// is hit. Clusters that lose all members keep their previous centroid. The
// optional trace records the assignment-step inertia of every iteration.
inline ClusterModel kmeans_fit(const Tensor& latents, std::size_t k, std::uint64_t seed,
                               std::size_t max_iter = 300, double tol = 1e-6,
                               std::vector<double>* inertia_trace = nullptr) {
  detail::require_rank(latents, 2, "kmeans input");
  const std::size_t n = latents.extent(0), d = latents.extent(1);
  if (n < 1 || k < 1) throw InputError("kmeans_fit: need at least one point and one cluster");
  if (!latents.all_finite()) throw InputError("kmeans_fit: latents contain non-finite values");

  const auto order = detail::canonical_order(latents);
  Rng rng(hash_seed(seed));

  // k-means++ over the canonical order
  ClusterModel model;
  model.centroids = Tensor::zeros({k, d});
  std::vector<double> min_dist(n);
  {
    const std::size_t first = order[rng.next_index(n)];
    std::copy(latents.data() + first * d, latents.data() + (first + 1) * d,
              model.centroids.data());
    for (std::size_t i = 0; i < n; ++i) {
      min_dist[i] = detail::squared_distance(latents.data() + i * d, model.centroids.data(), d);
    }
    for (std::size_t j = 1; j < k; ++j) {
      double total = 0.0;
      for (std::size_t idx : order) total += min_dist[idx];
      std::size_t chosen = order[rng.next_index(n)];
      if (total > 0.0) {
        const double u = rng.next_double() * total;
        double acc = 0.0;
        for (std::size_t idx : order) {
          acc += min_dist[idx];
          if (u < acc) {
            chosen = idx;
            break;
          }
        }
      }
      double* dst = model.centroids.data() + j * d;
      std::copy(latents.data() + chosen * d, latents.data() + (chosen + 1) * d, dst);
      for (std::size_t i = 0; i < n; ++i) {
        min_dist[i] =
            std::min(min_dist[i], detail::squared_distance(latents.data() + i * d, dst, d));
      }
    }
  }

  // All reductions run over the canonical order so results are bit-identical
  // under input permutation.
  std::vector<std::size_t> assignment(n);
  std::vector<double> sums(k * d);
  std::vector<std::size_t> counts(k);
  auto assign_all = [&]() {
    double inertia = 0.0;
    for (std::size_t idx : order) {
      const double* point = latents.data() + idx * d;
      assignment[idx] = detail::nearest_centroid(point, model.centroids.data(), k, d);
      inertia +=
          detail::squared_distance(point, model.centroids.data() + assignment[idx] * d, d);
    }
    return inertia;
  };

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    const double inertia = assign_all();
    if (inertia_trace) inertia_trace->push_back(inertia);
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), std::size_t{0});
    for (std::size_t idx : order) {
      const double* point = latents.data() + idx * d;
      double* dst = sums.data() + assignment[idx] * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += point[c];
      counts[assignment[idx]] += 1;
    }
    double max_shift_sq = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) continue;  // empty cluster keeps its centroid
      double* centroid = model.centroids.data() + j * d;
      double shift_sq = 0.0;
      const double inv = 1.0 / static_cast<double>(counts[j]);
      for (std::size_t c = 0; c < d; ++c) {
        const double updated = sums[j * d + c] * inv;
        const double diff = updated - centroid[c];
        shift_sq += diff * diff;
        centroid[c] = updated;
      }
      max_shift_sq = std::max(max_shift_sq, shift_sq);
    }
    if (std::sqrt(max_shift_sq) < tol) break;
  }
  model.inertia = assign_all();
  if (inertia_trace) inertia_trace->push_back(model.inertia);
  return model;
}

// Index of the nearest centroid; squared Euclidean distance, ties toward the
// lowest cluster index.
inline std::size_t assign_cluster(std::span<const double> latent, const ClusterModel& model) {
  if (latent.size() != model.dim()) {
    throw InputError("assign_cluster: latent width " + std::to_string(latent.size()) +
                     " does not match centroid width " + std::to_string(model.dim()));
  }
  return detail::nearest_centroid(latent.data(), model.centroids.data(), model.cluster_count(),
                                  model.dim());
}

inline std::size_t assign_cluster(const Tensor& latent, const ClusterModel& model) {
  return assign_cluster(std::span<const double>(latent.data(), latent.numel()), model);
}

// Plurality vote of the labeled latents assigned to each cluster; voting
// ties break toward the lowest class index, clusters with no voters take
// stroma. Returns a copy with cluster_labels set.
inline ClusterModel label_clusters(const ClusterModel& model, const Tensor& labeled_latents,
                                   const std::vector<Label>& labels) {
  detail::require_rank(labeled_latents, 2, "label_clusters latents");
  const std::size_t m = labeled_latents.extent(0);
  if (labels.size() != m) throw InputError("label_clusters: label count mismatch");
  if (m > 0 && labeled_latents.extent(1) != model.dim()) {
    throw InputError("label_clusters: latent width mismatch");
  }
  const std::size_t k = model.cluster_count();
  std::vector<std::array<std::size_t, class_count>> votes(k);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t cluster = detail::nearest_centroid(
        labeled_latents.data() + i * model.dim(), model.centroids.data(), k, model.dim());
    votes[cluster][static_cast<std::size_t>(labels[i])] += 1;
  }
  ClusterModel out = model;
  out.cluster_labels.assign(k, Label::Stroma);
  for (std::size_t j = 0; j < k; ++j) {
    std::size_t best_class = 0, best_count = votes[j][0];
    for (std::size_t c = 1; c < class_count; ++c) {
      if (votes[j][c] > best_count) {  // strict: ties keep the lower class
        best_count = votes[j][c];
        best_class = c;
      }
    }
    out.cluster_labels[j] = static_cast<Label>(best_class);
  }
  return out;
}

// Labels for a [N,d] latent matrix through the cluster->label map.
inline std::vector<Label> predict_latents(const ClusterModel& model, const Tensor& latents) {
  if (!model.labeled()) throw UsageError("predict_latents: cluster model has no labels");
  detail::require_rank(latents, 2, "predict input");
  const std::size_t n = latents.extent(0), d = latents.extent(1);
  if (d != model.dim()) throw InputError("predict_latents: latent width mismatch");
  std::vector<Label> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = model.cluster_labels[detail::nearest_centroid(
        latents.data() + i * d, model.centroids.data(), model.cluster_count(), d)];
  }
  return out;
}

// encode -> assign -> map for a [N,3,S,S] patch batch.
inline std::vector<Label> predict_unsupervised(const EncoderModel& encoder,
                                               const ClusterModel& model, const Tensor& batch) {
  NoGradGuard guard;
  return predict_latents(model, encoder.encode(batch));
}

inline constexpr std::uint32_t cluster_model_version = 1;

// ClusterModel container: magic "LPKM" | version u32 | k u32 | d u32 |
// centroids f64 row-major | k label bytes.
inline void save_cluster_model(const std::filesystem::path& path, const ClusterModel& model) {
  if (!model.labeled()) throw UsageError("save_cluster_model: model has no labels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cluster model: cannot open " + path.string() + " for writing");
  out.write("LPKM", 4);
  detail::write_scalar<std::uint32_t>(out, cluster_model_version);
  detail::write_scalar<std::uint32_t>(out, static_cast<std::uint32_t>(model.cluster_count()));
  detail::write_scalar<std::uint32_t>(out, static_cast<std::uint32_t>(model.dim()));
  detail::write_bytes(out, model.centroids.data(), model.centroids.numel() * sizeof(double));
  for (Label label : model.cluster_labels) {
    const auto byte = static_cast<std::uint8_t>(label);
    detail::write_bytes(out, &byte, 1);
  }
  if (!out) throw IoError("cluster model: write failed for " + path.string());
}

inline ClusterModel load_cluster_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cluster model: cannot open " + path.string());
  char magic[4];
  detail::read_bytes(in, magic, 4, "magic");
  if (std::memcmp(magic, "LPKM", 4) != 0) {
    throw IoError("cluster model: bad magic in " + path.string());
  }
  const auto version = detail::read_scalar<std::uint32_t>(in, "version");
  if (version != cluster_model_version) {
    throw IoError("cluster model: unsupported version " + std::to_string(version));
  }
  const auto k = detail::read_scalar<std::uint32_t>(in, "k");
  const auto d = detail::read_scalar<std::uint32_t>(in, "d");
  ClusterModel model;
  model.centroids = Tensor::zeros({k, d});
  detail::read_bytes(in, model.centroids.data(), static_cast<std::size_t>(k) * d * sizeof(double),
                     "centroids");
  model.cluster_labels.resize(k);
  for (auto& label : model.cluster_labels) {
    std::uint8_t byte = 0;
    detail::read_bytes(in, &byte, 1, "labels");
    if (byte >= class_count) throw IoError("cluster model: invalid label byte");
    label = static_cast<Label>(byte);
  }
  return model;
}

}  // namespace latentpath
