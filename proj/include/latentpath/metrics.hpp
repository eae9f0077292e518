#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "latentpath/common.hpp"
#include "latentpath/data.hpp"

namespace latentpath {

// Tumour-vs-non-tumour counts plus the full 3x3 confusion matrix
// (rows = truth, columns = prediction).
struct Metrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double f1 = 0.0;
  std::array<std::array<std::size_t, class_count>, class_count> confusion{};

  std::size_t total() const { return tp + fp + fn + tn; }
};

inline Metrics compute_metrics(const std::vector<Label>& predictions,
                               const std::vector<Label>& truth) {
  if (predictions.size() != truth.size()) {
    throw InputError("compute_metrics: prediction/label count mismatch");
  }
  Metrics m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    m.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predictions[i])]++;
    const bool pred_t = is_tumour(predictions[i]);
    const bool true_t = is_tumour(truth[i]);
    if (pred_t && true_t) {
      m.tp++;
    } else if (pred_t) {
      m.fp++;
    } else if (true_t) {
      m.fn++;
    } else {
      m.tn++;
    }
  }
  const std::size_t denom = 2 * m.tp + m.fp + m.fn;
  m.f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(m.tp) / static_cast<double>(denom);
  return m;
}

using PredictFn = std::function<std::vector<Label>(const PatchSet&)>;

// F1 for tumour versus non-tumour over a labeled test set.
inline Metrics evaluate_f1(const PredictFn& predict, const PatchSet& test) {
  if (!test.fully_labeled()) throw InputError("evaluate_f1: test set must be labeled");
  const std::vector<Label> predictions = predict(test);
  std::vector<Label> truth;
  truth.reserve(test.size());
  for (const auto& rec : test.records) truth.push_back(*rec.label);
  return compute_metrics(predictions, truth);
}

}  // namespace latentpath
