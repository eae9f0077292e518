#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "latentpath/common.hpp"
#include "latentpath/tensor.hpp"

namespace latentpath {

enum class OptimizerKind { SGD, Adam };

// Moment buffers are keyed by parameter position and stay shape-congruent
// with their parameters; the step counter advances once per step() call.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double momentum = 0.0;           // SGD only
  double beta1 = 0.9;              // Adam
  double beta2 = 0.999;            // Adam
  double epsilon = 1e-8;           // Adam
  std::int64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;  // Adam only

  static OptimizerState sgd(double lr, double momentum = 0.0) {
    OptimizerState st;
    st.kind = OptimizerKind::SGD;
    st.learning_rate = lr;
    st.momentum = momentum;
    return st;
  }

  static OptimizerState adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                             double epsilon = 1e-8) {
    OptimizerState st;
    st.kind = OptimizerKind::Adam;
    st.learning_rate = lr;
    st.beta1 = beta1;
    st.beta2 = beta2;
    st.epsilon = epsilon;
    return st;
  }
};

// Applies one update to every parameter from its current grad. Grads are
// left untouched; the caller resets them between steps.
inline void optimizer_step(std::vector<Tensor>& params, OptimizerState& state) {
  if (state.first_moment.empty()) {
    state.first_moment.resize(params.size());
    if (state.kind == OptimizerKind::Adam) state.second_moment.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first_moment[i].assign(params[i].numel(), 0.0);
      if (state.kind == OptimizerKind::Adam) state.second_moment[i].assign(params[i].numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw UsageError("optimizer_step: parameter list size changed");
  }
  state.step_count += 1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (!p.has_grad()) {
      throw UsageError("optimizer_step: parameter " + std::to_string(i) + " has no gradient");
    }
    if (state.first_moment[i].size() != p.numel()) {
      throw UsageError("optimizer_step: moment buffer shape mismatch");
    }
    auto values = p.values();
    auto grads = p.grad();
    if (state.kind == OptimizerKind::SGD) {
      auto& vel = state.first_moment[i];
      if (state.momentum != 0.0) {
        for (std::size_t j = 0; j < values.size(); ++j) {
          vel[j] = state.momentum * vel[j] + grads[j];
          values[j] -= state.learning_rate * vel[j];
        }
      } else {
        for (std::size_t j = 0; j < values.size(); ++j) {
          values[j] -= state.learning_rate * grads[j];
        }
      }
    } else {
      auto& m = state.first_moment[i];
      auto& v = state.second_moment[i];
      const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
      const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
      for (std::size_t j = 0; j < values.size(); ++j) {
        const double g = grads[j];
        m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
        v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
        const double m_hat = m[j] / bc1;
        const double v_hat = v[j] / bc2;
        values[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
      }
    }
  }
}

inline void zero_grads(std::vector<Tensor>& params) {
  for (Tensor& p : params) p.zero_grad();
}

}  // namespace latentpath
