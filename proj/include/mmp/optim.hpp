#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mmp/tensor.hpp"

namespace mmp {

struct AdamOptions {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers for one ordered parameter list.
struct AdamState {
  AdamOptions options;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step = 0;

  static AdamState for_parameters(std::span<const Tensor> params, AdamOptions options);
};

/// One bias-corrected Adam update using each parameter's grad buffer. A
/// parameter without a grad buffer is treated as having zero gradient.
void adam_step(std::span<Tensor> params, AdamState& state);

/// Global l2 norm over all gradient buffers.
double global_grad_norm(std::span<const Tensor> params);

/// Rescales every gradient by max_norm / norm when the global norm exceeds
/// max_norm. Returns the norm measured before clipping.
double clip_gradients(std::span<Tensor> params, double max_norm = 0.2);

}  // namespace mmp
