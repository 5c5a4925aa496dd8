#include "mmp/optim.hpp"

#include <cmath>
#include <string>

#include "mmp/errors.hpp"

namespace mmp {

AdamState AdamState::for_parameters(std::span<const Tensor> params, AdamOptions options) {
  AdamState state;
  state.options = options;
  for (const Tensor& p : params) {
    state.first_moment.emplace_back(p.numel(), 0.0);
    state.second_moment.emplace_back(p.numel(), 0.0);
  }
  return state;
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (params.size() != state.first_moment.size()) {
    throw UsageError("adam_step: " + std::to_string(params.size()) +
                     " parameters but state tracks " +
                     std::to_string(state.first_moment.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (state.first_moment[k].size() != params[k].numel() ||
        state.second_moment[k].size() != params[k].numel()) {
      throw UsageError("adam_step: moment buffer " + std::to_string(k) +
                       " does not match parameter " + shape_string(params[k].shape()));
    }
  }
  if (state.step < 0) throw UsageError("adam_step: negative step counter");

  const AdamOptions& o = state.options;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(o.beta1, t);
  const double bias2 = 1.0 - std::pow(o.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    auto theta = p.mutable_data();
    auto g = p.grad_buffer();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      theta[i] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

double global_grad_norm(std::span<const Tensor> params) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    for (double g : p.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_gradients(std::span<Tensor> params, double max_norm) {
  if (!(max_norm > 0.0)) throw ParameterError("clip_gradients: max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.grad_buffer()) g *= factor;
    }
  }
  return norm;
}

}  // namespace mmp
