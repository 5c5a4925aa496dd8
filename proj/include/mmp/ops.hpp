#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mmp/rng.hpp"
#include "mmp/tensor.hpp"

// Differentiable operations. Matrices are rank-2 row-major; "rows" ops treat
// the leading axis as the sequence axis.
namespace mmp::ops {

Tensor matmul(const Tensor& a, const Tensor& b);             // [P,Q]x[Q,R]
Tensor matmul_transposed(const Tensor& a, const Tensor& b);  // [P,Q]x[R,Q]^T
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// x[N,D] + bias[D] on every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Softmax over the trailing axis of x / temperature.
Tensor softmax(const Tensor& logits, double temperature = 1.0);

/// Per-row normalization over the trailing axis, eps inside the square root.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

/// Inverted dropout. Identity when !training or rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);

/// Rows of `table` selected by ids; out-of-range ids are a usage error.
Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids);

Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
/// Row r of a matrix as a rank-1 tensor.
Tensor row(const Tensor& x, std::size_t r);
/// Stacks rank-1 tensors of equal length into a matrix.
Tensor stack_rows(const std::vector<Tensor>& rows);

/// Each row divided by its l2 norm; a zero row is a numeric error naming it.
Tensor l2_normalize_rows(const Tensor& x, const char* what = "row");

}  // namespace mmp::ops
