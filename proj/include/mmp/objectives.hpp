#pragma once

#include <optional>

#include "mmp/tensor.hpp"

namespace mmp {

/// s(a, b) = a.b / (|a| |b|) as a differentiable scalar.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

/// S[i][j] = s(cx[i], cv[j]) for two [B, D] matrices.
Tensor similarity_matrix(const Tensor& cx, const Tensor& cv);

/// Batch NCE over a square similarity matrix:
///   loss = -(1/B) sum_i log( e^{S_ii/tau} /
///          (e^{S_ii/tau} + sum_{j!=i} e^{S_ij/tau} + sum_{j!=i} e^{S_ji/tau}) )
/// The negatives of pair i are every other text and every other video in
/// the batch, pooled into one denominator.
Tensor nce_batch_loss(const Tensor& similarity, double tau = 0.1);

/// Bidirectional max-margin loss with all in-batch negatives:
///   (1/B) sum_i sum_{j!=i} [m - S_ii + S_ij]_+ + [m - S_ii + S_ji]_+
Tensor triplet_batch_loss(const Tensor& similarity, double margin = 0.2);

/// One intra-modal term: NCE between items and their noised views.
Tensor intra_modal_loss(const Tensor& encodings, const Tensor& masked_encodings,
                        double tau = 0.1);

/// NCE between video-conditioned encodings of two languages.
Tensor cross_lingual_loss(const Tensor& conditioned_x, const Tensor& conditioned_y,
                          double tau = 0.1);

enum class Objective { kNce, kTriplet };

struct LossOptions {
  Objective objective = Objective::kNce;
  bool intra = true;
  bool cross = false;
  double tau = 0.1;
  double margin = 0.2;
};

/// Row-stacked encodings of one batch. `pivot*` members are present only for
/// pivoted (x, v, y) batches; `*_masked` only when the intra term is on;
/// `*_conditioned` only when the cross term is on.
struct BatchEncodings {
  Tensor text;
  Tensor video;
  Tensor text_masked;
  Tensor video_masked;
  Tensor pivot;
  Tensor pivot_masked;
  Tensor text_conditioned;
  Tensor pivot_conditioned;

  bool pivoted() const { return pivot.defined(); }
};

struct LossBreakdown {
  double inter = 0.0;
  double intra = 0.0;
  std::optional<double> cross;
  double total = 0.0;
};

struct TotalLoss {
  Tensor value;  // differentiable total
  LossBreakdown breakdown;
};

/// Paired batches: L(X,V) [+ L(X,X^m) + L(V,V^m)].
/// Pivoted batches: L(X,V) + L(Y,V) [+ L(X,X^m) + L(Y,Y^m) + L(V,V^m)]
///                  [+ L(X|V, Y|V)].
/// With the triplet objective every inter-modal term uses the triplet loss.
TotalLoss total_loss(const BatchEncodings& batch, const LossOptions& options);

}  // namespace mmp
