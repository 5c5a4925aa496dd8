#include "mmp/objectives.hpp"

#include <cmath>
#include <string>

#include "mmp/errors.hpp"
#include "mmp/ops.hpp"

namespace mmp {

namespace {

std::size_t require_square(const Tensor& s, const char* op) {
  if (s.rank() != 2 || s.rows() != s.cols()) {
    throw DimensionError(std::string(op) + ": similarity matrix must be square, got " +
                         shape_string(s.shape()));
  }
  return s.rows();
}

Tensor add_terms(const Tensor& a, const Tensor& b) { return ops::add(a, b); }

}  // namespace

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || a.shape() != b.shape()) {
    throw DimensionError("cosine_similarity: expected equal-length vectors, got " +
                         shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  const std::size_t d = a.numel();
  Tensor s = similarity_matrix(a.reshape({1, d}), b.reshape({1, d}));
  return s.reshape({});
}

Tensor similarity_matrix(const Tensor& cx, const Tensor& cv) {
  if (cx.rank() != 2 || cx.shape() != cv.shape()) {
    throw DimensionError("similarity_matrix: expected matching [B, D] inputs, got " +
                         shape_string(cx.shape()) + " and " + shape_string(cv.shape()));
  }
  Tensor x = ops::l2_normalize_rows(cx, "text row");
  Tensor v = ops::l2_normalize_rows(cv, "video row");
  return ops::matmul_transposed(x, v);
}

Tensor nce_batch_loss(const Tensor& similarity, double tau) {
  if (!(tau > 0.0)) {
    throw ParameterError("nce_batch_loss: temperature must be positive, got " +
                         std::to_string(tau));
  }
  const std::size_t b = require_square(similarity, "nce_batch_loss");
  auto s = similarity.data();

  // weights[i] holds the softmax weight of every logit in pair i's
  // denominator: the row S_i* and the column S_*i (diagonal counted once).
  std::vector<double> row_weight(b * b), col_weight(b * b);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double mx = s[i * b + i];
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      mx = std::max({mx, s[i * b + j], s[j * b + i]});
    }
    const double pos = (s[i * b + i] - mx) / tau;
    double z = std::exp(pos);
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      z += std::exp((s[i * b + j] - mx) / tau) + std::exp((s[j * b + i] - mx) / tau);
    }
    const double log_z = std::log(z);
    total += log_z - pos;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) {
        row_weight[i * b + j] = std::exp(pos - log_z);
        col_weight[i * b + j] = 0.0;
      } else {
        row_weight[i * b + j] = std::exp((s[i * b + j] - mx) / tau - log_z);
        col_weight[i * b + j] = std::exp((s[j * b + i] - mx) / tau - log_z);
      }
    }
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  return Tensor::make_result(
      {}, {total * inv_b}, {similarity}, "nce_batch_loss",
      [b, tau, inv_b, row_weight = std::move(row_weight), col_weight = std::move(col_weight)](
          std::span<const double> g, std::span<Tensor> in) {
        if (!in[0].requires_grad()) return;
        auto ds = in[0].grad_buffer();
        const double c = g[0] * inv_b / tau;
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < b; ++j) {
            // d/dS_ij of loss_i via the row, and of loss_j via its column.
            ds[i * b + j] += c * row_weight[i * b + j];
            if (j != i) ds[j * b + i] += c * col_weight[i * b + j];
          }
          ds[i * b + i] -= c;
        }
      });
}

Tensor triplet_batch_loss(const Tensor& similarity, double margin) {
  if (!(margin >= 0.0)) throw ParameterError("triplet_batch_loss: margin must be >= 0");
  const std::size_t b = require_square(similarity, "triplet_batch_loss");
  auto s = similarity.data();
  std::vector<double> slope(b * b, 0.0);  // d loss / d S, before the 1/B factor
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      const double h_row = margin - s[i * b + i] + s[i * b + j];
      if (h_row > 0.0) {
        total += h_row;
        slope[i * b + j] += 1.0;
        slope[i * b + i] -= 1.0;
      }
      const double h_col = margin - s[i * b + i] + s[j * b + i];
      if (h_col > 0.0) {
        total += h_col;
        slope[j * b + i] += 1.0;
        slope[i * b + i] -= 1.0;
      }
    }
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  return Tensor::make_result({}, {total * inv_b}, {similarity}, "triplet_batch_loss",
                             [inv_b, slope = std::move(slope)](std::span<const double> g,
                                                               std::span<Tensor> in) {
                               if (!in[0].requires_grad()) return;
                               auto ds = in[0].grad_buffer();
                               for (std::size_t k = 0; k < slope.size(); ++k)
                                 ds[k] += g[0] * inv_b * slope[k];
                             });
}

Tensor intra_modal_loss(const Tensor& encodings, const Tensor& masked_encodings, double tau) {
  return nce_batch_loss(similarity_matrix(encodings, masked_encodings), tau);
}

Tensor cross_lingual_loss(const Tensor& conditioned_x, const Tensor& conditioned_y,
                          double tau) {
  return nce_batch_loss(similarity_matrix(conditioned_x, conditioned_y), tau);
}

TotalLoss total_loss(const BatchEncodings& batch, const LossOptions& options) {
  if (!batch.text.defined() || !batch.video.defined()) {
    throw UsageError("total_loss: batch needs text and video encodings");
  }
  if (options.cross && !batch.pivoted()) {
    throw ConfigError("cross-lingual objective requires pivoted (x, v, y) batches");
  }
  auto inter_term = [&](const Tensor& text) {
    Tensor s = similarity_matrix(text, batch.video);
    return options.objective == Objective::kNce ? nce_batch_loss(s, options.tau)
                                                : triplet_batch_loss(s, options.margin);
  };
  auto require = [](const Tensor& t, const char* what) {
    if (!t.defined()) throw UsageError(std::string("total_loss: missing ") + what);
  };

  Tensor inter = inter_term(batch.text);
  if (batch.pivoted()) inter = add_terms(inter, inter_term(batch.pivot));

  TotalLoss out;
  Tensor total = inter;
  out.breakdown.inter = inter.item();
  if (options.intra) {
    require(batch.text_masked, "masked text encodings");
    require(batch.video_masked, "masked video encodings");
    Tensor intra = intra_modal_loss(batch.text, batch.text_masked, options.tau);
    if (batch.pivoted()) {
      require(batch.pivot_masked, "masked pivot encodings");
      intra = add_terms(intra, intra_modal_loss(batch.pivot, batch.pivot_masked, options.tau));
    }
    intra = add_terms(intra, intra_modal_loss(batch.video, batch.video_masked, options.tau));
    out.breakdown.intra = intra.item();
    total = add_terms(total, intra);
  }
  if (options.cross) {
    require(batch.text_conditioned, "conditioned text encodings");
    require(batch.pivot_conditioned, "conditioned pivot encodings");
    Tensor cross =
        cross_lingual_loss(batch.text_conditioned, batch.pivot_conditioned, options.tau);
    out.breakdown.cross = cross.item();
    total = add_terms(total, cross);
  }
  out.breakdown.total = total.item();
  out.value = total;
  return out;
}

}  // namespace mmp
