#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "unipaint/tensor.hpp"

namespace unipaint {

/// Where the binary attention mask enters. PostSoftmax multiplies the
/// softmax weights by M without renormalizing; PreSoftmax drops masked
/// logits before the softmax (fully masked rows produce zero output).
enum class MaskApplication { PostSoftmax, PreSoftmax };

/// Which (query, key) pairs the self-attention mask blocks.
enum class SelfMaskOrientation {
  KnownQueryUnknownKey,  // known pixels cannot read from the hole
  UnknownQueryKnownKey,
};

/// Row-wise softmax of a logit matrix, max-subtracted.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out = logits;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Scalar row_max = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - row_max).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

/// Attention weights A with output = A·V.
///   PostSoftmax: A = softmax(QKᵀ/√d) ⊙ M
///   PreSoftmax:  A = softmax over the keys allowed by M only
template <typename Scalar>
MatrixX<Scalar> attention_weights(const MatrixX<Scalar>& q, const MatrixX<Scalar>& k,
                                  const MatrixX<Scalar>* mask,
                                  MaskApplication application = MaskApplication::PostSoftmax) {
  if (q.cols() != k.cols()) throw Error(ErrorKind::ShapeMismatch, "attention: Q/K width differ");
  if (mask && (mask->rows() != q.rows() || mask->cols() != k.rows())) {
    throw Error(ErrorKind::ShapeMismatch, "attention: mask must be queries x keys");
  }
  const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(static_cast<Scalar>(q.cols()));
  MatrixX<Scalar> logits = (q * k.transpose()) * inv_sqrt_d;
  if (!mask) return softmax_rows(logits);
  if (application == MaskApplication::PostSoftmax) {
    return softmax_rows(logits).cwiseProduct(*mask);
  }
  MatrixX<Scalar> weights = MatrixX<Scalar>::Zero(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Scalar row_max = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      if ((*mask)(i, j) != Scalar(0)) row_max = std::max(row_max, logits(i, j));
    }
    if (row_max == -std::numeric_limits<Scalar>::infinity()) continue;
    Scalar total = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      if ((*mask)(i, j) != Scalar(0)) {
        weights(i, j) = std::exp(logits(i, j) - row_max);
        total += weights(i, j);
      }
    }
    weights.row(i) /= total;
  }
  return weights;
}

/// [softmax(QKᵀ/√d) ⊙ M]·V. Q: queries x d, K and V: keys x d, M: queries x keys.
/// A null mask is plain scaled dot-product attention.
template <typename Scalar>
MatrixX<Scalar> masked_attention(const MatrixX<Scalar>& q, const MatrixX<Scalar>& k,
                                 const MatrixX<Scalar>& v, const MatrixX<Scalar>* mask = nullptr,
                                 MaskApplication application = MaskApplication::PostSoftmax) {
  if (k.rows() != v.rows()) throw Error(ErrorKind::ShapeMismatch, "attention: K/V rows differ");
  if (mask && !((mask->array() == Scalar(0)) || (mask->array() == Scalar(1))).all()) {
    throw Error(ErrorKind::InvalidInput, "attention: mask must be binary");
  }
  return attention_weights(q, k, mask, application) * v;
}

/// Cross-attention mask (pixels x tokens): row i is zero iff pixel i is known.
template <typename Scalar = double>
MatrixX<Scalar> build_cross_mask(const RegionMask& feature_mask, int text_length) {
  feature_mask.require_binary("build_cross_mask");
  MatrixX<Scalar> m(feature_mask.size(), text_length);
  for (int i = 0; i < feature_mask.size(); ++i) {
    m.row(i).setConstant(feature_mask[i] == 1 ? Scalar(0) : Scalar(1));
  }
  return m;
}

/// Self-attention mask (queries x keys over the same pixels).
template <typename Scalar = double>
MatrixX<Scalar> build_self_mask(const RegionMask& feature_mask,
                                SelfMaskOrientation orientation =
                                    SelfMaskOrientation::KnownQueryUnknownKey) {
  feature_mask.require_binary("build_self_mask");
  const int n = feature_mask.size();
  MatrixX<Scalar> m = MatrixX<Scalar>::Ones(n, n);
  for (int q = 0; q < n; ++q) {
    for (int k = 0; k < n; ++k) {
      const bool q_known = feature_mask[q] == 1;
      const bool k_known = feature_mask[k] == 1;
      const bool blocked = orientation == SelfMaskOrientation::KnownQueryUnknownKey
                               ? (q_known && !k_known)
                               : (!q_known && k_known);
      if (blocked) m(q, k) = Scalar(0);
    }
  }
  return m;
}

/// Masks for one feature resolution.
struct AttentionMaskLevel {
  RegionMask feature_mask;
  MatrixX<double> self_mask;

  int height() const noexcept { return feature_mask.height(); }
  int width() const noexcept { return feature_mask.width(); }
  MatrixX<double> cross_mask(int text_length) const {
    return build_cross_mask<double>(feature_mask, text_length);
  }
};

/// Per-resolution attention masks derived from a latent-resolution region
/// mask. Immutable once built.
class AttentionMaskSet {
 public:
  AttentionMaskSet() = default;

  /// One level per downsampling factor (relative to the latent mask), each
  /// built with the conservative all-known rule.
  static AttentionMaskSet build(const RegionMask& latent_mask, const std::vector<int>& factors,
                                SelfMaskOrientation orientation =
                                    SelfMaskOrientation::KnownQueryUnknownKey,
                                MaskApplication application = MaskApplication::PostSoftmax);

  const AttentionMaskLevel* find(int height, int width) const noexcept;
  const std::vector<AttentionMaskLevel>& levels() const noexcept { return levels_; }
  MaskApplication application() const noexcept { return application_; }

 private:
  std::vector<AttentionMaskLevel> levels_;
  MaskApplication application_ = MaskApplication::PostSoftmax;
};

}  // namespace unipaint
