#pragma once

#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "unipaint/attention.hpp"

// Minimal reverse-mode differentiation over dense double matrices. Each op
// records its parents and a closure that pushes the node's gradient back.
// Nodes whose parents need no gradient are built without closures, so the
// same forward code serves inference and training.

namespace unipaint::nn {

using Matrix = Eigen::MatrixXd;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

using Var = std::shared_ptr<Node>;

Var constant(Matrix value);
Var parameter(Matrix value);

/// Adds `g` into v's gradient if v participates in differentiation.
void accumulate(const Var& v, const Matrix& g);

/// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to all leaves.
void backward(const Var& root);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
/// a (rows x cols) + b (rows x 1) broadcast over columns.
Var add_col_broadcast(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// a (rows x cols) scaled per row by b (rows x 1).
Var mul_col_broadcast(const Var& a, const Var& b);
Var silu(const Var& a);
Var transpose(const Var& a);
/// Stack along rows (channel concatenation).
Var concat_rows(const Var& a, const Var& b);
/// Rows of `table` selected by ids, in order.
Var gather_rows(const Var& table, const std::vector<int>& ids);

/// 3x3 zero-padded patch extraction: (C x H·W) -> (9C x H·W).
Var im2col3x3(const Var& x, int height, int width);
/// 2x2 average pooling: (C x H·W) -> (C x H/2·W/2).
Var avg_pool2(const Var& x, int height, int width);
/// Nearest 2x upsampling: (C x H·W) -> (C x 2H·2W).
Var upsample2(const Var& x, int height, int width);

/// Masked attention over rows (Q: n x d, K/V: m x d). `mask` may be null.
Var attention(const Var& q, const Var& k, const Var& v, const Matrix* mask,
              MaskApplication application);

/// Σ_masked (target − pred)² / (#masked entries); `column_mask` holds one
/// weight in {0,1} per column. Zero (with zero gradient) for an empty mask.
Var masked_mse(const Var& pred, const Matrix& target, const Eigen::RowVectorXd& column_mask);

/// Plain value and analytic gradient d/d(pred) of masked_mse.
double masked_mse_value(const Matrix& pred, const Matrix& target,
                        const Eigen::RowVectorXd& column_mask);
Matrix masked_mse_grad(const Matrix& pred, const Matrix& target,
                       const Eigen::RowVectorXd& column_mask);

}  // namespace unipaint::nn
