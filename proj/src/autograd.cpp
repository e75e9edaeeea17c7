#include "unipaint/autograd.hpp"

#include <unordered_set>

namespace unipaint::nn {

namespace {

Var make_node(Matrix value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& p : parents) {
    if (p->requires_grad) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward = std::move(fn);
  }
  return node;
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorKind::ShapeMismatch, what);
}

}  // namespace

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

Var parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return node;
}

void accumulate(const Var& v, const Matrix& g) {
  if (!v->requires_grad) return;
  if (v->grad.size() == 0) {
    v->grad = g;
  } else {
    v->grad += g;
  }
}

void backward(const Var& root) {
  require(root->value.rows() == 1 && root->value.cols() == 1, "backward: root must be scalar");
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad = Matrix::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

Var matmul(const Var& a, const Var& b) {
  require(a->value.cols() == b->value.rows(), "matmul: inner dimensions differ");
  return make_node(a->value * b->value, {a, b}, [a, b](Node& self) {
    if (a->requires_grad) accumulate(a, self.grad * b->value.transpose());
    if (b->requires_grad) accumulate(b, a->value.transpose() * self.grad);
  });
}

Var add(const Var& a, const Var& b) {
  require(a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols(),
          "add: shapes differ");
  return make_node(a->value + b->value, {a, b}, [a, b](Node& self) {
    accumulate(a, self.grad);
    accumulate(b, self.grad);
  });
}

Var add_col_broadcast(const Var& a, const Var& b) {
  require(b->value.cols() == 1 && b->value.rows() == a->value.rows(),
          "add_col_broadcast: bias must be rows x 1");
  Matrix out = a->value.colwise() + b->value.col(0);
  return make_node(std::move(out), {a, b}, [a, b](Node& self) {
    accumulate(a, self.grad);
    if (b->requires_grad) accumulate(b, self.grad.rowwise().sum());
  });
}

Var scale(const Var& a, double s) {
  return make_node(a->value * s, {a}, [a, s](Node& self) { accumulate(a, self.grad * s); });
}

Var mul_col_broadcast(const Var& a, const Var& b) {
  require(b->value.cols() == 1 && b->value.rows() == a->value.rows(),
          "mul_col_broadcast: scale must be rows x 1");
  Matrix out = (a->value.array().colwise() * b->value.col(0).array()).matrix();
  return make_node(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) accumulate(a, (self.grad.array().colwise() * b->value.col(0).array()).matrix());
    if (b->requires_grad) accumulate(b, self.grad.cwiseProduct(a->value).rowwise().sum());
  });
}

Var silu(const Var& a) {
  Eigen::ArrayXXd sig = 1.0 / (1.0 + (-a->value.array()).exp());
  Matrix out = (a->value.array() * sig).matrix();
  return make_node(std::move(out), {a}, [a, sig](Node& self) {
    const Eigen::ArrayXXd x = a->value.array();
    accumulate(a, (self.grad.array() * (sig * (1.0 + x * (1.0 - sig)))).matrix());
  });
}

Var transpose(const Var& a) {
  return make_node(a->value.transpose(), {a},
                   [a](Node& self) { accumulate(a, self.grad.transpose()); });
}

Var concat_rows(const Var& a, const Var& b) {
  require(a->value.cols() == b->value.cols(), "concat_rows: column counts differ");
  Matrix out(a->value.rows() + b->value.rows(), a->value.cols());
  out << a->value, b->value;
  const auto ra = a->value.rows();
  const auto rb = b->value.rows();
  return make_node(std::move(out), {a, b}, [a, b, ra, rb](Node& self) {
    if (a->requires_grad) accumulate(a, self.grad.topRows(ra));
    if (b->requires_grad) accumulate(b, self.grad.bottomRows(rb));
  });
}

Var gather_rows(const Var& table, const std::vector<int>& ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table->value.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table->value.rows()) {
      throw Error(ErrorKind::OutOfRange, "gather_rows: id out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = table->value.row(ids[i]);
  }
  return make_node(std::move(out), {table}, [table, ids](Node& self) {
    Matrix g = Matrix::Zero(table->value.rows(), table->value.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) g.row(ids[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    accumulate(table, g);
  });
}

Var im2col3x3(const Var& x, int height, int width) {
  const auto channels = x->value.rows();
  require(x->value.cols() == static_cast<Eigen::Index>(height) * width, "im2col3x3: bad spatial size");
  Matrix out = Matrix::Zero(channels * 9, x->value.cols());
  for (Eigen::Index c = 0; c < channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < height; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          for (int xx = 0; xx < width; ++xx) {
            const int sx = xx + kx - 1;
            if (sx < 0 || sx >= width) continue;
            out(row, y * width + xx) = x->value(c, sy * width + sx);
          }
        }
      }
    }
  }
  return make_node(std::move(out), {x}, [x, height, width, channels](Node& self) {
    Matrix g = Matrix::Zero(channels, x->value.cols());
    for (Eigen::Index c = 0; c < channels; ++c) {
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const Eigen::Index row = c * 9 + ky * 3 + kx;
          for (int y = 0; y < height; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= height) continue;
            for (int xx = 0; xx < width; ++xx) {
              const int sx = xx + kx - 1;
              if (sx < 0 || sx >= width) continue;
              g(c, sy * width + sx) += self.grad(row, y * width + xx);
            }
          }
        }
      }
    }
    accumulate(x, g);
  });
}

Var avg_pool2(const Var& x, int height, int width) {
  require(height % 2 == 0 && width % 2 == 0, "avg_pool2: odd spatial size");
  const int oh = height / 2, ow = width / 2;
  Matrix out = Matrix::Zero(x->value.rows(), oh * ow);
  for (int y = 0; y < height; ++y) {
    for (int xx = 0; xx < width; ++xx) {
      out.col((y / 2) * ow + xx / 2) += 0.25 * x->value.col(y * width + xx);
    }
  }
  return make_node(std::move(out), {x}, [x, height, width, ow](Node& self) {
    Matrix g(x->value.rows(), x->value.cols());
    for (int y = 0; y < height; ++y) {
      for (int xx = 0; xx < width; ++xx) g.col(y * width + xx) = 0.25 * self.grad.col((y / 2) * ow + xx / 2);
    }
    accumulate(x, g);
  });
}

Var upsample2(const Var& x, int height, int width) {
  const int oh = height * 2, ow = width * 2;
  Matrix out(x->value.rows(), oh * ow);
  for (int y = 0; y < oh; ++y) {
    for (int xx = 0; xx < ow; ++xx) out.col(y * ow + xx) = x->value.col((y / 2) * width + xx / 2);
  }
  return make_node(std::move(out), {x}, [x, oh, ow, width](Node& self) {
    Matrix g = Matrix::Zero(x->value.rows(), x->value.cols());
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) g.col((y / 2) * width + xx / 2) += self.grad.col(y * ow + xx);
    }
    accumulate(x, g);
  });
}

Var attention(const Var& q, const Var& k, const Var& v, const Matrix* mask,
              MaskApplication application) {
  require(k->value.rows() == v->value.rows(), "attention: K/V rows differ");
  // Post-softmax keeps the unmasked probabilities for the backward pass.
  Matrix probs;
  Matrix weights;
  if (mask && application == MaskApplication::PostSoftmax) {
    probs = attention_weights<double>(q->value, k->value, nullptr);
    require(mask->rows() == probs.rows() && mask->cols() == probs.cols(),
            "attention: mask must be queries x keys");
    weights = probs.cwiseProduct(*mask);
  } else {
    weights = attention_weights<double>(q->value, k->value, mask, application);
  }
  Matrix out = weights * v->value;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q->value.cols()));
  Matrix mask_copy = mask ? *mask : Matrix();
  const bool post = mask && application == MaskApplication::PostSoftmax;
  return make_node(std::move(out), {q, k, v},
                   [q, k, v, probs, weights, mask_copy, post, inv_sqrt_d](Node& self) {
                     if (v->requires_grad) accumulate(v, weights.transpose() * self.grad);
                     if (!q->requires_grad && !k->requires_grad) return;
                     const Matrix d_weights = self.grad * v->value.transpose();
                     Matrix d_logits;
                     if (post) {
                       const Matrix d_probs = d_weights.cwiseProduct(mask_copy);
                       const Eigen::VectorXd row_dot = d_probs.cwiseProduct(probs).rowwise().sum();
                       d_logits = probs.cwiseProduct(d_probs.colwise() - row_dot);
                     } else {
                       const Eigen::VectorXd row_dot = d_weights.cwiseProduct(weights).rowwise().sum();
                       d_logits = weights.cwiseProduct(d_weights.colwise() - row_dot);
                     }
                     if (q->requires_grad) accumulate(q, d_logits * k->value * inv_sqrt_d);
                     if (k->requires_grad) accumulate(k, d_logits.transpose() * q->value * inv_sqrt_d);
                   });
}

double masked_mse_value(const Matrix& pred, const Matrix& target,
                        const Eigen::RowVectorXd& column_mask) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols() &&
              column_mask.size() == pred.cols(),
          "masked_mse: shapes differ");
  const double count = column_mask.sum() * static_cast<double>(pred.rows());
  if (count == 0.0) return 0.0;
  const Matrix residual = (target - pred).array().rowwise() * column_mask.array();
  return residual.squaredNorm() / count;
}

Matrix masked_mse_grad(const Matrix& pred, const Matrix& target,
                       const Eigen::RowVectorXd& column_mask) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols() &&
              column_mask.size() == pred.cols(),
          "masked_mse: shapes differ");
  const double count = column_mask.sum() * static_cast<double>(pred.rows());
  if (count == 0.0) return Matrix::Zero(pred.rows(), pred.cols());
  Matrix g = (pred - target) * (2.0 / count);
  g.array().rowwise() *= column_mask.array();
  return g;
}

Var masked_mse(const Var& pred, const Matrix& target, const Eigen::RowVectorXd& column_mask) {
  Matrix value(1, 1);
  value(0, 0) = masked_mse_value(pred->value, target, column_mask);
  return make_node(std::move(value), {pred}, [pred, target, column_mask](Node& self) {
    accumulate(pred, masked_mse_grad(pred->value, target, column_mask) * self.grad(0, 0));
  });
}

}  // namespace unipaint::nn
