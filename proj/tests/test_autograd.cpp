#include <doctest.h>

#include <functional>
#include <random>

#include "unipaint/autograd.hpp"

using namespace unipaint;
using nn::Matrix;
using nn::Var;

namespace {

Matrix random_matrix(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

using Forward = std::function<Var(const std::vector<Var>&)>;

/// Compares reverse-mode gradients of mse(f(inputs), target) with central
/// differences, entry by entry.
void check_gradients(const std::vector<Matrix>& inputs, const Forward& f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Var> params;
  for (const auto& m : inputs) params.push_back(nn::parameter(m));
  const Var out = f(params);
  const Matrix target = random_matrix(static_cast<int>(out->value.rows()), static_cast<int>(out->value.cols()), rng);
  const Eigen::RowVectorXd all = Eigen::RowVectorXd::Ones(out->value.cols());
  nn::backward(nn::masked_mse(out, target, all));

  const double h = 1e-6;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    for (Eigen::Index i = 0; i < inputs[p].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Var> probe;
        for (std::size_t q = 0; q < inputs.size(); ++q) {
          Matrix m = inputs[q];
          if (q == p) m.data()[i] += delta;
          probe.push_back(nn::constant(m));
        }
        return nn::masked_mse_value(f(probe)->value, target, all);
      };
      const double numeric = (eval(h) - eval(-h)) / (2 * h);
      const double analytic = params[p]->grad.data()[i];
      CHECK(analytic == doctest::Approx(numeric).epsilon(1e-5).scale(1.0));
    }
  }
}

}  // namespace

TEST_SUITE("autograd") {
  TEST_CASE("matmul, add, scale, transpose") {
    std::mt19937_64 rng(1);
    check_gradients({random_matrix(3, 4, rng), random_matrix(4, 2, rng), random_matrix(2, 3, rng)},
                    [](const std::vector<Var>& v) {
                      return nn::add(nn::scale(nn::matmul(v[0], v[1]), 0.7), nn::transpose(v[2]));
                    },
                    10);
  }

  TEST_CASE("broadcasts and silu") {
    std::mt19937_64 rng(2);
    check_gradients({random_matrix(3, 5, rng), random_matrix(3, 1, rng), random_matrix(3, 1, rng)},
                    [](const std::vector<Var>& v) {
                      return nn::silu(nn::mul_col_broadcast(nn::add_col_broadcast(v[0], v[1]), v[2]));
                    },
                    11);
  }

  TEST_CASE("concat and gather") {
    std::mt19937_64 rng(3);
    check_gradients({random_matrix(2, 3, rng), random_matrix(4, 3, rng)},
                    [](const std::vector<Var>& v) {
                      return nn::concat_rows(v[0], nn::gather_rows(v[1], {3, 0, 3}));
                    },
                    12);
  }

  TEST_CASE("spatial ops") {
    std::mt19937_64 rng(4);
    check_gradients({random_matrix(2, 16, rng)},
                    [](const std::vector<Var>& v) {
                      const Var pooled = nn::avg_pool2(v[0], 4, 4);
                      const Var up = nn::upsample2(pooled, 2, 2);
                      return nn::im2col3x3(nn::add(up, v[0]), 4, 4);
                    },
                    13);
  }

  TEST_CASE("attention, unmasked and masked in both modes") {
    std::mt19937_64 rng(5);
    Matrix mask = Matrix::Ones(4, 3);
    mask(0, 1) = 0;
    mask(2, 0) = 0;
    mask(2, 2) = 0;
    for (const Matrix* m : {static_cast<const Matrix*>(nullptr), static_cast<const Matrix*>(&mask)}) {
      for (auto app : {MaskApplication::PostSoftmax, MaskApplication::PreSoftmax}) {
        check_gradients({random_matrix(4, 2, rng), random_matrix(3, 2, rng), random_matrix(3, 5, rng)},
                        [m, app](const std::vector<Var>& v) { return nn::attention(v[0], v[1], v[2], m, app); },
                        14);
      }
    }
  }

  TEST_CASE("attention forward matches the reference") {
    std::mt19937_64 rng(6);
    const Matrix q = random_matrix(4, 3, rng), k = random_matrix(5, 3, rng), v = random_matrix(5, 2, rng);
    Matrix mask = Matrix::Ones(4, 5);
    mask(1, 2) = 0;
    const Var out = nn::attention(nn::constant(q), nn::constant(k), nn::constant(v), &mask, MaskApplication::PostSoftmax);
    CHECK(out->value == masked_attention<double>(q, k, v, &mask));
  }

  TEST_CASE("masked mse") {
    Matrix pred(2, 3), target(2, 3);
    pred << 1, 2, 3, 4, 5, 6;
    target << 0, 2, 1, 4, 4, 9;
    Eigen::RowVectorXd m(3);
    m << 1, 0, 1;
    // Masked entries: (1-0)², (3-1)², (4-4)², (6-9)² over 4 entries.
    CHECK(nn::masked_mse_value(pred, target, m) == doctest::Approx((1.0 + 4.0 + 0.0 + 9.0) / 4.0));
    const Matrix g = nn::masked_mse_grad(pred, target, m);
    CHECK(g.col(1).isZero(0.0));
    CHECK(g(0, 2) == doctest::Approx(2.0 * 2.0 / 4.0));
    CHECK(nn::masked_mse_value(pred, target, Eigen::RowVectorXd::Zero(3)) == 0.0);
    CHECK(nn::masked_mse_grad(pred, target, Eigen::RowVectorXd::Zero(3)).isZero(0.0));
  }

  TEST_CASE("constants carry no tape") {
    const Var a = nn::constant(Matrix::Ones(2, 2));
    const Var b = nn::matmul(a, a);
    CHECK_FALSE(b->requires_grad);
    CHECK(b->parents.empty());
  }
}
