#pragma once

#include <cmath>
#include <vector>

#include "unipaint/tensor.hpp"

namespace unipaint {

enum class ScheduleKind { Linear };

/// Cumulative signal retention ᾱ_t for t = 0..T, with ᾱ_0 = 1 (clean data).
template <typename Scalar>
class NoiseScheduleT {
 public:
  NoiseScheduleT() = default;
  explicit NoiseScheduleT(std::vector<Scalar> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
    if (alpha_bar_.size() < 2 || alpha_bar_.front() != Scalar(1)) {
      throw Error(ErrorKind::InvalidInput, "schedule must start at alpha_bar_0 = 1 and have T >= 1");
    }
    for (std::size_t t = 1; t < alpha_bar_.size(); ++t) {
      if (!(alpha_bar_[t] < alpha_bar_[t - 1]) || !(alpha_bar_[t] > Scalar(0))) {
        throw Error(ErrorKind::InvalidInput, "alpha_bar must be strictly decreasing within (0,1]");
      }
    }
  }

  int T() const noexcept { return static_cast<int>(alpha_bar_.size()) - 1; }
  Scalar alpha_bar(int t) const {
    require_timestep(t);
    return alpha_bar_[static_cast<std::size_t>(t)];
  }
  const std::vector<Scalar>& alpha_bars() const noexcept { return alpha_bar_; }

  void require_timestep(int t) const {
    if (t < 0 || t > T()) {
      throw Error(ErrorKind::OutOfRange,
                  "timestep " + std::to_string(t) + " outside [0, " + std::to_string(T()) + "]");
    }
  }

 private:
  std::vector<Scalar> alpha_bar_;
};

using NoiseSchedule = NoiseScheduleT<double>;

inline constexpr double kDefaultBetaMin = 1e-4;
inline constexpr double kDefaultBetaMax = 0.02;
inline constexpr int kDefaultTrainTimesteps = 1000;

/// DDPM linear-β schedule: β_i linearly spaced over [beta_min, beta_max] for
/// i = 1..T, ᾱ_t = Π_{i<=t} (1 - β_i).
template <typename Scalar = double>
NoiseScheduleT<Scalar> make_schedule(int T, ScheduleKind kind = ScheduleKind::Linear,
                                     double beta_min = kDefaultBetaMin,
                                     double beta_max = kDefaultBetaMax) {
  if (T < 1) throw Error(ErrorKind::InvalidInput, "make_schedule: T must be >= 1");
  if (!(beta_min > 0.0) || !(beta_max >= beta_min) || !(beta_max < 1.0)) {
    throw Error(ErrorKind::InvalidInput, "make_schedule: need 0 < beta_min <= beta_max < 1");
  }
  (void)kind;
  std::vector<Scalar> alpha_bar(static_cast<std::size_t>(T) + 1);
  alpha_bar[0] = Scalar(1);
  for (int i = 1; i <= T; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i - 1) / static_cast<double>(T - 1);
    const Scalar beta = static_cast<Scalar>(beta_min + (beta_max - beta_min) * frac);
    alpha_bar[static_cast<std::size_t>(i)] = alpha_bar[static_cast<std::size_t>(i - 1)] * (Scalar(1) - beta);
  }
  return NoiseScheduleT<Scalar>(std::move(alpha_bar));
}

/// √ᾱ_t·x0 + √(1−ᾱ_t)·eps
template <typename Scalar>
LatentMapT<Scalar> add_noise(const LatentMapT<Scalar>& x0, int t, const LatentMapT<Scalar>& eps,
                             const NoiseScheduleT<Scalar>& sched) {
  require_same_shape(x0, eps, "add_noise");
  const Scalar a = sched.alpha_bar(t);
  return LatentMapT<Scalar>(x0.height(), x0.width(),
                            std::sqrt(a) * x0.values() + std::sqrt(Scalar(1) - a) * eps.values());
}

/// Deterministic (η = 0) DDIM update between signal levels a_t and a_prev.
/// Evaluated in coefficient form x_prev = r·x_t + (√(1−ᾱ_prev) − r·√(1−ᾱ_t))·eps
/// with r = √(ᾱ_prev/ᾱ_t), which is algebraically the predict-x0-then-renoise
/// update and keeps the degenerate cases exact.
template <typename DerivedX, typename DerivedE>
auto ddim_update(const Eigen::MatrixBase<DerivedX>& x_t, const Eigen::MatrixBase<DerivedE>& eps_pred,
                 typename DerivedX::Scalar a_t, typename DerivedX::Scalar a_prev) {
  using Scalar = typename DerivedX::Scalar;
  const Scalar ratio = std::sqrt(a_prev / a_t);
  const Scalar eps_coeff = std::sqrt(Scalar(1) - a_prev) - ratio * std::sqrt(Scalar(1) - a_t);
  return ratio * x_t + eps_coeff * eps_pred;
}

/// DDIM step from timestep t to t_prev < t.
template <typename Scalar>
LatentMapT<Scalar> ddim_step(const LatentMapT<Scalar>& x_t, const LatentMapT<Scalar>& eps_pred,
                             int t, int t_prev, const NoiseScheduleT<Scalar>& sched) {
  require_same_shape(x_t, eps_pred, "ddim_step");
  if (t_prev >= t) {
    throw Error(ErrorKind::InvalidInput, "ddim_step: t_prev must be < t");
  }
  return LatentMapT<Scalar>(x_t.height(), x_t.width(),
                            ddim_update(x_t.values(), eps_pred.values(), sched.alpha_bar(t),
                                        sched.alpha_bar(t_prev)));
}

/// Predicted clean latent (x_t − √(1−ᾱ_t)·eps)/√ᾱ_t.
template <typename Scalar>
LatentMapT<Scalar> predict_x0(const LatentMapT<Scalar>& x_t, const LatentMapT<Scalar>& eps_pred,
                              int t, const NoiseScheduleT<Scalar>& sched) {
  require_same_shape(x_t, eps_pred, "predict_x0");
  const Scalar a_t = sched.alpha_bar(t);
  return LatentMapT<Scalar>(
      x_t.height(), x_t.width(),
      (x_t.values() - std::sqrt(Scalar(1) - a_t) * eps_pred.values()) / std::sqrt(a_t));
}

/// Classifier-free guidance ε_u + s·(ε_c − ε_u), written as
/// ε_c + (s−1)·(ε_c − ε_u) so that s = 1 and ε_c = ε_u are exact.
template <typename DerivedU, typename DerivedC>
auto cfg_combine(const Eigen::MatrixBase<DerivedU>& eps_uncond,
                 const Eigen::MatrixBase<DerivedC>& eps_cond, typename DerivedU::Scalar scale) {
  using Scalar = typename DerivedU::Scalar;
  return eps_cond + (scale - Scalar(1)) * (eps_cond - eps_uncond);
}

template <typename Scalar>
LatentMapT<Scalar> cfg_combine(const LatentMapT<Scalar>& eps_uncond,
                               const LatentMapT<Scalar>& eps_cond, Scalar scale) {
  require_same_shape(eps_uncond, eps_cond, "cfg_combine");
  return LatentMapT<Scalar>(eps_cond.height(), eps_cond.width(),
                            cfg_combine(eps_uncond.values(), eps_cond.values(), scale));
}

/// Uniformly strided sampling grid, descending: [T, ..., 0] with num_steps
/// intervals. Entry k is round-down(k·T/num_steps).
std::vector<int> sampling_timesteps(int T, int num_steps);

/// Largest grid timestep <= tau_fraction·T.
int tau_to_grid_step(const std::vector<int>& grid, int T, double tau_fraction);

}  // namespace unipaint
