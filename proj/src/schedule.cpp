#include <algorithm>
#include <cmath>

#include "unipaint/schedule.hpp"

namespace unipaint {

std::vector<int> sampling_timesteps(int T, int num_steps) {
  if (num_steps < 1) throw Error(ErrorKind::InvalidInput, "num_steps must be >= 1", "steps");
  if (num_steps > T) {
    throw Error(ErrorKind::InvalidInput, "num_steps cannot exceed the schedule length", "steps");
  }
  std::vector<int> grid;
  grid.reserve(static_cast<std::size_t>(num_steps) + 1);
  for (int k = num_steps; k >= 0; --k) {
    grid.push_back(static_cast<int>((static_cast<long long>(k) * T) / num_steps));
  }
  return grid;
}

int tau_to_grid_step(const std::vector<int>& grid, int T, double tau_fraction) {
  if (!(tau_fraction >= 0.0 && tau_fraction <= 1.0)) {
    throw Error(ErrorKind::Validation, "tau must lie in [0,1]", "tau");
  }
  // 1e-9 absorbs representation error in products such as 0.55 * 1000.
  const double target = std::floor(tau_fraction * T + 1e-9);
  int best = grid.back();
  for (int t : grid) {
    if (t <= target) best = std::max(best, t);
  }
  return best;
}

}  // namespace unipaint
