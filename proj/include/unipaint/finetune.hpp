#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>

#include "unipaint/backbone.hpp"
#include "unipaint/schedule.hpp"

namespace unipaint {

struct FinetuneConfig {
  int total_iters = 100;
  double learning_rate = 1e-5;
  // Adam defaults.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool use_exemplar = true;

  void validate() const;
};

/// Exemplar latent plus the subject token it is bound to and the hole
/// bounding box (latent cells) it is placed into during augmentation.
struct ExemplarBundle {
  LatentMap exemplar;
  int subject_token = 0;
  Rect hole_bbox;
  int canvas_height = 0;
  int canvas_width = 0;
};

/// Smallest hole bounding-box side (latent cells) that accepts an exemplar.
inline constexpr int kMinPlacementCells = 2;

ExemplarBundle make_exemplar_bundle(LatentMap exemplar, int subject_token,
                                    const RegionMask& latent_mask);

struct PlacedExemplar {
  LatentMap latent;    // canvas-sized, zero outside the placement
  RegionMask valid;    // 1 where the placed exemplar has content
};

/// Nearest-neighbour rescale of the exemplar to `scale` times its largest
/// aspect-preserving fit inside `bbox`, placed at (offset_y, offset_x)
/// relative to the bbox origin.
PlacedExemplar place_exemplar(const LatentMap& exemplar, const Rect& bbox, int canvas_height,
                              int canvas_width, double scale, int offset_y, int offset_x);

/// Random scale in [0.5, 1.0] and uniform offset fully inside the bbox.
PlacedExemplar augment_exemplar(const LatentMap& exemplar, const Rect& bbox, int canvas_height,
                                int canvas_width, std::mt19937_64& rng);

/// Masked background loss: mean over known entries of (eps − ε_θ(x_in_t, ∅, t))².
double bg_loss(const ToyUNet& net, const ParameterSet& params, const LatentMap& x_in,
               const RegionMask& latent_mask, int t, const LatentMap& eps,
               const NoiseSchedule& sched);

/// Exemplar reference loss on the valid region of an augmented placement,
/// conditioned on the subject token.
double ref_loss(const ToyUNet& net, const ParameterSet& params, const ExemplarBundle& bundle,
                int t, const LatentMap& eps, std::mt19937_64& rng, const NoiseSchedule& sched);

struct FinetuneTelemetry {
  int iteration = 0;
  double bg_loss = 0.0;
  double ref_loss = 0.0;
  double total_loss = 0.0;
  double wall_seconds = 0.0;
};

using TelemetrySink = std::function<void(const FinetuneTelemetry&)>;

/// Masked finetuning. Each iteration draws (t1, ε1) for the background loss
/// and, with an exemplar, independent (t2, placement, ε2) for the reference
/// loss, then takes one Adam step on ℓ_bg + ℓ_ref over every parameter.
ParameterSet run_finetune(const ToyUNet& net, ParameterSet params, const LatentMap& x_in,
                          const RegionMask& latent_mask,
                          const std::optional<ExemplarBundle>& exemplar,
                          const FinetuneConfig& config, const NoiseSchedule& sched,
                          const TelemetrySink& telemetry = {});

/// Standard-normal latent of the given shape.
LatentMap gaussian_latent(int channels, int height, int width, std::mt19937_64& rng);

/// Trailing-window moving average (window shrinks at the start).
std::vector<double> smoothed(const std::vector<double>& values, int window);

}  // namespace unipaint
