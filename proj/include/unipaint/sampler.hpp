#pragma once

#include <functional>
#include <random>
#include <vector>

#include "unipaint/backbone.hpp"
#include "unipaint/guidance.hpp"
#include "unipaint/schedule.hpp"

namespace unipaint {

struct SamplerConfig {
  int num_steps = kDefaultSamplingSteps;  // used when the request leaves steps unset
  bool attn_mask_enabled = true;
  SelfMaskOrientation self_mask_orientation = SelfMaskOrientation::KnownQueryUnknownKey;
  MaskApplication mask_application = MaskApplication::PostSoftmax;
  SubjectPlacement subject_placement = SubjectPlacement::AfterPrompt;
};

/// m ⊙ add_noise(x_in, t, eps_fixed) + (1 − m) ⊙ x_t
LatentMap blend_known(const LatentMap& x_t, const LatentMap& x_in, const RegionMask& mask, int t,
                      const LatentMap& eps_fixed, const NoiseSchedule& sched);

/// At t == tau_step, replace the stroke-mask cells of x_t with the stroke
/// latent noised to t; identity otherwise.
LatentMap blend_stroke(const LatentMap& x_t, const LatentMap& stroke_latent,
                       const RegionMask& stroke_mask, int t, int tau_step, const LatentMap& eps,
                       const NoiseSchedule& sched);

struct StepEvent {
  int output_index = 0;
  int step_index = 0;  // 0-based DDIM step within one output
  int total_steps = 0;
  int t = 0;           // noise level before the step
  int t_prev = 0;      // noise level after the step
  bool conditional = false;
  bool stroke_injected = false;
  int predictions = 0;
  const LatentMap* after_stroke = nullptr;  // after ddim_step and stroke blending
  const LatentMap* latent = nullptr;        // after known-region blending
};

using StepObserver = std::function<void(const StepEvent&)>;

/// Per-output generator seeded by (seed, output index).
std::mt19937_64 output_rng(std::uint64_t seed, int output_index);

/// Sampling loop on latents. `spec` must come from validate_spec.
std::vector<LatentMap> inpaint_latents(const DenoiserBackend& backend, const LatentMap& x_in,
                                       const RegionMask& latent_mask, const GuidanceSpec& spec,
                                       const SamplerConfig& config, const NoiseSchedule& sched,
                                       const StepObserver& observer = {});

/// Encoded session input: latent of X ⊙ M, conservative latent mask and the
/// pixel mask.
struct InpaintInput {
  LatentMap latent;
  RegionMask latent_mask;
  RegionMask image_mask;

  static InpaintInput from_image(const DenoiserBackend& backend, const ImageBuffer& image,
                                 const RegionMask& image_mask);
};

/// Samples, decodes, and re-asserts known pixels that share a latent cell
/// with the hole (cells the conservative latent mask had to regenerate).
std::vector<ImageBuffer> inpaint(const DenoiserBackend& backend, const InpaintInput& input,
                                 const GuidanceSpec& spec, const SamplerConfig& config,
                                 const NoiseSchedule& sched, const StepObserver& observer = {});

}  // namespace unipaint
