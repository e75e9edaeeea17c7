#include "unipaint/sampler.hpp"

#include "unipaint/codec.hpp"
#include "unipaint/finetune.hpp"

namespace unipaint {

namespace {

void check_mask_dims(const LatentMap& x, const RegionMask& m, const char* what) {
  if (m.height() != x.height() || m.width() != x.width()) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": mask does not match latent");
  }
  m.require_binary(what);
}

}  // namespace

LatentMap blend_known(const LatentMap& x_t, const LatentMap& x_in, const RegionMask& mask, int t,
                      const LatentMap& eps_fixed, const NoiseSchedule& sched) {
  require_same_shape(x_t, x_in, "blend_known");
  check_mask_dims(x_t, mask, "blend_known");
  const LatentMap noised = add_noise(x_in, t, eps_fixed, sched);
  LatentMap out = x_t;
  for (int i = 0; i < mask.size(); ++i) {
    if (mask[i] == 1) out.values().col(i) = noised.values().col(i);
  }
  return out;
}

LatentMap blend_stroke(const LatentMap& x_t, const LatentMap& stroke_latent,
                       const RegionMask& stroke_mask, int t, int tau_step, const LatentMap& eps,
                       const NoiseSchedule& sched) {
  if (t != tau_step) return x_t;
  require_same_shape(x_t, stroke_latent, "blend_stroke");
  check_mask_dims(x_t, stroke_mask, "blend_stroke");
  const LatentMap noised = add_noise(stroke_latent, t, eps, sched);
  LatentMap out = x_t;
  for (int i = 0; i < stroke_mask.size(); ++i) {
    if (stroke_mask[i] == 1) out.values().col(i) = noised.values().col(i);
  }
  return out;
}

std::mt19937_64 output_rng(std::uint64_t seed, int output_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(output_index)};
  return std::mt19937_64(seq);
}

std::vector<LatentMap> inpaint_latents(const DenoiserBackend& backend, const LatentMap& x_in,
                                       const RegionMask& latent_mask, const GuidanceSpec& spec,
                                       const SamplerConfig& config, const NoiseSchedule& sched,
                                       const StepObserver& observer) {
  check_mask_dims(x_in, latent_mask, "inpaint");
  const int steps = spec.steps.value_or(config.num_steps);
  const double scale = spec.scale.value_or(kDefaultGuidanceScale);
  const std::vector<int> grid = sampling_timesteps(sched.T(), steps);

  const StrokeMap* stroke = spec.stroke ? &*spec.stroke : nullptr;
  int tau_step = -1;
  if (stroke) {
    require_same_shape(x_in, stroke->latent, "inpaint: stroke latent");
    tau_step = tau_to_grid_step(grid, sched.T(), spec.tau.value_or(kDefaultStrokeTau));
  }

  const bool semantic = spec.has_semantic();
  const TextEmbedding null_text = backend.encode_text(default_tokenizer().null_sequence());
  const TextEmbedding condition =
      semantic ? backend.encode_text(compose_condition(spec.prompt, spec.subject_token,
                                                       config.subject_placement))
               : null_text;

  AttentionMaskSet masks;
  const AttentionMaskSet* mask_ptr = nullptr;
  if (config.attn_mask_enabled) {
    masks = AttentionMaskSet::build(latent_mask, backend.attention_factors(),
                                    config.self_mask_orientation, config.mask_application);
    mask_ptr = &masks;
  }

  std::vector<LatentMap> outputs;
  outputs.reserve(static_cast<std::size_t>(spec.num_outputs));
  for (int n = 0; n < spec.num_outputs; ++n) {
    auto rng = output_rng(spec.seed, n);
    LatentMap x = gaussian_latent(x_in.channels(), x_in.height(), x_in.width(), rng);
    const LatentMap eps_fixed = gaussian_latent(x_in.channels(), x_in.height(), x_in.width(), rng);
    if (stroke && tau_step == grid.front()) {
      x = blend_stroke(x, stroke->latent, stroke->latent_mask, grid.front(), tau_step, eps_fixed, sched);
    }

    for (int i = 0; i + 1 < static_cast<int>(grid.size()); ++i) {
      const int t = grid[static_cast<std::size_t>(i)];
      const int t_prev = grid[static_cast<std::size_t>(i) + 1];
      const bool conditional = semantic && (!stroke || t <= tau_step);

      LatentMap eps = backend.predict_noise(x, null_text, t, mask_ptr);
      int predictions = 1;
      if (conditional) {
        const LatentMap eps_cond = backend.predict_noise(x, condition, t, mask_ptr);
        eps = cfg_combine(eps, eps_cond, scale);
        ++predictions;
      }

      x = ddim_step(x, eps, t, t_prev, sched);
      const bool inject = stroke && t_prev == tau_step;
      if (stroke) {
        x = blend_stroke(x, stroke->latent, stroke->latent_mask, t_prev, tau_step, eps_fixed, sched);
      }
      const LatentMap after_stroke = x;
      x = blend_known(x, x_in, latent_mask, t_prev, eps_fixed, sched);

      if (!x.all_finite()) {
        throw Error(ErrorKind::NonFinite, "non-finite latent at output " + std::to_string(n) +
                                              ", step " + std::to_string(i) + " (t=" +
                                              std::to_string(t) + " -> " + std::to_string(t_prev) + ")");
      }
      if (observer) {
        observer(StepEvent{n, i, steps, t, t_prev, conditional, inject, predictions, &after_stroke, &x});
      }
    }
    outputs.push_back(std::move(x));
  }
  return outputs;
}

InpaintInput InpaintInput::from_image(const DenoiserBackend& backend, const ImageBuffer& image,
                                      const RegionMask& image_mask) {
  InpaintInput input;
  input.latent = backend.encode_image(apply_mask(image, image_mask));
  input.latent_mask = downsample_mask(image_mask, backend.codec_factor());
  input.image_mask = image_mask;
  return input;
}

std::vector<ImageBuffer> inpaint(const DenoiserBackend& backend, const InpaintInput& input,
                                 const GuidanceSpec& spec, const SamplerConfig& config,
                                 const NoiseSchedule& sched, const StepObserver& observer) {
  const auto latents = inpaint_latents(backend, input.latent, input.latent_mask, spec, config, sched, observer);
  const ImageBuffer known = backend.decode_latent(input.latent);
  std::vector<ImageBuffer> images;
  images.reserve(latents.size());
  for (const auto& latent : latents) {
    ImageBuffer image = backend.decode_latent(latent);
    if (input.image_mask.height() == image.height() && input.image_mask.width() == image.width()) {
      for (int i = 0; i < input.image_mask.size(); ++i) {
        if (input.image_mask[i] == 1) image.values().col(i) = known.values().col(i);
      }
    }
    images.push_back(std::move(image));
  }
  return images;
}

}  // namespace unipaint
