#pragma once

#include <optional>
#include <string>
#include <vector>

#include "unipaint/finetune.hpp"
#include "unipaint/metrics.hpp"
#include "unipaint/sampler.hpp"

namespace unipaint {

/// Image and mask dimensions agree, are multiples of the codec factor times
/// the backbone's downsampling, and the mask leaves a hole.
void validate_session_inputs(const ImageBuffer& image, const RegionMask& mask, const BackboneConfig& config);

/// Preset name stored in a checkpoint tag ("toy-unet:<preset>").
std::string preset_from_tag(const std::string& tag);

/// Embedder used for automatic subject-token retrieval; vocabulary matches
/// the tokenizer.
const ToyJointEmbedder& default_subject_embedder();

/// Token retrieval restricted to non-special tokens (BOS/EOS excluded).
int resolve_subject_token(const ImageBuffer& exemplar);

/// Encodes the inputs and runs masked finetuning from `base`.
ParameterSet finetune_on_image(const ToyUNet& net, ParameterSet base, const ImageBuffer& image,
                               const RegionMask& mask, const std::optional<ImageBuffer>& exemplar,
                               std::optional<int> subject_token, const FinetuneConfig& config,
                               const NoiseSchedule& sched, const TelemetrySink& telemetry = {});

struct InpaintResult {
  std::vector<ImageBuffer> images;
  std::optional<MetricReport> stroke_rmse;
  MetricReport known_error;
};

/// Validates `spec` against the inputs, samples, and scores the outputs.
InpaintResult inpaint_image(const ToyUNet& net, const ParameterSet& params, const ImageBuffer& image,
                            const RegionMask& mask, const GuidanceSpec& spec,
                            const SamplerConfig& config, const NoiseSchedule& sched,
                            const StepObserver& observer = {});

}  // namespace unipaint
