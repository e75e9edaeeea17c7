#include "unipaint/pipeline.hpp"

#include "unipaint/codec.hpp"

namespace unipaint {

namespace {

constexpr int kSubjectEmbedderDim = 64;
constexpr std::uint64_t kSubjectEmbedderSeed = 0x5eed;
constexpr int kBackboneDownsampling = 4;

}  // namespace

void validate_session_inputs(const ImageBuffer& image, const RegionMask& mask, const BackboneConfig& config) {
  if (image.channels() != config.image_channels) {
    throw Error(ErrorKind::Validation, "image must have " + std::to_string(config.image_channels) + " channels", "image");
  }
  if (image.height() != mask.height() || image.width() != mask.width()) {
    throw Error(ErrorKind::Validation, "image is " + image.shape_string() + " but mask is " +
                                           std::to_string(mask.height()) + "x" + std::to_string(mask.width()),
                "mask");
  }
  const int multiple = config.codec_factor * kBackboneDownsampling;
  if (image.height() < multiple || image.width() < multiple || image.height() % multiple != 0 ||
      image.width() % multiple != 0) {
    throw Error(ErrorKind::Validation, "image sides must be positive multiples of " + std::to_string(multiple),
                "image");
  }
  mask.require_binary("mask");
  if (mask.all_known()) throw Error(ErrorKind::Validation, "empty hole: mask marks every pixel known", "mask");
}

std::string preset_from_tag(const std::string& tag) {
  const std::string prefix = "toy-unet:";
  if (tag.rfind(prefix, 0) != 0) throw Error(ErrorKind::InvalidInput, "checkpoint tag '" + tag + "' is not a toy-unet");
  return tag.substr(prefix.size());
}

const ToyJointEmbedder& default_subject_embedder() {
  static const ToyJointEmbedder embedder(default_tokenizer().vocab_size(), kSubjectEmbedderDim, kSubjectEmbedderSeed);
  return embedder;
}

int resolve_subject_token(const ImageBuffer& exemplar) {
  static const Eigen::MatrixXd table = precompute_token_table(default_subject_embedder());
  constexpr int first = Tokenizer::kEos + 1;
  const Eigen::MatrixXd candidates = table.bottomRows(table.rows() - first);
  return first + retrieve_token(candidates, default_subject_embedder().image_embedding(exemplar));
}

ParameterSet finetune_on_image(const ToyUNet& net, ParameterSet base, const ImageBuffer& image,
                               const RegionMask& mask, const std::optional<ImageBuffer>& exemplar,
                               std::optional<int> subject_token, const FinetuneConfig& config,
                               const NoiseSchedule& sched, const TelemetrySink& telemetry) {
  validate_session_inputs(image, mask, net.config());
  const int f = net.config().codec_factor;
  const LatentMap x_in = encode(apply_mask(image, mask), f);
  const RegionMask latent_mask = downsample_mask(mask, f);
  std::optional<ExemplarBundle> bundle;
  if (exemplar && config.use_exemplar) {
    const int token = subject_token ? *subject_token : resolve_subject_token(*exemplar);
    bundle = make_exemplar_bundle(encode(*exemplar, f), token, latent_mask);
  }
  return run_finetune(net, std::move(base), x_in, latent_mask, bundle, config, sched, telemetry);
}

InpaintResult inpaint_image(const ToyUNet& net, const ParameterSet& params, const ImageBuffer& image,
                            const RegionMask& mask, const GuidanceSpec& spec,
                            const SamplerConfig& config, const NoiseSchedule& sched,
                            const StepObserver& observer) {
  validate_session_inputs(image, mask, net.config());
  ValidationContext context{mask, net.config().vocab_size, sched.T()};
  const GuidanceSpec checked = validate_spec(spec, context);
  const ToyBackend backend(net, params);
  const InpaintInput input = InpaintInput::from_image(backend, image, mask);

  InpaintResult result;
  result.images = inpaint(backend, input, checked, config, sched, observer);
  result.known_error.metric = "known_region_error";
  result.known_error.mask_source = "session mask";
  for (const auto& out : result.images) result.known_error.add(known_region_error(out, image, mask));
  if (checked.stroke) {
    MetricReport rmse{"stroke_rmse", "stroke alpha", {}};
    for (const auto& out : result.images) {
      rmse.add(stroke_rmse(out, checked.stroke->rgb, checked.stroke->image_mask));
    }
    result.stroke_rmse = std::move(rmse);
  }
  return result;
}

}  // namespace unipaint
