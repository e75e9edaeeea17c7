#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "unipaint/backbone.hpp"
#include "unipaint/schedule.hpp"

namespace unipaint {

/// Joint text/image embedding space used to pick a subject token for an
/// exemplar image.
class JointEmbedder {
 public:
  virtual ~JointEmbedder() = default;
  virtual int dim() const = 0;
  virtual int vocab_size() const = 0;
  virtual Eigen::VectorXd text_embedding(int token) const = 0;
  virtual Eigen::VectorXd image_embedding(const ImageBuffer& image) const = 0;
};

/// Deterministic toy embedder: text side is a fixed random projection of the
/// token one-hot, image side is the mean of 8x8 patch vectors pushed through
/// a second fixed random projection.
class ToyJointEmbedder final : public JointEmbedder {
 public:
  ToyJointEmbedder(int vocab_size, int dim, std::uint64_t seed, int patch = 8, int channels = 3);

  int dim() const override { return static_cast<int>(token_projection_.cols()); }
  int vocab_size() const override { return static_cast<int>(token_projection_.rows()); }
  Eigen::VectorXd text_embedding(int token) const override;
  Eigen::VectorXd image_embedding(const ImageBuffer& image) const override;

 private:
  int patch_;
  int channels_;
  Eigen::MatrixXd token_projection_;  // vocab x dim
  Eigen::MatrixXd patch_projection_;  // (channels·patch²) x dim
};

/// Precomputed {E_T(v_i)} as a vocab x dim matrix.
Eigen::MatrixXd precompute_token_table(const JointEmbedder& embedder);

/// argmax_i table.row(i) · image_embedding, ties to the lowest id.
int retrieve_token(const Eigen::MatrixXd& token_table, const Eigen::VectorXd& image_embedding);

int auto_subject_token(const ImageBuffer& exemplar, const JointEmbedder& embedder,
                       const Eigen::MatrixXd& token_table);

/// Stroke hint: RGB + alpha > 0 footprint at image resolution, and the
/// encoded latent with a conservatively downsampled mask.
struct StrokeMap {
  ImageBuffer rgb;
  RegionMask image_mask;
  LatentMap latent;
  RegionMask latent_mask;
};

/// From a 4-channel RGBA buffer; a pixel is stroked iff alpha > 0.
StrokeMap make_stroke_map(const ImageBuffer& rgba, int codec_factor = kDefaultCodecFactor);

inline constexpr double kDefaultGuidanceScale = 8.0;
inline constexpr int kDefaultSamplingSteps = 50;
inline constexpr double kDefaultStrokeTau = 0.55;

struct GuidanceSpec {
  std::optional<std::string> prompt;
  std::optional<int> subject_token;
  std::optional<StrokeMap> stroke;
  std::optional<double> tau;  // fraction of T
  std::optional<double> scale;
  std::optional<int> steps;
  std::uint64_t seed = 0;
  int num_outputs = 1;

  bool has_semantic() const { return prompt.has_value() || subject_token.has_value(); }
};

/// "unconditional", "text", "exemplar", "text+exemplar", "stroke" or "mixed".
std::string guidance_mode(const GuidanceSpec& spec);

enum class SubjectPlacement { AfterPrompt, BeforePrompt };

/// [BOS, tokens(prompt), subject, EOS]; absent parts omitted; both absent is
/// the null-text sequence.
TokenSequence compose_condition(const std::optional<std::string>& prompt,
                                std::optional<int> subject_token,
                                SubjectPlacement placement = SubjectPlacement::AfterPrompt,
                                const Tokenizer& tokenizer = default_tokenizer());

struct ValidationContext {
  RegionMask image_mask;  // known region of the session image
  int vocab_size = 0;     // 0 skips the token range check
  int train_timesteps = kDefaultTrainTimesteps;
};

/// Checks invariants and fills defaults (scale 8, 50 steps, tau 0.55 with a
/// stroke). Throws ErrorKind::Validation with the offending field.
GuidanceSpec validate_spec(GuidanceSpec spec, const ValidationContext& context);

}  // namespace unipaint
