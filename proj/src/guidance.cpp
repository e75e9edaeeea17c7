#include "unipaint/guidance.hpp"

#include <cmath>
#include <random>

namespace unipaint {

ToyJointEmbedder::ToyJointEmbedder(int vocab_size, int dim, std::uint64_t seed, int patch,
                                   int channels)
    : patch_(patch), channels_(channels) {
  if (vocab_size < 1 || dim < 1 || patch < 1 || channels < 1) {
    throw Error(ErrorKind::InvalidInput, "toy embedder dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  token_projection_.resize(vocab_size, dim);
  for (int i = 0; i < vocab_size; ++i) {
    for (int j = 0; j < dim; ++j) token_projection_(i, j) = dist(rng);
  }
  const int patch_dim = channels * patch * patch;
  patch_projection_.resize(patch_dim, dim);
  for (int i = 0; i < patch_dim; ++i) {
    for (int j = 0; j < dim; ++j) patch_projection_(i, j) = dist(rng) / std::sqrt(double(patch_dim));
  }
}

Eigen::VectorXd ToyJointEmbedder::text_embedding(int token) const {
  if (token < 0 || token >= vocab_size()) {
    throw Error(ErrorKind::OutOfRange, "token id outside embedder vocabulary");
  }
  return token_projection_.row(token).transpose();
}

Eigen::VectorXd ToyJointEmbedder::image_embedding(const ImageBuffer& image) const {
  if (image.channels() != channels_) {
    throw Error(ErrorKind::ShapeMismatch, "embedder expects " + std::to_string(channels_) + " channels");
  }
  require_factor(image.height(), image.width(), patch_, "image_embedding");
  const int ph = image.height() / patch_;
  const int pw = image.width() / patch_;
  Eigen::VectorXd mean_patch = Eigen::VectorXd::Zero(patch_projection_.rows());
  for (int py = 0; py < ph; ++py) {
    for (int px = 0; px < pw; ++px) {
      for (int c = 0; c < channels_; ++c) {
        for (int dy = 0; dy < patch_; ++dy) {
          for (int dx = 0; dx < patch_; ++dx) {
            mean_patch((c * patch_ + dy) * patch_ + dx) += image(c, py * patch_ + dy, px * patch_ + dx);
          }
        }
      }
    }
  }
  mean_patch /= static_cast<double>(ph * pw);
  return patch_projection_.transpose() * mean_patch;
}

Eigen::MatrixXd precompute_token_table(const JointEmbedder& embedder) {
  Eigen::MatrixXd table(embedder.vocab_size(), embedder.dim());
  for (int i = 0; i < embedder.vocab_size(); ++i) table.row(i) = embedder.text_embedding(i).transpose();
  return table;
}

int retrieve_token(const Eigen::MatrixXd& token_table, const Eigen::VectorXd& image_embedding) {
  if (token_table.rows() == 0) throw Error(ErrorKind::InvalidInput, "empty vocabulary");
  if (token_table.cols() != image_embedding.size()) {
    throw Error(ErrorKind::ShapeMismatch, "embedding dimensions differ");
  }
  const Eigen::VectorXd scores = token_table * image_embedding;
  int best = 0;
  for (int i = 1; i < scores.size(); ++i) {
    if (scores(i) > scores(best)) best = i;
  }
  return best;
}

int auto_subject_token(const ImageBuffer& exemplar, const JointEmbedder& embedder,
                       const Eigen::MatrixXd& token_table) {
  return retrieve_token(token_table, embedder.image_embedding(exemplar));
}

StrokeMap make_stroke_map(const ImageBuffer& rgba, int codec_factor) {
  if (rgba.channels() != 4) throw Error(ErrorKind::InvalidInput, "stroke must be RGBA", "stroke");
  StrokeMap stroke;
  stroke.rgb = ImageBuffer(rgba.height(), rgba.width(), rgba.values().topRows(3));
  stroke.image_mask = RegionMask(rgba.height(), rgba.width(), 0);
  for (int i = 0; i < rgba.pixels(); ++i) {
    if (rgba.values()(3, i) > 0.0) stroke.image_mask[i] = 1;
  }
  stroke.latent = encode(stroke.rgb, codec_factor);
  stroke.latent_mask = downsample_mask(stroke.image_mask, codec_factor);
  return stroke;
}

std::string guidance_mode(const GuidanceSpec& spec) {
  const bool text = spec.prompt.has_value();
  const bool exemplar = spec.subject_token.has_value();
  const bool stroke = spec.stroke.has_value();
  if (stroke && (text || exemplar)) return "mixed";
  if (stroke) return "stroke";
  if (text && exemplar) return "text+exemplar";
  if (text) return "text";
  if (exemplar) return "exemplar";
  return "unconditional";
}

TokenSequence compose_condition(const std::optional<std::string>& prompt,
                                std::optional<int> subject_token, SubjectPlacement placement,
                                const Tokenizer& tokenizer) {
  if (!prompt && !subject_token) return tokenizer.null_sequence();
  TokenSequence seq{{Tokenizer::kBos}};
  std::vector<int> words;
  if (prompt) {
    const auto t = tokenizer.tokenize(*prompt);
    words.assign(t.ids.begin() + 1, t.ids.end() - 1);
  }
  if (subject_token && placement == SubjectPlacement::BeforePrompt) seq.ids.push_back(*subject_token);
  seq.ids.insert(seq.ids.end(), words.begin(), words.end());
  if (subject_token && placement == SubjectPlacement::AfterPrompt) seq.ids.push_back(*subject_token);
  seq.ids.push_back(Tokenizer::kEos);
  return seq;
}

GuidanceSpec validate_spec(GuidanceSpec spec, const ValidationContext& context) {
  if (spec.prompt && spec.prompt->find_first_not_of(" \t\r\n") == std::string::npos) {
    spec.prompt.reset();
  }
  if (spec.subject_token) {
    if (*spec.subject_token < 0 ||
        (context.vocab_size > 0 && *spec.subject_token >= context.vocab_size)) {
      throw Error(ErrorKind::Validation, "subject token outside vocabulary", "subject_token");
    }
  }
  if (spec.tau && !spec.stroke) {
    throw Error(ErrorKind::Validation, "tau is only meaningful with a stroke", "tau");
  }
  if (spec.stroke) {
    const StrokeMap& stroke = *spec.stroke;
    if (stroke.image_mask.height() != context.image_mask.height() ||
        stroke.image_mask.width() != context.image_mask.width()) {
      throw Error(ErrorKind::Validation, "stroke dimensions differ from the session image", "stroke");
    }
    if (stroke.image_mask.all_unknown()) {
      throw Error(ErrorKind::Validation, "stroke has no painted pixels", "stroke");
    }
    for (int i = 0; i < stroke.image_mask.size(); ++i) {
      if (stroke.image_mask[i] == 1 && context.image_mask[i] == 1) {
        throw Error(ErrorKind::Validation, "stroke overlaps the known region", "stroke");
      }
    }
    if (!spec.tau) spec.tau = kDefaultStrokeTau;
    if (!(*spec.tau >= 0.0 && *spec.tau <= 1.0)) {
      throw Error(ErrorKind::Validation, "tau must lie in [0,1]", "tau");
    }
  }
  if (!spec.scale) spec.scale = kDefaultGuidanceScale;
  if (!std::isfinite(*spec.scale) || *spec.scale < 0.0) {
    throw Error(ErrorKind::Validation, "scale must be finite and >= 0", "scale");
  }
  if (!spec.steps) spec.steps = kDefaultSamplingSteps;
  if (*spec.steps < 1 || *spec.steps > context.train_timesteps) {
    throw Error(ErrorKind::Validation, "steps must lie in [1, T]", "steps");
  }
  if (spec.num_outputs < 1) {
    throw Error(ErrorKind::Validation, "num_outputs must be >= 1", "num_outputs");
  }
  return spec;
}

}  // namespace unipaint
