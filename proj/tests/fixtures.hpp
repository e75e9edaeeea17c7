#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "unipaint/backbone.hpp"
#include "unipaint/codec.hpp"
#include "unipaint/sampler.hpp"

namespace fixtures {

using namespace unipaint;

/// Smooth colour pattern plus seeded texture, on 8-bit levels.
ImageBuffer image(int height, int width, std::uint64_t seed);

/// All known except the given rectangle.
RegionMask hole_mask(int height, int width, int y0, int x0, int hh, int ww);

/// RGBA stroke with `color` and alpha 1 inside the rectangle, transparent elsewhere.
ImageBuffer stroke_rgba(int height, int width, int y0, int x0, int hh, int ww, const Eigen::Vector3d& color);

const ToyUNet& tiny_net();
const ParameterSet& tiny_params();
const ToyUNet& small_net();

/// Random latent in the codec's value range, shaped for `net`.
LatentMap random_latent(const ToyUNet& net, int h, int w, std::uint64_t seed);

class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& leaf) const { return (path_ / leaf).string(); }

 private:
  std::filesystem::path path_;
};

struct PredictCall {
  int t;
  bool null_text;
  bool masked;
};

/// Delegates to a ToyBackend and records every noise prediction.
class RecordingBackend final : public DenoiserBackend {
 public:
  RecordingBackend(const ToyUNet& net, const ParameterSet& params);

  LatentMap predict_noise(const LatentMap& x_t, const TextEmbedding& c, int t,
                          const AttentionMaskSet* masks) const override;
  TextEmbedding encode_text(const TokenSequence& tokens) const override { return inner_.encode_text(tokens); }
  std::vector<int> attention_factors() const override { return inner_.attention_factors(); }
  int codec_factor() const override { return inner_.codec_factor(); }
  int image_channels() const override { return inner_.image_channels(); }

  mutable std::vector<PredictCall> calls;

 private:
  ToyBackend inner_;
  TextEmbedding null_;
};

}  // namespace fixtures
