#include "fixtures.hpp"

#include <cmath>
#include <random>

namespace fixtures {

ImageBuffer image(int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> jitter(-24, 24);
  ImageBuffer img(3, height, width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double base = 0.5 + 0.35 * std::sin(0.19 * (c + 1) * x + 0.13 * y + 0.7 * c + 0.01 * double(seed % 97));
        const int level = std::clamp(static_cast<int>(std::lround(base * 255.0)) + jitter(rng), 0, 255);
        img(c, y, x) = quantize_pixel(level / 255.0);
      }
    }
  }
  return img;
}

RegionMask hole_mask(int height, int width, int y0, int x0, int hh, int ww) {
  RegionMask m(height, width, 1);
  for (int y = y0; y < y0 + hh; ++y) {
    for (int x = x0; x < x0 + ww; ++x) m.at(y, x) = 0;
  }
  return m;
}

ImageBuffer stroke_rgba(int height, int width, int y0, int x0, int hh, int ww, const Eigen::Vector3d& color) {
  ImageBuffer s(4, height, width);
  for (int y = y0; y < y0 + hh; ++y) {
    for (int x = x0; x < x0 + ww; ++x) {
      for (int c = 0; c < 3; ++c) s(c, y, x) = quantize_pixel(color(c));
      s(3, y, x) = 1.0;
    }
  }
  return s;
}

const ToyUNet& tiny_net() {
  static const ToyUNet net(backbone_preset("tiny"));
  return net;
}

const ParameterSet& tiny_params() {
  static const ParameterSet params = tiny_net().init_parameters(7);
  return params;
}

const ToyUNet& small_net() {
  static const ToyUNet net(backbone_preset("small"));
  return net;
}

LatentMap random_latent(const ToyUNet& net, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  LatentMap x(net.config().latent_channels(), h, w);
  for (Eigen::Index i = 0; i < x.values().size(); ++i) x.values().data()[i] = dist(rng);
  return x;
}

TempDir::TempDir(const std::string& tag) {
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          ("unipaint-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

RecordingBackend::RecordingBackend(const ToyUNet& net, const ParameterSet& params)
    : inner_(net, params), null_(inner_.encode_text(default_tokenizer().null_sequence())) {}

LatentMap RecordingBackend::predict_noise(const LatentMap& x_t, const TextEmbedding& c, int t,
                                          const AttentionMaskSet* masks) const {
  calls.push_back(PredictCall{t, c == null_, masks != nullptr});
  return inner_.predict_noise(x_t, c, t, masks);
}

}  // namespace fixtures
