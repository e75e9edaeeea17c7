#pragma once

#include <cmath>
#include <limits>

#include "unipaint/tensor.hpp"

// Lossless image <-> latent codec: affine [0,1] -> [-1,1] followed by
// space-to-depth with factor f. Latent channel for image channel c and
// sub-pixel (dy, dx) is c*f*f + dy*f + dx.

namespace unipaint {

inline constexpr int kDefaultCodecFactor = 8;

/// Pixel values live on a dyadic grid so that the affine map is exactly
/// invertible in floating point.
template <typename Scalar>
constexpr int pixel_grid_bits() {
  return std::numeric_limits<Scalar>::digits - 8;
}

template <typename Scalar>
Scalar quantize_pixel(Scalar v) {
  constexpr int bits = pixel_grid_bits<Scalar>();
  return std::ldexp(std::nearbyint(std::ldexp(v, bits)), -bits);
}

template <typename Scalar>
bool on_pixel_grid(Scalar v) {
  return quantize_pixel(v) == v;
}

inline void require_factor(int height, int width, int factor, const char* what) {
  if (factor < 1) throw Error(ErrorKind::InvalidInput, std::string(what) + ": factor must be >= 1");
  if (height % factor != 0 || width % factor != 0) {
    throw Error(ErrorKind::InvalidInput, std::string(what) + ": dimensions " + std::to_string(height) +
                                             "x" + std::to_string(width) +
                                             " not divisible by " + std::to_string(factor));
  }
}

template <typename Scalar>
LatentMapT<Scalar> encode(const ImageBufferT<Scalar>& image, int factor = kDefaultCodecFactor) {
  require_factor(image.height(), image.width(), factor, "encode");
  if (!image.all_finite() || (image.values().array() < Scalar(0)).any() ||
      (image.values().array() > Scalar(1)).any()) {
    throw Error(ErrorKind::InvalidInput, "encode: image values outside [0,1]");
  }
  const int lh = image.height() / factor;
  const int lw = image.width() / factor;
  const int ff = factor * factor;
  LatentMapT<Scalar> latent(image.channels() * ff, lh, lw);
  for (int c = 0; c < image.channels(); ++c) {
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < image.width(); ++x) {
        const int channel = c * ff + (y % factor) * factor + (x % factor);
        latent(channel, y / factor, x / factor) = Scalar(2) * quantize_pixel(image(c, y, x)) - Scalar(1);
      }
    }
  }
  return latent;
}

/// Inverse of encode. Values that land outside [0,1] (sampler outputs) are
/// clamped; everything is snapped to the pixel grid.
template <typename Scalar>
ImageBufferT<Scalar> decode(const LatentMapT<Scalar>& latent, int image_channels = 3,
                            int factor = kDefaultCodecFactor) {
  if (factor < 1 || image_channels < 1) throw Error(ErrorKind::InvalidInput, "decode: bad factor");
  const int ff = factor * factor;
  if (latent.channels() != image_channels * ff) {
    throw Error(ErrorKind::InvalidInput, "decode: latent has " + std::to_string(latent.channels()) +
                                             " channels, expected " +
                                             std::to_string(image_channels * ff));
  }
  ImageBufferT<Scalar> image(image_channels, latent.height() * factor, latent.width() * factor);
  for (int c = 0; c < image_channels; ++c) {
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < image.width(); ++x) {
        const int channel = c * ff + (y % factor) * factor + (x % factor);
        Scalar v = (latent(channel, y / factor, x / factor) + Scalar(1)) / Scalar(2);
        if (!(v >= Scalar(0))) v = Scalar(0);  // also maps NaN to 0
        if (v > Scalar(1)) v = Scalar(1);
        image(c, y, x) = quantize_pixel(v);
      }
    }
  }
  return image;
}

/// A coarse cell is known iff every covered fine pixel is known.
RegionMask downsample_mask(const RegionMask& mask, int factor);

/// Nearest-neighbour upsampling (each coarse cell covers factor x factor pixels).
RegionMask upsample_mask(const RegionMask& mask, int factor);

/// X ⊙ M at image resolution: hole pixels set to 0.
template <typename Scalar>
ImageBufferT<Scalar> apply_mask(const ImageBufferT<Scalar>& image, const RegionMask& mask) {
  if (mask.height() != image.height() || mask.width() != image.width()) {
    throw Error(ErrorKind::ShapeMismatch, "apply_mask: mask and image dimensions differ");
  }
  mask.require_binary("apply_mask");
  ImageBufferT<Scalar> out = image;
  out.values().array().rowwise() *= mask.as_row<Scalar>();
  return out;
}

}  // namespace unipaint
