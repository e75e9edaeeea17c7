#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "unipaint/error.hpp"

namespace unipaint {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowArrayX = Eigen::Array<Scalar, 1, Eigen::Dynamic>;

struct LatentTag {};
struct ImageTag {};

// Planar multi-channel 2-D array: values() is channels x (height*width) with
// pixel index y*width + x. Tag distinguishes image space from latent space.
template <typename Scalar, typename Tag>
class Planar {
 public:
  using Matrix = MatrixX<Scalar>;

  Planar() = default;
  Planar(int channels, int height, int width)
      : height_(height), width_(width), values_(Matrix::Zero(channels, height * width)) {
    if (channels < 0 || height < 0 || width < 0) {
      throw Error(ErrorKind::InvalidInput, "negative planar dimensions");
    }
  }
  Planar(int height, int width, Matrix values)
      : height_(height), width_(width), values_(std::move(values)) {
    if (values_.cols() != static_cast<Eigen::Index>(height) * width) {
      throw Error(ErrorKind::ShapeMismatch, "planar values do not match height*width");
    }
  }

  static Planar constant(int channels, int height, int width, Scalar value) {
    Planar p(channels, height, width);
    p.values_.setConstant(value);
    return p;
  }

  int channels() const noexcept { return static_cast<int>(values_.rows()); }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int pixels() const noexcept { return height_ * width_; }

  Matrix& values() noexcept { return values_; }
  const Matrix& values() const noexcept { return values_; }

  Scalar& operator()(int c, int y, int x) { return values_(c, y * width_ + x); }
  Scalar operator()(int c, int y, int x) const { return values_(c, y * width_ + x); }

  bool same_shape(const Planar& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels() == other.channels();
  }

  std::string shape_string() const {
    return std::to_string(channels()) + "x" + std::to_string(height_) + "x" + std::to_string(width_);
  }

  bool all_finite() const { return values_.allFinite(); }

  friend bool operator==(const Planar& a, const Planar& b) {
    return a.same_shape(b) && a.values_ == b.values_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  Matrix values_;
};

template <typename Scalar>
using LatentMapT = Planar<Scalar, LatentTag>;
template <typename Scalar>
using ImageBufferT = Planar<Scalar, ImageTag>;

using LatentMap = LatentMapT<double>;
using ImageBuffer = ImageBufferT<double>;

template <typename Scalar, typename Tag>
void require_same_shape(const Planar<Scalar, Tag>& a, const Planar<Scalar, Tag>& b,
                        const char* what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::ShapeMismatch,
                std::string(what) + ": shape " + a.shape_string() + " vs " + b.shape_string());
  }
}

/// Binary spatial map; 1 = known, 0 = hole. Cells are stored row-major
/// (index y*width + x) to line up with Planar columns.
class RegionMask {
 public:
  using Cells = Eigen::Array<std::uint8_t, 1, Eigen::Dynamic>;

  RegionMask() = default;
  RegionMask(int height, int width, std::uint8_t fill = 0);
  RegionMask(int height, int width, Cells cells);

  static RegionMask ones(int height, int width) { return RegionMask(height, width, 1); }
  static RegionMask zeros(int height, int width) { return RegionMask(height, width, 0); }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int size() const noexcept { return height_ * width_; }

  std::uint8_t& at(int y, int x) { return cells_(y * width_ + x); }
  std::uint8_t at(int y, int x) const { return cells_(y * width_ + x); }
  std::uint8_t& operator[](int i) { return cells_(i); }
  std::uint8_t operator[](int i) const { return cells_(i); }

  const Cells& cells() const noexcept { return cells_; }

  bool is_binary() const;
  /// Throws InvalidInput when any cell is outside {0,1}.
  void require_binary(const char* what) const;

  int known_count() const;
  bool all_known() const { return known_count() == size(); }
  bool all_unknown() const { return known_count() == 0; }

  RegionMask inverted() const;

  template <typename Scalar>
  RowArrayX<Scalar> as_row() const {
    return cells_.template cast<Scalar>();
  }

  friend bool operator==(const RegionMask& a, const RegionMask& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && (a.cells_ == b.cells_).all();
  }

 private:
  int height_ = 0;
  int width_ = 0;
  Cells cells_;
};

/// Axis-aligned rectangle in cell coordinates.
struct Rect {
  int y0 = 0;
  int x0 = 0;
  int height = 0;
  int width = 0;

  bool empty() const noexcept { return height <= 0 || width <= 0; }
  bool contains(int y, int x) const noexcept {
    return y >= y0 && y < y0 + height && x >= x0 && x < x0 + width;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Bounding box of the unknown (0) cells; empty Rect when there are none.
Rect hole_bounding_box(const RegionMask& mask);

}  // namespace unipaint
