#include <algorithm>

#include "unipaint/codec.hpp"
#include "unipaint/tensor.hpp"

namespace unipaint {

RegionMask::RegionMask(int height, int width, std::uint8_t fill)
    : height_(height), width_(width), cells_(Cells::Constant(height * width, fill)) {
  if (height < 0 || width < 0) throw Error(ErrorKind::InvalidInput, "negative mask dimensions");
}

RegionMask::RegionMask(int height, int width, Cells cells)
    : height_(height), width_(width), cells_(std::move(cells)) {
  if (cells_.size() != static_cast<Eigen::Index>(height) * width) {
    throw Error(ErrorKind::ShapeMismatch, "mask cells do not match height*width");
  }
}

bool RegionMask::is_binary() const { return (cells_ <= 1).all(); }

void RegionMask::require_binary(const char* what) const {
  if (!is_binary()) throw Error(ErrorKind::InvalidInput, std::string(what) + ": mask is not binary");
}

int RegionMask::known_count() const {
  return static_cast<int>((cells_ == 1).count());
}

RegionMask RegionMask::inverted() const {
  require_binary("invert");
  return RegionMask(height_, width_, Cells((1 - cells_.cast<int>()).cast<std::uint8_t>()));
}

Rect hole_bounding_box(const RegionMask& mask) {
  int y_min = mask.height(), y_max = -1, x_min = mask.width(), x_max = -1;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.at(y, x) == 0) {
        y_min = std::min(y_min, y);
        y_max = std::max(y_max, y);
        x_min = std::min(x_min, x);
        x_max = std::max(x_max, x);
      }
    }
  }
  if (y_max < 0) return {};
  return Rect{y_min, x_min, y_max - y_min + 1, x_max - x_min + 1};
}

RegionMask downsample_mask(const RegionMask& mask, int factor) {
  require_factor(mask.height(), mask.width(), factor, "downsample_mask");
  mask.require_binary("downsample_mask");
  const int h = mask.height() / factor;
  const int w = mask.width() / factor;
  RegionMask out(h, w, 1);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.at(y, x) == 0) out.at(y / factor, x / factor) = 0;
    }
  }
  return out;
}

RegionMask upsample_mask(const RegionMask& mask, int factor) {
  if (factor < 1) throw Error(ErrorKind::InvalidInput, "upsample_mask: factor must be >= 1");
  RegionMask out(mask.height() * factor, mask.width() * factor, 0);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) out.at(y, x) = mask.at(y / factor, x / factor);
  }
  return out;
}

}  // namespace unipaint
