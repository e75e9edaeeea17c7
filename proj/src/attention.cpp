#include "unipaint/attention.hpp"
#include "unipaint/codec.hpp"

namespace unipaint {

AttentionMaskSet AttentionMaskSet::build(const RegionMask& latent_mask,
                                         const std::vector<int>& factors,
                                         SelfMaskOrientation orientation,
                                         MaskApplication application) {
  AttentionMaskSet set;
  set.application_ = application;
  for (int factor : factors) {
    AttentionMaskLevel level;
    level.feature_mask = downsample_mask(latent_mask, factor);
    level.self_mask = build_self_mask<double>(level.feature_mask, orientation);
    set.levels_.push_back(std::move(level));
  }
  return set;
}

const AttentionMaskLevel* AttentionMaskSet::find(int height, int width) const noexcept {
  for (const auto& level : levels_) {
    if (level.height() == height && level.width() == width) return &level;
  }
  return nullptr;
}

}  // namespace unipaint
