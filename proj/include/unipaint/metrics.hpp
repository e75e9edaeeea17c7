#pragma once

#include <string>
#include <vector>

#include "unipaint/guidance.hpp"
#include "unipaint/tensor.hpp"

namespace unipaint {

/// RMSE over pixels where `stroke_mask` is 1, channels pooled. `stroke_rgb`
/// may carry an alpha channel, which is ignored.
double stroke_rmse(const ImageBuffer& output, const ImageBuffer& stroke_rgb, const RegionMask& stroke_mask);

/// Max |output − input| over known pixels; 0 when nothing is known.
double known_region_error(const ImageBuffer& output, const ImageBuffer& input, const RegionMask& mask);

/// 100 · cos(a, b).
double cosine_similarity100(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

double embed_similarity(const ImageBuffer& a, const ImageBuffer& b, const JointEmbedder& scorer);
double embed_similarity(int token, const ImageBuffer& image, const JointEmbedder& scorer);

struct MetricReport {
  std::string metric;
  std::string mask_source;  // e.g. "stroke alpha", "session mask"
  std::vector<double> values;

  void add(double v);
  std::size_t count() const { return values.size(); }
  double mean() const;
  double stddev() const;  // population

  /// One "metric<TAB>sample<TAB>value" line per sample.
  std::string to_lines() const;
  /// {"metric","mask","count","mean","stddev","values"}.
  std::string to_json() const;
};

}  // namespace unipaint
