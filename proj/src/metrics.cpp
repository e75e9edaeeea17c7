#include "unipaint/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace unipaint {

namespace {

void check_image_pair(const ImageBuffer& a, const ImageBuffer& b, const RegionMask& m, const char* what) {
  if (a.height() != b.height() || a.width() != b.width() || m.height() != a.height() ||
      m.width() != a.width()) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": shapes differ");
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

double stroke_rmse(const ImageBuffer& output, const ImageBuffer& stroke_rgb, const RegionMask& stroke_mask) {
  check_image_pair(output, stroke_rgb, stroke_mask, "stroke_rmse");
  if (output.channels() < 3 || stroke_rgb.channels() < 3) {
    throw Error(ErrorKind::ShapeMismatch, "stroke_rmse: RGB inputs required");
  }
  double sum = 0.0;
  long n = 0;
  for (int i = 0; i < stroke_mask.size(); ++i) {
    if (stroke_mask[i] != 1) continue;
    sum += (output.values().col(i).head<3>() - stroke_rgb.values().col(i).head<3>()).squaredNorm();
    n += 3;
  }
  if (n == 0) throw Error(ErrorKind::InvalidInput, "stroke_rmse: empty stroke mask", "stroke");
  return std::sqrt(sum / static_cast<double>(n));
}

double known_region_error(const ImageBuffer& output, const ImageBuffer& input, const RegionMask& mask) {
  check_image_pair(output, input, mask, "known_region_error");
  require_same_shape(output, input, "known_region_error");
  double worst = 0.0;
  for (int i = 0; i < mask.size(); ++i) {
    if (mask[i] == 1) worst = std::max(worst, (output.values().col(i) - input.values().col(i)).cwiseAbs().maxCoeff());
  }
  return worst;
}

double cosine_similarity100(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::ShapeMismatch, "embedding dimensions differ");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error(ErrorKind::InvalidInput, "zero-norm embedding");
  return 100.0 * a.dot(b) / (na * nb);
}

double embed_similarity(const ImageBuffer& a, const ImageBuffer& b, const JointEmbedder& scorer) {
  return cosine_similarity100(scorer.image_embedding(a), scorer.image_embedding(b));
}

double embed_similarity(int token, const ImageBuffer& image, const JointEmbedder& scorer) {
  return cosine_similarity100(scorer.text_embedding(token), scorer.image_embedding(image));
}

void MetricReport::add(double v) {
  if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "metric value is not finite", metric);
  values.push_back(v);
}

double MetricReport::mean() const {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double MetricReport::stddev() const {
  if (values.empty()) return 0.0;
  const double m = mean();
  double s = 0.0;
  for (double v : values) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(values.size()));
}

std::string MetricReport::to_lines() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < values.size(); ++i) {
    os << metric << '\t' << i << '\t' << format_double(values[i]) << '\n';
  }
  return os.str();
}

std::string MetricReport::to_json() const {
  std::ostringstream os;
  os << "{\"metric\":\"" << metric << "\",\"mask\":\"" << mask_source << "\",\"count\":" << values.size()
     << ",\"mean\":" << format_double(mean()) << ",\"stddev\":" << format_double(stddev()) << ",\"values\":[";
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << format_double(values[i]);
  os << "]}";
  return os.str();
}

}  // namespace unipaint
