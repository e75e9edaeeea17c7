#include <doctest.h>

#include <json.hpp>

#include "fixtures.hpp"
#include "unipaint/metrics.hpp"

using namespace unipaint;

namespace {

/// Two-column embedder whose image side reads the mean of channel 0 and 1.
class PlaneEmbedder final : public JointEmbedder {
 public:
  int dim() const override { return 2; }
  int vocab_size() const override { return 2; }
  Eigen::VectorXd text_embedding(int token) const override {
    return token == 0 ? Eigen::Vector2d(1.0, 0.0) : Eigen::Vector2d(0.6, 0.8);
  }
  Eigen::VectorXd image_embedding(const ImageBuffer& image) const override {
    return Eigen::Vector2d(image.values().row(0).mean(), image.values().row(1).mean());
  }
};

ImageBuffer flat(int h, int w, double r, double g, double b) {
  ImageBuffer img(3, h, w);
  img.values().row(0).setConstant(r);
  img.values().row(1).setConstant(g);
  img.values().row(2).setConstant(b);
  return img;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("stroke_rmse goldens") {
    const ImageBuffer stroke = fixtures::stroke_rgba(8, 8, 2, 2, 3, 3, {0.25, 0.5, 0.75});
    const RegionMask mask = fixtures::hole_mask(8, 8, 2, 2, 3, 3).inverted();
    ImageBuffer out = fixtures::image(8, 8, 3);
    for (int y = 2; y < 5; ++y) {
      for (int x = 2; x < 5; ++x) {
        for (int c = 0; c < 3; ++c) out(c, y, x) = stroke(c, y, x);
      }
    }
    CHECK(stroke_rmse(out, stroke, mask) == 0.0);

    ImageBuffer shifted = out;
    for (int i = 0; i < mask.size(); ++i) {
      if (mask[i]) shifted.values().col(i).array() += 0.1;
    }
    CHECK(stroke_rmse(shifted, stroke, mask) == doctest::Approx(0.1).epsilon(1e-7));

    ImageBuffer outside = out;
    outside(0, 0, 0) = 1.0;
    CHECK(stroke_rmse(outside, stroke, mask) == 0.0);

    const ImageBuffer target = flat(1, 2, 0.0, 0.0, 0.0);
    ImageBuffer two = flat(1, 2, 0.3, 0.3, 0.3);
    two.values().col(1).setConstant(0.4);
    CHECK(stroke_rmse(two, target, RegionMask::ones(1, 2)) == doctest::Approx(0.3535534).epsilon(1e-7));

    CHECK_THROWS_AS(stroke_rmse(out, stroke, RegionMask::zeros(8, 8)), Error);
    CHECK_THROWS_AS(stroke_rmse(out, flat(4, 4, 0, 0, 0), RegionMask::ones(4, 4)), Error);
  }

  TEST_CASE("known_region_error") {
    const ImageBuffer a = fixtures::image(8, 8, 1);
    const RegionMask mask = fixtures::hole_mask(8, 8, 0, 0, 4, 4);
    CHECK(known_region_error(a, a, mask) == 0.0);
    ImageBuffer b = a;
    b(1, 6, 6) += 0.25;
    b(0, 1, 1) += 0.9;
    CHECK(known_region_error(b, a, mask) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(known_region_error(b, a, RegionMask::zeros(8, 8)) == 0.0);
  }

  TEST_CASE("embedding similarity") {
    CHECK(cosine_similarity100(Eigen::Vector2d(1, 0), Eigen::Vector2d(0.6, 0.8)) == doctest::Approx(60.0).epsilon(1e-12));
    CHECK(cosine_similarity100(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 3)) == 0.0);
    CHECK(cosine_similarity100(Eigen::Vector2d(2, 5), Eigen::Vector2d(2, 5)) == doctest::Approx(100.0));
    CHECK(cosine_similarity100(Eigen::Vector2d(2, 5), Eigen::Vector2d(4, 10)) == doctest::Approx(100.0));
    CHECK_THROWS_AS(cosine_similarity100(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0)), Error);

    const PlaneEmbedder scorer;
    const ImageBuffer red = flat(2, 2, 1.0, 0.0, 0.0);
    const ImageBuffer mixed = flat(2, 2, 0.3, 0.4, 0.0);
    CHECK(embed_similarity(red, mixed, scorer) == doctest::Approx(60.0).epsilon(1e-12));
    CHECK(embed_similarity(mixed, red, scorer) == embed_similarity(red, mixed, scorer));
    CHECK(embed_similarity(1, red, scorer) == doctest::Approx(60.0).epsilon(1e-12));
    CHECK(embed_similarity(0, red, scorer) == doctest::Approx(100.0).epsilon(1e-12));
  }

  TEST_CASE("report aggregation and serialization") {
    MetricReport r{"stroke_rmse", "stroke alpha", {}};
    r.add(1.0);
    r.add(3.0);
    CHECK(r.count() == 2);
    CHECK(r.mean() == 2.0);
    CHECK(r.stddev() == 1.0);
    CHECK(r.to_lines() == "stroke_rmse\t0\t1\nstroke_rmse\t1\t3\n");
    const auto j = nlohmann::json::parse(r.to_json());
    CHECK(j["metric"] == "stroke_rmse");
    CHECK(j["mask"] == "stroke alpha");
    CHECK(j["count"] == 2);
    CHECK(j["mean"] == 2.0);
    CHECK(j["values"].size() == 2);
    CHECK_THROWS_AS(r.add(std::numeric_limits<double>::quiet_NaN()), Error);
  }
}
