#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "unipaint/codec.hpp"

using namespace unipaint;

TEST_SUITE("codec") {
  TEST_CASE("mid-grey image encodes to the zero latent") {
    const auto img = ImageBuffer::constant(3, 64, 64, 0.5);
    const LatentMap z = encode(img);
    CHECK(z.channels() == 192);
    CHECK(z.height() == 8);
    CHECK(z.width() == 8);
    CHECK(z.values().isZero(0.0));
    CHECK(decode(z) == img);
  }

  TEST_CASE("single bright pixel lands in the expected channel") {
    auto img = ImageBuffer::constant(3, 16, 16, 0.5);
    img(0, 0, 0) = 1.0;
    const LatentMap z = encode(img);
    // Brute-force index search: exactly one non-zero entry, at channel 0 of cell (0,0).
    int nonzero = 0;
    for (int c = 0; c < z.channels(); ++c) {
      for (int y = 0; y < z.height(); ++y) {
        for (int x = 0; x < z.width(); ++x) {
          if (z(c, y, x) != 0.0) {
            ++nonzero;
            CHECK(c == 0);
            CHECK(y == 0);
            CHECK(x == 0);
            CHECK(z(c, y, x) == 1.0);
          }
        }
      }
    }
    CHECK(nonzero == 1);
  }

  TEST_CASE("channel layout is c*f*f + dy*f + dx") {
    ImageBuffer img(3, 16, 16);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> level(0, 255);
    for (Eigen::Index i = 0; i < img.values().size(); ++i) img.values().data()[i] = quantize_pixel(level(rng) / 255.0);
    const LatentMap z = encode(img);
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
          const int ch = c * 64 + (y % 8) * 8 + (x % 8);
          CHECK(z(ch, y / 8, x / 8) == 2.0 * img(c, y, x) - 1.0);
        }
      }
    }
  }

  TEST_CASE("every 8-bit level round-trips exactly") {
    ImageBuffer img(3, 16, 16);
    for (int i = 0; i < 256; ++i) {
      for (int c = 0; c < 3; ++c) img.values()(c, i) = quantize_pixel(((i + 85 * c) % 256) / 255.0);
    }
    CHECK(decode(encode(img)) == img);
    const LatentMap z = encode(img);
    CHECK(encode(decode(z)) == z);
  }

  TEST_CASE("decode clamps and rejects inconsistent channels") {
    LatentMap z = LatentMap::constant(192, 1, 1, 0.0);
    z(5, 0, 0) = 3.0;
    z(6, 0, 0) = -3.0;
    const ImageBuffer img = decode(z);
    CHECK(img(0, 0, 5) == 1.0);
    CHECK(img(0, 0, 6) == 0.0);
    CHECK_THROWS_AS(decode(LatentMap::constant(191, 1, 1, 0.0)), Error);
  }

  TEST_CASE("encode rejects sizes off the factor and values outside [0,1]") {
    CHECK_THROWS_AS(encode(ImageBuffer::constant(3, 12, 16, 0.5)), Error);
    auto bad = ImageBuffer::constant(3, 8, 8, 0.5);
    bad(1, 2, 3) = 1.5;
    CHECK_THROWS_AS(encode(bad), Error);
  }

  TEST_CASE("downsample_mask uses the all-known rule") {
    CHECK(downsample_mask(RegionMask::ones(64, 64), 8) == RegionMask::ones(8, 8));

    RegionMask one_hole = RegionMask::ones(64, 64);
    one_hole.at(17, 42) = 0;
    const RegionMask d = downsample_mask(one_hole, 8);
    CHECK(d.known_count() == 63);
    CHECK(d.at(2, 5) == 0);

    RegionMask checker(16, 16);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) checker.at(y, x) = static_cast<std::uint8_t>((x + y) % 2);
    }
    CHECK(downsample_mask(checker, 8) == RegionMask::zeros(2, 2));

    RegionMask non_binary = RegionMask::ones(8, 8);
    non_binary.at(0, 0) = 2;
    CHECK_THROWS_AS(downsample_mask(non_binary, 8), Error);
    CHECK_THROWS_AS(downsample_mask(RegionMask::ones(12, 8), 8), Error);
  }

  TEST_CASE("downsample_mask is conservative and monotone on random masks") {
    std::mt19937_64 rng(11);
    std::bernoulli_distribution known(0.85);
    for (int trial = 0; trial < 200; ++trial) {
      RegionMask a(16, 16), b(16, 16);
      for (int i = 0; i < a.size(); ++i) {
        a[i] = known(rng);
        b[i] = a[i] | static_cast<std::uint8_t>(known(rng));
      }
      for (int factor : {2, 4, 8}) {
        const RegionMask da = downsample_mask(a, factor);
        const RegionMask db = downsample_mask(b, factor);
        for (int y = 0; y < da.height(); ++y) {
          for (int x = 0; x < da.width(); ++x) {
            bool all = true;
            for (int dy = 0; dy < factor; ++dy) {
              for (int dx = 0; dx < factor; ++dx) all = all && a.at(y * factor + dy, x * factor + dx) == 1;
            }
            CHECK((da.at(y, x) == 1) == all);
            CHECK(da.at(y, x) <= db.at(y, x));
          }
        }
      }
    }
  }

  TEST_CASE("upsample_mask replicates cells") {
    RegionMask m(2, 2, 1);
    m.at(1, 0) = 0;
    const RegionMask u = upsample_mask(m, 4);
    CHECK(u.height() == 8);
    CHECK(u.known_count() == 48);
    CHECK(u.at(7, 3) == 0);
    CHECK(downsample_mask(u, 4) == m);
  }

  TEST_CASE("apply_mask zeroes unknown pixels") {
    const auto img = fixtures::image(16, 16, 1);
    const auto mask = fixtures::hole_mask(16, 16, 4, 4, 8, 8);
    const auto masked = apply_mask(img, mask);
    CHECK(masked(1, 5, 5) == 0.0);
    CHECK(masked(1, 0, 0) == img(1, 0, 0));
  }

  TEST_CASE("hole bounding box") {
    const Rect r = hole_bounding_box(fixtures::hole_mask(8, 8, 2, 3, 4, 2));
    CHECK(r.y0 == 2);
    CHECK(r.x0 == 3);
    CHECK(r.height == 4);
    CHECK(r.width == 2);
    CHECK(hole_bounding_box(RegionMask::ones(4, 4)).empty());
  }
}
