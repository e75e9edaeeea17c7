#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "unipaint/finetune.hpp"
#include "unipaint/pipeline.hpp"

using namespace unipaint;
using fixtures::tiny_net;
using fixtures::tiny_params;

namespace {

struct Inputs {
  LatentMap x_in;
  RegionMask latent_mask;
};

Inputs inputs_64(std::uint64_t seed) {
  const ImageBuffer img = fixtures::image(64, 64, seed);
  const RegionMask mask = fixtures::hole_mask(64, 64, 16, 16, 32, 32);
  return {encode(apply_mask(img, mask)), downsample_mask(mask, 8)};
}

LatentMap gaussian(int c, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return gaussian_latent(c, h, w, rng);
}

}  // namespace

TEST_SUITE("finetune") {
  TEST_CASE("background loss identities") {
    const auto& net = tiny_net();
    const auto& p = tiny_params();
    const NoiseSchedule sched = make_schedule<double>(1000);
    const Inputs in = inputs_64(1);
    const LatentMap eps = gaussian(192, 8, 8, 2);

    CHECK(bg_loss(net, p, in.x_in, RegionMask::zeros(8, 8), 400, eps, sched) == 0.0);

    const LatentMap noised = add_noise(in.x_in, 400, eps, sched);
    const TextEmbedding null_text = net.encode_text(default_tokenizer().null_sequence(), p);
    const Eigen::MatrixXd residual = eps.values() - net.predict_noise(noised, null_text, 400, nullptr, p).values();
    const double unmasked = residual.squaredNorm() / static_cast<double>(residual.size());
    CHECK(bg_loss(net, p, in.x_in, RegionMask::ones(8, 8), 400, eps, sched) == unmasked);

    double masked_sum = 0.0;
    int count = 0;
    for (int i = 0; i < 64; ++i) {
      if (in.latent_mask[i] == 1) {
        masked_sum += residual.col(i).squaredNorm();
        count += 192;
      }
    }
    CHECK(bg_loss(net, p, in.x_in, in.latent_mask, 400, eps, sched) == doctest::Approx(masked_sum / count).epsilon(1e-12));
    CHECK_THROWS_AS(bg_loss(net, p, in.x_in, RegionMask::ones(4, 4), 400, eps, sched), Error);
  }

  TEST_CASE("placement arithmetic") {
    const LatentMap ex = fixtures::random_latent(tiny_net(), 8, 8, 3);
    const Rect bbox{0, 0, 8, 8};
    const PlacedExemplar half = place_exemplar(ex, bbox, 8, 8, 0.5, 0, 0);
    CHECK(half.valid.known_count() == 16);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) CHECK(half.valid.at(y, x) == (y < 4 && x < 4 ? 1 : 0));
    }
    const PlacedExemplar full = place_exemplar(ex, Rect{2, 1, 4, 6}, 8, 8, 1.0, 0, 0);
    CHECK(full.valid.known_count() == 16);  // 8x8 fits a 4x6 box as 4x4
    const PlacedExemplar exact = place_exemplar(ex, bbox, 8, 8, 1.0, 0, 0);
    CHECK(exact.latent == ex);
    CHECK(exact.valid == RegionMask::ones(8, 8));
    CHECK_THROWS_AS(place_exemplar(ex, Rect{0, 0, 1, 8}, 8, 8, 1.0, 0, 0), Error);
    CHECK_THROWS_AS(place_exemplar(ex, bbox, 8, 8, 0.5, 5, 0), Error);
  }

  TEST_CASE("augmentation stays inside the bounding box") {
    const LatentMap ex = fixtures::random_latent(tiny_net(), 8, 8, 4);
    const Rect bbox{2, 3, 5, 4};
    std::mt19937_64 rng(9);
    for (int i = 0; i < 200; ++i) {
      const PlacedExemplar p = augment_exemplar(ex, bbox, 8, 8, rng);
      CHECK(p.valid.known_count() >= 4);
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          if (p.valid.at(y, x)) {
            CHECK(bbox.contains(y, x));
          } else {
            CHECK(p.latent.values().col(y * 8 + x).isZero(0.0));
          }
        }
      }
    }
  }

  TEST_CASE("reference loss is deterministic under pinned inputs") {
    const auto& net = tiny_net();
    const auto& p = tiny_params();
    const NoiseSchedule sched = make_schedule<double>(1000);
    const Inputs in = inputs_64(5);
    const ExemplarBundle bundle = make_exemplar_bundle(fixtures::random_latent(net, 8, 8, 6), 17, in.latent_mask);
    const LatentMap eps = gaussian(192, 8, 8, 7);
    std::mt19937_64 r1(3), r2(3);
    const double a = ref_loss(net, p, bundle, 250, eps, r1, sched);
    const double b = ref_loss(net, p, bundle, 250, eps, r2, sched);
    CHECK(a == b);
    CHECK(a > 0.0);
    CHECK_THROWS_AS(make_exemplar_bundle(fixtures::random_latent(net, 8, 8, 6), 17, RegionMask::ones(8, 8)), Error);
  }

  TEST_CASE("run_finetune contracts") {
    const auto& net = tiny_net();
    const auto& p = tiny_params();
    const NoiseSchedule sched = make_schedule<double>(1000);
    const Inputs in = inputs_64(8);

    FinetuneConfig zero;
    zero.total_iters = 0;
    const ParameterSet same = run_finetune(net, p, in.x_in, in.latent_mask, std::nullopt, zero, sched);
    CHECK(same == p);

    FinetuneConfig cfg;
    cfg.total_iters = 3;
    cfg.seed = 4;
    const ExemplarBundle bundle = make_exemplar_bundle(fixtures::random_latent(net, 8, 8, 6), 17, in.latent_mask);
    std::vector<FinetuneTelemetry> log;
    const ParameterSet a = run_finetune(net, p, in.x_in, in.latent_mask, bundle, cfg, sched,
                                        [&](const FinetuneTelemetry& t) { log.push_back(t); });
    const ParameterSet b = run_finetune(net, p, in.x_in, in.latent_mask, bundle, cfg, sched);
    CHECK(a == b);
    CHECK_FALSE(a == p);
    CHECK(a.finetune_iterations() == 3);
    REQUIRE(log.size() == 3);
    for (std::size_t i = 0; i < log.size(); ++i) {
      CHECK(log[i].iteration == static_cast<int>(i));
      CHECK(log[i].total_loss == log[i].bg_loss + log[i].ref_loss);
      CHECK(log[i].ref_loss > 0.0);
    }

    FinetuneConfig bad;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(run_finetune(net, p, in.x_in, in.latent_mask, std::nullopt, bad, sched), Error);
    bad = FinetuneConfig{};
    bad.total_iters = -1;
    CHECK_THROWS_AS(run_finetune(net, p, in.x_in, in.latent_mask, std::nullopt, bad, sched), Error);
  }

  TEST_CASE("defaults") {
    const FinetuneConfig cfg;
    CHECK(cfg.total_iters == 100);
    CHECK(cfg.learning_rate == 1e-5);
    CHECK(cfg.beta1 == 0.9);
    CHECK(cfg.beta2 == 0.999);
  }

  TEST_CASE("smoothing") {
    const auto s = smoothed({1, 2, 3, 4, 5}, 2);
    CHECK(s == std::vector<double>{1, 1.5, 2.5, 3.5, 4.5});
  }

  TEST_CASE("smoothed training loss trends down at the default settings") {
    const NoiseSchedule sched = make_schedule<double>(1000);
    for (std::uint64_t seed : {11u, 12u, 13u}) {
      const ImageBuffer img = fixtures::image(64, 64, seed);
      const RegionMask mask = fixtures::hole_mask(64, 64, 16, 16, 32, 32);
      {
        FinetuneConfig cfg;
        cfg.seed = seed;
        std::vector<double> losses;
        finetune_on_image(fixtures::small_net(), fixtures::small_net().init_parameters(0), img, mask, std::nullopt,
                          std::nullopt, cfg, sched, [&](const FinetuneTelemetry& t) { losses.push_back(t.total_loss); });
        const auto s = smoothed(losses, 20);
        double worst = 0.0;
        for (std::size_t i = 20; i < s.size(); ++i) worst = std::max(worst, s[i] / s[i - 1] - 1.0);
        CHECK(worst <= 0.05);
        CHECK(s.back() < s[19]);
      }
    }
  }
}
