#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "support/reference.hpp"
#include "vkp/keypoint_fusion.hpp"
#include "vkp/oracles.hpp"

using namespace vkp;

TEST_CASE("receptive centres sit on the stride lattice") {
  CHECK(receptive_center(0, 0) == Point2{0, 0});
  CHECK(receptive_center(2, 3) == Point2{96, 64});
  CHECK(receptive_center(1, 1, 10.0) == Point2{10, 10});
}

TEST_CASE("target map is one-hot at the nearest receptive centre") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> coord(-20.0, 400.0);
  for (int t = 0; t < 500; ++t) {
    const std::vector<std::optional<Point2>> kps{Point2{coord(rng), coord(rng)}, std::nullopt};
    const auto maps = target_response_map(kps, 12, 12, 32.0);
    REQUIRE(maps.size() == 2);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 12; ++i) {
      for (std::size_t j = 0; j < 12; ++j) best = std::min(best, distance(receptive_center(i, j), *kps[0]));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < 12; ++i) {
      for (std::size_t j = 0; j < 12; ++j) {
        total += maps[0](i, j);
        if (maps[0](i, j) == 1.0) CHECK(distance(receptive_center(i, j), *kps[0]) == doctest::Approx(best));
      }
    }
    CHECK(total == 1.0);
    for (double v : maps[1].data()) CHECK(v == 0.0);
  }
}

TEST_CASE("nearest upsampling replicates 2x2 blocks") {
  Grid c(6, 6);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) c(i, j) = static_cast<double>(10 * i + j);
  }
  const Grid f = upsample_coarse(c);
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t j = 0; j < 12; ++j) CHECK(f(i, j) == c(i / 2, j / 2));
  }
  CHECK_THROWS_AS(upsample_coarse(Grid(12, 12)), std::invalid_argument);
}

TEST_CASE("bilinear upsampling preserves affine ramps inside the grid") {
  Grid c(6, 6);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) c(i, j) = 2.0 * i + 3.0 * j;
  }
  const Grid f = upsample_coarse(c, UpsampleMode::kBilinear);
  for (std::size_t i = 1; i < 11; ++i) {
    for (std::size_t j = 1; j < 11; ++j) {
      const double ci = (i + 0.5) / 2.0 - 0.5, cj = (j + 0.5) / 2.0 - 0.5;
      CHECK(f(i, j) == doctest::Approx(2.0 * ci + 3.0 * cj));
    }
  }
  const Grid constant = upsample_coarse(Grid(6, 6, 4.5), UpsampleMode::kBilinear);
  for (double v : constant.data()) CHECK(v == doctest::Approx(4.5));
}

TEST_CASE("scale combination is a weighted sum") {
  Grid fine(12, 12, 2.0), coarse(6, 6, -1.0);
  fine(3, 4) = 10.0;
  const Grid out = combine_scales(fine, coarse, 0.25, 0.75);
  CHECK(out(0, 0) == doctest::Approx(0.25 * 2.0 - 0.75));
  CHECK(out(3, 4) == doctest::Approx(0.25 * 10.0 - 0.75));
  CHECK_THROWS_AS(combine_scales(Grid(6, 6), coarse, 0.5, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(combine_scales(fine, coarse, NAN, 0.5), std::invalid_argument);
}

TEST_CASE("keypoint normalization roundtrip and clamping") {
  const Box box{10, 20, 120, 60};
  const Point2 p{70, 35};
  const Point2 g = normalize_keypoint(box, p);
  CHECK(g.x == doctest::Approx(6.0));
  CHECK(g.y == doctest::Approx(3.0));
  const Point2 back = denormalize_keypoint(box, g);
  CHECK(back.x == doctest::Approx(p.x));
  CHECK(back.y == doctest::Approx(p.y));
  const Point2 outside = normalize_keypoint(box, {500, -5});
  CHECK(outside.x < 12.0);
  CHECK(outside.x > 11.99);
  CHECK(outside.y == 0.0);
  CHECK_THROWS_AS(normalize_keypoint(Box{0, 0, 0, 5}, p), std::invalid_argument);
}

TEST_CASE("response map and prior bank validation") {
  CHECK_NOTHROW((ResponseMap{0, 0, Grid(12, 12)}.validate()));
  CHECK_NOTHROW((ResponseMap{0, 0, Grid(6, 6)}.validate()));
  CHECK_THROWS_AS((ResponseMap{0, 0, Grid(8, 8)}.validate()), std::invalid_argument);
  ResponseMap bad{0, 0, Grid(12, 12)};
  bad.grid(1, 1) = NAN;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  PriorBank bank{0, {PriorEntry{RotationMatrix{}, {Point2{12.0, 1.0}}}}};
  CHECK_THROWS_AS(bank.validate(), std::invalid_argument);
}

TEST_CASE("neighbour set matches a brute-force scan") {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 200; ++t) {
    const PriorBank bank = ref::random_bank(rng, 50, 2);
    const RotationMatrix r = euler_to_rotation(ref::random_euler(rng));
    for (double threshold : {0.05, kPi / 6, 1.0}) {
      CHECK(neighbor_set(r, bank, threshold) == ref::brute_neighbors(r, bank, threshold));
    }
  }
  CHECK_THROWS_AS(neighbor_set(RotationMatrix{}, PriorBank{}), std::invalid_argument);
}

TEST_CASE("neighbour set falls back to the nearest entry") {
  PriorBank bank{0, {PriorEntry{RotationMatrix::about_z(2.0), {}}, PriorEntry{RotationMatrix::about_z(1.0), {}}}};
  const auto n = neighbor_set(RotationMatrix{}, bank, 0.1);
  REQUIRE(n.size() == 1);
  CHECK(n[0] == 1);
}

TEST_CASE("pose prior matches the mixture reference") {
  std::mt19937_64 rng(29);
  for (int t = 0; t < 100; ++t) {
    const PriorBank bank = ref::random_bank(rng, 40, 3);
    const RotationMatrix r = euler_to_rotation(ref::random_euler(rng));
    const auto neighbors = ref::brute_neighbors(r, bank, kDefaultNeighborThreshold);
    for (std::size_t k = 0; k < 3; ++k) {
      const auto got = pose_prior(r, bank, k, 2.0);
      const auto want = ref::mixture_prior(bank, neighbors, k, 2.0);
      REQUIRE(got.has_value() == want.has_value());
      if (!got) continue;
      for (std::size_t c = 0; c < 144; ++c) REQUIRE(std::fabs(got->data()[c] - want->data()[c]) <= 1e-12);
    }
  }
}

TEST_CASE("pose prior edge cases") {
  PriorBank bank{0, {PriorEntry{RotationMatrix{}, {std::nullopt, Point2{0.5, 0.5}}}}};
  CHECK(!pose_prior(RotationMatrix{}, bank, 0).has_value());
  CHECK(!pose_prior(RotationMatrix{}, bank, 5).has_value());
  const auto p = pose_prior(RotationMatrix{}, bank, 1, 0.05);
  REQUIRE(p.has_value());
  CHECK((*p)(11, 11) == kPriorFloor);
  CHECK((*p)(0, 0) == doctest::Approx(1.0 / (2 * kPi * 0.05 * 0.05)));
  CHECK_THROWS_AS(pose_prior(RotationMatrix{}, bank, 1, 0.0), std::invalid_argument);
}

TEST_CASE("a broad prior integrates to about one over the grid") {
  PriorBank bank{0, {PriorEntry{RotationMatrix{}, {Point2{6.0, 6.0}}}}};
  const auto p = pose_prior(RotationMatrix{}, bank, 0, 1.0);
  double sum = 0.0;
  for (double v : p->data()) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("fused decode agrees with the exhaustive oracle, ties included") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> level(0, 2);
  for (int t = 0; t < 2000; ++t) {
    Grid prior(12, 12), lik(12, 12);
    const bool ties = t % 2 == 0;
    for (std::size_t c = 0; c < 144; ++c) {
      prior.data()[c] = ties ? 0.25 * (1 + level(rng)) : u(rng);
      lik.data()[c] = ties ? static_cast<double>(level(rng)) : std::log(u(rng));
    }
    if (t % 7 == 0) prior.data()[5] = 0.0;
    const DecodedKeypoint d = fuse_and_decode(prior, lik);
    const Point2 want = synth::oracle_fuse(prior.data(), lik.data(), 12, 12);
    REQUIRE(d.location == want);
  }
}

TEST_CASE("uniform prior decodes the appearance argmax") {
  const Grid uniform(12, 12, 1.0 / 144);
  Grid lik(12, 12, -5.0);
  lik(7, 2) = 1.0;
  const auto d = fuse_and_decode(uniform, lik);
  CHECK(d.location == Point2{2.5, 7.5});
  CHECK(d.score == doctest::Approx(std::log(1.0 / 144) + 1.0));
}

TEST_CASE("prior overrides a weaker distractor peak") {
  // Appearance prefers (2,2) slightly; the prior sits on (9,9).
  Grid fine(12, 12, -10.0), coarse(6, 6, -10.0);
  fine(2, 2) = 0.0;
  fine(9, 9) = -0.2;
  const std::vector<ResponseMap> f{{0, 0, fine}}, c{{0, 0, coarse}};
  PriorBank bank{0, {PriorEntry{RotationMatrix{}, {Point2{9.5, 9.5}}}}};
  const Box box{0, 0, 120, 120};
  FusionOptions opts;
  const auto with = decode_keypoints(f, c, RotationMatrix{}, box, &bank, opts);
  CHECK(with[0].location == Point2{95, 95});
  opts.use_prior = false;
  const auto without = decode_keypoints(f, c, RotationMatrix{}, box, &bank, opts);
  CHECK(without[0].location == Point2{25, 25});
  const auto no_bank = decode_keypoints(f, c, RotationMatrix{}, box, nullptr, FusionOptions{});
  CHECK(no_bank[0].location == Point2{25, 25});
  CHECK_THROWS_AS(decode_keypoints(f, {}, RotationMatrix{}, box, &bank, opts), std::invalid_argument);
}
