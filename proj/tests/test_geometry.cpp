#include "diffloc/geometry.hpp"

#include "diffloc/rng.hpp"

#include <doctest.h>

using namespace diffloc;

namespace {

Vec3 random_anchor(SplitMix64& rng) {
  return {rng.uniform(-30.0, 30.0), rng.uniform(-30.0, -0.2), rng.uniform(0.0, 30.0)};
}

Vec3 random_target(SplitMix64& rng) {
  return {rng.uniform(0.0, 30.0), rng.uniform(0.0, 30.0), rng.uniform(0.0, 30.0)};
}

}  // namespace

TEST_CASE("path_length hand values") {
  CHECK(path_length(Vec3(3, 4, 0), Vec3(0, 0, 0)) == doctest::Approx(5.0));
  // target coincides with the virtual anchor position
  CHECK(path_length(Vec3(0, 0, 5), Vec3(0, -5, 0)) == doctest::Approx(0.0));
}

TEST_CASE("path_length reduces to the planar distance when z_k = z") {
  SplitMix64 rng(11);
  for (int i = 0; i < 200; ++i) {
    Vec3 a = random_anchor(rng);
    Vec3 t = random_target(rng);
    a.z() = t.z();
    const double expect = std::sqrt(std::pow(a.x() - t.x(), 2) +
                                    std::pow(std::abs(a.y()) + t.y(), 2));
    CHECK(path_length(a, t) == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("path_length nonnegative and even in the anchor y") {
  SplitMix64 rng(12);
  for (int i = 0; i < 200; ++i) {
    const Vec3 a = random_anchor(rng);
    const Vec3 t = random_target(rng);
    const double p = path_length(a, t);
    CHECK(p >= 0.0);
    Vec3 flipped = a;
    flipped.y() = -flipped.y();
    CHECK(path_length(flipped, t) == p);
  }
}

TEST_CASE("r_perp hand values") {
  CHECK(r_perp(Vec3(0, 3, 4), 0.0) == doctest::Approx(5.0));
  CHECK(r_perp(Vec3(7, 0, 12.5), 12.5) == doctest::Approx(0.0));
}

TEST_CASE("virtual_anchor hand values") {
  const Vec2 va = virtual_anchor(Vec3(2, 3, 4), 0.0);
  CHECK(va.x() == doctest::Approx(2.0));
  CHECK(va.y() == doctest::Approx(-5.0));
  const Vec2 degenerate = virtual_anchor(Vec3(7, 0, 9.0), 9.0);
  CHECK(degenerate.x() == doctest::Approx(7.0));
  CHECK(degenerate.y() == doctest::Approx(0.0));
}

TEST_CASE("virtual-anchor embedding is exact") {
  // ||X2D - a~_k|| equals the unified path length at the fixed height.
  SplitMix64 rng(13);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 a = random_anchor(rng);
    const double z0 = rng.uniform(0.0, 30.0);
    const Vec2 xy(rng.uniform(0.0, 30.0), rng.uniform(0.0, 30.0));
    const double via_embedding = (xy - virtual_anchor(a, z0)).norm();
    const double direct = path_length(a, Vec3(xy.x(), xy.y(), z0));
    CHECK(via_embedding == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("r_perp consistent with the embedding") {
  SplitMix64 rng(14);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 a = random_anchor(rng);
    const double z0 = rng.uniform(0.0, 30.0);
    const double rp = r_perp(a, z0);
    CHECK((Vec2(a.x(), 0.0) - virtual_anchor(a, z0)).norm() ==
          doctest::Approx(rp).epsilon(1e-12));
  }
}

TEST_CASE("rls_cost_3d basics") {
  MatX3 anchors(2, 3);
  anchors << 3, 4, 0, 0, -5, 10;
  const Vec3 target(0, 0, 0);
  VecX weights = VecX::Ones(2);
  VecX ranges = path_lengths(anchors, target);

  CHECK(rls_cost_3d(anchors, weights, ranges, target) == doctest::Approx(0.0));

  // one anchor, unit weight, range off by one
  MatX3 one = anchors.topRows(1);
  VecX w1 = VecX::Ones(1);
  VecX r1 = ranges.head(1).array() + 1.0;
  CHECK(rls_cost_3d(one, w1, r1, target) == doctest::Approx(1.0));

  CHECK_THROWS_AS(rls_cost_3d(anchors, VecX::Ones(3), ranges, target), InvalidArgument);
}

TEST_CASE("rls costs match a scalar-loop reference") {
  SplitMix64 rng(15);
  for (int rep = 0; rep < 50; ++rep) {
    const int k = 3 + int(rng.uniform() * 5);
    MatX3 anchors(k, 3);
    VecX weights(k), ranges(k);
    for (int i = 0; i < k; ++i) {
      anchors.row(i) = random_anchor(rng).transpose();
      weights(i) = rng.uniform(0.1, 5.0);
      ranges(i) = rng.uniform(1.0, 80.0);
    }
    const Vec3 target = random_target(rng);

    double expect3 = 0.0;
    for (int i = 0; i < k; ++i) {
      const double e = path_length(anchors.row(i), target) - ranges(i);
      expect3 += weights(i) * e * e;
    }
    CHECK(rls_cost_3d(anchors, weights, ranges, target) ==
          doctest::Approx(expect3).epsilon(1e-12));

    const double z0 = target.z();
    double expect2 = 0.0;
    for (int i = 0; i < k; ++i) {
      const double e =
          (target.head<2>() - virtual_anchor(anchors.row(i), z0)).norm() - ranges(i);
      expect2 += weights(i) * e * e;
    }
    CHECK(rls_cost_2d(anchors, z0, weights, ranges, target.head<2>()) ==
          doctest::Approx(expect2).epsilon(1e-12));
    // fixed-height cost equals the 3D cost at that height
    CHECK(rls_cost_2d(anchors, z0, weights, ranges, target.head<2>()) ==
          doctest::Approx(expect3).epsilon(1e-12));
  }
}

TEST_CASE("jacobian_3d guards degenerate geometry") {
  MatX3 anchors(1, 3);
  anchors << 1, 0, 5;  // y_k = 0 and z_k = z makes r_perp vanish
  CHECK_THROWS_AS(jacobian_3d(anchors, Vec3(0, 2, 5)), DegenerateGeometry);
}

TEST_CASE("jacobian_3d hand row") {
  MatX3 anchors(1, 3);
  anchors << 3, 4, 0;
  const MatX3 jac = jacobian_3d(anchors, Vec3(0, 0, 0));
  CHECK(jac(0, 0) == doctest::Approx(-3.0 / 5.0));
  CHECK(jac(0, 1) == doctest::Approx(4.0 / 5.0));
  CHECK(jac(0, 2) == doctest::Approx(0.0));
}

TEST_CASE("jacobian_3d matches central finite differences") {
  SplitMix64 rng(16);
  for (int rep = 0; rep < 100; ++rep) {
    const int k = 4 + int(rng.uniform() * 3);
    MatX3 anchors(k, 3);
    for (int i = 0; i < k; ++i) anchors.row(i) = random_anchor(rng).transpose();
    const Vec3 target = random_target(rng);
    const MatX3 jac = jacobian_3d(anchors, target);
    for (int c = 0; c < 3; ++c) {
      const double h = 1e-6 * (1.0 + std::abs(target(c)));
      Vec3 lo = target, hi = target;
      lo(c) -= h;
      hi(c) += h;
      for (int i = 0; i < k; ++i) {
        const double fd =
            (path_length(anchors.row(i), hi) - path_length(anchors.row(i), lo)) /
            (2.0 * h);
        CHECK(jac(i, c) == doctest::Approx(fd).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("weights_from_sigmas validates and inverts") {
  VecX sig(2);
  sig << 0.5, 2.0;
  const VecX w = weights_from_sigmas(sig);
  CHECK(w(0) == doctest::Approx(4.0));
  CHECK(w(1) == doctest::Approx(0.25));
  sig(1) = 0.0;
  CHECK_THROWS_AS(weights_from_sigmas(sig), InvalidArgument);
}
