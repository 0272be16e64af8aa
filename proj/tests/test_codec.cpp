#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pbev/codec.hpp"
#include "pbev/errors.hpp"
#include "pbev/mathutil.hpp"
#include "pbev/rng.hpp"

using namespace pbev;

namespace {

double angle_gap(double a, double b) { return std::abs(wrap_angle(a - b)); }

BoxCart random_box(SplitMix64& rng, double r_lo = 0.05, double r_hi = 60.0) {
  const double theta = rng.uniform(-kPi + 1e-9, kPi);
  const double r = rng.uniform(r_lo, r_hi);
  BoxCart b;
  b.x = r * std::cos(theta);
  b.y = r * std::sin(theta);
  b.z = rng.uniform(-2.0, 2.0);
  b.w = rng.uniform(0.2, 5.0);
  b.l = rng.uniform(0.2, 5.0);
  b.h = rng.uniform(0.2, 5.0);
  b.yaw = rng.uniform(-kPi + 1e-9, kPi);
  b.vx = rng.uniform(-10.0, 10.0);
  b.vy = rng.uniform(-10.0, 10.0);
  b.class_id = static_cast<int>(rng.next_below(3));
  return b;
}

// The three-case minimum-enclosing radius, written out independently.
double reference_radius(double h, double w, double o) {
  const double b1 = h + w, c1 = w * h * (1.0 - o) / (1.0 + o);
  const double r1 = (b1 + std::sqrt(std::max(0.0, b1 * b1 - 4.0 * c1))) / 2.0;
  const double b2 = 2.0 * (h + w), c2 = (1.0 - o) * w * h;
  const double r2 = (b2 + std::sqrt(std::max(0.0, b2 * b2 - 16.0 * c2))) / 2.0;
  const double b3 = -2.0 * o * (h + w), c3 = (o - 1.0) * w * h;
  const double r3 = (b3 + std::sqrt(std::max(0.0, b3 * b3 - 16.0 * o * c3))) / 2.0;
  return std::min(r1, std::min(r2, r3));
}

}  // namespace

TEST_CASE("a box whose heading points along its azimuth ray encodes with zero relative yaw") {
  BoxCart b;
  b.x = 3.0;
  b.y = 4.0;
  b.z = 1.0;
  b.w = 1.0;
  b.l = 2.0;
  b.h = 1.5;
  b.yaw = std::atan2(4.0, 3.0);

  const BoxPolar p = encode_polar(b);
  CHECK(p.r == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(p.theta == doctest::Approx(std::atan2(4.0, 3.0)).epsilon(1e-12));
  CHECK(std::abs(p.yaw) < 1e-12);
  CHECK(p.z == 1.0);
  CHECK(p.w == 1.0);
  CHECK(p.l == 2.0);
  CHECK(p.h == 1.5);
  CHECK(p.v_theta == 0.0);
  CHECK(p.v_r == 0.0);
}

TEST_CASE("velocity splits into tangential and radial components") {
  const double theta = std::atan2(4.0, 3.0);
  BoxCart tangential;
  tangential.x = 3.0;
  tangential.y = 4.0;
  tangential.w = tangential.l = tangential.h = 1.0;
  tangential.vx = 3.0 * std::cos(theta + kPi / 2.0);
  tangential.vy = 3.0 * std::sin(theta + kPi / 2.0);
  const BoxPolar pt = encode_polar(tangential);
  CHECK(pt.v_theta == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(std::abs(pt.v_r) < 1e-12);

  BoxCart radial = tangential;
  radial.vx = 5.0 * std::cos(theta);
  radial.vy = 5.0 * std::sin(theta);
  const BoxPolar pr = encode_polar(radial);
  CHECK(std::abs(pr.v_theta) < 1e-12);
  CHECK(pr.v_r == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("degenerate centers at the origin cannot be encoded") {
  BoxCart b;
  b.w = b.l = b.h = 1.0;
  CHECK_THROWS_AS(encode_polar(b), DomainError);
  b.x = 5e-7;
  CHECK_THROWS_AS(encode_polar(b), DomainError);
  b.x = 2e-6;
  CHECK_NOTHROW(encode_polar(b));
}

TEST_CASE("decoding a polar box on the positive y-axis") {
  BoxPolar p;
  p.theta = kPi / 2.0;
  p.r = 2.0;
  p.z = 0.3;
  p.w = 1.0;
  p.l = 2.0;
  p.h = 1.0;
  p.yaw = 0.0;
  p.v_theta = 0.0;
  p.v_r = 1.0;

  const BoxCart b = decode_polar(p);
  CHECK(std::abs(b.x) < 1e-12);
  CHECK(b.y == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(b.yaw == doctest::Approx(kPi / 2.0).epsilon(1e-12));
  CHECK(std::abs(b.vx) < 1e-12);
  CHECK(b.vy == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(b.z == 0.3);
}

TEST_CASE("decoding rejects non-positive radii") {
  BoxPolar p;
  p.w = p.l = p.h = 1.0;
  p.r = 0.0;
  CHECK_THROWS_AS(decode_polar(p), DomainError);
  p.r = -2.0;
  CHECK_THROWS_AS(decode_polar(p), DomainError);
}

TEST_CASE("a thousand random boxes round trip through the polar parameterization") {
  SplitMix64 rng(61);
  for (int n = 0; n < 1000; ++n) {
    const BoxCart b = random_box(rng);
    const BoxPolar p = encode_polar(b);
    const BoxCart back = decode_polar(p);
    CHECK(back.x == doctest::Approx(b.x).epsilon(1e-9));
    CHECK(back.y == doctest::Approx(b.y).epsilon(1e-9));
    CHECK(back.z == doctest::Approx(b.z).epsilon(1e-9));
    CHECK(back.w == doctest::Approx(b.w).epsilon(1e-9));
    CHECK(back.l == doctest::Approx(b.l).epsilon(1e-9));
    CHECK(back.h == doctest::Approx(b.h).epsilon(1e-9));
    CHECK(angle_gap(back.yaw, b.yaw) < 1e-9);
    CHECK(back.vx == doctest::Approx(b.vx).epsilon(1e-9));
    CHECK(back.vy == doctest::Approx(b.vy).epsilon(1e-9));
    CHECK(back.class_id == b.class_id);

    // Splitting the velocity never changes the speed.
    CHECK(std::hypot(p.v_theta, p.v_r) == doctest::Approx(std::hypot(b.vx, b.vy)).epsilon(1e-9));
  }
}

TEST_CASE("azimuth rotation moves the center and heading rigidly") {
  BoxCart b;
  b.x = 1.0;
  b.w = b.l = b.h = 1.0;

  const BoxCart same = azimuth_rotate_cart(b, 0.0);
  CHECK(same.x == b.x);
  CHECK(same.y == b.y);
  CHECK(same.yaw == b.yaw);

  const BoxCart quarter = azimuth_rotate_cart(b, kPi / 2.0);
  CHECK(std::abs(quarter.x) < 1e-12);
  CHECK(quarter.y == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(angle_gap(quarter.yaw, b.yaw + kPi / 2.0) < 1e-12);
}

TEST_CASE("azimuth rotations compose additively") {
  SplitMix64 rng(62);
  for (int n = 0; n < 50; ++n) {
    const BoxCart b = random_box(rng);
    const double d1 = rng.uniform(-kPi, kPi), d2 = rng.uniform(-kPi, kPi);
    const BoxCart ab = azimuth_rotate_cart(azimuth_rotate_cart(b, d2), d1);
    const BoxCart once = azimuth_rotate_cart(b, d1 + d2);
    CHECK(ab.x == doctest::Approx(once.x).epsilon(1e-9));
    CHECK(ab.y == doctest::Approx(once.y).epsilon(1e-9));
    CHECK(angle_gap(ab.yaw, once.yaw) < 1e-9);
    CHECK(ab.vx == doctest::Approx(once.vx).epsilon(1e-9));
    CHECK(ab.vy == doctest::Approx(once.vy).epsilon(1e-9));
  }
}

TEST_CASE("rotating a box about the ego axis shifts only its encoded azimuth") {
  SplitMix64 rng(63);
  for (int n = 0; n < 100; ++n) {
    const BoxCart b = random_box(rng, 0.5, 60.0);
    const double delta = rng.uniform(-kPi, kPi);
    const BoxPolar base = encode_polar(b);
    const BoxPolar rot = encode_polar(azimuth_rotate_cart(b, delta));
    CHECK(angle_gap(rot.theta, base.theta + delta) < 1e-9);
    CHECK(rot.r == doctest::Approx(base.r).epsilon(1e-9));
    CHECK(rot.z == doctest::Approx(base.z).epsilon(1e-9));
    CHECK(rot.w == doctest::Approx(base.w).epsilon(1e-9));
    CHECK(rot.l == doctest::Approx(base.l).epsilon(1e-9));
    CHECK(rot.h == doctest::Approx(base.h).epsilon(1e-9));
    CHECK(angle_gap(rot.yaw, base.yaw) < 1e-9);
    CHECK(rot.v_theta == doctest::Approx(base.v_theta).epsilon(1e-9));
    CHECK(rot.v_r == doctest::Approx(base.v_r).epsilon(1e-9));
  }
}

TEST_CASE("a box at a bin center renders a unit peak with half-bin offsets") {
  const PolarGridSpec spec{32, 16, 1.0, 65.0};
  BoxPolar p;
  p.theta = -kPi + 10.5 * spec.delta_theta();
  p.r = 1.0 + 5.5 * spec.delta_r();
  p.w = 8.0;
  p.l = 8.0;
  p.h = 2.0;
  p.class_id = 1;

  const HeatmapTarget target = make_heatmap_target(std::vector<BoxPolar>{p}, spec, 2);
  CHECK(target.data.channels() == 2);
  CHECK(target.data.at(1, 10, 5) == 1.0);
  REQUIRE(target.objects.size() == 1u);
  CHECK(target.objects[0].class_id == 1);
  CHECK(target.objects[0].c_theta == 10);
  CHECK(target.objects[0].c_r == 5);
  CHECK(target.objects[0].o_theta == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(target.objects[0].o_r == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(target.objects[0].radius_bins >= 1);
  CHECK(target.skipped.empty());

  // Nothing may leak into the other class channel.
  for (int i = 0; i < spec.n_theta; ++i)
    for (int j = 0; j < spec.n_r; ++j) CHECK(target.data.at(0, i, j) == 0.0);
}

TEST_CASE("two far-apart boxes of one class render two unit peaks") {
  const PolarGridSpec spec{32, 16, 1.0, 65.0};
  BoxPolar a;
  a.theta = -kPi + 4.5 * spec.delta_theta();
  a.r = 1.0 + 3.5 * spec.delta_r();
  a.w = a.l = 4.0;
  a.h = 2.0;
  BoxPolar b = a;
  b.theta = -kPi + 20.5 * spec.delta_theta();
  b.r = 1.0 + 12.5 * spec.delta_r();

  const HeatmapTarget target = make_heatmap_target(std::vector<BoxPolar>{a, b}, spec, 1);
  CHECK(target.data.at(0, 4, 3) == 1.0);
  CHECK(target.data.at(0, 20, 12) == 1.0);
  CHECK(target.objects.size() == 2u);
}

TEST_CASE("gaussian mass near the seam lands on both sides of it") {
  const PolarGridSpec spec{32, 16, 1.0, 65.0};
  BoxPolar p;
  p.theta = kPi - 0.3 * spec.delta_theta();
  p.r = 1.0 + 5.5 * spec.delta_r();
  p.w = 24.0;
  p.l = 24.0;
  p.h = 2.0;

  const HeatmapTarget target = make_heatmap_target(std::vector<BoxPolar>{p}, spec, 1);
  REQUIRE(target.objects.size() == 1u);
  const HeatmapObject& obj = target.objects[0];
  CHECK(obj.c_theta == 31);
  CHECK(obj.radius_bins >= 2);
  CHECK(target.data.at(0, 31, obj.c_r) == 1.0);
  CHECK(target.data.at(0, 0, obj.c_r) > 0.0);

  // Reference render without wrapping, on a triple-width azimuth strip that
  // is folded back modulo the bin count afterwards.
  const int n = spec.n_theta;
  const int radius = obj.radius_bins;
  const double sigma = (2.0 * radius + 1.0) / 6.0;
  std::vector<double> strip(static_cast<std::size_t>(3 * n) * spec.n_r, 0.0);
  for (int di = -radius; di <= radius; ++di)
    for (int dj = -radius; dj <= radius; ++dj) {
      const int jj = obj.c_r + dj;
      if (jj < 0 || jj >= spec.n_r) continue;
      const int ii = n + obj.c_theta + di;
      const double g = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      double& cell = strip[static_cast<std::size_t>(ii) * spec.n_r + jj];
      cell = std::max(cell, g);
    }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < spec.n_r; ++j) {
      double folded = 0.0;
      for (int m = 0; m < 3; ++m)
        folded = std::max(folded, strip[static_cast<std::size_t>(i + m * n) * spec.n_r + j]);
      CHECK(target.data.at(0, i, j) == doctest::Approx(folded).epsilon(1e-12));
    }
}

TEST_CASE("boxes outside the radial range are skipped and reported") {
  const PolarGridSpec spec{32, 16, 1.0, 65.0};
  BoxPolar inside;
  inside.theta = 0.3;
  inside.r = 23.0;
  inside.w = inside.l = 4.0;
  inside.h = 2.0;

  BoxPolar low = inside;
  low.r = 0.5;
  BoxPolar high = inside;
  high.r = 70.0;

  const HeatmapTarget target =
      make_heatmap_target(std::vector<BoxPolar>{low, inside, high}, spec, 1);
  CHECK(target.objects.size() == 1u);
  REQUIRE(target.skipped.size() == 2u);
  CHECK(target.skipped[0] == 0u);
  CHECK(target.skipped[1] == 2u);
}

TEST_CASE("heatmap rendering validates the class range") {
  const PolarGridSpec spec{32, 16, 1.0, 65.0};
  BoxPolar p;
  p.theta = 0.0;
  p.r = 23.0;
  p.w = p.l = p.h = 1.0;
  p.class_id = 3;
  CHECK_THROWS_AS(make_heatmap_target(std::vector<BoxPolar>{p}, spec, 3), ConfigError);
  p.class_id = -1;
  CHECK_THROWS_AS(make_heatmap_target(std::vector<BoxPolar>{p}, spec, 3), ConfigError);
}

TEST_CASE("heatmap values stay within the unit interval with offsets in [0, 1)") {
  SplitMix64 rng(64);
  const PolarGridSpec spec{32, 16, 1.0, 65.0};
  std::vector<BoxPolar> boxes;
  for (int n = 0; n < 30; ++n) {
    BoxPolar p;
    p.theta = rng.uniform(-kPi + 1e-9, kPi);
    p.r = rng.uniform(1.5, 64.0);
    p.w = rng.uniform(0.5, 10.0);
    p.l = rng.uniform(0.5, 10.0);
    p.h = 1.0;
    p.yaw = rng.uniform(-kPi + 1e-9, kPi);
    p.class_id = static_cast<int>(rng.next_below(3));
    boxes.push_back(p);
  }
  const HeatmapTarget target = make_heatmap_target(boxes, spec, 3);
  for (double v : target.data.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (const HeatmapObject& obj : target.objects) {
    CHECK(obj.o_theta >= 0.0);
    CHECK(obj.o_theta < 1.0);
    CHECK(obj.o_r >= 0.0);
    CHECK(obj.o_r < 1.0);
    CHECK(target.data.at(obj.class_id, obj.c_theta, obj.c_r) == 1.0);
  }
}

TEST_CASE("the footprint radius follows the minimum-overlap rule") {
  SplitMix64 rng(65);
  for (int n = 0; n < 100; ++n) {
    const double a = rng.uniform(1.0, 40.0), b = rng.uniform(1.0, 40.0);
    for (double overlap : {0.1, 0.5, 0.7}) {
      const double got = gaussian_radius(a, b, overlap);
      CHECK(got == doctest::Approx(reference_radius(a, b, overlap)).epsilon(1e-12));
      CHECK(got > 0.0);
    }
  }
}

TEST_CASE("tiny footprints clamp to a one-bin radius with the matching bell shape") {
  const PolarGridSpec spec{32, 16, 1.0, 65.0};
  BoxPolar p;
  p.theta = -kPi + 10.5 * spec.delta_theta();
  p.r = 1.0 + 5.5 * spec.delta_r();
  p.w = 0.1;
  p.l = 0.1;
  p.h = 0.5;

  const HeatmapTarget target = make_heatmap_target(std::vector<BoxPolar>{p}, spec, 1);
  REQUIRE(target.objects.size() == 1u);
  CHECK(target.objects[0].radius_bins == 1);

  // radius 1 means sigma = 0.5, so the four-neighbors sit at exp(-2).
  const double side = std::exp(-2.0);
  CHECK(target.data.at(0, 11, 5) == doctest::Approx(side).epsilon(1e-12));
  CHECK(target.data.at(0, 9, 5) == doctest::Approx(side).epsilon(1e-12));
  CHECK(target.data.at(0, 10, 4) == doctest::Approx(side).epsilon(1e-12));
  CHECK(target.data.at(0, 10, 6) == doctest::Approx(side).epsilon(1e-12));
  CHECK(target.data.at(0, 13, 5) == 0.0);
}

TEST_CASE("the attention gate scales features by one plus the gate value") {
  const FeatureMap f = FeatureMap::from_data(2, 2, 2, {1.0, -2.0, 0.5, 4.0, -0.25, 3.0, 8.0, -1.0});

  FeatureMap zero_logits(1, 2, 2);
  const FeatureMap mid = apply_sae(f, zero_logits);
  for (std::size_t n = 0; n < f.values().size(); ++n)
    CHECK(mid.values()[n] == 1.5 * f.values()[n]);

  FeatureMap low(1, 2, 2);
  for (double& v : low.values()) v = -1e9;
  const FeatureMap off = apply_sae(f, low);
  for (std::size_t n = 0; n < f.values().size(); ++n)
    CHECK(off.values()[n] == doctest::Approx(f.values()[n]).epsilon(1e-6));

  FeatureMap high(1, 2, 2);
  for (double& v : high.values()) v = 1e9;
  const FeatureMap full = apply_sae(f, high);
  for (std::size_t n = 0; n < f.values().size(); ++n)
    CHECK(full.values()[n] == doctest::Approx(2.0 * f.values()[n]).epsilon(1e-6));
}

TEST_CASE("the attention gate preserves sign and bounds the magnification") {
  SplitMix64 rng(66);
  FeatureMap f(3, 5, 4);
  for (double& v : f.values()) v = rng.uniform(-4.0, 4.0);
  FeatureMap logits(1, 5, 4);
  for (double& v : logits.values()) v = rng.uniform(-6.0, 6.0);

  const FeatureMap out = apply_sae(f, logits);
  for (std::size_t n = 0; n < f.values().size(); ++n) {
    const double a = f.values()[n], b = out.values()[n];
    CHECK(a * b >= 0.0);
    CHECK(std::abs(b) >= std::abs(a) - 1e-12);
    CHECK(std::abs(b) <= 2.0 * std::abs(a) + 1e-12);
  }
}

TEST_CASE("the attention gate rejects mismatched shapes") {
  const FeatureMap f(2, 3, 4);
  CHECK_THROWS_AS(apply_sae(f, FeatureMap(2, 3, 4)), ConfigError);
  CHECK_THROWS_AS(apply_sae(f, FeatureMap(1, 4, 3)), ConfigError);
}

TEST_CASE("boxes survive a JSON-lines round trip") {
  SplitMix64 rng(67);
  std::vector<TaggedBox> boxes;
  for (int n = 0; n < 20; ++n) {
    const BoxCart b = random_box(rng);
    boxes.emplace_back(b);
    boxes.emplace_back(encode_polar(b));
  }
  const std::string text = boxes_to_jsonl(boxes);
  const std::vector<TaggedBox> back = boxes_from_jsonl(text);
  REQUIRE(back.size() == boxes.size());
  for (std::size_t n = 0; n < boxes.size(); ++n) {
    REQUIRE(back[n].index() == boxes[n].index());
    if (const BoxCart* b = std::get_if<BoxCart>(&boxes[n])) {
      const BoxCart& got = std::get<BoxCart>(back[n]);
      CHECK(got.x == doctest::Approx(b->x).epsilon(1e-12));
      CHECK(got.y == doctest::Approx(b->y).epsilon(1e-12));
      CHECK(got.yaw == doctest::Approx(b->yaw).epsilon(1e-12));
      CHECK(got.vy == doctest::Approx(b->vy).epsilon(1e-12));
      CHECK(got.class_id == b->class_id);
    } else {
      const BoxPolar& p = std::get<BoxPolar>(boxes[n]);
      const BoxPolar& got = std::get<BoxPolar>(back[n]);
      CHECK(got.theta == doctest::Approx(p.theta).epsilon(1e-12));
      CHECK(got.r == doctest::Approx(p.r).epsilon(1e-12));
      CHECK(got.v_r == doctest::Approx(p.v_r).epsilon(1e-12));
      CHECK(got.class_id == p.class_id);
    }
  }
}

TEST_CASE("box parsing normalizes angles and rejects malformed lines") {
  const std::string spun =
      "{\"tag\":\"cart\",\"x\":1,\"y\":0,\"z\":0,\"w\":1,\"l\":1,\"h\":1,\"yaw\":7.0,"
      "\"vx\":0,\"vy\":0,\"class_id\":0}\n";
  const std::vector<TaggedBox> parsed = boxes_from_jsonl(spun);
  REQUIRE(parsed.size() == 1u);
  CHECK(std::get<BoxCart>(parsed[0]).yaw == doctest::Approx(7.0 - kTwoPi).epsilon(1e-12));

  CHECK(boxes_from_jsonl("").empty());
  CHECK(boxes_from_jsonl("  \n\n").empty());
  CHECK_THROWS_AS(boxes_from_jsonl("not json\n"), ConfigError);
  CHECK_THROWS_AS(boxes_from_jsonl("{\"x\":1}\n"), ConfigError);
  CHECK_THROWS_AS(boxes_from_jsonl("{\"tag\":\"spherical\"}\n"), ConfigError);

  const std::string missing = "{\"tag\":\"cart\",\"x\":1,\"y\":0,\"z\":0,\"w\":1,\"l\":1}\n";
  CHECK_THROWS_AS(boxes_from_jsonl(missing), ConfigError);

  const std::string negative =
      "{\"tag\":\"cart\",\"x\":1,\"y\":0,\"z\":0,\"w\":-1,\"l\":1,\"h\":1,\"yaw\":0,"
      "\"vx\":0,\"vy\":0,\"class_id\":0}\n";
  CHECK_THROWS_AS(boxes_from_jsonl(negative), ConfigError);
}
