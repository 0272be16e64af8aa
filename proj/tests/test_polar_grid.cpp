#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include <Eigen/Dense>

#include "pbev/camera.hpp"
#include "pbev/errors.hpp"
#include "pbev/lift.hpp"
#include "pbev/mathutil.hpp"
#include "pbev/polar_grid.hpp"
#include "pbev/rng.hpp"

using namespace pbev;

namespace {

// Camera looking along ego +x: image right is -y, image down is -z.
CameraModel forward_camera(double f, double cx, double cy, int width, int height) {
  CameraModel cam;
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  t.row(0) << 0.0, -1.0, 0.0, 0.0;
  t.row(1) << 0.0, 0.0, -1.0, 0.0;
  t.row(2) << 1.0, 0.0, 0.0, 0.0;
  cam.extrinsics = t;
  cam.intrinsics = CameraModel::pinhole(f, cx, cy);
  cam.width = width;
  cam.height = height;
  cam.validate();
  return cam;
}

std::vector<CameraModel> ring_rig(int n, double f, double cx, double cy, int width, int height) {
  std::vector<CameraModel> rig;
  const CameraModel front = forward_camera(f, cx, cy, width, height);
  for (int k = 0; k < n; ++k) {
    CameraModel cam = front;
    cam.extrinsics = front.extrinsics * yaw4d(-k * kTwoPi / n);
    rig.push_back(cam);
  }
  return rig;
}

Eigen::Matrix4d random_rigid(SplitMix64& rng) {
  const Eigen::Vector3d axis(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                             rng.uniform(0.2, 1.0));
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  t.topLeftCorner<3, 3>() = Eigen::AngleAxisd(rng.uniform(-kPi, kPi), axis.normalized())
                                .toRotationMatrix();
  t.col(3).head<3>() =
      Eigen::Vector3d(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 1.0));
  return t;
}

std::vector<FrustumFeatures> seeded_features(int cameras, int channels,
                                             const FrustumLattice& lattice, std::uint64_t seed) {
  std::vector<FrustumFeatures> out;
  SplitMix64 root(seed);
  for (int c = 0; c < cameras; ++c) {
    SplitMix64 rng = root.fork(static_cast<std::uint64_t>(c));
    FrustumFeatures f;
    f.channels = channels;
    f.n_depth = lattice.n_depth;
    f.rows = lattice.height;
    f.cols = lattice.width;
    f.data.resize(static_cast<std::size_t>(channels) * lattice.nodes_per_camera());
    for (double& v : f.data) v = rng.uniform(0.0, 1.0);
    out.push_back(std::move(f));
  }
  return out;
}

double max_abs_diff(const FeatureMap& a, const FeatureMap& b) {
  REQUIRE(a.same_shape(b));
  double worst = 0.0;
  for (std::size_t n = 0; n < a.values().size(); ++n)
    worst = std::max(worst, std::abs(a.values()[n] - b.values()[n]));
  return worst;
}

double row_shift_residual(const FeatureMap& rotated, const FeatureMap& base, int k) {
  double worst = 0.0;
  const int rows = base.rows();
  for (int c = 0; c < base.channels(); ++c)
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < base.cols(); ++j) {
        const int src = ((i - k) % rows + rows) % rows;
        worst = std::max(worst, std::abs(rotated.at(c, i, j) - base.at(c, src, j)));
      }
  return worst;
}

// Best single-axis circular shift, rows and columns tried independently.
double best_axis_shift_residual(const FeatureMap& rotated, const FeatureMap& base) {
  double best = 1e300;
  const int rows = base.rows(), cols = base.cols();
  for (int k = 0; k < rows; ++k) best = std::min(best, row_shift_residual(rotated, base, k));
  for (int k = 1; k < cols; ++k) {
    double worst = 0.0;
    for (int c = 0; c < base.channels(); ++c)
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
          const int src = ((j - k) % cols + cols) % cols;
          worst = std::max(worst, std::abs(rotated.at(c, i, j) - base.at(c, i, src)));
        }
    best = std::min(best, worst);
  }
  return best;
}

}  // namespace

TEST_CASE("cylindrical conversion on the axes and in the third quadrant") {
  CylPoint p = cart_to_cyl({1.0, 0.0, 5.0});
  CHECK(p.theta == 0.0);
  CHECK(p.r == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.z == 5.0);

  p = cart_to_cyl({0.0, 2.0, -1.0});
  CHECK(p.theta == doctest::Approx(kPi / 2.0).epsilon(1e-12));
  CHECK(p.r == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(p.z == -1.0);

  p = cart_to_cyl({-1.0, -1.0, 0.0});
  CHECK(p.theta == doctest::Approx(-3.0 * kPi / 4.0).epsilon(1e-12));
  CHECK(p.r == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

  // The origin is given a definite azimuth instead of a NaN.
  p = cart_to_cyl({0.0, 0.0, 3.0});
  CHECK(p.theta == 0.0);
  CHECK(p.r == 0.0);
}

TEST_CASE("polar bin indexing floors the shifted azimuth and radius") {
  const PolarGridSpec spec{4, 4, 0.0, 4.0};
  const auto bin = polar_bin_index(0.0, 0.5, spec);
  REQUIRE(bin.has_value());
  CHECK(bin->i == 2);
  CHECK(bin->j == 0);

  const auto wrapped = polar_bin_index(kPi, 1.5, spec);
  REQUIRE(wrapped.has_value());
  CHECK(wrapped->i == 0);
  CHECK(wrapped->j == 1);

  const PolarGridSpec offset{4, 4, 1.0, 5.0};
  CHECK_FALSE(polar_bin_index(0.0, 0.5, offset).has_value());
  CHECK_FALSE(polar_bin_index(0.0, 5.0, offset).has_value());
  CHECK(polar_bin_index(0.0, 1.0, offset).has_value());
}

TEST_CASE("azimuth indexing is seam-safe at the default resolution") {
  const PolarGridSpec spec{};
  CHECK(spec.n_theta == 256);
  CHECK(spec.n_r == 64);
  CHECK(spec.r_min == 1.0);
  CHECK(spec.r_max == 65.0);

  const auto hi = polar_bin_index(kPi - 1e-12, 5.0, spec);
  REQUIRE(hi.has_value());
  CHECK(hi->i == 255);

  const auto lo = polar_bin_index(-kPi, 5.0, spec);
  REQUIRE(lo.has_value());
  CHECK(lo->i == 0);

  const auto seam = polar_bin_index(kPi, 5.0, spec);
  REQUIRE(seam.has_value());
  CHECK(seam->i == 0);

  for (int s = 0; s <= 1000; ++s) {
    const double theta = -kPi + s * (kTwoPi / 1000.0);
    const auto bin = polar_bin_index(std::min(theta, kPi), 5.0, spec);
    REQUIRE(bin.has_value());
    CHECK(bin->i >= 0);
    CHECK(bin->i < 256);
  }
}

TEST_CASE("cartesian bin indexing uses half-open cells") {
  const CartGridSpec spec{4, 4, -2.0, 2.0, -2.0, 2.0};
  const auto mid = cart_bin_index(0.1, 0.1, spec);
  REQUIRE(mid.has_value());
  CHECK(mid->i == 2);
  CHECK(mid->j == 2);

  const auto edge = cart_bin_index(-2.0, 0.0, spec);
  REQUIRE(edge.has_value());
  CHECK(edge->i == 0);
  CHECK(edge->j == 2);

  CHECK_FALSE(cart_bin_index(2.0, 0.0, spec).has_value());
  CHECK_FALSE(cart_bin_index(0.0, -2.5, spec).has_value());
}

TEST_CASE("grid specs validate their fields") {
  CHECK_THROWS_AS((PolarGridSpec{0, 64, 1.0, 65.0}.validate()), ConfigError);
  CHECK_THROWS_AS((PolarGridSpec{256, 0, 1.0, 65.0}.validate()), ConfigError);
  CHECK_THROWS_AS((PolarGridSpec{256, 64, -1.0, 65.0}.validate()), ConfigError);
  CHECK_THROWS_AS((PolarGridSpec{256, 64, 65.0, 65.0}.validate()), ConfigError);
  CHECK_THROWS_AS((CartGridSpec{4, 4, 2.0, -2.0, -2.0, 2.0}.validate()), ConfigError);
  CHECK_THROWS_AS((CartGridSpec{0, 4, -2.0, 2.0, -2.0, 2.0}.validate()), ConfigError);

  const PolarGridSpec spec{};
  CHECK(spec.delta_theta() == doctest::Approx(kTwoPi / 256.0).epsilon(1e-15));
  CHECK(spec.delta_r() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("a single frustum node lands in exactly one interval at the expected bin") {
  const CameraModel cam = forward_camera(1.0, 0.5, 0.5, 2, 2);
  const FrustumLattice lattice = generate_frustum(1, 1, 1.0, std::vector<double>{8.0});
  const PolarGridSpec spec{};
  const PoolingIndex index = PoolingIndex::build(lattice, std::vector<CameraModel>{cam}, spec);

  // Pixel (0.5, 0.5) is the principal point, so the node unprojects to
  // (8, 0, 0): azimuth 0 (bin 128 of 256), radius 8 (bin 7 over [1, 65)).
  CHECK(index.assigned_count() == 1);
  CHECK(index.dropped_count() == 0);
  REQUIRE(index.intervals().size() == 1u);
  CHECK(index.intervals()[0].bin == 128u * 64u + 7u);
  CHECK(index.intervals()[0].start == 0u);
  CHECK(index.intervals()[0].count == 1u);
  CHECK(index.sorted_nodes()[0] == 0u);
  CHECK(index.bin_of_node()[0] == 128u * 64u + 7u);
}

TEST_CASE("duplicated cameras double every interval") {
  const CameraModel cam = forward_camera(40.0, 40.0, 16.0, 80, 32);
  const std::vector<CameraModel> rig{cam, cam};
  const FrustumLattice lattice =
      generate_frustum(2, 5, 16.0, std::vector<double>{2.0, 5.0, 9.0, 30.0});
  const PolarGridSpec spec{};
  const PoolingIndex index = PoolingIndex::build(lattice, rig, spec);

  CHECK(index.assigned_count() + index.dropped_count() == 2 * lattice.nodes_per_camera());
  for (const PoolingIndex::Interval& iv : index.intervals()) CHECK(iv.count % 2 == 0);
}

TEST_CASE("a six-camera ring conserves every lattice node") {
  const std::vector<CameraModel> rig = ring_rig(6, 500.0, 88.0, 32.0, 176, 64);
  const FrustumLattice lattice = generate_frustum(4, 11, 16.0, default_depth_bins());
  const PolarGridSpec spec{};
  const PoolingIndex index = PoolingIndex::build(lattice, rig, spec);

  CHECK(index.assigned_count() + index.dropped_count() == 6 * lattice.nodes_per_camera());
  CHECK(index.assigned_count() > 0);

  std::int64_t interval_total = 0;
  std::uint32_t prev_bin = 0;
  bool first = true;
  for (const PoolingIndex::Interval& iv : index.intervals()) {
    CHECK(iv.bin < 256u * 64u);
    if (!first) CHECK(iv.bin > prev_bin);
    prev_bin = iv.bin;
    first = false;
    interval_total += iv.count;
  }
  CHECK(interval_total == index.assigned_count());
  for (std::uint32_t bin : index.bin_of_node())
    CHECK((bin == PoolingIndex::kDropped || bin < 256u * 64u));

  // The assignment phase may be parallelized, never the outcome.
  const PoolingIndex threaded = PoolingIndex::build(lattice, rig, spec, 3);
  CHECK(threaded.bin_of_node() == index.bin_of_node());
  CHECK(threaded.sorted_nodes() == index.sorted_nodes());
}

TEST_CASE("sum pooling adds co-binned nodes and leaves empty bins at zero") {
  std::vector<std::uint32_t> assignment{3u, 3u};
  const PoolingIndex index = PoolingIndex::from_assignments(std::move(assignment), 1, 2, 2, 2);

  FrustumFeatures feats;
  feats.channels = 1;
  feats.n_depth = 2;
  feats.rows = 1;
  feats.cols = 1;
  feats.data = {1.0, 2.0};
  const FeatureMap map = splat_pool(std::vector<FrustumFeatures>{feats}, index);
  CHECK(map.at(0, 1, 1) == 3.0);
  CHECK(map.at(0, 0, 0) == 0.0);
  CHECK(map.at(0, 0, 1) == 0.0);
  CHECK(map.at(0, 1, 0) == 0.0);
}

TEST_CASE("all-zero frustum features pool to an all-zero map") {
  const std::vector<CameraModel> rig = ring_rig(3, 40.0, 40.0, 16.0, 80, 32);
  const FrustumLattice lattice = generate_frustum(2, 5, 16.0, std::vector<double>{2.0, 9.0, 30.0});
  const PolarGridSpec spec{};
  const PoolingIndex index = PoolingIndex::build(lattice, rig, spec);

  std::vector<FrustumFeatures> feats = seeded_features(3, 2, lattice, 5);
  for (FrustumFeatures& f : feats) std::fill(f.data.begin(), f.data.end(), 0.0);
  const FeatureMap map = splat_pool(feats, index);
  for (double v : map.values()) CHECK(v == 0.0);
}

TEST_CASE("the indexed pooling path matches the naive scatter on random instances") {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const int cams = 1 + static_cast<int>(rng.next_below(3));
    std::vector<CameraModel> rig;
    for (int c = 0; c < cams; ++c) {
      CameraModel cam;
      cam.extrinsics = random_rigid(rng);
      cam.intrinsics = CameraModel::pinhole(rng.uniform(20.0, 120.0), 40.0, 16.0);
      cam.width = 80;
      cam.height = 32;
      rig.push_back(cam);
    }

    const int h = 1 + static_cast<int>(rng.next_below(4));
    const int w = 1 + static_cast<int>(rng.next_below(4));
    const int n_depth = 2 + static_cast<int>(rng.next_below(7));
    std::vector<double> bins;
    double d = rng.uniform(0.5, 3.0);
    for (int k = 0; k < n_depth; ++k) {
      bins.push_back(d);
      d += rng.uniform(0.5, 8.0);
    }
    const FrustumLattice lattice = generate_frustum(h, w, 8.0 * (1 + rng.next_below(3)), bins);
    const std::vector<FrustumFeatures> feats = seeded_features(cams, 2, lattice, rng.next_u64());

    PoolingIndex index;
    if (trial % 2 == 0) {
      const PolarGridSpec spec{8 + static_cast<int>(rng.next_below(25)),
                               4 + static_cast<int>(rng.next_below(13)), 1.0, 65.0};
      index = PoolingIndex::build(lattice, rig, spec);
    } else {
      const CartGridSpec spec{8 + static_cast<int>(rng.next_below(25)),
                              4 + static_cast<int>(rng.next_below(13)), -65.0, 65.0, -65.0, 65.0};
      index = PoolingIndex::build(lattice, rig, spec);
    }

    const FeatureMap fast = splat_pool(feats, index);
    const FeatureMap brute = splat_pool_bruteforce(feats, index);
    CHECK(max_abs_diff(fast, brute) <= 1e-5);
    CHECK(max_abs_diff(fast, splat_pool(feats, index, 3)) == 0.0);

    // Pooling moves mass, never creates or destroys it.
    for (int c = 0; c < 2; ++c) {
      double map_mass = 0.0;
      for (int i = 0; i < fast.rows(); ++i)
        for (int j = 0; j < fast.cols(); ++j) map_mass += fast.at(c, i, j);
      double node_mass = 0.0;
      for (int cam = 0; cam < cams; ++cam)
        for (std::int64_t n = 0; n < lattice.nodes_per_camera(); ++n) {
          const std::size_t global = static_cast<std::size_t>(cam) * lattice.nodes_per_camera() + n;
          if (index.bin_of_node()[global] != PoolingIndex::kDropped)
            node_mass += feats[cam].value(c, n);
        }
      CHECK(map_mass == doctest::Approx(node_mass).epsilon(1e-9));
    }

    CHECK(index.assigned_count() + index.dropped_count() ==
          static_cast<std::int64_t>(cams) * lattice.nodes_per_camera());
  }
}

TEST_CASE("rotating the rig by whole bins circularly shifts the polar map but not the cartesian one") {
  const std::vector<CameraModel> rig = ring_rig(6, 50.0, 80.0, 32.0, 160, 64);
  const FrustumLattice lattice =
      generate_frustum(2, 5, 32.0, std::vector<double>{3.0, 7.0, 12.0, 25.0, 40.0});
  const PolarGridSpec polar{};
  const CartGridSpec cart{};
  const std::vector<FrustumFeatures> feats = seeded_features(6, 2, lattice, 99);

  const int k = 16;
  std::vector<CameraModel> rotated = rig;
  for (CameraModel& cam : rotated) cam.extrinsics = cam.extrinsics * yaw4d(-k * polar.delta_theta());

  const FeatureMap polar_base = splat_pool(feats, PoolingIndex::build(lattice, rig, polar));
  const FeatureMap polar_rot = splat_pool(feats, PoolingIndex::build(lattice, rotated, polar));
  CHECK(row_shift_residual(polar_rot, polar_base, k) <= 1e-5);

  const FeatureMap cart_base = splat_pool(feats, PoolingIndex::build(lattice, rig, cart));
  const FeatureMap cart_rot = splat_pool(feats, PoolingIndex::build(lattice, rotated, cart));
  CHECK(best_axis_shift_residual(cart_rot, cart_base) > 1e-3);
}

TEST_CASE("pooling indices survive a sidecar round trip") {
  const std::vector<CameraModel> rig = ring_rig(3, 40.0, 40.0, 16.0, 80, 32);
  const FrustumLattice lattice = generate_frustum(2, 5, 16.0, std::vector<double>{2.0, 9.0, 30.0});
  const PolarGridSpec spec{};
  const PoolingIndex index = PoolingIndex::build(lattice, rig, spec);

  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "pbev_test_index.pbix";
  index.save(path.string());
  const PoolingIndex loaded = PoolingIndex::load(path.string(), 3, lattice.nodes_per_camera(),
                                                 spec.n_theta, spec.n_r);
  CHECK(loaded.bin_of_node() == index.bin_of_node());
  CHECK(loaded.sorted_nodes() == index.sorted_nodes());
  CHECK(loaded.assigned_count() == index.assigned_count());

  const std::vector<FrustumFeatures> feats = seeded_features(3, 2, lattice, 7);
  CHECK(max_abs_diff(splat_pool(feats, index), splat_pool(feats, loaded)) == 0.0);

  // A node id that exceeds the declared lattice size cannot be honored.
  CHECK_THROWS_AS(PoolingIndex::load(path.string(), 1, 1, spec.n_theta, spec.n_r), ConfigError);

  std::filesystem::remove(path);
}

TEST_CASE("sidecar loading rejects corrupt files") {
  const std::filesystem::path dir = std::filesystem::temp_directory_path();

  const std::filesystem::path bad_magic = dir / "pbev_test_bad_magic.pbix";
  {
    std::ofstream out(bad_magic, std::ios::binary);
    out << "XXXXgarbagegarbage";
  }
  CHECK_THROWS_AS(PoolingIndex::load(bad_magic.string(), 1, 4, 2, 2), ConfigError);
  std::filesystem::remove(bad_magic);

  const std::filesystem::path truncated = dir / "pbev_test_truncated.pbix";
  {
    std::ofstream out(truncated, std::ios::binary);
    out << "PBIX";
    const char half[3] = {1, 0, 0};
    out.write(half, sizeof(half));
  }
  CHECK_THROWS_AS(PoolingIndex::load(truncated.string(), 1, 4, 2, 2), ConfigError);
  std::filesystem::remove(truncated);

  CHECK_THROWS_AS(PoolingIndex::load((dir / "pbev_no_such_file.pbix").string(), 1, 4, 2, 2),
                  ConfigError);
}

TEST_CASE("explicit assignments are validated") {
  CHECK_THROWS_AS(PoolingIndex::from_assignments({0u, 1u, 2u}, 1, 4, 2, 2), ConfigError);
  CHECK_THROWS_AS(PoolingIndex::from_assignments({0u, 4u}, 1, 2, 2, 2), ConfigError);
  CHECK_NOTHROW(PoolingIndex::from_assignments({0u, PoolingIndex::kDropped}, 1, 2, 2, 2));
}

TEST_CASE("pooling rejects features whose shape disagrees with the index") {
  const std::vector<CameraModel> rig = ring_rig(2, 40.0, 40.0, 16.0, 80, 32);
  const FrustumLattice lattice = generate_frustum(2, 5, 16.0, std::vector<double>{2.0, 9.0});
  const PolarGridSpec spec{};
  const PoolingIndex index = PoolingIndex::build(lattice, rig, spec);

  std::vector<FrustumFeatures> feats = seeded_features(2, 2, lattice, 3);
  feats.pop_back();
  CHECK_THROWS_AS(splat_pool(feats, index), ConfigError);

  feats = seeded_features(2, 2, lattice, 3);
  feats[1].cols += 1;
  feats[1].data.resize(static_cast<std::size_t>(2) * feats[1].nodes_per_camera());
  CHECK_THROWS_AS(splat_pool(feats, index), ConfigError);
}
