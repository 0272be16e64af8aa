#include "pbev/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <utility>

#include <json.hpp>

#include "pbev/errors.hpp"
#include "pbev/rng.hpp"

namespace pbev {

namespace {

// Stamp contributions below exp(kStampLogFloor) = 1e-18 are dropped; the cut
// is far below every comparison tolerance used downstream, so it only bounds
// the work per blob.
const double kStampLogFloor = std::log(1e-18);
constexpr double kMinStampDepth = 0.1;

// Sub-stream keys for the scene RNG: object geometry and blob amplitudes
// draw from independent forks so neither perturbs the other.
constexpr std::uint64_t kObjectStream = 0;
constexpr std::uint64_t kAmplitudeStream = 1u << 20;

}  // namespace

std::vector<double> SynthSpec::resolved_depth_bins() const {
  return depth_bins.empty() ? default_depth_bins() : depth_bins;
}

void SynthSpec::validate() const {
  if (channels <= 0) throw ConfigError("synthesizer channel count must be positive");
  if (feature_height <= 0 || feature_width <= 0)
    throw ConfigError("synthesizer feature shape must be positive");
  if (!(stride > 0.0)) throw ConfigError("synthesizer stride must be positive");
  if (!(blob_sigma > 0.0) || !(depth_sigma > 0.0))
    throw ConfigError("synthesizer blob and depth sigmas must be positive");
  if (!(floor > 0.0)) throw ConfigError("synthesizer depth floor must be positive");
  // Also validates bin ordering and positivity.
  generate_frustum(feature_height, feature_width, stride, resolved_depth_bins());
}

double camera_azimuth(const CameraModel& cam) {
  // Optical axis in ego coordinates is the third row of the rotation part.
  const double ax = cam.extrinsics(2, 0), ay = cam.extrinsics(2, 1);
  if (std::sqrt(ax * ax + ay * ay) < 1e-9)
    throw DomainError("camera optical axis is vertical; azimuth undefined");
  return std::atan2(ay, ax);
}

namespace {

// Checks even azimuth spacing and returns the signed slot angle: +2pi/n for
// a counter-clockwise camera order, -2pi/n for clockwise.
double rig_slot_angle(std::span<const CameraModel> rig) {
  if (rig.empty()) throw ConfigError("rig is empty");
  const int n = static_cast<int>(rig.size());
  if (n == 1) return kTwoPi;
  std::vector<double> az(rig.size());
  for (std::size_t i = 0; i < rig.size(); ++i) az[i] = camera_azimuth(rig[i]);
  const double slot = kTwoPi / n;
  bool ccw = true, cw = true;
  for (int i = 0; i < n; ++i) {
    const double gap = wrap_angle(az[(i + 1) % n] - az[i]);
    if (std::abs(wrap_angle(gap - slot)) > 1e-6) ccw = false;
    if (std::abs(wrap_angle(gap + slot)) > 1e-6) cw = false;
  }
  if (!ccw && !cw) throw ConfigError("rig azimuths are not evenly spaced");
  return ccw ? slot : -slot;
}

}  // namespace

void SyntheticScene::validate() const {
  if (num_classes <= 0) throw ConfigError("scene needs at least one class");
  synth.validate();
  for (const CameraModel& cam : rig) cam.validate();
  rig_slot_angle(rig);
  if (trajectory.empty()) throw ConfigError("scene trajectory must contain at least one pose");
  for (const Pose2& p : trajectory)
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.yaw))
      throw ConfigError("scene trajectory poses must be finite");
  for (const BoxCart& b : objects) {
    b.validate();
    if (b.class_id < 0 || b.class_id >= num_classes)
      throw ConfigError("scene object class_id outside [0, num_classes)");
  }
}

std::vector<CameraModel> default_rig() {
  std::vector<CameraModel> rig(6);
  for (int k = 0; k < 6; ++k) {
    const double a = k * (kPi / 3.0);
    const Eigen::Vector3d x_c(std::sin(a), -std::cos(a), 0.0);  // image right
    const Eigen::Vector3d y_c(0.0, 0.0, -1.0);                  // image down
    const Eigen::Vector3d z_c(std::cos(a), std::sin(a), 0.0);   // optical axis
    Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
    t.row(0).head<3>() = x_c;
    t.row(1).head<3>() = y_c;
    t.row(2).head<3>() = z_c;
    // Camera sits 1.5 m above the ego origin: translation is -R * position.
    t.col(3).head<3>() = -(t.topLeftCorner<3, 3>() * Eigen::Vector3d(0.0, 0.0, 1.5));
    rig[k].intrinsics = CameraModel::pinhole(500.0, 800.0, 450.0);
    rig[k].extrinsics = t;
    rig[k].width = 1600;
    rig[k].height = 900;
  }
  return rig;
}

SyntheticScene default_scene(std::uint64_t seed, int n_objects) {
  if (n_objects < 0) throw ConfigError("default scene object count must be non-negative");
  SyntheticScene scene;
  scene.seed = seed;
  scene.rig = default_rig();

  const SplitMix64 root(seed);
  scene.objects.reserve(static_cast<std::size_t>(n_objects));
  for (int i = 0; i < n_objects; ++i) {
    SplitMix64 rng = root.fork(kObjectStream + static_cast<std::uint64_t>(i));
    BoxCart b;
    const double radius = rng.uniform(6.0, 45.0);
    const double azimuth = rng.uniform(-kPi, kPi);
    b.x = radius * std::cos(azimuth);
    b.y = radius * std::sin(azimuth);
    b.z = rng.uniform(0.2, 1.2);
    b.w = rng.uniform(1.7, 2.2);
    b.l = rng.uniform(3.8, 5.4);
    b.h = rng.uniform(1.4, 2.0);
    b.yaw = wrap_angle(rng.uniform(-kPi, kPi));
    const double speed = rng.uniform(0.0, 12.0);
    const double heading = rng.uniform(-kPi, kPi);
    b.vx = speed * std::cos(heading);
    b.vy = speed * std::sin(heading);
    b.class_id = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(scene.num_classes)));
    scene.objects.push_back(b);
  }

  scene.trajectory.resize(8);
  for (int t = 0; t < 8; ++t) scene.trajectory[t] = {0.55 * t, 0.08 * t, 0.025 * t};
  return scene;
}

std::vector<BoxCart> boxes_world_to_ego(std::span<const BoxCart> boxes, const Pose2& pose) {
  const Eigen::Matrix2d rot = rotation2d(-pose.yaw);
  std::vector<BoxCart> out;
  out.reserve(boxes.size());
  for (const BoxCart& b : boxes) {
    BoxCart e = b;
    const Eigen::Vector2d pos = rot * Eigen::Vector2d(b.x - pose.x, b.y - pose.y);
    const Eigen::Vector2d vel = rot * Eigen::Vector2d(b.vx, b.vy);
    e.x = pos(0);
    e.y = pos(1);
    e.yaw = wrap_angle(b.yaw - pose.yaw);
    e.vx = vel(0);
    e.vy = vel(1);
    out.push_back(e);
  }
  return out;
}

std::vector<CameraInputs> synthesize_inputs(const SyntheticScene& scene,
                                            std::span<const BoxCart> ego_boxes) {
  scene.validate();
  for (const BoxCart& b : ego_boxes) b.validate();

  const SynthSpec& sp = scene.synth;
  const std::vector<double> bins = sp.resolved_depth_bins();
  const int nd = static_cast<int>(bins.size());
  const int h = sp.feature_height, w = sp.feature_width, ch = sp.channels;
  const std::size_t pixels = static_cast<std::size_t>(h) * w;

  // Per-object, per-channel blob amplitudes; a function of the scene seed
  // and object position in the list only, so every camera and frame sees the
  // same object identity.
  const SplitMix64 root(scene.seed);
  std::vector<double> amps(ego_boxes.size() * static_cast<std::size_t>(ch));
  for (std::size_t o = 0; o < ego_boxes.size(); ++o) {
    SplitMix64 rng = root.fork(kAmplitudeStream + static_cast<std::uint64_t>(o));
    for (int c = 0; c < ch; ++c) amps[o * ch + c] = rng.uniform(0.4, 1.6);
  }

  const double inv2sb = 1.0 / (2.0 * sp.blob_sigma * sp.blob_sigma);
  const double inv2sd = 1.0 / (2.0 * sp.depth_sigma * sp.depth_sigma);

  std::vector<CameraInputs> out;
  out.reserve(scene.rig.size());
  for (const CameraModel& cam : scene.rig) {
    std::vector<double> feat(static_cast<std::size_t>(ch) * pixels, 0.0);
    std::vector<double> depth(static_cast<std::size_t>(nd) * pixels, sp.floor);
    const Eigen::Matrix4d proj = cam.intrinsics * cam.extrinsics;

    for (std::size_t o = 0; o < ego_boxes.size(); ++o) {
      const BoxCart& b = ego_boxes[o];
      const Eigen::Vector4d q = proj * Eigen::Vector4d(b.x, b.y, b.z, 1.0);
      const double d = q(2);
      if (!(d > kMinStampDepth)) continue;
      const double uf = q(0) / d / sp.stride - 0.5;
      const double vf = q(1) / d / sp.stride - 0.5;

      // Fractional depth-bin coordinate of the true camera depth, clamped to
      // the bin range.
      double kf;
      if (d <= bins.front()) {
        kf = 0.0;
      } else if (d >= bins.back()) {
        kf = nd - 1.0;
      } else {
        const auto it = std::upper_bound(bins.begin(), bins.end(), d);
        const int k = static_cast<int>(it - bins.begin()) - 1;
        kf = k + (d - bins[k]) / (bins[k + 1] - bins[k]);
      }

      for (int i = 0; i < h; ++i) {
        const double dv = i - vf;
        for (int j = 0; j < w; ++j) {
          const double du = j - uf;
          const double e = -(du * du + dv * dv) * inv2sb;
          if (e < kStampLogFloor) continue;
          const double g = std::exp(e);
          const std::size_t pix = static_cast<std::size_t>(i) * w + j;
          for (int c = 0; c < ch; ++c) feat[static_cast<std::size_t>(c) * pixels + pix] += amps[o * ch + c] * g;
          for (int k = 0; k < nd; ++k) {
            const double ek = -(k - kf) * (k - kf) * inv2sd;
            if (ek < kStampLogFloor) continue;
            depth[static_cast<std::size_t>(k) * pixels + pix] += g * std::exp(ek);
          }
        }
      }
    }
    out.push_back({FeatureMap::from_data(ch, h, w, std::move(feat)),
                   DepthDistribution(nd, h, w, std::move(depth), DepthNormalization::kNormalize)});
  }
  return out;
}

std::vector<double> default_density_edges() { return {1.0, 11.0, 21.0, 31.0, 41.0, 51.0, 65.0}; }

namespace {

void check_edges(std::span<const double> edges) {
  if (edges.size() < 2) throw ConfigError("density profile needs at least two band edges");
  for (std::size_t k = 0; k < edges.size(); ++k) {
    if (!std::isfinite(edges[k])) throw ConfigError("density band edges must be finite");
    if (k > 0 && !(edges[k] > edges[k - 1]))
      throw ConfigError("density band edges must be strictly increasing");
  }
  if (edges.front() < 0.0) throw ConfigError("density band edges must be non-negative");
}

int band_of(double rc, std::span<const double> edges) {
  if (rc < edges.front() || rc >= edges.back()) return -1;
  for (std::size_t k = 1; k < edges.size(); ++k)
    if (rc < edges[k]) return static_cast<int>(k - 1);
  return -1;
}

// Area of the disk of radius `radius` inside the quadrant rectangle
// [0, x] x [0, y], for x, y >= 0.
double quadrant_area(double x, double y, double radius) {
  x = std::min(x, radius);
  y = std::min(y, radius);
  if (x <= 0.0 || y <= 0.0) return 0.0;
  if (x * x + y * y <= radius * radius) return x * y;
  const double u0 = std::sqrt(radius * radius - y * y);  // circle meets v = y
  const double v0 = std::sqrt(radius * radius - x * x);  // circle meets u = x
  return 0.5 * (u0 * y + x * v0) +
         0.5 * radius * radius * (std::asin(x / radius) - std::asin(u0 / radius));
}

double corner_area(double x, double y, double radius) {
  const double s = (x < 0.0 ? -1.0 : 1.0) * (y < 0.0 ? -1.0 : 1.0);
  return s * quadrant_area(std::abs(x), std::abs(y), radius);
}

}  // namespace

double disk_rect_area(double radius, double x0, double x1, double y0, double y1) {
  if (!(radius > 0.0)) return 0.0;
  return corner_area(x1, y1, radius) - corner_area(x0, y1, radius) - corner_area(x1, y0, radius) +
         corner_area(x0, y0, radius);
}

DensityProfile grid_density(const PolarGridSpec& spec, std::span<const double> edges) {
  spec.validate();
  check_edges(edges);
  DensityProfile profile(edges.size() - 1);
  for (std::size_t b = 0; b < profile.size(); ++b) profile[b] = {edges[b], edges[b + 1], 0, 0.0, 0.0};

  for (int j = 0; j < spec.n_r; ++j) {
    const double rc = spec.r_min + (j + 0.5) * spec.delta_r();
    const int b = band_of(rc, edges);
    if (b >= 0) profile[static_cast<std::size_t>(b)].cells += spec.n_theta;
  }
  for (DensityBand& band : profile) {
    const double lo = std::max(band.d_lo, spec.r_min);
    const double hi = std::min(band.d_hi, spec.r_max);
    band.clipped_area = hi > lo ? kPi * (hi * hi - lo * lo) : 0.0;
    band.density = band.clipped_area > 0.0 ? static_cast<double>(band.cells) / band.clipped_area : 0.0;
  }
  return profile;
}

DensityProfile grid_density(const CartGridSpec& spec, std::span<const double> edges) {
  spec.validate();
  check_edges(edges);
  DensityProfile profile(edges.size() - 1);
  for (std::size_t b = 0; b < profile.size(); ++b) profile[b] = {edges[b], edges[b + 1], 0, 0.0, 0.0};

  for (int i = 0; i < spec.n_x; ++i) {
    const double cx = spec.x_min + (i + 0.5) * spec.delta_x();
    for (int j = 0; j < spec.n_y; ++j) {
      const double cy = spec.y_min + (j + 0.5) * spec.delta_y();
      const int b = band_of(std::sqrt(cx * cx + cy * cy), edges);
      if (b >= 0) ++profile[static_cast<std::size_t>(b)].cells;
    }
  }
  for (DensityBand& band : profile) {
    const double outer = disk_rect_area(band.d_hi, spec.x_min, spec.x_max, spec.y_min, spec.y_max);
    const double inner = disk_rect_area(band.d_lo, spec.x_min, spec.x_max, spec.y_min, spec.y_max);
    band.clipped_area = std::max(outer - inner, 0.0);
    band.density = band.clipped_area > 0.0 ? static_cast<double>(band.cells) / band.clipped_area : 0.0;
  }
  return profile;
}

std::vector<CameraModel> revolve_rig(std::span<const CameraModel> rig, int k_slots) {
  const double slot = rig_slot_angle(rig);  // also validates even spacing
  const int n = static_cast<int>(rig.size());
  if (k_slots < 0 || k_slots > n) throw ConfigError("revolve k_slots must be in [0, n_view]");
  const int k = k_slots % n;
  const double angle = k * (kTwoPi / n);
  const int dir = slot > 0.0 ? 1 : -1;

  std::vector<CameraModel> out(rig.size());
  for (int i = 0; i < n; ++i) {
    // Position i keeps its azimuth slot: it receives the camera that the
    // rotation carries into that slot.
    const CameraModel& src = rig[static_cast<std::size_t>(wrap_index(i - dir * k, n))];
    out[static_cast<std::size_t>(i)] = src;
    out[static_cast<std::size_t>(i)].extrinsics = src.extrinsics * yaw4d(-angle);
  }
  return out;
}

namespace {

double map_max_abs(const FeatureMap& m) {
  double mx = 0.0;
  for (double v : m.values()) mx = std::max(mx, std::abs(v));
  return mx;
}

double max_abs_diff(const FeatureMap& a, const FeatureMap& b) {
  double mx = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i)
    mx = std::max(mx, std::abs(a.values()[i] - b.values()[i]));
  return mx;
}

// Best residual over circular shifts along one axis at a time, and the row
// shift that achieved it (column shifts report -1).
std::pair<double, int> best_axis_shift(const FeatureMap& rotated, const FeatureMap& base) {
  const int rows = base.rows(), cols = base.cols(), ch = base.channels();
  double best = std::numeric_limits<double>::infinity();
  int best_row_shift = -1;

  for (int s = 0; s < rows; ++s) {
    double mx = 0.0;
    for (int c = 0; c < ch && mx < best; ++c)
      for (int i = 0; i < rows && mx < best; ++i) {
        const int src = wrap_index(i - s, rows);
        for (int j = 0; j < cols; ++j)
          mx = std::max(mx, std::abs(rotated.at(c, i, j) - base.at(c, src, j)));
      }
    if (mx < best) {
      best = mx;
      best_row_shift = s;
    }
  }
  for (int s = 1; s < cols; ++s) {
    double mx = 0.0;
    for (int c = 0; c < ch && mx < best; ++c)
      for (int i = 0; i < rows && mx < best; ++i)
        for (int j = 0; j < cols; ++j) {
          const int src = wrap_index(j - s, cols);
          mx = std::max(mx, std::abs(rotated.at(c, i, j) - base.at(c, i, src)));
        }
    if (mx < best) {
      best = mx;
      best_row_shift = -1;
    }
  }
  return {best, best_row_shift};
}

struct SingleShot {
  FeatureMap polar;
  FeatureMap cart;
};

// Lift + splat for frame 0 of a scene against both grids.
SingleShot single_shot(const SyntheticScene& scene, std::span<const BoxCart> ego_boxes,
                       const FrustumLattice& frustum, const PolarGridSpec& polar_spec,
                       const CartGridSpec& cart_spec, int threads) {
  const std::vector<CameraInputs> inputs = synthesize_inputs(scene, ego_boxes);
  std::vector<FrustumFeatures> lifted;
  lifted.reserve(inputs.size());
  for (const CameraInputs& in : inputs) lifted.push_back(lift_features(in.features, in.depth));

  const PoolingIndex polar_index = PoolingIndex::build(frustum, scene.rig, polar_spec, threads);
  const PoolingIndex cart_index = PoolingIndex::build(frustum, scene.rig, cart_spec, threads);
  return {splat_pool(lifted, polar_index, threads), splat_pool(lifted, cart_index, threads)};
}

}  // namespace

double circshift_row_residual(const FeatureMap& rotated, const FeatureMap& base, int k) {
  if (!rotated.same_shape(base)) throw ConfigError("circshift residual: shape mismatch");
  const int rows = base.rows(), cols = base.cols();
  double mx = 0.0;
  for (int c = 0; c < base.channels(); ++c)
    for (int i = 0; i < rows; ++i) {
      const int src = wrap_index(i - k, rows);
      for (int j = 0; j < cols; ++j)
        mx = std::max(mx, std::abs(rotated.at(c, i, j) - base.at(c, src, j)));
    }
  return mx;
}

EquivarianceRow equivariance_report(const SyntheticScene& scene, const PolarGridSpec& polar_spec,
                                    const CartGridSpec& cart_spec, double delta, int threads) {
  scene.validate();
  polar_spec.validate();
  cart_spec.validate();
  if (!std::isfinite(delta)) throw ConfigError("equivariance delta must be finite");

  const SynthSpec& sp = scene.synth;
  const FrustumLattice frustum =
      generate_frustum(sp.feature_height, sp.feature_width, sp.stride, sp.resolved_depth_bins());
  const std::vector<BoxCart> ego = boxes_world_to_ego(scene.objects, scene.trajectory.front());
  const SingleShot base = single_shot(scene, ego, frustum, polar_spec, cart_spec, threads);

  SyntheticScene rotated = scene;
  for (CameraModel& cam : rotated.rig) cam.extrinsics = cam.extrinsics * yaw4d(-delta);
  std::vector<BoxCart> ego_rot;
  ego_rot.reserve(ego.size());
  for (const BoxCart& b : ego) ego_rot.push_back(azimuth_rotate_cart(b, delta));
  const SingleShot rot = single_shot(rotated, ego_rot, frustum, polar_spec, cart_spec, threads);

  EquivarianceRow row;
  row.delta = delta;
  const double bins = delta / polar_spec.delta_theta();
  const long k = std::lround(bins);
  row.on_lattice = std::abs(delta - k * polar_spec.delta_theta()) <= 1e-9;
  row.k_bins = static_cast<int>(k);
  if (row.on_lattice) {
    row.polar_residual = circshift_row_residual(rot.polar, base.polar, static_cast<int>(k));
  } else {
    // Off-lattice angles have no exact shift; compare against a resampled
    // rotation of the base map instead.
    EgoMotion m;
    m.rotation = rotation2d(-delta);
    row.polar_residual = max_abs_diff(rot.polar, warp_polar_feature(base.polar, m, polar_spec,
                                                                    OutOfRangePolicy::kClamp, threads));
  }
  row.cart_residual = best_axis_shift(rot.cart, base.cart).first;
  row.degenerate = (map_max_abs(base.polar) < 1e-12 && map_max_abs(base.cart) < 1e-12) ||
                   circshift_row_residual(base.polar, base.polar, 1) < 1e-9;
  return row;
}

RevolveRow revolve_report(const SyntheticScene& scene, const PolarGridSpec& polar_spec,
                          const CartGridSpec& cart_spec, int k_slots, int threads) {
  scene.validate();
  polar_spec.validate();
  cart_spec.validate();

  const int n = static_cast<int>(scene.rig.size());
  const std::vector<CameraModel> rig_r = revolve_rig(scene.rig, k_slots);
  const int k = k_slots % n;
  const double angle = k * (kTwoPi / n);

  const SynthSpec& sp = scene.synth;
  const FrustumLattice frustum =
      generate_frustum(sp.feature_height, sp.feature_width, sp.stride, sp.resolved_depth_bins());
  const std::vector<BoxCart> ego = boxes_world_to_ego(scene.objects, scene.trajectory.front());
  const SingleShot base = single_shot(scene, ego, frustum, polar_spec, cart_spec, threads);

  SyntheticScene rotated = scene;
  rotated.rig = rig_r;
  std::vector<BoxCart> ego_rot;
  ego_rot.reserve(ego.size());
  for (const BoxCart& b : ego) ego_rot.push_back(azimuth_rotate_cart(b, angle));
  const SingleShot rot = single_shot(rotated, ego_rot, frustum, polar_spec, cart_spec, threads);

  RevolveRow row;
  row.k_slots = k_slots;
  row.n_view = n;
  row.angle = angle;
  row.on_lattice = (static_cast<std::int64_t>(k) * polar_spec.n_theta) % n == 0;
  if (row.on_lattice) {
    const int shift = static_cast<int>((static_cast<std::int64_t>(k) * polar_spec.n_theta / n) %
                                       polar_spec.n_theta);
    row.polar_shift_bins = shift;
    row.polar_residual = circshift_row_residual(rot.polar, base.polar, shift);
  } else {
    const auto [residual, shift] = best_axis_shift(rot.polar, base.polar);
    row.polar_residual = residual;
    row.polar_shift_bins = shift;
  }
  row.cart_residual = best_axis_shift(rot.cart, base.cart).first;
  return row;
}

namespace {

std::vector<double> depth_bins_from_json(const nlohmann::json& j) {
  if (j.is_array()) {
    std::vector<double> bins;
    for (const auto& v : j) {
      if (!v.is_number()) throw ConfigError("scene synth.depth_bins must contain numbers");
      bins.push_back(v.get<double>());
    }
    return bins;
  }
  if (j.is_object()) {
    for (const char* key : {"min", "max", "step"})
      if (!j.contains(key) || !j[key].is_number())
        throw ConfigError("scene synth.depth_bins needs numeric min, max, step");
    const double lo = j["min"].get<double>(), hi = j["max"].get<double>(), step = j["step"].get<double>();
    if (!(step > 0.0) || !(hi > lo)) throw ConfigError("scene synth.depth_bins range is malformed");
    std::vector<double> bins;
    for (double d = lo; d < hi - step * 1e-9; d += step) bins.push_back(d);
    if (bins.empty()) throw ConfigError("scene synth.depth_bins range produced no bins");
    return bins;
  }
  throw ConfigError("scene synth.depth_bins must be an array or {min, max, step}");
}

double num_or(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ConfigError(std::string("scene field \"") + key + "\" must be a number");
  return j[key].get<double>();
}

int int_or(const nlohmann::json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer())
    throw ConfigError(std::string("scene field \"") + key + "\" must be an integer");
  return j[key].get<int>();
}

}  // namespace

SyntheticScene scene_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scene JSON parse failure: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("scene JSON must be an object");

  SyntheticScene scene;
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned() && !doc["seed"].is_number_integer())
      throw ConfigError("scene seed must be an unsigned integer");
    scene.seed = doc["seed"].get<std::uint64_t>();
  }
  scene.num_classes = int_or(doc, "num_classes", scene.num_classes);

  if (doc.contains("synth")) {
    const auto& s = doc["synth"];
    if (!s.is_object()) throw ConfigError("scene synth must be an object");
    scene.synth.channels = int_or(s, "channels", scene.synth.channels);
    scene.synth.feature_height = int_or(s, "feature_height", scene.synth.feature_height);
    scene.synth.feature_width = int_or(s, "feature_width", scene.synth.feature_width);
    scene.synth.stride = num_or(s, "stride", scene.synth.stride);
    scene.synth.blob_sigma = num_or(s, "blob_sigma", scene.synth.blob_sigma);
    scene.synth.depth_sigma = num_or(s, "depth_sigma", scene.synth.depth_sigma);
    scene.synth.floor = num_or(s, "floor", scene.synth.floor);
    if (s.contains("depth_bins")) scene.synth.depth_bins = depth_bins_from_json(s["depth_bins"]);
  }

  if (doc.contains("rig"))
    scene.rig = rig_from_json(doc["rig"].dump());
  else
    scene.rig = default_rig();

  if (doc.contains("objects")) {
    if (!doc["objects"].is_array()) throw ConfigError("scene objects must be an array");
    for (const auto& o : doc["objects"]) {
      if (!o.is_object()) throw ConfigError("scene objects must contain JSON objects");
      BoxCart b;
      b.x = num_or(o, "x", 0.0);
      b.y = num_or(o, "y", 0.0);
      b.z = num_or(o, "z", 0.0);
      b.w = num_or(o, "w", 1.0);
      b.l = num_or(o, "l", 1.0);
      b.h = num_or(o, "h", 1.0);
      b.yaw = wrap_angle(num_or(o, "yaw", 0.0));
      b.vx = num_or(o, "vx", 0.0);
      b.vy = num_or(o, "vy", 0.0);
      b.class_id = int_or(o, "class_id", 0);
      scene.objects.push_back(b);
    }
  }

  if (doc.contains("trajectory")) {
    if (!doc["trajectory"].is_array() || doc["trajectory"].empty())
      throw ConfigError("scene trajectory must be a non-empty array");
    for (const auto& p : doc["trajectory"]) {
      if (!p.is_object()) throw ConfigError("scene trajectory must contain JSON objects");
      scene.trajectory.push_back({num_or(p, "x", 0.0), num_or(p, "y", 0.0), num_or(p, "yaw", 0.0)});
    }
  } else {
    scene.trajectory.push_back({});
  }

  scene.validate();
  return scene;
}

std::string scene_to_json(const SyntheticScene& scene) {
  nlohmann::json doc;
  doc["seed"] = scene.seed;
  doc["num_classes"] = scene.num_classes;
  nlohmann::json synth;
  synth["channels"] = scene.synth.channels;
  synth["feature_height"] = scene.synth.feature_height;
  synth["feature_width"] = scene.synth.feature_width;
  synth["stride"] = scene.synth.stride;
  synth["blob_sigma"] = scene.synth.blob_sigma;
  synth["depth_sigma"] = scene.synth.depth_sigma;
  synth["floor"] = scene.synth.floor;
  synth["depth_bins"] = scene.synth.resolved_depth_bins();
  doc["synth"] = std::move(synth);
  doc["rig"] = nlohmann::json::parse(rig_to_json(scene.rig));
  nlohmann::json objects = nlohmann::json::array();
  for (const BoxCart& b : scene.objects) {
    nlohmann::json o;
    o["x"] = b.x;
    o["y"] = b.y;
    o["z"] = b.z;
    o["w"] = b.w;
    o["l"] = b.l;
    o["h"] = b.h;
    o["yaw"] = b.yaw;
    o["vx"] = b.vx;
    o["vy"] = b.vy;
    o["class_id"] = b.class_id;
    objects.push_back(std::move(o));
  }
  doc["objects"] = std::move(objects);
  nlohmann::json traj = nlohmann::json::array();
  for (const Pose2& p : scene.trajectory) {
    nlohmann::json t;
    t["x"] = p.x;
    t["y"] = p.y;
    t["yaw"] = p.yaw;
    traj.push_back(std::move(t));
  }
  doc["trajectory"] = std::move(traj);
  return doc.dump(2);
}

PipelineResult run_pipeline(const SyntheticScene& scene, const PolarGridSpec& spec,
                            const PipelineOptions& options) {
  scene.validate();
  spec.validate();
  if (options.frames < 1) throw ConfigError("pipeline needs at least one frame");
  if (options.frames > static_cast<int>(scene.trajectory.size()))
    throw ConfigError("pipeline frame count exceeds the trajectory length");
  if (!std::isfinite(options.sae_logit)) throw ConfigError("pipeline SAE logit must be finite");

  const SynthSpec& sp = scene.synth;
  const FrustumLattice frustum =
      generate_frustum(sp.feature_height, sp.feature_width, sp.stride, sp.resolved_depth_bins());

  PoolingIndex index;
  if (!options.index_cache_path.empty() && std::filesystem::exists(options.index_cache_path)) {
    index = PoolingIndex::load(options.index_cache_path, static_cast<int>(scene.rig.size()),
                               frustum.nodes_per_camera(), static_cast<std::uint32_t>(spec.n_theta),
                               static_cast<std::uint32_t>(spec.n_r));
  } else {
    index = PoolingIndex::build(frustum, scene.rig, spec, options.threads);
    if (!options.index_cache_path.empty()) index.save(options.index_cache_path);
  }

  PipelineResult result;
  FeatureHistory history(options.history_capacity);
  std::vector<BoxCart> ego;
  for (int f = 0; f < options.frames; ++f) {
    const Pose2& pose = scene.trajectory[static_cast<std::size_t>(f)];
    ego = boxes_world_to_ego(scene.objects, pose);
    const std::vector<CameraInputs> inputs = synthesize_inputs(scene, ego);
    std::vector<FrustumFeatures> lifted;
    lifted.reserve(inputs.size());
    for (const CameraInputs& in : inputs) lifted.push_back(lift_features(in.features, in.depth));
    FeatureMap raw = splat_pool(lifted, index, options.threads);

    const std::vector<FeatureMap> aligned =
        align_history(history, pose, spec, options.oor_policy, options.threads);
    const int hist = static_cast<int>(aligned.size());
    const FusionWeights weights = options.fusion == FusionMode::kIdentity
                                      ? FusionWeights::identity_selector(raw.channels(), hist)
                                      : FusionWeights::averaging(raw.channels(), hist);
    FeatureMap fused = fuse_history(raw, aligned, weights);
    if (options.use_sae) {
      FeatureMap logits(1, spec.n_theta, spec.n_r);
      for (double& v : logits.values()) v = options.sae_logit;
      fused = apply_sae(fused, logits);
    }

    FrameStats stats;
    stats.frame = f;
    stats.assigned_nodes = index.assigned_count();
    stats.dropped_nodes = index.dropped_count();
    for (double v : raw.values()) stats.raw_mass += v;
    for (double v : fused.values()) stats.fused_mass += v;
    result.frames.push_back(stats);

    history.push(static_cast<double>(f), std::move(raw), pose);
    result.bev = std::move(fused);
  }

  for (const BoxCart& b : ego) {
    try {
      result.targets.push_back(encode_polar(b));
    } catch (const DomainError&) {
      ++result.unencodable_boxes;
    }
  }
  result.heatmap = make_heatmap_target(result.targets, spec, scene.num_classes);
  return result;
}

}  // namespace pbev
