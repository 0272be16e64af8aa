#include "pbev/temporal.hpp"

#include <cmath>
#include <utility>

#include "pbev/errors.hpp"
#include "pbev/parallel.hpp"

namespace pbev {

void EgoMotion::validate() const {
  const double ortho =
      (rotation.transpose() * rotation - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9) throw ConfigError("ego motion rotation is not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > 1e-9) throw ConfigError("ego motion rotation is not proper");
  if (!std::isfinite(translation(0)) || !std::isfinite(translation(1)))
    throw ConfigError("ego motion translation must be finite");
}

EgoMotion relative_motion(const Pose2& current, const Pose2& previous) {
  EgoMotion m;
  m.rotation = rotation2d(current.yaw - previous.yaw);
  m.translation = rotation2d(-previous.yaw) *
                  Eigen::Vector2d(current.x - previous.x, current.y - previous.y);
  return m;
}

PolarCoord index_to_polar(int i, int j, const PolarGridSpec& spec) {
  if (i < 0 || i >= spec.n_theta || j < 0 || j >= spec.n_r)
    throw DomainError("index_to_polar: bin index outside the grid");
  return {-kPi + i * spec.delta_theta(), spec.r_min + j * spec.delta_r()};
}

Eigen::Vector2d polar_to_cart(double theta, double r) {
  return {r * std::cos(theta), r * std::sin(theta)};
}

Eigen::Vector2d ego_compensate(const Eigen::Vector2d& p, const EgoMotion& motion) {
  return motion.rotation * p + motion.translation;
}

namespace {

double snap_to_lattice(double t) {
  const double n = std::nearbyint(t);
  return std::abs(t - n) < kWarpSnapEps ? n : t;
}

}  // namespace

FeatureMap warp_polar_feature(const FeatureMap& prev, const EgoMotion& motion, const PolarGridSpec& spec,
                              OutOfRangePolicy policy, int threads) {
  spec.validate();
  motion.validate();
  if (prev.rows() != spec.n_theta || prev.cols() != spec.n_r)
    throw ConfigError("warp_polar_feature: map shape does not match the grid");

  const int nt = spec.n_theta, nr = spec.n_r;
  const double dt = spec.delta_theta(), dr = spec.delta_r();
  const std::int64_t cells = static_cast<std::int64_t>(nt) * nr;
  FeatureMap out(prev.channels(), nt, nr);
  const double* src = prev.values().data();
  double* dst = out.values().data();

  parallel_for(cells, threads, [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t cell = begin; cell < end; ++cell) {
      const int i = static_cast<int>(cell / nr);
      const int j = static_cast<int>(cell % nr);
      const double theta_c = -kPi + (i + 0.5) * dt;
      const double r_c = spec.r_min + (j + 0.5) * dr;
      const Eigen::Vector2d moved = ego_compensate(polar_to_cart(theta_c, r_c), motion);
      const CylPoint cyl = cart_to_cyl({moved(0), moved(1), 0.0});

      // Fractional position on the bin-center lattice of the previous map.
      const double ti = snap_to_lattice((cyl.theta + kPi) / dt - 0.5);
      const double tj = snap_to_lattice((cyl.r - spec.r_min) / dr - 0.5);
      const int i0 = static_cast<int>(std::floor(ti));
      const int j0 = static_cast<int>(std::floor(tj));
      const double wi = ti - i0;
      const double wj = tj - j0;

      const int ia = wrap_index(i0, nt);
      const int ib = wrap_index(i0 + 1, nt);
      int ja = j0, jb = j0 + 1;
      bool va = ja >= 0 && ja < nr;
      bool vb = jb >= 0 && jb < nr;
      if (policy == OutOfRangePolicy::kClamp) {
        ja = std::min(std::max(ja, 0), nr - 1);
        jb = std::min(std::max(jb, 0), nr - 1);
        va = vb = true;
      }

      for (int c = 0; c < prev.channels(); ++c) {
        const double* plane = src + static_cast<std::size_t>(c) * cells;
        const double v00 = va ? plane[static_cast<std::size_t>(ia) * nr + ja] : 0.0;
        const double v01 = vb ? plane[static_cast<std::size_t>(ia) * nr + jb] : 0.0;
        const double v10 = va ? plane[static_cast<std::size_t>(ib) * nr + ja] : 0.0;
        const double v11 = vb ? plane[static_cast<std::size_t>(ib) * nr + jb] : 0.0;
        dst[static_cast<std::size_t>(c) * cells + cell] =
            (1.0 - wi) * ((1.0 - wj) * v00 + wj * v01) + wi * ((1.0 - wj) * v10 + wj * v11);
      }
    }
  });
  return out;
}

FeatureHistory::FeatureHistory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("feature history capacity must be positive");
}

void FeatureHistory::push(double timestamp, FeatureMap map, const Pose2& pose) {
  if (!std::isfinite(timestamp)) throw ConfigError("feature history timestamp must be finite");
  if (!entries_.empty()) {
    if (!(timestamp > entries_.back().timestamp))
      throw ConfigError("feature history timestamps must be strictly increasing");
    if (!map.same_shape(entries_.back().map))
      throw ConfigError("feature history maps must share one shape");
  }
  entries_.push_back({timestamp, std::move(map), pose});
  if (entries_.size() > capacity_) entries_.pop_front();
}

std::vector<FeatureMap> align_history(const FeatureHistory& history, const Pose2& current_pose,
                                      const PolarGridSpec& spec, OutOfRangePolicy policy, int threads) {
  std::vector<FeatureMap> aligned;
  aligned.reserve(history.size());
  for (std::size_t i = 0; i < history.size(); ++i) {
    const FeatureHistory::Entry& entry = history.from_newest(i);
    aligned.push_back(
        warp_polar_feature(entry.map, relative_motion(current_pose, entry.pose), spec, policy, threads));
  }
  return aligned;
}

FusionWeights FusionWeights::identity_selector(int channels, int history_frames) {
  FusionWeights w;
  w.out_channels = channels;
  w.in_channels = channels * (history_frames + 1);
  w.weight.assign(static_cast<std::size_t>(w.out_channels) * w.in_channels, 0.0);
  for (int c = 0; c < channels; ++c) w.weight[static_cast<std::size_t>(c) * w.in_channels + c] = 1.0;
  return w;
}

FusionWeights FusionWeights::averaging(int channels, int history_frames) {
  FusionWeights w;
  w.out_channels = channels;
  w.in_channels = channels * (history_frames + 1);
  w.weight.assign(static_cast<std::size_t>(w.out_channels) * w.in_channels, 0.0);
  const double scale = 1.0 / (history_frames + 1);
  for (int t = 0; t <= history_frames; ++t)
    for (int c = 0; c < channels; ++c)
      w.weight[static_cast<std::size_t>(c) * w.in_channels + t * channels + c] = scale;
  return w;
}

FeatureMap fuse_history(const FeatureMap& current, std::span<const FeatureMap> aligned_history,
                        const FusionWeights& weights) {
  for (const FeatureMap& m : aligned_history)
    if (!m.same_shape(current)) throw ConfigError("fuse_history: history map shape mismatch");
  const int c_in = current.channels() * (1 + static_cast<int>(aligned_history.size()));
  if (weights.in_channels != c_in)
    throw ConfigError("fuse_history: weight input width does not match the concatenation");
  if (weights.out_channels <= 0) throw ConfigError("fuse_history: weight output width must be positive");
  if (weights.weight.size() != static_cast<std::size_t>(weights.out_channels) * weights.in_channels)
    throw ConfigError("fuse_history: weight size does not match its shape");
  for (double v : weights.weight)
    if (!std::isfinite(v)) throw ConfigError("fuse_history: weights must be finite");

  const std::int64_t cells = static_cast<std::int64_t>(current.rows()) * current.cols();
  const int c_cur = current.channels();
  FeatureMap out(weights.out_channels, current.rows(), current.cols());
  double* dst = out.values().data();
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    for (int o = 0; o < weights.out_channels; ++o) {
      const double* w = weights.weight.data() + static_cast<std::size_t>(o) * weights.in_channels;
      double acc = 0.0;
      for (int c = 0; c < c_cur; ++c) acc += w[c] * current.values()[static_cast<std::size_t>(c) * cells + cell];
      for (std::size_t t = 0; t < aligned_history.size(); ++t) {
        const double* hist = aligned_history[t].values().data();
        const double* wt = w + c_cur + t * c_cur;
        for (int c = 0; c < c_cur; ++c) acc += wt[c] * hist[static_cast<std::size_t>(c) * cells + cell];
      }
      dst[static_cast<std::size_t>(o) * cells + cell] = acc;
    }
  }
  return out;
}

}  // namespace pbev
