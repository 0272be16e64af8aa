#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pbev/lift.hpp"
#include "pbev/polar_grid.hpp"
#include "pbev/types.hpp"

namespace pbev {

// Snap tolerance for warp sample positions, in bin units. Sample positions
// that land this close to the bin-center lattice are treated as exact hits,
// which makes identity and lattice-yaw motions copy values instead of
// blurring them through near-degenerate bilinear weights.
inline constexpr double kWarpSnapEps = 1e-9;

// Planar rigid motion taking current-frame coordinates into the frame of a
// previous timestep.
struct EgoMotion {
  Eigen::Matrix2d rotation = Eigen::Matrix2d::Identity();
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();

  // Throws ConfigError unless rotation is orthonormal with determinant +1
  // (tolerance 1e-9).
  void validate() const;
};

// Relative motion between two absolute planar poses: the transform mapping
// coordinates in `current`'s frame to coordinates in `previous`'s frame.
EgoMotion relative_motion(const Pose2& current, const Pose2& previous);

struct PolarCoord {
  double theta = 0.0;
  double r = 0.0;
};

// Lower-corner coordinates of bin (i, j): theta = -pi + i * delta_theta,
// r = r_min + j * delta_r. Indices outside the grid throw DomainError.
// polar_bin_index() maps the result back to exactly (i, j).
PolarCoord index_to_polar(int i, int j, const PolarGridSpec& spec);

// (r cos theta, r sin theta); r must be non-negative.
Eigen::Vector2d polar_to_cart(double theta, double r);

// Applies the motion: R * p + t.
Eigen::Vector2d ego_compensate(const Eigen::Vector2d& p, const EgoMotion& motion);

// What to do with warp samples whose radius falls outside the grid.
enum class OutOfRangePolicy {
  kZero,   // missing samples contribute zero
  kClamp,  // clamp to the nearest radial bin
};

// Resamples a polar feature map from a previous timestep onto the current
// grid. For each output bin center, the center is moved into the previous
// frame with `motion`, converted back to polar, and sampled from `prev` with
// bilinear interpolation on the bin-center lattice. Azimuth interpolation
// always wraps; radial out-of-range behavior follows `policy`. The result is
// independent of `threads`.
FeatureMap warp_polar_feature(const FeatureMap& prev, const EgoMotion& motion, const PolarGridSpec& spec,
                              OutOfRangePolicy policy = OutOfRangePolicy::kZero, int threads = 1);

// Ring buffer of the most recent BEV maps with the absolute ego pose each
// was computed in. Timestamps must be strictly increasing and every map must
// share one shape; violations throw ConfigError.
class FeatureHistory {
 public:
  struct Entry {
    double timestamp = 0.0;
    FeatureMap map;
    Pose2 pose;
  };

  explicit FeatureHistory(std::size_t capacity = 8);

  void push(double timestamp, FeatureMap map, const Pose2& pose);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }

  // i = 0 is the most recent entry.
  const Entry& from_newest(std::size_t i) const { return entries_[entries_.size() - 1 - i]; }

 private:
  std::size_t capacity_;
  std::deque<Entry> entries_;
};

// Warps every stored map into the frame of `current_pose`, newest first.
// Each map is aligned in a single step using the relative motion between the
// stored absolute pose and `current_pose`, not by chaining per-frame warps.
std::vector<FeatureMap> align_history(const FeatureHistory& history, const Pose2& current_pose,
                                      const PolarGridSpec& spec,
                                      OutOfRangePolicy policy = OutOfRangePolicy::kZero, int threads = 1);

// Per-bin linear map over the channel concatenation [current, newest, ...,
// oldest]: out[o] = sum_i weight[o, i] * concat[i].
struct FusionWeights {
  int out_channels = 0;
  int in_channels = 0;
  std::vector<double> weight;  // (out_channels, in_channels) row-major

  // Passes the current frame through unchanged and ignores history.
  static FusionWeights identity_selector(int channels, int history_frames);
  // Uniform average of the current frame and all history frames.
  static FusionWeights averaging(int channels, int history_frames);
};

// Fuses the current map with already-aligned history maps. All maps must
// share the current map's shape and the weight matrix must match the
// concatenated channel count; violations throw ConfigError.
FeatureMap fuse_history(const FeatureMap& current, std::span<const FeatureMap> aligned_history,
                        const FusionWeights& weights);

}  // namespace pbev
