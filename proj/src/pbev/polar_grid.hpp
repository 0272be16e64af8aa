#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pbev/camera.hpp"
#include "pbev/lift.hpp"
#include "pbev/types.hpp"

namespace pbev {

// Polar BEV grid: n_theta azimuth bins covering [-pi, pi) and n_r radial
// bins covering [r_min, r_max), both half-open with lower edges inclusive.
struct PolarGridSpec {
  int n_theta = 256;
  int n_r = 64;
  double r_min = 1.0;
  double r_max = 65.0;

  double delta_theta() const { return kTwoPi / n_theta; }
  double delta_r() const { return (r_max - r_min) / n_r; }
  std::int64_t cell_count() const { return static_cast<std::int64_t>(n_theta) * n_r; }
  void validate() const;
};

// Cartesian BEV grid covering [x_min, x_max) x [y_min, y_max), row index
// along x, column index along y.
struct CartGridSpec {
  int n_x = 128;
  int n_y = 128;
  double x_min = -65.0;
  double x_max = 65.0;
  double y_min = -65.0;
  double y_max = 65.0;

  double delta_x() const { return (x_max - x_min) / n_x; }
  double delta_y() const { return (y_max - y_min) / n_y; }
  std::int64_t cell_count() const { return static_cast<std::int64_t>(n_x) * n_y; }
  void validate() const;
};

// theta = atan2(y, x) with atan2(0, 0) defined as 0; r = sqrt(x^2 + y^2).
CylPoint cart_to_cyl(const CartPoint3& p);

struct GridBin {
  int i = 0;
  int j = 0;
};

// Bin of a polar point, or nullopt when r falls outside [r_min, r_max).
// theta is wrapped first, so every angle maps to a bin in [0, n_theta);
// theta == pi lands in bin 0. Coordinates within kBinSnapEps bins of a cell
// edge are treated as exactly on the edge and belong to the upper cell.
std::optional<GridBin> polar_bin_index(double theta, double r, const PolarGridSpec& spec);

// Bin of a Cartesian point, or nullopt when it falls outside the grid.
// Lower edges inclusive, upper edges exclusive, same edge snapping.
std::optional<GridBin> cart_bin_index(double x, double y, const CartGridSpec& spec);

// Precomputed assignment of frustum nodes to BEV bins for one rig. Nodes are
// numbered camera-major: node = camera * nodes_per_camera + local, with the
// local order fixed by FrustumLattice. The sorted permutation groups nodes
// by bin (ascending bin, then ascending node) and `intervals` gives one
// contiguous [start, start + count) slice of it per occupied bin.
class PoolingIndex {
 public:
  static constexpr std::uint32_t kDropped = 0xffffffffu;

  struct Interval {
    std::uint32_t bin = 0;
    std::uint32_t start = 0;
    std::uint32_t count = 0;
  };

  PoolingIndex() = default;

  // Unprojects every node of every camera and bins the result. `threads`
  // parallelizes the assignment phase only; the result is independent of it.
  static PoolingIndex build(const FrustumLattice& lattice, std::span<const CameraModel> cameras,
                            const PolarGridSpec& spec, int threads = 1);
  static PoolingIndex build(const FrustumLattice& lattice, std::span<const CameraModel> cameras,
                            const CartGridSpec& spec, int threads = 1);

  // Builds the index from an explicit per-node assignment (kDropped for
  // dropped nodes). Throws ConfigError on size or range violations.
  static PoolingIndex from_assignments(std::vector<std::uint32_t> bin_of_node, int camera_count,
                                       std::int64_t nodes_per_camera, std::uint32_t grid_rows,
                                       std::uint32_t grid_cols);

  const std::vector<std::uint32_t>& bin_of_node() const { return bin_of_node_; }
  const std::vector<std::uint32_t>& sorted_nodes() const { return sorted_nodes_; }
  const std::vector<Interval>& intervals() const { return intervals_; }
  std::uint32_t grid_rows() const { return grid_rows_; }
  std::uint32_t grid_cols() const { return grid_cols_; }
  int camera_count() const { return camera_count_; }
  std::int64_t nodes_per_camera() const { return nodes_per_camera_; }
  std::int64_t assigned_count() const { return static_cast<std::int64_t>(sorted_nodes_.size()); }
  std::int64_t dropped_count() const {
    return static_cast<std::int64_t>(bin_of_node_.size()) - assigned_count();
  }

  // Sidecar file: magic "PBIX", version u32, then the assigned nodes as
  // (bin u32, node u32) pairs sorted by (bin, node), all little-endian.
  void save(const std::string& path) const;
  static PoolingIndex load(const std::string& path, int camera_count, std::int64_t nodes_per_camera,
                           std::uint32_t grid_rows, std::uint32_t grid_cols);

 private:
  std::vector<std::uint32_t> bin_of_node_;
  std::vector<std::uint32_t> sorted_nodes_;
  std::vector<Interval> intervals_;
  std::uint32_t grid_rows_ = 0;
  std::uint32_t grid_cols_ = 0;
  int camera_count_ = 0;
  std::int64_t nodes_per_camera_ = 0;
};

// Sum-pools per-camera frustum features into a (channels, rows, cols) BEV
// map. Within each bin, contributions accumulate in sorted-permutation order
// (bin, camera, node); bins are independent, so the result is identical for
// every thread count. Shape mismatches against the index throw ConfigError.
FeatureMap splat_pool(std::span<const FrustumFeatures> features, const PoolingIndex& index,
                      int threads = 1);

// Reference implementation: a single scatter pass over nodes in node order,
// using only the raw per-node assignment. Same contract as splat_pool.
FeatureMap splat_pool_bruteforce(std::span<const FrustumFeatures> features, const PoolingIndex& index);

}  // namespace pbev
