#include "pbev/polar_grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/Dense>

#include "pbev/errors.hpp"
#include "pbev/parallel.hpp"

namespace pbev {

void PolarGridSpec::validate() const {
  if (n_theta <= 0 || n_r <= 0) throw ConfigError("polar grid bin counts must be positive");
  if (!std::isfinite(r_min) || !std::isfinite(r_max)) throw ConfigError("polar grid radii must be finite");
  if (!(r_min >= 0.0)) throw ConfigError("polar grid r_min must be non-negative");
  if (!(r_max > r_min)) throw ConfigError("polar grid requires r_max > r_min");
}

void CartGridSpec::validate() const {
  if (n_x <= 0 || n_y <= 0) throw ConfigError("cartesian grid bin counts must be positive");
  if (!std::isfinite(x_min) || !std::isfinite(x_max) || !std::isfinite(y_min) || !std::isfinite(y_max))
    throw ConfigError("cartesian grid bounds must be finite");
  if (!(x_max > x_min) || !(y_max > y_min)) throw ConfigError("cartesian grid bounds must be ordered");
}

CylPoint cart_to_cyl(const CartPoint3& p) {
  const double theta = (p.x == 0.0 && p.y == 0.0) ? 0.0 : std::atan2(p.y, p.x);
  return {theta, std::sqrt(p.x * p.x + p.y * p.y), p.z};
}

std::optional<GridBin> polar_bin_index(double theta, double r, const PolarGridSpec& spec) {
  const std::int64_t j = snapped_floor((r - spec.r_min) / spec.delta_r());
  if (j < 0 || j >= spec.n_r) return std::nullopt;
  std::int64_t i = snapped_floor((wrap_angle(theta) + kPi) / spec.delta_theta());
  if (i >= spec.n_theta) i -= spec.n_theta;  // theta == pi aliases to the -pi edge
  return GridBin{static_cast<int>(i), static_cast<int>(j)};
}

std::optional<GridBin> cart_bin_index(double x, double y, const CartGridSpec& spec) {
  const std::int64_t i = snapped_floor((x - spec.x_min) / spec.delta_x());
  if (i < 0 || i >= spec.n_x) return std::nullopt;
  const std::int64_t j = snapped_floor((y - spec.y_min) / spec.delta_y());
  if (j < 0 || j >= spec.n_y) return std::nullopt;
  return GridBin{static_cast<int>(i), static_cast<int>(j)};
}

namespace {

// Shared assignment pass over all nodes of all cameras. bin_fn maps an
// ego-frame point to a flat bin id or kDropped.
template <typename BinFn>
PoolingIndex build_index(const FrustumLattice& lattice, std::span<const CameraModel> cameras,
                         std::uint32_t rows, std::uint32_t cols, int threads, BinFn&& bin_fn) {
  if (cameras.empty()) throw ConfigError("pooling index requires at least one camera");
  if (lattice.nodes_per_camera() <= 0) throw ConfigError("pooling index requires a non-empty frustum");
  for (const CameraModel& cam : cameras) cam.validate();

  const std::int64_t npc = lattice.nodes_per_camera();
  const std::int64_t total = npc * static_cast<std::int64_t>(cameras.size());
  if (total >= static_cast<std::int64_t>(PoolingIndex::kDropped))
    throw ConfigError("pooling index node count exceeds the 32-bit id space");

  std::vector<Eigen::Matrix4d> unproject(cameras.size());
  for (std::size_t c = 0; c < cameras.size(); ++c) unproject[c] = unprojection_matrix(cameras[c]);

  std::vector<std::uint32_t> bins(static_cast<std::size_t>(total));
  const double* pu = lattice.points.data();
  const double* pv = pu + npc;
  const double* pd = pv + npc;
  parallel_for(total, threads, [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t g = begin; g < end; ++g) {
      const std::int64_t cam = g / npc;
      const std::int64_t local = g % npc;
      const double d = pd[local];
      const Eigen::Vector4d img(pu[local] * d, pv[local] * d, d, 1.0);
      Eigen::Vector4d ego = unproject[static_cast<std::size_t>(cam)] * img;
      ego /= ego(3);
      bins[static_cast<std::size_t>(g)] = bin_fn(ego(0), ego(1));
    }
  });

  return PoolingIndex::from_assignments(std::move(bins), static_cast<int>(cameras.size()), npc, rows,
                                        cols);
}

}  //  namespace

PoolingIndex PoolingIndex::build(const FrustumLattice& lattice, std::span<const CameraModel> cameras,
                                 const PolarGridSpec& spec, int threads) {
  spec.validate();
  const std::uint32_t cols = static_cast<std::uint32_t>(spec.n_r);
  return build_index(lattice, cameras, static_cast<std::uint32_t>(spec.n_theta), cols, threads,
                     [&spec, cols](double x, double y) -> std::uint32_t {
                       const CylPoint cyl = cart_to_cyl({x, y, 0.0});
                       const auto bin = polar_bin_index(cyl.theta, cyl.r, spec);
                       if (!bin) return kDropped;
                       return static_cast<std::uint32_t>(bin->i) * cols + static_cast<std::uint32_t>(bin->j);
                     });
}

PoolingIndex PoolingIndex::build(const FrustumLattice& lattice, std::span<const CameraModel> cameras,
                                 const CartGridSpec& spec, int threads) {
  spec.validate();
  const std::uint32_t cols = static_cast<std::uint32_t>(spec.n_y);
  return build_index(lattice, cameras, static_cast<std::uint32_t>(spec.n_x), cols, threads,
                     [&spec, cols](double x, double y) -> std::uint32_t {
                       const auto bin = cart_bin_index(x, y, spec);
                       if (!bin) return kDropped;
                       return static_cast<std::uint32_t>(bin->i) * cols + static_cast<std::uint32_t>(bin->j);
                     });
}

PoolingIndex PoolingIndex::from_assignments(std::vector<std::uint32_t> bin_of_node, int camera_count,
                                            std::int64_t nodes_per_camera, std::uint32_t grid_rows,
                                            std::uint32_t grid_cols) {
  if (camera_count <= 0 || nodes_per_camera <= 0)
    throw ConfigError("pooling index camera/node counts must be positive");
  if (grid_rows == 0 || grid_cols == 0) throw ConfigError("pooling index grid shape must be positive");
  const std::int64_t total = static_cast<std::int64_t>(camera_count) * nodes_per_camera;
  if (total >= static_cast<std::int64_t>(kDropped))
    throw ConfigError("pooling index node count exceeds the 32-bit id space");
  if (bin_of_node.size() != static_cast<std::size_t>(total))
    throw ConfigError("pooling index assignment size does not match camera and node counts");
  const std::uint64_t cells = static_cast<std::uint64_t>(grid_rows) * grid_cols;

  // Pack (bin, node) into one key so a plain sort yields the (bin, camera,
  // node) order; node ids are unique, making the order total.
  std::vector<std::uint64_t> keys;
  keys.reserve(bin_of_node.size());
  for (std::size_t n = 0; n < bin_of_node.size(); ++n) {
    const std::uint32_t b = bin_of_node[n];
    if (b == kDropped) continue;
    if (b >= cells) throw ConfigError("pooling index bin id outside the grid");
    keys.push_back((static_cast<std::uint64_t>(b) << 32) | n);
  }
  std::sort(keys.begin(), keys.end());

  PoolingIndex index;
  index.bin_of_node_ = std::move(bin_of_node);
  index.grid_rows_ = grid_rows;
  index.grid_cols_ = grid_cols;
  index.camera_count_ = camera_count;
  index.nodes_per_camera_ = nodes_per_camera;
  index.sorted_nodes_.reserve(keys.size());
  for (std::size_t s = 0; s < keys.size(); ++s) {
    const std::uint32_t bin = static_cast<std::uint32_t>(keys[s] >> 32);
    index.sorted_nodes_.push_back(static_cast<std::uint32_t>(keys[s] & 0xffffffffu));
    if (index.intervals_.empty() || index.intervals_.back().bin != bin)
      index.intervals_.push_back({bin, static_cast<std::uint32_t>(s), 0});
    ++index.intervals_.back().count;
  }
  return index;
}

namespace {

void check_features(std::span<const FrustumFeatures> features, const PoolingIndex& index) {
  if (static_cast<int>(features.size()) != index.camera_count())
    throw ConfigError("splat_pool: feature count does not match the index camera count");
  for (const FrustumFeatures& f : features) {
    if (f.channels <= 0 || f.channels != features[0].channels)
      throw ConfigError("splat_pool: cameras disagree on channel count");
    if (f.nodes_per_camera() != index.nodes_per_camera())
      throw ConfigError("splat_pool: feature node count does not match the index");
    if (f.data.size() != static_cast<std::size_t>(f.channels) * f.nodes_per_camera())
      throw ConfigError("splat_pool: feature data size does not match its shape");
  }
}

}  // namespace

FeatureMap splat_pool(std::span<const FrustumFeatures> features, const PoolingIndex& index, int threads) {
  check_features(features, index);
  const int channels = features[0].channels;
  FeatureMap out(channels, static_cast<int>(index.grid_rows()), static_cast<int>(index.grid_cols()));
  const std::int64_t cells = out.size() / channels;
  const std::int64_t npc = index.nodes_per_camera();
  double* data = out.values().data();

  const auto& intervals = index.intervals();
  const auto& sorted = index.sorted_nodes();
  parallel_for(static_cast<std::int64_t>(intervals.size()), threads,
               [&](std::int64_t begin, std::int64_t end) {
                 for (std::int64_t t = begin; t < end; ++t) {
                   const PoolingIndex::Interval iv = intervals[static_cast<std::size_t>(t)];
                   for (std::uint32_t s = iv.start; s < iv.start + iv.count; ++s) {
                     const std::uint32_t node = sorted[s];
                     const std::int64_t cam = node / npc;
                     const std::int64_t local = node % npc;
                     const double* src = features[static_cast<std::size_t>(cam)].data.data() + local;
                     for (int c = 0; c < channels; ++c)
                       data[c * cells + iv.bin] += src[static_cast<std::size_t>(c) * npc];
                   }
                 }
               });
  return out;
}

FeatureMap splat_pool_bruteforce(std::span<const FrustumFeatures> features, const PoolingIndex& index) {
  check_features(features, index);
  const int channels = features[0].channels;
  FeatureMap out(channels, static_cast<int>(index.grid_rows()), static_cast<int>(index.grid_cols()));
  const std::int64_t cells = out.size() / channels;
  const std::int64_t npc = index.nodes_per_camera();
  double* data = out.values().data();

  const auto& bins = index.bin_of_node();
  for (std::size_t g = 0; g < bins.size(); ++g) {
    const std::uint32_t bin = bins[g];
    if (bin == PoolingIndex::kDropped) continue;
    const std::int64_t cam = static_cast<std::int64_t>(g) / npc;
    const std::int64_t local = static_cast<std::int64_t>(g) % npc;
    const double* src = features[static_cast<std::size_t>(cam)].data.data() + local;
    for (int c = 0; c < channels; ++c) data[c * cells + bin] += src[static_cast<std::size_t>(c) * npc];
  }
  return out;
}

namespace {

void put_u32_le(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

constexpr std::uint32_t kPbixVersion = 1;

}  // namespace

void PoolingIndex::save(const std::string& path) const {
  std::string buf;
  buf.reserve(8 + sorted_nodes_.size() * 8);
  buf += "PBIX";
  put_u32_le(buf, kPbixVersion);
  for (const Interval& iv : intervals_) {
    for (std::uint32_t s = iv.start; s < iv.start + iv.count; ++s) {
      put_u32_le(buf, iv.bin);
      put_u32_le(buf, sorted_nodes_[s]);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open index sidecar for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw ConfigError("failed to write index sidecar: " + path);
}

PoolingIndex PoolingIndex::load(const std::string& path, int camera_count, std::int64_t nodes_per_camera,
                                std::uint32_t grid_rows, std::uint32_t grid_cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open index sidecar: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 8 || buf.compare(0, 4, "PBIX") != 0)
    throw ConfigError("index sidecar is not a PBIX file: " + path);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (get_u32_le(p + 4) != kPbixVersion) throw ConfigError("unsupported PBIX version in " + path);
  if ((buf.size() - 8) % 8 != 0) throw ConfigError("index sidecar is truncated: " + path);

  if (camera_count <= 0 || nodes_per_camera <= 0)
    throw ConfigError("pooling index camera/node counts must be positive");
  const std::int64_t total = static_cast<std::int64_t>(camera_count) * nodes_per_camera;
  if (total >= static_cast<std::int64_t>(kDropped))
    throw ConfigError("pooling index node count exceeds the 32-bit id space");
  const std::uint64_t cells = static_cast<std::uint64_t>(grid_rows) * grid_cols;

  const std::size_t pairs = (buf.size() - 8) / 8;
  std::vector<std::uint32_t> bins(static_cast<std::size_t>(total), kDropped);
  std::uint64_t prev_key = 0;
  for (std::size_t n = 0; n < pairs; ++n) {
    const std::uint32_t bin = get_u32_le(p + 8 + n * 8);
    const std::uint32_t node = get_u32_le(p + 12 + n * 8);
    if (bin >= cells) throw ConfigError("index sidecar bin id outside the grid: " + path);
    if (node >= total) throw ConfigError("index sidecar node id out of range: " + path);
    if (bins[node] != kDropped) throw ConfigError("index sidecar assigns a node twice: " + path);
    const std::uint64_t key = (static_cast<std::uint64_t>(bin) << 32) | node;
    if (n > 0 && key <= prev_key) throw ConfigError("index sidecar pairs are not sorted: " + path);
    prev_key = key;
    bins[node] = bin;
  }
  return from_assignments(std::move(bins), camera_count, nodes_per_camera, grid_rows, grid_cols);
}

}  // namespace pbev
