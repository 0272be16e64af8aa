#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pbev/camera.hpp"
#include "pbev/codec.hpp"
#include "pbev/lift.hpp"
#include "pbev/polar_grid.hpp"
#include "pbev/temporal.hpp"
#include "pbev/types.hpp"

namespace pbev {

// Deterministic feature synthesizer configuration. Every object stamps a
// Gaussian blob into each camera's feature map at its projected center, with
// per-object, per-channel amplitudes drawn from the scene seed, and a
// smoothed one-hot depth distribution centered on its true camera depth.
struct SynthSpec {
  int channels = 4;
  int feature_height = 56;
  int feature_width = 100;
  double stride = 16.0;
  std::vector<double> depth_bins;  // empty means default_depth_bins()
  double blob_sigma = 1.8;         // feature pixels
  double depth_sigma = 0.8;        // depth bins
  double floor = 1e-3;             // baseline depth weight per bin

  std::vector<double> resolved_depth_bins() const;
  void validate() const;
};

struct SyntheticScene {
  std::uint64_t seed = 0;
  int num_classes = 3;
  SynthSpec synth;
  std::vector<CameraModel> rig;
  std::vector<BoxCart> objects;   // world frame
  std::vector<Pose2> trajectory;  // absolute ego pose per timestamp

  void validate() const;
};

// Azimuth of a camera's optical axis in the ego ground plane. Throws
// DomainError for a vertical axis.
double camera_azimuth(const CameraModel& cam);

// Six level cameras at 60 degree spacing, f=500 on a 900x1600 sensor,
// mounted 1.5 m above the ego origin.
std::vector<CameraModel> default_rig();

// Seeded random scene with the default rig, the default synthesizer, and an
// 8-pose trajectory.
SyntheticScene default_scene(std::uint64_t seed, int n_objects = 12);

// Scene serialization. The JSON object holds seed, num_classes, synth
// parameters, the rig (rig_from_json format), objects, and trajectory.
SyntheticScene scene_from_json(const std::string& text);
std::string scene_to_json(const SyntheticScene& scene);

// Re-expresses world-frame boxes in the ego frame of `pose`.
std::vector<BoxCart> boxes_world_to_ego(std::span<const BoxCart> boxes, const Pose2& pose);

// Per-camera synthesized inputs for one frame, ego-frame boxes given.
struct CameraInputs {
  FeatureMap features;
  DepthDistribution depth;
};
std::vector<CameraInputs> synthesize_inputs(const SyntheticScene& scene,
                                            std::span<const BoxCart> ego_boxes);

// One distance band of a grid-density profile. `cells` counts grid cells
// whose center radius falls in [d_lo, d_hi); `clipped_area` is the annulus
// area intersected with the grid's coverage; density is their ratio (zero
// when the band misses the coverage entirely).
struct DensityBand {
  double d_lo = 0.0;
  double d_hi = 0.0;
  std::int64_t cells = 0;
  double clipped_area = 0.0;
  double density = 0.0;
};
using DensityProfile = std::vector<DensityBand>;

// Distance bands used by the density report: 10 m bands from 1 m, with the
// last band running to the default radial limit of 65 m.
std::vector<double> default_density_edges();

// Cell-count density per distance band. `edges` holds band boundaries
// (size >= 2, increasing); bands are [edges[k], edges[k+1]). Throws
// ConfigError on malformed edges.
DensityProfile grid_density(const PolarGridSpec& spec, std::span<const double> edges);
DensityProfile grid_density(const CartGridSpec& spec, std::span<const double> edges);

// Area of the disk of radius `radius` intersected with an axis-aligned
// rectangle. Exposed for the density computation and its tests.
double disk_rect_area(double radius, double x0, double x1, double y0, double y1);

// Rotates every camera k_slots of the way around the rig and relabels the
// list so position i again holds the camera at the i-th azimuth slot.
// Requires an evenly spaced rig (ConfigError otherwise) and k_slots in
// [0, n]; k_slots == n is the identity full turn.
std::vector<CameraModel> revolve_rig(std::span<const CameraModel> rig, int k_slots);

enum class FusionMode { kIdentity, kAverage };

struct PipelineOptions {
  int frames = 1;  // number of leading trajectory poses to process
  int threads = 1;
  FusionMode fusion = FusionMode::kAverage;
  OutOfRangePolicy oor_policy = OutOfRangePolicy::kZero;
  std::size_t history_capacity = 8;
  bool use_sae = false;
  double sae_logit = 0.0;          // constant attention logit
  std::string index_cache_path;    // non-empty: load/store the pooling index
};

struct FrameStats {
  int frame = 0;
  std::int64_t assigned_nodes = 0;
  std::int64_t dropped_nodes = 0;
  double raw_mass = 0.0;    // sum of the splatted map
  double fused_mass = 0.0;  // sum after fusion (and SAE, when enabled)
};

struct PipelineResult {
  FeatureMap bev;                  // final frame, after fusion (and SAE)
  std::vector<BoxPolar> targets;   // encoded GT for the final frame
  HeatmapTarget heatmap;           // rendered from `targets`
  std::vector<FrameStats> frames;
  int unencodable_boxes = 0;       // boxes at the ego origin, skipped
};

// Full deterministic pass: synthesize -> lift -> splat -> align/fuse history
// -> optional SAE, then encode the final frame's ground truth. The result is
// a pure function of (scene, spec, options) and independent of threads.
PipelineResult run_pipeline(const SyntheticScene& scene, const PolarGridSpec& spec,
                            const PipelineOptions& options = {});

// Contrast of rotation behavior between the polar and Cartesian pipelines.
// The scene and rig are rotated jointly by `delta` and each rotated BEV map
// is compared against a circular shift of the unrotated map: the polar map
// against the exact k-bin row shift when delta is a bin multiple (otherwise
// an interpolated reference, flagged off-lattice), the Cartesian map against
// the best single-axis circular shift.
struct EquivarianceRow {
  double delta = 0.0;
  int k_bins = 0;
  bool on_lattice = true;
  bool degenerate = false;
  double polar_residual = 0.0;
  double cart_residual = 0.0;
};
EquivarianceRow equivariance_report(const SyntheticScene& scene, const PolarGridSpec& polar_spec,
                                    const CartGridSpec& cart_spec, double delta, int threads = 1);

// Revolving-rig variant: rig and scene rotate jointly by k_slots azimuth
// slots (with rig relabeling). When the slot angle is a whole number of
// polar bins the polar residual is against that exact shift; otherwise both
// grids report their best single-axis circular-shift residual.
struct RevolveRow {
  int k_slots = 0;
  int n_view = 0;
  double angle = 0.0;
  bool on_lattice = true;
  int polar_shift_bins = 0;  // exact shift when on-lattice, else best found
  double polar_residual = 0.0;
  double cart_residual = 0.0;
};
RevolveRow revolve_report(const SyntheticScene& scene, const PolarGridSpec& polar_spec,
                          const CartGridSpec& cart_spec, int k_slots, int threads = 1);

// Max-abs difference against a circular row shift: maxabs(rotated[c, i, j] -
// base[c, (i - k) mod rows, j]). Shared by the reports and their tests.
double circshift_row_residual(const FeatureMap& rotated, const FeatureMap& base, int k);

}  // namespace pbev
