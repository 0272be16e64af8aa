#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pbev/lift.hpp"
#include "pbev/polar_grid.hpp"
#include "pbev/types.hpp"

namespace pbev {

// Boxes closer to the ego origin than this cannot be polar-encoded: their
// azimuth is undefined.
inline constexpr double kCenterEps = 1e-6;

// Re-expresses a Cartesian box in the polar ground frame. The yaw becomes
// relative to the center's azimuth ray and the velocity is split into the
// tangential and radial components along that ray; zero velocity encodes to
// (0, 0). Throws DomainError when the planar radius is <= kCenterEps.
BoxPolar encode_polar(const BoxCart& box);

// Exact inverse of encode_polar. Throws DomainError when r <= 0.
BoxCart decode_polar(const BoxPolar& box);

// Rotates center, yaw, and velocity rigidly about the ego origin.
BoxCart azimuth_rotate_cart(const BoxCart& box, double delta);

// Minimum-enclosing Gaussian radius for a footprint of the given extents (in
// bins) such that any box shifted by up to the radius still overlaps the
// original by at least min_overlap in IoU.
double gaussian_radius(double extent_a, double extent_b, double min_overlap = 0.1);

struct HeatmapObject {
  int class_id = 0;
  int c_theta = 0, c_r = 0;     // integer center bin
  double o_theta = 0.0, o_r = 0.0;  // sub-bin offsets in [0, 1)
  int radius_bins = 0;
};

struct HeatmapTarget {
  FeatureMap data;                     // (K, n_theta, n_r), values in [0, 1]
  std::vector<HeatmapObject> objects;  // one per rendered box
  std::vector<std::size_t> skipped;    // input positions outside the radial range
};

// Renders one Gaussian per box into the channel of its class, peak value 1
// at the integer center bin, overlaps combined by elementwise max. Azimuth
// rendering wraps across the seam; radial rendering clips. Boxes whose
// center radius falls outside the grid are skipped and recorded. A class_id
// outside [0, num_classes) throws ConfigError.
HeatmapTarget make_heatmap_target(std::span<const BoxPolar> boxes, const PolarGridSpec& spec,
                                  int num_classes);

// F'[c,i,j] = (1 + sigmoid(logits[0,i,j])) * F[c,i,j]. logits must have one
// channel and F's spatial shape; ConfigError otherwise.
FeatureMap apply_sae(const FeatureMap& features, const FeatureMap& logits);

// JSON-lines serialization: one box per line, tagged "cart" or "polar".
// Angles are normalized on load; malformed lines throw ConfigError naming
// the line number.
using TaggedBox = std::variant<BoxCart, BoxPolar>;
std::string boxes_to_jsonl(std::span<const TaggedBox> boxes);
std::vector<TaggedBox> boxes_from_jsonl(const std::string& text);

}  // namespace pbev
