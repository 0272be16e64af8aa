#include "pbev/lift.hpp"

#include <cmath>

#include "pbev/errors.hpp"

namespace pbev {

FeatureMap::FeatureMap(int channels, int rows, int cols)
    : channels_(channels), rows_(rows), cols_(cols) {
  if (channels <= 0 || rows <= 0 || cols <= 0) throw ConfigError("feature map shape must be positive");
  data_.assign(static_cast<std::size_t>(channels) * rows * cols, 0.0);
}

FeatureMap FeatureMap::from_data(int channels, int rows, int cols, std::vector<double> data) {
  FeatureMap map(channels, rows, cols);
  if (data.size() != map.data_.size()) throw ConfigError("feature map data size does not match shape");
  for (double v : data)
    if (!std::isfinite(v)) throw ConfigError("feature map entries must be finite");
  map.data_ = std::move(data);
  return map;
}

DepthDistribution::DepthDistribution(int n_depth, int rows, int cols, std::vector<double> weights,
                                     DepthNormalization mode)
    : n_depth_(n_depth), rows_(rows), cols_(cols), weights_(std::move(weights)) {
  if (n_depth <= 0 || rows <= 0 || cols <= 0) throw ConfigError("depth distribution shape must be positive");
  if (weights_.size() != static_cast<std::size_t>(n_depth) * rows * cols)
    throw ConfigError("depth distribution data size does not match shape");
  for (double w : weights_)
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("depth weights must be finite and non-negative");

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  for (std::size_t p = 0; p < pixels; ++p) {
    double sum = 0.0;
    for (int k = 0; k < n_depth; ++k) sum += weights_[k * pixels + p];
    if (mode == DepthNormalization::kStrict) {
      if (std::abs(sum - 1.0) > kDepthSumTol)
        throw ConfigError("depth distribution pixel does not sum to one");
    } else {
      if (!(sum > 0.0)) throw ConfigError("depth distribution pixel has zero total weight");
      for (int k = 0; k < n_depth; ++k) weights_[k * pixels + p] /= sum;
    }
  }
}

FrustumFeatures lift_features(const FeatureMap& image, const DepthDistribution& depth) {
  if (image.rows() != depth.rows() || image.cols() != depth.cols())
    throw ConfigError("lift_features: image and depth shapes do not match");

  FrustumFeatures out;
  out.channels = image.channels();
  out.n_depth = depth.n_depth();
  out.rows = image.rows();
  out.cols = image.cols();
  out.data.resize(static_cast<std::size_t>(out.channels) * out.nodes_per_camera());

  const std::size_t pixels = static_cast<std::size_t>(out.rows) * out.cols;
  std::size_t w = 0;
  for (int c = 0; c < out.channels; ++c) {
    const std::span<const double> img = image.values().subspan(c * pixels, pixels);
    for (int k = 0; k < out.n_depth; ++k) {
      const std::span<const double> dw = depth.values().subspan(k * pixels, pixels);
      for (std::size_t p = 0; p < pixels; ++p) out.data[w++] = img[p] * dw[p];
    }
  }
  return out;
}

}  // namespace pbev
