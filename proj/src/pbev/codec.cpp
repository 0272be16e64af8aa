#include "pbev/codec.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "pbev/errors.hpp"

namespace pbev {

BoxPolar encode_polar(const BoxCart& box) {
  box.validate();
  const CylPoint cyl = cart_to_cyl({box.x, box.y, 0.0});
  if (!(cyl.r > kCenterEps)) throw DomainError("encode_polar: box center is at the ego origin");

  const double c = std::cos(cyl.theta), s = std::sin(cyl.theta);
  BoxPolar out;
  out.theta = wrap_angle(cyl.theta);
  out.r = cyl.r;
  out.z = box.z;
  out.w = box.w;
  out.l = box.l;
  out.h = box.h;
  out.yaw = wrap_angle(box.yaw - cyl.theta);
  // Velocity resolved along (radial, tangential) unit vectors of the ray;
  // equals (|v| cos(a_vel - theta), |v| sin(a_vel - theta)) with the zero
  // vector mapping to (0, 0).
  out.v_r = box.vx * c + box.vy * s;
  out.v_theta = box.vy * c - box.vx * s;
  out.class_id = box.class_id;
  return out;
}

BoxCart decode_polar(const BoxPolar& box) {
  if (!(box.r > 0.0)) throw DomainError("decode_polar: radius must be positive");
  box.validate();

  const double c = std::cos(box.theta), s = std::sin(box.theta);
  BoxCart out;
  out.x = box.r * c;
  out.y = box.r * s;
  out.z = box.z;
  out.w = box.w;
  out.l = box.l;
  out.h = box.h;
  out.yaw = wrap_angle(box.yaw + box.theta);
  out.vx = box.v_r * c - box.v_theta * s;
  out.vy = box.v_r * s + box.v_theta * c;
  out.class_id = box.class_id;
  return out;
}

BoxCart azimuth_rotate_cart(const BoxCart& box, double delta) {
  const Eigen::Matrix2d rot = rotation2d(delta);
  const Eigen::Vector2d pos = rot * Eigen::Vector2d(box.x, box.y);
  const Eigen::Vector2d vel = rot * Eigen::Vector2d(box.vx, box.vy);
  BoxCart out = box;
  out.x = pos(0);
  out.y = pos(1);
  out.yaw = wrap_angle(box.yaw + delta);
  out.vx = vel(0);
  out.vy = vel(1);
  return out;
}

double gaussian_radius(double extent_a, double extent_b, double min_overlap) {
  // CenterNet convention, including its (b + sqrt) / 2 for the second case.
  const double h = extent_a, w = extent_b, o = min_overlap;

  const double b1 = h + w;
  const double c1 = w * h * (1.0 - o) / (1.0 + o);
  const double r1 = (b1 + std::sqrt(std::max(0.0, b1 * b1 - 4.0 * c1))) / 2.0;

  const double b2 = 2.0 * (h + w);
  const double c2 = (1.0 - o) * w * h;
  const double r2 = (b2 + std::sqrt(std::max(0.0, b2 * b2 - 16.0 * c2))) / 2.0;

  const double b3 = -2.0 * o * (h + w);
  const double c3 = (o - 1.0) * w * h;
  const double r3 = (b3 + std::sqrt(std::max(0.0, b3 * b3 - 16.0 * o * c3))) / 2.0;

  return std::min({r1, r2, r3});
}

HeatmapTarget make_heatmap_target(std::span<const BoxPolar> boxes, const PolarGridSpec& spec,
                                  int num_classes) {
  spec.validate();
  if (num_classes <= 0) throw ConfigError("make_heatmap_target: needs at least one class");

  HeatmapTarget target;
  target.data = FeatureMap(num_classes, spec.n_theta, spec.n_r);
  const double dt = spec.delta_theta(), dr = spec.delta_r();
  const std::int64_t cells = spec.cell_count();
  double* data = target.data.values().data();

  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const BoxPolar& box = boxes[b];
    box.validate();
    if (box.class_id < 0 || box.class_id >= num_classes)
      throw ConfigError("make_heatmap_target: box class_id outside [0, num_classes)");

    double u = (wrap_angle(box.theta) + kPi) / dt;
    std::int64_t ci = snapped_floor(u);
    if (ci >= spec.n_theta) {
      ci -= spec.n_theta;
      u -= spec.n_theta;
    }
    const double v = (box.r - spec.r_min) / dr;
    const std::int64_t cj = snapped_floor(v);
    if (cj < 0 || cj >= spec.n_r) {
      target.skipped.push_back(b);
      continue;
    }
    const double o_theta = std::max(u - ci, 0.0);
    const double o_r = std::max(v - cj, 0.0);

    // Footprint extents along the grid axes, in bins; yaw here is already
    // relative to the azimuth ray, so the extents are rotation-invariant.
    const double cy = std::abs(std::cos(box.yaw)), sy = std::abs(std::sin(box.yaw));
    const double radial_bins = (box.l * cy + box.w * sy) / dr;
    const double tangential_bins = (box.l * sy + box.w * cy) / (box.r * dt);
    const int radius = std::max(1, static_cast<int>(gaussian_radius(radial_bins, tangential_bins)));
    const double sigma = (2.0 * radius + 1.0) / 6.0;

    double* plane = data + static_cast<std::size_t>(box.class_id) * cells;
    for (int di = -radius; di <= radius; ++di) {
      const int ii = wrap_index(static_cast<int>(ci) + di, spec.n_theta);
      for (int dj = -radius; dj <= radius; ++dj) {
        const std::int64_t jj = cj + dj;
        if (jj < 0 || jj >= spec.n_r) continue;
        const double g = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
        double& cell = plane[static_cast<std::size_t>(ii) * spec.n_r + jj];
        cell = std::max(cell, g);
      }
    }
    target.objects.push_back({box.class_id, static_cast<int>(ci), static_cast<int>(cj), o_theta, o_r,
                              radius});
  }
  return target;
}

FeatureMap apply_sae(const FeatureMap& features, const FeatureMap& logits) {
  if (logits.channels() != 1 || logits.rows() != features.rows() || logits.cols() != features.cols())
    throw ConfigError("apply_sae: logits must be (1, rows, cols) matching the feature map");

  FeatureMap out(features.channels(), features.rows(), features.cols());
  const std::int64_t cells = static_cast<std::int64_t>(features.rows()) * features.cols();
  const double* f = features.values().data();
  const double* lg = logits.values().data();
  double* dst = out.values().data();
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    const double gate = 1.0 + sigmoid(lg[cell]);
    for (int c = 0; c < features.channels(); ++c)
      dst[c * cells + cell] = gate * f[c * cells + cell];
  }
  return out;
}

namespace {

double require_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number())
    throw ConfigError(std::string("missing numeric field \"") + key + "\"");
  return j[key].get<double>();
}

int require_int(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_integer())
    throw ConfigError(std::string("missing integer field \"") + key + "\"");
  return j[key].get<int>();
}

}  // namespace

std::string boxes_to_jsonl(std::span<const TaggedBox> boxes) {
  std::string out;
  for (const TaggedBox& tagged : boxes) {
    nlohmann::json j;
    if (const BoxCart* b = std::get_if<BoxCart>(&tagged)) {
      j["tag"] = "cart";
      j["x"] = b->x;
      j["y"] = b->y;
      j["z"] = b->z;
      j["w"] = b->w;
      j["l"] = b->l;
      j["h"] = b->h;
      j["yaw"] = b->yaw;
      j["vx"] = b->vx;
      j["vy"] = b->vy;
      j["class_id"] = b->class_id;
    } else {
      const BoxPolar& p = std::get<BoxPolar>(tagged);
      j["tag"] = "polar";
      j["theta"] = p.theta;
      j["r"] = p.r;
      j["z"] = p.z;
      j["w"] = p.w;
      j["l"] = p.l;
      j["h"] = p.h;
      j["yaw"] = p.yaw;
      j["v_theta"] = p.v_theta;
      j["v_r"] = p.v_r;
      j["class_id"] = p.class_id;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<TaggedBox> boxes_from_jsonl(const std::string& text) {
  std::vector<TaggedBox> boxes;
  std::istringstream stream(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("box line " + std::to_string(line_no) + ": JSON parse failure: " + e.what());
    }
    if (!j.is_object() || !j.contains("tag") || !j["tag"].is_string())
      throw ConfigError("box line " + std::to_string(line_no) + ": missing \"tag\"");
    const std::string tag = j["tag"].get<std::string>();
    try {
      if (tag == "cart") {
        BoxCart b;
        b.x = require_number(j, "x");
        b.y = require_number(j, "y");
        b.z = require_number(j, "z");
        b.w = require_number(j, "w");
        b.l = require_number(j, "l");
        b.h = require_number(j, "h");
        b.yaw = wrap_angle(require_number(j, "yaw"));
        b.vx = require_number(j, "vx");
        b.vy = require_number(j, "vy");
        b.class_id = require_int(j, "class_id");
        b.validate();
        boxes.emplace_back(b);
      } else if (tag == "polar") {
        BoxPolar p;
        p.theta = wrap_angle(require_number(j, "theta"));
        p.r = require_number(j, "r");
        p.z = require_number(j, "z");
        p.w = require_number(j, "w");
        p.l = require_number(j, "l");
        p.h = require_number(j, "h");
        p.yaw = wrap_angle(require_number(j, "yaw"));
        p.v_theta = require_number(j, "v_theta");
        p.v_r = require_number(j, "v_r");
        p.class_id = require_int(j, "class_id");
        p.validate();
        boxes.emplace_back(p);
      } else {
        throw ConfigError("unknown tag \"" + tag + "\"");
      }
    } catch (const ConfigError& e) {
      throw ConfigError("box line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return boxes;
}

}  // namespace pbev
