#include "pbev/camera.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "pbev/errors.hpp"
#include "pbev/mathutil.hpp"

namespace pbev {

namespace {

constexpr double kRowTol = 1e-12;   // fixed-structure rows of K and T
constexpr double kRigidTol = 1e-9;  // orthonormality of the rotation part

bool row_is(const Eigen::Matrix4d& m, int r, double a, double b, double c, double d) {
  return std::abs(m(r, 0) - a) <= kRowTol && std::abs(m(r, 1) - b) <= kRowTol &&
         std::abs(m(r, 2) - c) <= kRowTol && std::abs(m(r, 3) - d) <= kRowTol;
}

}  // namespace

void CameraModel::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("camera image size must be positive");
  // Third row of K must pass depth through and the fourth must be the
  // homogeneous row; without these the [u*d, v*d, d, 1] form does not hold.
  if (!row_is(intrinsics, 2, 0, 0, 1, 0)) throw ConfigError("intrinsics row 2 must be (0, 0, 1, 0)");
  if (!row_is(intrinsics, 3, 0, 0, 0, 1)) throw ConfigError("intrinsics row 3 must be (0, 0, 0, 1)");
  Eigen::FullPivLU<Eigen::Matrix4d> lu(intrinsics);
  if (!lu.isInvertible()) throw ConfigError("intrinsics matrix is singular");

  if (!row_is(extrinsics, 3, 0, 0, 0, 1)) throw ConfigError("extrinsics row 3 must be (0, 0, 0, 1)");
  const Eigen::Matrix3d r = extrinsics.topLeftCorner<3, 3>();
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > kRigidTol) throw ConfigError("extrinsics rotation is not orthonormal");
  if (std::abs(r.determinant() - 1.0) > kRigidTol) throw ConfigError("extrinsics rotation is not proper");
}

Eigen::Matrix4d CameraModel::pinhole(double f, double cx, double cy) {
  Eigen::Matrix4d k = Eigen::Matrix4d::Identity();
  k(0, 0) = f;
  k(1, 1) = f;
  k(0, 2) = cx;
  k(1, 2) = cy;
  k(2, 2) = 1.0;
  k(2, 3) = 0.0;
  return k;
}

Eigen::Matrix4d unprojection_matrix(const CameraModel& cam) {
  Eigen::FullPivLU<Eigen::Matrix4d> lu_k(cam.intrinsics);
  if (!lu_k.isInvertible()) throw DomainError("intrinsics matrix is singular");
  Eigen::FullPivLU<Eigen::Matrix4d> lu_t(cam.extrinsics);
  if (!lu_t.isInvertible()) throw DomainError("extrinsics matrix is singular");
  return lu_t.inverse() * lu_k.inverse();
}

CartPoint3 unproject_pixel(const PixelDepth& p, const CameraModel& cam) {
  if (!(p.d > kDepthEps)) throw DomainError("unproject_pixel: depth is not positive");
  const Eigen::Vector4d img(p.u * p.d, p.v * p.d, p.d, 1.0);
  Eigen::Vector4d ego = unprojection_matrix(cam) * img;
  ego /= ego(3);
  return {ego(0), ego(1), ego(2)};
}

PixelDepth project_point(const CartPoint3& p, const CameraModel& cam) {
  const Eigen::Vector4d pc = cam.extrinsics * Eigen::Vector4d(p.x, p.y, p.z, 1.0);
  const double d = pc(2);
  if (!(d > kDepthEps)) throw DomainError("project_point: point is behind the camera");
  const Eigen::Vector4d q = cam.intrinsics * pc;
  return {q(0) / d, q(1) / d, d};
}

std::vector<double> default_depth_bins() {
  std::vector<double> bins(59);
  for (int i = 0; i < 59; ++i) bins[i] = 1.0 + i;
  return bins;
}

FrustumLattice generate_frustum(int feature_height, int feature_width, double stride,
                                std::span<const double> depth_bins) {
  if (feature_height <= 0 || feature_width <= 0) throw ConfigError("frustum feature shape must be positive");
  if (!(stride > 0.0)) throw ConfigError("frustum stride must be positive");
  if (depth_bins.empty()) throw ConfigError("frustum needs at least one depth bin");
  for (std::size_t k = 0; k < depth_bins.size(); ++k) {
    if (!std::isfinite(depth_bins[k]) || !(depth_bins[k] > 0.0))
      throw ConfigError("frustum depth bins must be finite and positive");
    if (k > 0 && !(depth_bins[k] > depth_bins[k - 1]))
      throw ConfigError("frustum depth bins must be strictly increasing");
  }

  FrustumLattice lat;
  lat.n_depth = static_cast<int>(depth_bins.size());
  lat.height = feature_height;
  lat.width = feature_width;
  lat.depth_bins.assign(depth_bins.begin(), depth_bins.end());
  lat.points.resize(3 * lat.nodes_per_camera());
  for (int k = 0; k < lat.n_depth; ++k) {
    for (int i = 0; i < feature_height; ++i) {
      for (int j = 0; j < feature_width; ++j) {
        lat.points[lat.node_offset(0, k, i, j)] = (j + 0.5) * stride;
        lat.points[lat.node_offset(1, k, i, j)] = (i + 0.5) * stride;
        lat.points[lat.node_offset(2, k, i, j)] = depth_bins[k];
      }
    }
  }
  return lat;
}

std::optional<BBox2D> project_box3d_to_bbox2d(const BoxCart& box, const CameraModel& cam) {
  const Eigen::Matrix2d rot = rotation2d(box.yaw);
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
  int visible = 0;
  for (int corner = 0; corner < 8; ++corner) {
    const double sl = (corner & 1) ? 0.5 : -0.5;
    const double sw = (corner & 2) ? 0.5 : -0.5;
    const double sh = (corner & 4) ? 0.5 : -0.5;
    const Eigen::Vector2d ground = Eigen::Vector2d(box.x, box.y) + rot * Eigen::Vector2d(sl * box.l, sw * box.w);
    const Eigen::Vector4d pc =
        cam.extrinsics * Eigen::Vector4d(ground(0), ground(1), box.z + sh * box.h, 1.0);
    if (!(pc(2) > kDepthEps)) continue;
    const Eigen::Vector4d q = cam.intrinsics * pc;
    const double u = q(0) / pc(2), v = q(1) / pc(2);
    if (visible == 0) {
      x_min = x_max = u;
      y_min = y_max = v;
    } else {
      x_min = std::min(x_min, u);
      x_max = std::max(x_max, u);
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
    ++visible;
  }
  if (visible == 0) return std::nullopt;

  x_min = std::max(x_min, 0.0);
  y_min = std::max(y_min, 0.0);
  x_max = std::min(x_max, static_cast<double>(cam.width));
  y_max = std::min(y_max, static_cast<double>(cam.height));
  if (!(x_min < x_max) || !(y_min < y_max)) return std::nullopt;

  const Eigen::Vector4d cc = cam.extrinsics * Eigen::Vector4d(box.x, box.y, box.z, 1.0);
  if (!(cc(2) > kDepthEps)) return std::nullopt;
  const Eigen::Vector4d qc = cam.intrinsics * cc;
  return BBox2D{x_min, y_min, x_max, y_max, qc(0) / cc(2), qc(1) / cc(2)};
}

namespace {

Eigen::Matrix4d matrix_from_row_major(const nlohmann::json& arr, const char* key, std::size_t index) {
  if (!arr.is_array() || arr.size() != 16)
    throw ConfigError("rig camera " + std::to_string(index) + ": \"" + key + "\" must be an array of 16 numbers");
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      const auto& v = arr[4 * r + c];
      if (!v.is_number())
        throw ConfigError("rig camera " + std::to_string(index) + ": \"" + key + "\" must contain only numbers");
      m(r, c) = v.get<double>();
    }
  return m;
}

std::vector<double> matrix_to_row_major(const Eigen::Matrix4d& m) {
  std::vector<double> out(16);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out[4 * r + c] = m(r, c);
  return out;
}

}  // namespace

std::vector<CameraModel> rig_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("rig JSON parse failure: ") + e.what());
  }
  if (!doc.is_array() || doc.empty()) throw ConfigError("rig JSON must be a non-empty array of cameras");

  std::vector<CameraModel> rig;
  rig.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& item = doc[i];
    if (!item.is_object() || !item.contains("K") || !item.contains("T") || !item.contains("width") ||
        !item.contains("height"))
      throw ConfigError("rig camera " + std::to_string(i) + ": expected keys K, T, width, height");
    CameraModel cam;
    cam.intrinsics = matrix_from_row_major(item["K"], "K", i);
    cam.extrinsics = matrix_from_row_major(item["T"], "T", i);
    if (!item["width"].is_number_integer() || !item["height"].is_number_integer())
      throw ConfigError("rig camera " + std::to_string(i) + ": width/height must be integers");
    cam.width = item["width"].get<int>();
    cam.height = item["height"].get<int>();
    try {
      cam.validate();
    } catch (const Error& e) {
      throw ConfigError("rig camera " + std::to_string(i) + ": " + e.what());
    }
    rig.push_back(cam);
  }
  return rig;
}

std::string rig_to_json(std::span<const CameraModel> rig) {
  nlohmann::json doc = nlohmann::json::array();
  for (const CameraModel& cam : rig) {
    nlohmann::json item;
    item["K"] = matrix_to_row_major(cam.intrinsics);
    item["T"] = matrix_to_row_major(cam.extrinsics);
    item["width"] = cam.width;
    item["height"] = cam.height;
    doc.push_back(std::move(item));
  }
  return doc.dump(2);
}

}  // namespace pbev
