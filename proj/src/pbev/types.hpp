#pragma once

#include "pbev/errors.hpp"
#include "pbev/mathutil.hpp"

namespace pbev {

struct CartPoint3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

// Pixel location plus metric depth along the optical axis.
struct PixelDepth {
  double u = 0.0, v = 0.0, d = 0.0;
};

struct CylPoint {
  double theta = 0.0, r = 0.0, z = 0.0;
};

// Absolute planar ego pose: world position of the ego origin and heading.
struct Pose2 {
  double x = 0.0, y = 0.0, yaw = 0.0;
};

// Upright 3D box in Cartesian ground coordinates. yaw is the heading of the
// length axis; (vx, vy) is the absolute planar velocity of the center.
struct BoxCart {
  double x = 0.0, y = 0.0, z = 0.0;
  double w = 0.0, l = 0.0, h = 0.0;
  double yaw = 0.0;
  double vx = 0.0, vy = 0.0;
  int class_id = 0;

  void validate() const {
    if (!(w > 0.0) || !(l > 0.0) || !(h > 0.0)) throw ConfigError("box dimensions must be positive");
    if (yaw <= -kPi || yaw > kPi) throw ConfigError("box yaw not normalized to (-pi, pi]");
  }
};

// The same box in the polar ground frame. (theta, r) locate the center; yaw
// is relative to the center's azimuth ray, and the velocity is split into a
// tangential and a radial component along that ray.
struct BoxPolar {
  double theta = 0.0, r = 0.0, z = 0.0;
  double w = 0.0, l = 0.0, h = 0.0;
  double yaw = 0.0;
  double v_theta = 0.0, v_r = 0.0;
  int class_id = 0;

  void validate() const {
    if (!(w > 0.0) || !(l > 0.0) || !(h > 0.0)) throw ConfigError("box dimensions must be positive");
    if (yaw <= -kPi || yaw > kPi) throw ConfigError("box yaw not normalized to (-pi, pi]");
    if (theta <= -kPi || theta > kPi) throw ConfigError("box azimuth not normalized to (-pi, pi]");
    if (!(r > 0.0)) throw ConfigError("box radius must be positive");
  }
};

}  // namespace pbev
