#include "chaincal/camera.hpp"

#include "chaincal/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace chaincal {

void validate(const CameraIntrinsics& k) {
  if (!(k.fx > 0.0) || !(k.fy > 0.0)) throw Error("camera focal lengths must be positive");
  if (!(k.width > 0.0) || !(k.height > 0.0)) throw Error("camera resolution must be positive");
  if (!(k.cx >= 0.0 && k.cx <= k.width) || !(k.cy >= 0.0 && k.cy <= k.height)) {
    throw Error(fmt::format("principal point ({}, {}) lies outside the {}x{} image", k.cx, k.cy,
                            k.width, k.height));
  }
}

PixelPoint project(const Eigen::Vector3d& p, const CameraIntrinsics& k) {
  if (!(p.z() > 0.0)) {
    throw BehindCameraError(fmt::format("point ({}, {}, {}) is not in front of the camera", p.x(),
                                        p.y(), p.z()));
  }
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

bool in_frame(const PixelPoint& p, const CameraIntrinsics& k) {
  return p.u >= 0.0 && p.u < k.width && p.v >= 0.0 && p.v < k.height;
}

}  // namespace chaincal
