#pragma once

#include <Eigen/Core>

namespace chaincal {

/// Pinhole intrinsics in pixels. No distortion terms.
struct CameraIntrinsics {
  double fx = 257.34;
  double fy = 257.34;
  double cx = 160.0;
  double cy = 120.0;
  double width = 320.0;
  double height = 240.0;

  bool operator==(const CameraIntrinsics&) const = default;
};

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;

  Eigen::Vector2d vector() const { return {u, v}; }
  bool operator==(const PixelPoint&) const = default;
};

/// Throws chaincal::Error when fx/fy are not positive or the principal point is off-image.
void validate(const CameraIntrinsics& intrinsics);

/**
 * u = fx * X / Z + cx, v = fy * Y / Z + cy.
 *
 * The point is expressed in the eye (camera) frame, +z along the optical axis.
 * Throws BehindCameraError when Z <= 0.
 */
PixelPoint project(const Eigen::Vector3d& point_in_eye, const CameraIntrinsics& intrinsics);

/// 0 <= u < width and 0 <= v < height.
bool in_frame(const PixelPoint& p, const CameraIntrinsics& intrinsics);

}  // namespace chaincal
