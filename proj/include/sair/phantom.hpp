#pragma once

#include "sair/volume.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace sair {

struct PhantomSpec {
  Dims dims{96, 96, 96};
  std::uint64_t seed = 0;
  int n_ellipsoids = 6;
  double texture_amplitude = 0.05;
  Spacing spacing{1.0, 1.0, 1.0};
};

/// Oriented ellipsoid in normalized coordinates (each axis mapped to [-1, 1]).
struct Ellipsoid {
  Eigen::Vector3d center;
  Eigen::Vector3d semi_axes;
  Eigen::Matrix3d rotation;  // world -> ellipsoid frame
  double level = 0.0;        // plateau intensity (ellipsoids) or darkening depth (ridges)
  double band = 0.0;         // half-width of the smooth transition, in normalized-radius units

  double radius(const Eigen::Vector3d& p) const {
    return (rotation * (p - center)).cwiseQuotient(semi_axes).norm();
  }
};

/// Geometry behind a phantom; generation is a pure function of this layout.
struct PhantomLayout {
  std::vector<Ellipsoid> regions;  // regions[0] is the outer shell that defines the mask
  std::vector<Ellipsoid> ridges;   // thin dark shells
  std::vector<Eigen::Vector4d> waves;  // texture plane waves: (fx, fy, fz, phase)
};

PhantomLayout phantom_layout(const PhantomSpec& spec);

/// Nested smooth ellipsoids with distinct plateaus, band-limited texture and thin dark ridges.
/// Intensities lie in [0, 1]; the mask is the outer ellipsoid. Throws VolumeError for dims < 16.
std::pair<Volume, Mask> generate_phantom(const PhantomSpec& spec);

/// Voxels whose 6-neighbourhood sits strictly inside a plateau of every region and ridge.
Mask plateau_interior(const PhantomSpec& spec);

}  // namespace sair
