#pragma once

#include "sair/volume.hpp"

#include <utility>

namespace sair {

/// Affine intensity map recorded by normalize_intensities: unit = (value - low) / (high - low).
struct IntensityScale {
  double low = 0.0;
  double high = 1.0;

  double forward(double value) const { return (value - low) / (high - low); }
  double inverse(double unit) const { return low + unit * (high - low); }
};

/// Linearly interpolated percentile (q in [0, 100]) of the voxel values.
double percentile(const Eigen::ArrayXd& values, double q);

/// Maps the 0.5th percentile to 0 and the 99.5th to 1, then clamps to [0, 1].
/// Throws VolumeError when the two percentiles coincide (e.g. a constant volume).
std::pair<Volume, IntensityScale> normalize_intensities(const Volume& v);

/// Applies an existing scale (no clamping).
Volume apply_scale(const Volume& v, const IntensityScale& s);
Volume invert_scale(const Volume& unit, const IntensityScale& s);

}  // namespace sair
