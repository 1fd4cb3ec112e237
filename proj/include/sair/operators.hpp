#pragma once

#include "sair/volume.hpp"

#include <cstdint>

namespace sair {

/// Normalized, symmetric, odd-length 1D kernel modelling the slice-selection response.
struct SliceProfile {
  Eigen::ArrayXd taps;

  int radius() const { return static_cast<int>(taps.size() / 2); }
  /// Throws VolumeError unless taps are odd-length, sum to 1 (1e-12) and symmetric.
  void validate() const;
  /// Frequency response at `cycles_per_sample` (real because the kernel is symmetric).
  double response(double cycles_per_sample) const;
};

/// Gaussian with FWHM equal to `slice_thickness_ratio` samples, truncated at ±ceil(3σ).
SliceProfile gaussian_profile(double slice_thickness_ratio);
SliceProfile delta_profile();
/// Uniform average over `width` samples (odd width).
SliceProfile box_profile(int width);

struct ForwardModelConfig {
  int r = 2;
  SliceProfile profile = delta_profile();
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// 1D convolution along `axis` with mirror-reflect boundary (edge sample not repeated).
Volume blur_axis(const Volume& v, const SliceProfile& k, Axis axis);

/// Keeps indices 0, r, 2r, ... along `axis`; no anti-aliasing.
Volume downsample_axis(const Volume& v, int r, Axis axis);

/// Catmull-Rom (a = -0.5) interpolation by an integer factor with clamped edges.
/// Coarse sample i lands on fine index i*r.
Volume upsample_axis_bicubic(const Volume& v, int r, Axis axis);

/// In-plane rotation by `theta_deg` about the (x, y) centre, bicubic, zero outside the source grid.
Volume rotate_z(const Volume& v, double theta_deg);

/// Voxels of rotate_z(v, theta) whose source position lies inside the grid.
Mask rotation_valid_mask(Dims d, double theta_deg);

/// Adds i.i.d. N(0, sigma^2). Each voxel's draw depends only on (seed, linear index).
Volume add_gaussian_noise(const Volume& v, double sigma, std::uint64_t seed);

/// downsample(blur(x)) + noise along `axis`.
Volume apply_forward_model(const Volume& x, const ForwardModelConfig& cfg, Axis axis);

/// Catmull-Rom cubic convolution kernel weights for offsets -1, 0, 1, 2 at fraction t in [0, 1).
Eigen::Array4d cubic_weights(double t);

}  // namespace sair
