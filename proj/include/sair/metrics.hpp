#pragma once

#include "sair/image.hpp"
#include "sair/volume.hpp"

namespace sair {

inline constexpr double kMseDbFloor = -300.0;

struct SsimOptions {
  double dynamic_range = 1.0;
  double k1 = 0.01;
  double k2 = 0.03;
  double window_sigma = 1.5;
  int window_radius = 5;  // 11 x 11 window

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

struct EvalResult {
  double mse_db = 0.0;
  double ssim = 0.0;
  Eigen::Index voxels_evaluated = 0;
};

/// 10 log10 of the masked mean squared difference, floored at -300 dB.
double mse_db(const Volume& a, const Volume& b, const Mask& m);

/// Per-pixel SSIM of two images. The Gaussian window is truncated at the image border and
/// renormalized over the in-bounds taps.
ImageD ssim_map(const ImageD& a, const ImageD& b, const SsimOptions& opt = {});

/// Mean of the slice-wise (fixed-z) SSIM maps over the masked voxels.
double ssim_masked(const Volume& a, const Volume& b, const Mask& m, const SsimOptions& opt = {});

EvalResult evaluate(const Volume& recon, const Volume& reference, const Mask& m, const SsimOptions& opt = {});

}  // namespace sair
