#include "sair/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace sair {
namespace {

void check(const Volume& a, const Volume& b, const Mask& m) {
  if (a.dims != b.dims || a.dims != m.dims) throw VolumeError("metric inputs must share dims");
  if (m.count() == 0) throw VolumeError("empty evaluation mask");
}

// Truncated, renormalized separable Gaussian filter.
ImageD gaussian_filter(const ImageD& img, const Eigen::ArrayXd& taps) {
  const int h = static_cast<int>(taps.size() / 2);
  const Eigen::Index rows = img.rows(), cols = img.cols();
  ImageD tmp(rows, cols), out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      double acc = 0.0, norm = 0.0;
      for (int t = -h; t <= h; ++t) {
        const Eigen::Index jj = j + t;
        if (jj < 0 || jj >= cols) continue;
        acc += taps[t + h] * img(i, jj);
        norm += taps[t + h];
      }
      tmp(i, j) = acc / norm;
    }
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      double acc = 0.0, norm = 0.0;
      for (int t = -h; t <= h; ++t) {
        const Eigen::Index ii = i + t;
        if (ii < 0 || ii >= rows) continue;
        acc += taps[t + h] * tmp(ii, j);
        norm += taps[t + h];
      }
      out(i, j) = acc / norm;
    }
  return out;
}

}  // namespace

double mse_db(const Volume& a, const Volume& b, const Mask& m) {
  check(a, b, m);
  const double sum = m.data.select((a.data - b.data).square(), 0.0).sum();
  const double mse = sum / static_cast<double>(m.count());
  if (!(mse > 0.0)) return kMseDbFloor;
  return std::max(kMseDbFloor, 10.0 * std::log10(mse));
}

ImageD ssim_map(const ImageD& a, const ImageD& b, const SsimOptions& opt) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw VolumeError("ssim inputs must share shape");
  Eigen::ArrayXd taps = Eigen::ArrayXd::LinSpaced(2 * opt.window_radius + 1, -opt.window_radius, opt.window_radius);
  taps = (-taps.square() / (2.0 * opt.window_sigma * opt.window_sigma)).exp();

  const ImageD mu_a = gaussian_filter(a, taps), mu_b = gaussian_filter(b, taps);
  const ImageD var_a = gaussian_filter(a * a, taps) - mu_a.square();
  const ImageD var_b = gaussian_filter(b * b, taps) - mu_b.square();
  const ImageD cov = gaussian_filter(a * b, taps) - mu_a * mu_b;
  const double c1 = opt.c1(), c2 = opt.c2();
  return ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
         ((mu_a.square() + mu_b.square() + c1) * (var_a + var_b + c2));
}

double ssim_masked(const Volume& a, const Volume& b, const Mask& m, const SsimOptions& opt) {
  check(a, b, m);
  double total = 0.0;
  for (int z = 0; z < a.dims.nz; ++z) {
    bool any = false;
    for (int x = 0; x < a.dims.nx && !any; ++x)
      for (int y = 0; y < a.dims.ny && !any; ++y) any = m(x, y, z);
    if (!any) continue;
    const ImageD map = ssim_map(axial_slice(a, z), axial_slice(b, z), opt);
    for (int x = 0; x < a.dims.nx; ++x)
      for (int y = 0; y < a.dims.ny; ++y)
        if (m(x, y, z)) total += map(x, y);
  }
  return total / static_cast<double>(m.count());
}

EvalResult evaluate(const Volume& recon, const Volume& reference, const Mask& m, const SsimOptions& opt) {
  return {mse_db(recon, reference, m), ssim_masked(recon, reference, m, opt), m.count()};
}

}  // namespace sair
