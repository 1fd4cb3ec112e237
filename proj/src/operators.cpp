#include "sair/operators.hpp"

#include "sair/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace sair {
namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

// Visits every 1D line along `axis`: fn(first linear index, stride).
template <typename Fn>
void for_each_line(Dims d, Axis axis, Fn&& fn) {
  const Eigen::Index sx = static_cast<Eigen::Index>(d.ny) * d.nz, sy = d.nz;
  switch (axis) {
    case Axis::X:
      for (int y = 0; y < d.ny; ++y)
        for (int z = 0; z < d.nz; ++z) fn(y * sy + z);
      break;
    case Axis::Y:
      for (int x = 0; x < d.nx; ++x)
        for (int z = 0; z < d.nz; ++z) fn(x * sx + z);
      break;
    case Axis::Z:
      for (int x = 0; x < d.nx; ++x)
        for (int y = 0; y < d.ny; ++y) fn(x * sx + y * sy);
      break;
  }
}

}  // namespace

void SliceProfile::validate() const {
  if (taps.size() % 2 != 1) throw VolumeError("slice profile must have odd length");
  if (std::abs(taps.sum() - 1.0) > 1e-12) throw VolumeError("slice profile must sum to 1");
  if (!taps.isApprox(taps.reverse(), 1e-12)) throw VolumeError("slice profile must be symmetric");
}

double SliceProfile::response(double cycles_per_sample) const {
  const int h = radius();
  double acc = 0.0;
  for (int k = -h; k <= h; ++k) acc += taps[k + h] * std::cos(2.0 * std::numbers::pi * cycles_per_sample * k);
  return acc;
}

SliceProfile gaussian_profile(double slice_thickness_ratio) {
  if (!(slice_thickness_ratio > 0)) throw VolumeError("slice thickness ratio must be positive");
  const double sigma = slice_thickness_ratio / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
  const int half = static_cast<int>(std::ceil(3.0 * sigma));
  SliceProfile p;
  p.taps = Eigen::ArrayXd::LinSpaced(2 * half + 1, -half, half);
  p.taps = (-p.taps.square() / (2.0 * sigma * sigma)).exp();
  p.taps /= p.taps.sum();
  return p;
}

SliceProfile delta_profile() { return SliceProfile{Eigen::ArrayXd::Ones(1)}; }

SliceProfile box_profile(int width) {
  if (width < 1 || width % 2 == 0) throw VolumeError("box profile width must be odd and positive");
  return SliceProfile{Eigen::ArrayXd::Constant(width, 1.0 / width)};
}

Volume blur_axis(const Volume& v, const SliceProfile& k, Axis axis) {
  const int n = v.dims[axis];
  const int h = k.radius();
  if (k.taps.size() >= 2 * static_cast<Eigen::Index>(n) && h > 0)
    throw VolumeError("kernel of length " + std::to_string(k.taps.size()) + " too long for axis of length " +
                      std::to_string(n));
  // Reflected source index for each (output position, tap).
  std::vector<int> src(static_cast<std::size_t>(n) * (2 * h + 1));
  for (int i = 0; i < n; ++i)
    for (int t = -h; t <= h; ++t) src[static_cast<std::size_t>(i) * (2 * h + 1) + (t + h)] = reflect(i + t, n);

  Volume out(v.dims, v.spacing);
  const Eigen::Index stride = v.stride(axis);
  std::vector<double> line(static_cast<std::size_t>(n));
  for_each_line(v.dims, axis, [&](Eigen::Index base) {
    for (int i = 0; i < n; ++i) line[i] = v.data[base + i * stride];
    for (int i = 0; i < n; ++i) {
      const int* s = &src[static_cast<std::size_t>(i) * (2 * h + 1)];
      double acc = 0.0;
      for (int t = 0; t <= 2 * h; ++t) acc += k.taps[t] * line[s[t]];
      out.data[base + i * stride] = acc;
    }
  });
  return out;
}

Volume downsample_axis(const Volume& v, int r, Axis axis) {
  if (r < 1) throw VolumeError("decimation factor must be >= 1");
  if (r > v.dims[axis]) throw VolumeError("decimation factor exceeds axis length");
  Dims d = v.dims;
  d[axis] = v.dims[axis] / r;
  Spacing s = v.spacing;
  s[axis] *= r;
  Volume out(d, s);
  for (int x = 0; x < d.nx; ++x)
    for (int y = 0; y < d.ny; ++y)
      for (int z = 0; z < d.nz; ++z) {
        int sx = x, sy = y, sz = z;
        if (axis == Axis::X) sx *= r;
        if (axis == Axis::Y) sy *= r;
        if (axis == Axis::Z) sz *= r;
        out(x, y, z) = v(sx, sy, sz);
      }
  return out;
}

Eigen::Array4d cubic_weights(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return Eigen::Array4d(-0.5 * t3 + t2 - 0.5 * t, 1.5 * t3 - 2.5 * t2 + 1.0, -1.5 * t3 + 2.0 * t2 + 0.5 * t,
                        0.5 * t3 - 0.5 * t2);
}

Volume upsample_axis_bicubic(const Volume& v, int r, Axis axis) {
  if (r < 1) throw VolumeError("upsampling factor must be >= 1");
  if (r == 1) return v;
  const int n = v.dims[axis];
  if (n < 4) throw VolumeError("axis too short for cubic interpolation (need >= 4 samples)");
  Dims d = v.dims;
  d[axis] = n * r;
  Spacing s = v.spacing;
  s[axis] /= r;
  Volume out(d, s);

  std::vector<Eigen::Array4d> phase_weights(static_cast<std::size_t>(r));
  for (int f = 0; f < r; ++f) phase_weights[f] = cubic_weights(static_cast<double>(f) / r);

  const Eigen::Index in_stride = v.stride(axis), out_stride = out.stride(axis);
  for_each_line(d, axis, [&](Eigen::Index out_base) {
    // Lines share (x, y, z) coordinates off-axis; recover the input base from the output base.
    Eigen::Index in_base = 0;
    {
      const int ox = static_cast<int>(out_base / (static_cast<Eigen::Index>(d.ny) * d.nz));
      const int oy = static_cast<int>((out_base / d.nz) % d.ny);
      const int oz = static_cast<int>(out_base % d.nz);
      in_base = v.index(ox, oy, oz);
    }
    for (int j = 0; j < n * r; ++j) {
      const int i = j / r;
      const Eigen::Array4d& w = phase_weights[j % r];
      double acc = 0.0;
      for (int t = 0; t < 4; ++t) {
        const int src = std::clamp(i - 1 + t, 0, n - 1);
        acc += w[t] * v.data[in_base + src * in_stride];
      }
      out.data[out_base + j * out_stride] = acc;
    }
  });
  return out;
}

namespace {

struct RotationSample {
  bool valid = false;
  int ix = 0, iy = 0;
  Eigen::Array4d wx, wy;
};

RotationSample rotation_source(int x, int y, int n, double c, double s) {
  const double center = 0.5 * (n - 1);
  const double dx = x - center, dy = y - center;
  // Inverse map: the content rotates by +theta.
  const double sx = c * dx + s * dy + center;
  const double sy = -s * dx + c * dy + center;
  constexpr double eps = 1e-9;
  RotationSample out;
  if (sx < -eps || sy < -eps || sx > n - 1 + eps || sy > n - 1 + eps) return out;
  out.valid = true;
  const double fx = std::floor(sx + eps), fy = std::floor(sy + eps);
  out.ix = static_cast<int>(fx);
  out.iy = static_cast<int>(fy);
  out.wx = cubic_weights(std::max(0.0, sx - fx));
  out.wy = cubic_weights(std::max(0.0, sy - fy));
  return out;
}

void rotation_trig(double theta_deg, double& c, double& s) {
  // Exact values on the axes keep multiples of 90 degrees a pure permutation.
  const double wrapped = std::fmod(std::fmod(theta_deg, 360.0) + 360.0, 360.0);
  if (wrapped == 0.0) { c = 1; s = 0; return; }
  if (wrapped == 90.0) { c = 0; s = 1; return; }
  if (wrapped == 180.0) { c = -1; s = 0; return; }
  if (wrapped == 270.0) { c = 0; s = -1; return; }
  const double rad = theta_deg * std::numbers::pi / 180.0;
  c = std::cos(rad);
  s = std::sin(rad);
}

}  // namespace

Volume rotate_z(const Volume& v, double theta_deg) {
  if (v.dims.nx != v.dims.ny) throw VolumeError("rotate_z requires nx == ny");
  const int n = v.dims.nx, nz = v.dims.nz;
  double c, s;
  rotation_trig(theta_deg, c, s);
  Volume out(v.dims, v.spacing);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) {
      const RotationSample rs = rotation_source(x, y, n, c, s);
      if (!rs.valid) continue;
      auto dst = out.data.segment(out.index(x, y, 0), nz);
      for (int a = 0; a < 4; ++a) {
        if (rs.wx[a] == 0.0) continue;
        const int sx = std::clamp(rs.ix - 1 + a, 0, n - 1);
        for (int b = 0; b < 4; ++b) {
          const double w = rs.wx[a] * rs.wy[b];
          if (w == 0.0) continue;
          const int sy = std::clamp(rs.iy - 1 + b, 0, n - 1);
          dst += w * v.data.segment(v.index(sx, sy, 0), nz);
        }
      }
    }
  return out;
}

Mask rotation_valid_mask(Dims d, double theta_deg) {
  if (d.nx != d.ny) throw VolumeError("rotation_valid_mask requires nx == ny");
  double c, s;
  rotation_trig(theta_deg, c, s);
  Mask m(d);
  for (int x = 0; x < d.nx; ++x)
    for (int y = 0; y < d.ny; ++y)
      if (rotation_source(x, y, d.nx, c, s).valid) m.data.segment(m.index(x, y, 0), d.nz).setConstant(true);
  return m;
}

Volume add_gaussian_noise(const Volume& v, double sigma, std::uint64_t seed) {
  if (sigma < 0) throw VolumeError("noise sigma must be >= 0");
  if (sigma == 0) return v;
  Volume out = v;
  for (Eigen::Index i = 0; i < out.data.size(); ++i)
    out.data[i] += sigma * counter_normal(seed, static_cast<std::uint64_t>(i));
  return out;
}

Volume apply_forward_model(const Volume& x, const ForwardModelConfig& cfg, Axis axis) {
  if (cfg.r < 1) throw VolumeError("forward model factor must be >= 1");
  return add_gaussian_noise(downsample_axis(blur_axis(x, cfg.profile, axis), cfg.r, axis), cfg.sigma, cfg.seed);
}

}  // namespace sair
