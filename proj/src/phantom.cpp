#include "sair/phantom.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace sair {
namespace {

constexpr double kTransitionVoxels = 1.5;
constexpr double kRidgeVoxels = 1.2;

// C1 step: 0 for t <= -1, 1 for t >= 1.
double smooth_step(double t) {
  if (t <= -1.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double u = 0.5 * (t + 1.0);
  return u * u * (3.0 - 2.0 * u);
}

Eigen::Vector3d normalized(Dims d, int x, int y, int z) {
  auto coord = [](int i, int n) { return n > 1 ? 2.0 * i / (n - 1) - 1.0 : 0.0; };
  return {coord(x, d.nx), coord(y, d.ny), coord(z, d.nz)};
}

double membership(const Ellipsoid& e, const Eigen::Vector3d& p) {
  return smooth_step((1.0 - e.radius(p)) / e.band);
}

double ridge_profile(const Ellipsoid& e, const Eigen::Vector3d& p) {
  return 1.0 - smooth_step(std::abs(e.radius(p) - 1.0) / e.band * 2.0 - 1.0);
}

// Band width in normalized-radius units for a transition spanning `voxels` voxels.
double band_for(const Eigen::Vector3d& semi_axes, Dims d, double voxels) {
  const double voxel = 2.0 / (std::min({d.nx, d.ny, d.nz}) - 1);
  return voxels * voxel / semi_axes.minCoeff();
}

bool in_plateau(const PhantomLayout& layout, const Eigen::Vector3d& p) {
  for (const auto& e : layout.regions) {
    const double r = e.radius(p);
    if (std::abs(1.0 - r) <= e.band) return false;
  }
  for (const auto& e : layout.ridges)
    if (std::abs(e.radius(p) - 1.0) <= e.band) return false;
  return true;
}

double evaluate(const PhantomLayout& layout, double texture_amplitude, const Eigen::Vector3d& p) {
  double v = 0.0;
  for (const auto& e : layout.regions) {
    const double m = membership(e, p);
    v = v * (1.0 - m) + e.level * m;
  }
  const double inside = membership(layout.regions.front(), p);
  for (const auto& e : layout.ridges) v *= 1.0 - e.level * ridge_profile(e, p) * inside;
  if (texture_amplitude > 0.0 && inside > 0.0) {
    double t = 0.0;
    for (const auto& w : layout.waves) t += std::cos(std::numbers::pi * w.head<3>().dot(p) + w[3]);
    t /= std::sqrt(static_cast<double>(layout.waves.size()));
    v += texture_amplitude * inside * t;
  }
  return std::clamp(v, 0.0, 1.0);
}

void validate(const PhantomSpec& spec) {
  if (std::min({spec.dims.nx, spec.dims.ny, spec.dims.nz}) < 16) throw VolumeError("phantom dims must be >= 16");
  if (spec.n_ellipsoids < 3) throw VolumeError("phantom needs at least 3 ellipsoids");
  if (spec.texture_amplitude < 0.0 || spec.texture_amplitude > 0.2)
    throw VolumeError("texture amplitude must lie in [0, 0.2]");
}

}  // namespace

PhantomLayout phantom_layout(const PhantomSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto random_rotation = [&] {
    const Eigen::Quaterniond q(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
    return q.normalized().toRotationMatrix();
  };

  PhantomLayout layout;
  Ellipsoid outer;
  outer.center.setZero();
  outer.semi_axes = {uniform(0.84, 0.9), uniform(0.76, 0.82), uniform(0.8, 0.86)};
  outer.rotation.setIdentity();
  outer.level = 0.3;
  outer.band = band_for(outer.semi_axes, spec.dims, kTransitionVoxels);
  layout.regions.push_back(outer);

  // Distinct plateau levels, shuffled per seed.
  std::vector<double> levels;
  for (int i = 1; i < spec.n_ellipsoids; ++i) levels.push_back(0.1 + 0.85 * i / (spec.n_ellipsoids - 1));
  std::shuffle(levels.begin(), levels.end(), rng);

  for (int i = 1; i < spec.n_ellipsoids; ++i) {
    Ellipsoid e;
    // Inner regions shrink with depth and stay within the outer shell.
    const double scale = 0.62 * std::pow(0.8, i - 1);
    e.semi_axes = {scale * uniform(0.45, 1.0), scale * uniform(0.45, 1.0), scale * uniform(0.45, 1.0)};
    const double room = 0.72 - e.semi_axes.maxCoeff();
    e.center = {uniform(-room, room) * 0.8, uniform(-room, room) * 0.8, uniform(-room, room) * 0.8};
    e.rotation = random_rotation();
    e.level = levels[static_cast<std::size_t>(i - 1)];
    e.band = band_for(e.semi_axes, spec.dims, kTransitionVoxels);
    layout.regions.push_back(e);
  }

  const int n_ridges = 4;
  for (int i = 0; i < n_ridges; ++i) {
    Ellipsoid e;
    const double scale = uniform(0.3, 0.6);
    e.semi_axes = {scale * uniform(0.6, 1.0), scale * uniform(0.6, 1.0), scale * uniform(0.6, 1.0)};
    const double room = 0.7 - e.semi_axes.maxCoeff();
    e.center = {uniform(-room, room), uniform(-room, room), uniform(-room, room)};
    e.rotation = random_rotation();
    e.level = uniform(0.5, 0.8);
    e.band = band_for(e.semi_axes, spec.dims, kRidgeVoxels);
    layout.ridges.push_back(e);
  }

  const int n_waves = 12;
  for (int i = 0; i < n_waves; ++i) {
    // Frequencies in cycles per half-extent; a few voxels per period at n = 96.
    Eigen::Vector3d dir(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
    dir.normalize();
    const double f = uniform(6.0, 16.0);
    layout.waves.emplace_back(f * dir.x(), f * dir.y(), f * dir.z(), uniform(0.0, 2.0 * std::numbers::pi));
  }
  return layout;
}

std::pair<Volume, Mask> generate_phantom(const PhantomSpec& spec) {
  const PhantomLayout layout = phantom_layout(spec);
  Volume v(spec.dims, spec.spacing);
  Mask m(spec.dims);
  for (int x = 0; x < spec.dims.nx; ++x)
    for (int y = 0; y < spec.dims.ny; ++y)
      for (int z = 0; z < spec.dims.nz; ++z) {
        const Eigen::Vector3d p = normalized(spec.dims, x, y, z);
        v(x, y, z) = evaluate(layout, spec.texture_amplitude, p);
        m.data[m.index(x, y, z)] = layout.regions.front().radius(p) <= 1.0;
      }
  return {std::move(v), std::move(m)};
}

Mask plateau_interior(const PhantomSpec& spec) {
  const PhantomLayout layout = phantom_layout(spec);
  const Dims d = spec.dims;
  Mask plateau(d), out(d);
  for (int x = 0; x < d.nx; ++x)
    for (int y = 0; y < d.ny; ++y)
      for (int z = 0; z < d.nz; ++z) plateau.data[plateau.index(x, y, z)] = in_plateau(layout, normalized(d, x, y, z));
  for (int x = 1; x + 1 < d.nx; ++x)
    for (int y = 1; y + 1 < d.ny; ++y)
      for (int z = 1; z + 1 < d.nz; ++z)
        out.data[out.index(x, y, z)] = plateau(x, y, z) && plateau(x - 1, y, z) && plateau(x + 1, y, z) &&
                                       plateau(x, y - 1, z) && plateau(x, y + 1, z) && plateau(x, y, z - 1) &&
                                       plateau(x, y, z + 1);
  return out;
}

}  // namespace sair
