#include "sair/dataset.hpp"

#include "sair/nifti.hpp"
#include "sair/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace sair {

void TrainConfig::validate() const {
  if (n_train < 1) throw VolumeError("n_train must be >= 1");
  if (r < 1) throw VolumeError("r must be >= 1");
  if (sigma < 0) throw VolumeError("sigma must be >= 0");
  profile.validate();
}

int resolution_ratio(const Spacing& s) { return static_cast<int>(std::lround(s.dz / s.dx)); }

Volume upsample_lowres(const Volume& x_lr, int r) { return upsample_axis_bicubic(x_lr, r, Axis::Z); }

std::vector<double> training_angles(int n) {
  if (n < 1) throw VolumeError("number of angles must be >= 1");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[i] = 180.0 * i / n;
  return out;
}

std::uint64_t rotation_seed(std::uint64_t seed, int angle_index) {
  return derive_seed(seed, static_cast<std::uint64_t>(angle_index));
}

Volume degrade_along_x(const Volume& rotated, const TrainConfig& cfg, std::uint64_t noise_seed) {
  const ForwardModelConfig fm{cfg.r, cfg.profile, cfg.sigma, noise_seed};
  return upsample_axis_bicubic(apply_forward_model(rotated, fm, Axis::X), cfg.r, Axis::X);
}

std::vector<TrainingPair> build_training_set(const Volume& x_up, const TrainConfig& cfg) {
  cfg.validate();
  if (x_up.dims.nx != x_up.dims.ny) throw VolumeError("training volume must be square in-plane");
  const auto angles = training_angles(cfg.n_train);
  std::vector<TrainingPair> pairs;
  for (int a = 0; a < cfg.n_train; ++a) {
    const double theta = angles[a];
    const Volume rotated = rotate_z(x_up, theta);
    const Mask valid = rotation_valid_mask(x_up.dims, theta);
    const Volume degraded = degrade_along_x(rotated, cfg, rotation_seed(cfg.seed, a));

    int ex = std::min(rotated.dims.nx, degraded.dims.nx);
    int ey = rotated.dims.ny;
    ex -= ex % 2;
    ey -= ey % 2;
    const double plane = static_cast<double>(x_up.dims.nx) * x_up.dims.ny;
    for (int z = 0; z < x_up.dims.nz; ++z) {
      Eigen::Index covered = 0;
      for (int x = 0; x < x_up.dims.nx; ++x)
        for (int y = 0; y < x_up.dims.ny; ++y) covered += valid(x, y, z);
      if (covered / plane < cfg.min_coverage) continue;
      TrainingPair p;
      p.input = axial_slice(degraded, z).topLeftCorner(ex, ey);
      p.target = axial_slice(rotated, z).topLeftCorner(ex, ey);
      p.theta_deg = theta;
      p.slice = z;
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

void dump_training_set(const std::vector<TrainingPair>& pairs, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  for (const auto& p : pairs) {
    char name[32];
    std::snprintf(name, sizeof(name), "theta_%07.3f", p.theta_deg);
    const fs::path sub = dir / name;
    fs::create_directories(sub);
    auto as_volume = [](const ImageD& img) {
      Volume v(Dims{static_cast<int>(img.rows()), static_cast<int>(img.cols()), 1}, Spacing{});
      set_axial_slice(v, 0, img);
      return v;
    };
    const std::string stem = "slice_" + std::to_string(p.slice);
    write_nifti(as_volume(p.input), sub / (stem + "_input.nii"));
    write_nifti(as_volume(p.target), sub / (stem + "_target.nii"));
  }
}

}  // namespace sair
