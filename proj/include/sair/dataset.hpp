#pragma once

#include "sair/image.hpp"
#include "sair/operators.hpp"
#include "sair/volume.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace sair {

/// Co-registered 2D training example; rows of both images run along the degraded axis.
struct TrainingPair {
  ImageD input;
  ImageD target;
  double theta_deg = 0.0;
  int slice = 0;
};

struct TrainConfig {
  int n_train = 10;
  int r = 2;
  SliceProfile profile = delta_profile();
  double sigma = 0.0;
  std::uint64_t seed = 0;
  /// Minimum fraction of in-field (non zero-filled) pixels for a slice to be kept.
  double min_coverage = 0.5;

  void validate() const;
};

/// r = round(dz / dx).
int resolution_ratio(const Spacing& s);

/// Bicubic upsampling of the thick-slice axis: X_up = U_z X_LR.
Volume upsample_lowres(const Volume& x_lr, int r);

/// theta_i = i * 180 / n for i = 0..n-1.
std::vector<double> training_angles(int n);

/// Seed used for the noise realization of rotation `angle_index`.
std::uint64_t rotation_seed(std::uint64_t seed, int angle_index);

/// Degraded counterpart of one rotated volume: U_x(D_x B~ V + N), same grid as `rotated` up to
/// the truncation of the x extent to a multiple of r.
Volume degrade_along_x(const Volume& rotated, const TrainConfig& cfg, std::uint64_t noise_seed);

/// Self-supervised pairs from every rotation of `x_up` (which must have nx == ny).
/// Images are cropped to the largest even extent shared by input and target.
std::vector<TrainingPair> build_training_set(const Volume& x_up, const TrainConfig& cfg);

/// Debug dump: one directory per angle holding input/target slices as single-slice NIfTI files.
void dump_training_set(const std::vector<TrainingPair>& pairs, const std::filesystem::path& dir);

}  // namespace sair
