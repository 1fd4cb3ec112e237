#pragma once

#include "sair/volume.hpp"

#include <complex>
#include <stdexcept>
#include <vector>

namespace sair {

/// 3D DFT coefficients in the same (x, y, z) storage order as Volume.
struct Spectrum {
  Dims dims;
  Eigen::ArrayXcd data;
};

/// Unnormalized forward DFT; ifft3 carries the 1/N factor, so sum|v|^2 == sum|V|^2 / N.
Spectrum fft3(const Volume& v);
Spectrum fft3(const Spectrum& s, bool inverse);
/// Inverse DFT; returns the full complex result.
Spectrum ifft3_complex(const Spectrum& s);
/// Inverse DFT keeping the real part.
Volume ifft3(const Spectrum& s, Spacing spacing);

struct EnsembleConfig {
  int n_pred = 15;
  int p_exponent = 2;
  /// Std-dev (in frequency bins) of an optional Gaussian blur of |X_m|^2 before weighting; 0 disables.
  double weight_smoothing = 0.0;

  /// Evenly spaced rotation angles in [0, 180).
  std::vector<double> angles() const;
  void validate() const;
};

class FusionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-frequency weights |X_m|^2 / sum_k |X_k|^2, uniform where the denominator is below 1e-30.
std::vector<Eigen::ArrayXd> fba_weights(const std::vector<Spectrum>& stack, double weight_smoothing = 0.0);

/// Fourier-burst accumulation of co-registered predictions.
Volume fba_fuse(const std::vector<Volume>& preds, const EnsembleConfig& cfg);

}  // namespace sair
