#pragma once

#include "sair/dataset.hpp"
#include "sair/fba.hpp"
#include "sair/normalize.hpp"
#include "sair/unet.hpp"

#include <cstdint>
#include <utility>

namespace sair {

struct ReconstructionJob {
  Volume x_lr;
  int r = 2;
  TrainConfig train_cfg;
  EnsembleConfig ens_cfg;
  UNetParams<float> net = UNetParams<float>::zeros();
  std::uint64_t seed = 0;
  /// Map X_LR to unit range (0.5/99.5 percentiles) before the network and back afterwards.
  bool normalize = true;
  int threads = 1;

  void validate() const;
};

/// Zero-pads x and y at the far end to a common square extent.
Volume pad_square(const Volume& v);

/// R(-theta) NN(R(theta) x_up), with the network applied to fixed-y planes laid out (z, x).
/// `x_up` must be square in-plane.
Volume predict_single_angle(const UNetParams<float>& net, const Volume& x_up, double theta_deg, int threads = 1);

/// Upsamples X_LR, predicts every ensemble rotation and fuses them by Fourier-burst accumulation.
Volume reconstruct(const ReconstructionJob& job);

struct SairOptions {
  TrainConfig train_cfg;
  EnsembleConfig ens_cfg;
  TrainOptions train_opt;
  bool normalize = true;
  int threads = 1;
};

struct SairResult {
  Volume reconstruction;
  TrainReport report;
  UNetParams<float> net;
};

/// Intensity scale shared by training and prediction for a given X_LR.
IntensityScale pipeline_scale(const Volume& x_lr, bool normalize);

/// Training pairs for X_LR in the pipeline's intensity units; `sigma` in the train config is
/// given in the units of X_LR.
std::vector<TrainingPair> pipeline_training_set(const Volume& x_lr, const TrainConfig& cfg, bool normalize);

/// End-to-end: upsample, build the training set, train, reconstruct.
SairResult run_sair(const Volume& x_lr, const SairOptions& opt);

}  // namespace sair
