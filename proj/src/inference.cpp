#include "sair/inference.hpp"

#include "sair/image.hpp"
#include "sair/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace sair {

void ReconstructionJob::validate() const {
  x_lr.validate_shape();
  if (r < 1) throw VolumeError("r must be >= 1");
  const double ratio = x_lr.resolution_ratio();
  if (std::abs(ratio - r) > 0.1 * r)
    throw VolumeError("r = " + std::to_string(r) + " disagrees with the voxel spacing ratio " + std::to_string(ratio));
  ens_cfg.validate();
}

Volume pad_square(const Volume& v) {
  const int n = std::max(v.dims.nx, v.dims.ny);
  if (v.dims.nx == n && v.dims.ny == n) return v;
  Volume out(Dims{n, n, v.dims.nz}, v.spacing);
  for (int x = 0; x < v.dims.nx; ++x)
    for (int y = 0; y < v.dims.ny; ++y)
      out.data.segment(out.index(x, y, 0), v.dims.nz) = v.data.segment(v.index(x, y, 0), v.dims.nz);
  return out;
}

Volume predict_single_angle(const UNetParams<float>& net, const Volume& x_up, double theta_deg, int threads) {
  if (x_up.dims.nx != x_up.dims.ny) throw VolumeError("prediction volume must be square in-plane");
  Volume rotated = rotate_z(x_up, theta_deg);
  Volume corrected(rotated.dims, rotated.spacing);
  parallel_for(static_cast<std::size_t>(rotated.dims.ny), threads, [&](std::size_t yi) {
    const int y = static_cast<int>(yi);
    const ImageD plane = coronal_slice(rotated, y);
    const ImageF padded = pad_to_even(plane.cast<float>());
    const ImageF residual = unet_residual(net, padded);
    ImageD out = plane + residual.topLeftCorner(plane.rows(), plane.cols()).cast<double>();
    set_coronal_slice(corrected, y, out);
  });
  if (!corrected.all_finite()) throw NetworkError("network produced non-finite output");
  return rotate_z(corrected, -theta_deg);
}

IntensityScale pipeline_scale(const Volume& x_lr, bool normalize) {
  if (!normalize) return {};
  return normalize_intensities(x_lr).second;
}

Volume reconstruct(const ReconstructionJob& job) {
  job.validate();
  const IntensityScale scale = pipeline_scale(job.x_lr, job.normalize);
  const Volume lr = job.normalize ? apply_scale(job.x_lr, scale) : job.x_lr;
  const Volume x_up = upsample_lowres(lr, job.r);
  const Volume square = pad_square(x_up);

  const auto angles = job.ens_cfg.angles();
  std::vector<Volume> preds(angles.size());
  parallel_for(angles.size(), job.threads,
               [&](std::size_t m) { preds[m] = predict_single_angle(job.net, square, angles[m], 1); });
  Volume fused = crop(fba_fuse(preds, job.ens_cfg), x_up.dims);
  if (!fused.all_finite()) throw NetworkError("reconstruction is not finite");
  return job.normalize ? invert_scale(fused, scale) : fused;
}

std::vector<TrainingPair> pipeline_training_set(const Volume& x_lr, const TrainConfig& cfg, bool normalize) {
  const IntensityScale scale = pipeline_scale(x_lr, normalize);
  const Volume lr = normalize ? apply_scale(x_lr, scale) : x_lr;
  TrainConfig unit_cfg = cfg;
  unit_cfg.sigma = cfg.sigma / (scale.high - scale.low);
  return build_training_set(pad_square(upsample_lowres(lr, cfg.r)), unit_cfg);
}

SairResult run_sair(const Volume& x_lr, const SairOptions& opt) {
  const auto pairs = pipeline_training_set(x_lr, opt.train_cfg, opt.normalize);
  if (pairs.empty()) throw VolumeError("no training pairs survived the coverage filter");
  TrainOptions topt = opt.train_opt;
  topt.threads = opt.threads;
  auto [net, report] = train(pairs, topt);

  ReconstructionJob job;
  job.x_lr = x_lr;
  job.r = opt.train_cfg.r;
  job.train_cfg = opt.train_cfg;
  job.ens_cfg = opt.ens_cfg;
  job.net = net;
  job.seed = opt.train_opt.seed;
  job.normalize = opt.normalize;
  job.threads = opt.threads;
  return {reconstruct(job), std::move(report), std::move(net)};
}

}  // namespace sair
