#include "sair/dataset.hpp"
#include "sair/inference.hpp"
#include "sair/metrics.hpp"
#include "sair/nifti.hpp"
#include "sair/parallel.hpp"
#include "sair/phantom.hpp"
#include "sair/sweep.hpp"
#include "sair/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kIo = 3, kDivergence = 4 };

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// SAIR_THREADS caps whatever the user asked for.
int capped_threads(int requested) {
  int n = requested > 0 ? requested : sair::default_thread_count();
  if (const char* env = std::getenv("SAIR_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return std::max(1, n);
}

void write_manifest(const fs::path& out, const std::string& command, json body) {
  body["tool"] = "sair";
  body["version"] = sair::kVersion;
  body["command"] = command;
  fs::path path = out;
  path += ".json";
  std::ofstream f(path);
  f << body.dump(2) << '\n';
  if (!f) throw IoError("cannot write manifest " + path.string());
}

sair::SliceProfile make_profile(const std::string& name, int r) {
  if (name == "gaussian") return sair::gaussian_profile(r);
  if (name == "delta") return sair::delta_profile();
  if (name == "box") return sair::box_profile(r % 2 == 1 ? r : r + 1);
  throw std::invalid_argument("unknown profile '" + name + "' (gaussian, delta, box)");
}

json eval_json(const sair::EvalResult& e) {
  return {{"mse_db", e.mse_db}, {"ssim", e.ssim}, {"voxels", e.voxels_evaluated}};
}

struct PhantomArgs {
  std::string out, mask_out;
  std::vector<int> dims{96, 96, 96};
  std::uint64_t seed = 0;
  int ellipsoids = 6;
  double texture = 0.05;
};

struct SimulateArgs {
  std::string in, out, profile = "gaussian";
  int r = 4;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string in, out, profile = "gaussian";
  int r = 0;
  double sigma = 0.0;
  int n_train = 10;
  sair::TrainOptions opt;
  bool no_normalize = false;
  int threads = 0;
};

struct PredictArgs {
  std::string in, net, out;
  int r = 0;
  int n_pred = 15;
  bool no_normalize = false;
  int threads = 0;
};

struct EvaluateArgs {
  std::string recon, ref, mask, csv;
};

struct SweepArgs {
  std::string out;
  std::vector<int> r_values;
  std::vector<double> sigma_values;
  std::vector<std::uint64_t> seeds;
  std::vector<int> dims{96, 96, 96};
  int epochs = 0;
  int n_pred = 0;
  int workers = 0;
};

struct ReplayArgs {
  std::string cell;
  int threads = 1;
  double tolerance = 1e-9;
};

int cmd_phantom(const PhantomArgs& a) {
  if (a.dims.size() != 3) throw std::invalid_argument("--dims takes three values");
  sair::PhantomSpec spec;
  spec.dims = sair::Dims{a.dims[0], a.dims[1], a.dims[2]};
  spec.seed = a.seed;
  spec.n_ellipsoids = a.ellipsoids;
  spec.texture_amplitude = a.texture;
  const auto [v, mask] = sair::generate_phantom(spec);
  sair::write_nifti(v, a.out);
  if (!a.mask_out.empty()) sair::write_mask_nifti(mask, v.spacing, a.mask_out);
  write_manifest(a.out, "phantom",
                 {{"dims", a.dims}, {"seed", a.seed}, {"n_ellipsoids", a.ellipsoids}, {"texture_amplitude", a.texture},
                  {"mask", a.mask_out}});
  return kOk;
}

int cmd_simulate(const SimulateArgs& a) {
  const sair::Volume gt = sair::read_nifti(a.in);
  const sair::ForwardModelConfig fm{a.r, make_profile(a.profile, a.r), a.sigma, a.seed};
  sair::write_nifti(sair::apply_forward_model(gt, fm, sair::Axis::Z), a.out);
  write_manifest(a.out, "simulate",
                 {{"input", a.in}, {"r", a.r}, {"sigma", a.sigma}, {"seed", a.seed}, {"profile", a.profile}});
  return kOk;
}

int cmd_train(const TrainArgs& a) {
  const sair::Volume lr = sair::read_nifti(a.in);
  const int r = a.r > 0 ? a.r : sair::resolution_ratio(lr.spacing);
  sair::TrainConfig cfg;
  cfg.n_train = a.n_train;
  cfg.r = r;
  cfg.profile = make_profile(a.profile, r);
  cfg.sigma = a.sigma;
  cfg.seed = a.opt.seed;
  const auto pairs = sair::pipeline_training_set(lr, cfg, !a.no_normalize);
  if (pairs.empty()) throw std::invalid_argument("no training pairs survived the coverage filter");
  sair::TrainOptions opt = a.opt;
  opt.threads = capped_threads(a.threads);
  auto [net, report] = sair::train(pairs, opt, [](int epoch, double loss) {
    std::fprintf(stderr, "epoch %d loss %.6g\n", epoch + 1, loss);
  });
  sair::save_checkpoint(net, a.out);
  write_manifest(a.out, "train",
                 {{"input", a.in},
                  {"r", r},
                  {"sigma", a.sigma},
                  {"n_train", a.n_train},
                  {"profile", a.profile},
                  {"normalize", !a.no_normalize},
                  {"pairs", pairs.size()},
                  {"train", sair::to_json(a.opt)},
                  {"report", sair::to_json(report)}});
  return kOk;
}

int cmd_predict(const PredictArgs& a) {
  sair::ReconstructionJob job;
  job.x_lr = sair::read_nifti(a.in);
  job.r = a.r > 0 ? a.r : sair::resolution_ratio(job.x_lr.spacing);
  job.ens_cfg.n_pred = a.n_pred;
  job.net = sair::load_checkpoint(a.net);
  job.normalize = !a.no_normalize;
  job.threads = capped_threads(a.threads);
  sair::write_nifti(sair::reconstruct(job), a.out);
  write_manifest(a.out, "predict",
                 {{"input", a.in}, {"net", a.net}, {"r", job.r}, {"n_pred", a.n_pred}, {"normalize", job.normalize}});
  return kOk;
}

int cmd_evaluate(const EvaluateArgs& a) {
  const sair::Volume recon = sair::read_nifti(a.recon), ref = sair::read_nifti(a.ref);
  sair::Mask mask = a.mask.empty() ? sair::Mask(ref.dims, true) : sair::read_mask_nifti(a.mask);
  if (mask.dims != ref.dims) throw std::invalid_argument("mask and reference dims differ");
  // Reconstructions of extents that are not a multiple of r come out a few slices short.
  const sair::Dims common{std::min(recon.dims.nx, ref.dims.nx), std::min(recon.dims.ny, ref.dims.ny),
                          std::min(recon.dims.nz, ref.dims.nz)};
  const sair::EvalResult e =
      sair::evaluate(sair::crop(recon, common), sair::crop(ref, common), sair::crop(mask, common));
  char row[256];
  std::snprintf(row, sizeof(row), "%s,%.12g,%.12g,%lld", a.recon.c_str(), e.mse_db, e.ssim,
                static_cast<long long>(e.voxels_evaluated));
  const std::string header = "volume,mse_db,ssim,voxels";
  if (a.csv.empty()) {
    std::cout << header << "\r\n" << row << "\r\n";
  } else {
    const bool fresh = !fs::exists(a.csv);
    std::ofstream f(a.csv, std::ios::app | std::ios::binary);
    if (fresh) f << header << "\r\n";
    f << row << "\r\n";
    if (!f) throw IoError("cannot write " + a.csv);
  }
  return kOk;
}

int cmd_sweep(const SweepArgs& a, sair::SweepSpec spec) {
  if (!a.r_values.empty()) spec.r_values = a.r_values;
  if (!a.sigma_values.empty()) spec.sigma_values = a.sigma_values;
  if (!a.seeds.empty()) spec.seeds = a.seeds;
  if (a.dims.size() != 3) throw std::invalid_argument("--dims takes three values");
  spec.phantom.dims = sair::Dims{a.dims[0], a.dims[1], a.dims[2]};
  if (a.epochs > 0) spec.train.epochs = a.epochs;
  if (a.n_pred > 0) spec.n_pred = a.n_pred;
  spec.workers = capped_threads(a.workers);
  spec.output_dir = a.out;
  const auto results = sair::run_sweep(spec);
  std::cout << sair::kCsvHeader << '\n';
  for (const auto& r : results) std::cout << sair::csv_row(r) << '\n';
  for (const auto& row : sair::csv_median_rows(results)) std::cout << row << '\n';
  return kOk;
}

int cmd_replay(const ReplayArgs& a) {
  json stored;
  {
    std::ifstream f(a.cell);
    if (!f) throw IoError("cannot read " + a.cell);
    f >> stored;
  }
  sair::CellConfig cfg = sair::cell_from_json(stored.at("cell"));
  cfg.threads = capped_threads(a.threads);
  const sair::CellResult again = sair::run_cell(cfg);
  if (!again.ok) throw std::runtime_error(again.error);
  double worst = 0.0;
  for (const char* method : {"bicubic", "sair"}) {
    const sair::EvalResult& e = std::string(method) == "sair" ? again.sair : again.bicubic;
    worst = std::max(worst, std::abs(e.mse_db - stored[method]["mse_db"].get<double>()));
    worst = std::max(worst, std::abs(e.ssim - stored[method]["ssim"].get<double>()));
  }
  const json out{{"cell", a.cell},
                 {"threads", cfg.threads},
                 {"bicubic", eval_json(again.bicubic)},
                 {"sair", eval_json(again.sair)},
                 {"max_abs_diff", worst},
                 {"tolerance", a.tolerance},
                 {"reproduced", worst <= a.tolerance}};
  std::cout << out.dump(2) << '\n';
  return worst <= a.tolerance ? kOk : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised superresolution of anisotropic volumes"};
  app.set_version_flag("--version", std::string(sair::kVersion));
  app.require_subcommand(1);

  PhantomArgs ph;
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic ground-truth volume and mask");
  phantom->add_option("--out", ph.out, "Output NIfTI")->required();
  phantom->add_option("--mask-out", ph.mask_out, "Output mask NIfTI");
  phantom->add_option("--dims", ph.dims, "nx ny nz")->expected(3);
  phantom->add_option("--seed", ph.seed);
  phantom->add_option("--ellipsoids", ph.ellipsoids)->check(CLI::Range(3, 64));
  phantom->add_option("--texture", ph.texture)->check(CLI::Range(0.0, 0.2));

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Blur, decimate and add noise along z");
  simulate->add_option("--in", sim.in, "Ground-truth NIfTI")->required();
  simulate->add_option("--out", sim.out, "Output low-resolution NIfTI")->required();
  simulate->add_option("--r", sim.r, "Decimation factor")->check(CLI::PositiveNumber);
  simulate->add_option("--sigma", sim.sigma, "Noise std-dev")->check(CLI::NonNegativeNumber);
  simulate->add_option("--seed", sim.seed);
  simulate->add_option("--profile", sim.profile, "gaussian | delta | box");

  TrainArgs tr;
  auto* trainc = app.add_subcommand("train", "Train the network on pairs synthesized from a low-resolution volume");
  trainc->add_option("--in", tr.in, "Low-resolution NIfTI")->required();
  trainc->add_option("--out", tr.out, "Output checkpoint")->required();
  trainc->add_option("--r", tr.r, "Resolution ratio (default: from voxel spacing)");
  trainc->add_option("--sigma", tr.sigma, "Noise std-dev added to training inputs")->check(CLI::NonNegativeNumber);
  trainc->add_option("--profile", tr.profile, "gaussian | delta | box");
  trainc->add_option("--n-train", tr.n_train, "Training rotations")->check(CLI::PositiveNumber);
  trainc->add_option("--epochs", tr.opt.epochs)->check(CLI::PositiveNumber);
  trainc->add_option("--batch", tr.opt.batch_size)->check(CLI::PositiveNumber);
  trainc->add_option("--patch", tr.opt.patch_size, "Crop side, 0 for full slices")->check(CLI::NonNegativeNumber);
  trainc->add_option("--pairs-per-epoch", tr.opt.pairs_per_epoch, "0 for all pairs")->check(CLI::NonNegativeNumber);
  trainc->add_option("--lr", tr.opt.learning_rate)->check(CLI::PositiveNumber);
  trainc->add_option("--seed", tr.opt.seed);
  trainc->add_flag("--no-normalize", tr.no_normalize);
  trainc->add_option("--threads", tr.threads);

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "Reconstruct a low-resolution volume with a trained network");
  predict->add_option("--in", pr.in, "Low-resolution NIfTI")->required();
  predict->add_option("--net", pr.net, "Checkpoint")->required();
  predict->add_option("--out", pr.out, "Output NIfTI")->required();
  predict->add_option("--r", pr.r, "Resolution ratio (default: from voxel spacing)");
  predict->add_option("--n-pred", pr.n_pred, "Ensemble rotations")->check(CLI::PositiveNumber);
  predict->add_flag("--no-normalize", pr.no_normalize);
  predict->add_option("--threads", pr.threads);

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Masked MSE (dB) and SSIM against a reference");
  evaluate->add_option("--recon", ev.recon)->required();
  evaluate->add_option("--ref", ev.ref)->required();
  evaluate->add_option("--mask", ev.mask);
  evaluate->add_option("--csv", ev.csv, "Append the row to this CSV instead of stdout");

  SweepArgs sw_r, sw_n;
  auto add_sweep = [&](const char* name, const char* help, SweepArgs& s) {
    auto* c = app.add_subcommand(name, help);
    c->add_option("--out", s.out, "Output directory")->required();
    c->add_option("--r", s.r_values, "Resolution ratios");
    c->add_option("--sigma", s.sigma_values, "Noise levels");
    c->add_option("--seeds", s.seeds, "Noise/training seeds");
    c->add_option("--dims", s.dims, "Phantom nx ny nz")->expected(3);
    c->add_option("--epochs", s.epochs);
    c->add_option("--n-pred", s.n_pred);
    c->add_option("--workers", s.workers, "Concurrent cells");
    return c;
  };
  auto* sweep_r = add_sweep("sweep-r", "SAIR vs bicubic over resolution ratios", sw_r);
  auto* sweep_n = add_sweep("sweep-noise", "SAIR vs bicubic over noise levels at r = 3", sw_n);

  ReplayArgs rp;
  auto* replay = app.add_subcommand("replay", "Rerun a sweep cell from its manifest and compare metrics");
  replay->add_option("--cell", rp.cell, "cells/<name>.json")->required();
  replay->add_option("--threads", rp.threads);
  replay->add_option("--tolerance", rp.tolerance);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*phantom) return cmd_phantom(ph);
    if (*simulate) return cmd_simulate(sim);
    if (*trainc) return cmd_train(tr);
    if (*predict) return cmd_predict(pr);
    if (*evaluate) return cmd_evaluate(ev);
    if (*sweep_r) return cmd_sweep(sw_r, sair::default_resolution_sweep());
    if (*sweep_n) return cmd_sweep(sw_n, sair::default_noise_sweep());
    if (*replay) return cmd_replay(rp);
  } catch (const sair::DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDivergence;
  } catch (const sair::NetworkError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDivergence;
  } catch (const sair::NiftiError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
