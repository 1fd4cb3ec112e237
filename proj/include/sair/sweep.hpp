#pragma once

#include "sair/metrics.hpp"
#include "sair/phantom.hpp"
#include "sair/unet.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sair {

/// One experiment: simulate X_LR from a phantom, run SAIR, score SAIR and bicubic X_up.
struct CellConfig {
  PhantomSpec phantom;
  int r = 4;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  int n_train = 10;
  int n_pred = 15;
  TrainOptions train;
  int threads = 1;
};

struct CellResult {
  CellConfig config;
  EvalResult bicubic;
  EvalResult sair;
  double wall_seconds = 0.0;
  bool ok = true;
  std::string error;
  TrainReport report;
};

/// Seeds derived from the cell seed for noise and training.
std::uint64_t cell_noise_seed(const CellConfig& c);
std::uint64_t cell_train_seed(const CellConfig& c);

/// X_LR = D_z B X + N with a Gaussian slice profile of FWHM r.
Volume simulate_lowres(const Volume& gt, int r, double sigma, std::uint64_t seed);

/// Runs a cell. Failures are reported in the result (ok == false), not thrown.
CellResult run_cell(const CellConfig& cfg);

nlohmann::json to_json(const CellConfig& c);
CellConfig cell_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CellResult& r);
nlohmann::json to_json(const TrainOptions& o);
TrainOptions train_options_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainReport& r);

enum class SweepKind { resolution, noise };

struct SweepSpec {
  SweepKind kind = SweepKind::resolution;
  std::vector<int> r_values{2, 3, 4, 5, 6};
  std::vector<double> sigma_values{0.035};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8};
  PhantomSpec phantom;
  int n_train = 10;
  int n_pred = 15;
  TrainOptions train;
  std::filesystem::path output_dir;
  /// Cells run concurrently; each cell then uses one thread.
  int workers = 1;

  void validate() const;
  std::vector<CellConfig> cells() const;
};

/// Defaults for the r sweep: r in 2..6, sigma 0.035, nine seeds.
SweepSpec default_resolution_sweep();
/// Defaults for the noise sweep: r = 3, sigma in {0.035, 0.075, 0.15}, six seeds.
SweepSpec default_noise_sweep();

inline constexpr const char* kCsvHeader =
    "kind,r,sigma,seed,mse_db_lr,ssim_lr,mse_db_sair,ssim_sair,wall_seconds,status";

std::string csv_row(const CellResult& r);
/// Per-(r, sigma) median rows over the successful cells, in first-appearance order.
std::vector<std::string> csv_median_rows(const std::vector<CellResult>& results);

/// Runs every cell, then writes results.csv, manifest.json and cells/<name>.json into output_dir.
std::vector<CellResult> run_sweep(const SweepSpec& spec);

std::string cell_name(const CellConfig& c);

double median(std::vector<double> values);

}  // namespace sair
