#include "sair/sweep.hpp"

#include "sair/dataset.hpp"
#include "sair/inference.hpp"
#include "sair/parallel.hpp"
#include "sair/random.hpp"
#include "sair/version.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

namespace sair {

std::uint64_t cell_noise_seed(const CellConfig& c) {
  return derive_seed(c.seed, 0x6e6f697365ULL + 1000ULL * static_cast<std::uint64_t>(c.r));
}

std::uint64_t cell_train_seed(const CellConfig& c) {
  return derive_seed(c.seed, 0x747261696eULL + 1000ULL * static_cast<std::uint64_t>(c.r));
}

Volume simulate_lowres(const Volume& gt, int r, double sigma, std::uint64_t seed) {
  const ForwardModelConfig fm{r, gaussian_profile(r), sigma, seed};
  return apply_forward_model(gt, fm, Axis::Z);
}

CellResult run_cell(const CellConfig& cfg) {
  CellResult out;
  out.config = cfg;
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto [gt, mask] = generate_phantom(cfg.phantom);
    const Volume lr = simulate_lowres(gt, cfg.r, cfg.sigma, cell_noise_seed(cfg));
    const Volume x_up = upsample_lowres(lr, cfg.r);
    const Dims common{std::min(gt.dims.nx, x_up.dims.nx), std::min(gt.dims.ny, x_up.dims.ny),
                      std::min(gt.dims.nz, x_up.dims.nz)};
    const Volume gt_c = crop(gt, common);
    const Mask mask_c = crop(mask, common);
    out.bicubic = evaluate(crop(x_up, common), gt_c, mask_c);

    SairOptions opt;
    opt.train_cfg.n_train = cfg.n_train;
    opt.train_cfg.r = cfg.r;
    opt.train_cfg.profile = gaussian_profile(cfg.r);
    opt.train_cfg.sigma = cfg.sigma;
    opt.train_cfg.seed = cell_train_seed(cfg);
    opt.ens_cfg.n_pred = cfg.n_pred;
    opt.train_opt = cfg.train;
    opt.train_opt.seed = cell_train_seed(cfg);
    opt.threads = cfg.threads;
    SairResult res = run_sair(lr, opt);
    out.sair = evaluate(crop(res.reconstruction, common), gt_c, mask_c);
    out.report = std::move(res.report);
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

nlohmann::json to_json(const TrainOptions& o) {
  return {{"epochs", o.epochs},
          {"batch_size", o.batch_size},
          {"patch_size", o.patch_size},
          {"pairs_per_epoch", o.pairs_per_epoch},
          {"learning_rate", o.learning_rate},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"epsilon", o.epsilon},
          {"seed", o.seed}};
}

TrainOptions train_options_from_json(const nlohmann::json& j) {
  TrainOptions o;
  o.epochs = j.value("epochs", o.epochs);
  o.batch_size = j.value("batch_size", o.batch_size);
  o.patch_size = j.value("patch_size", o.patch_size);
  o.pairs_per_epoch = j.value("pairs_per_epoch", o.pairs_per_epoch);
  o.learning_rate = j.value("learning_rate", o.learning_rate);
  o.beta1 = j.value("beta1", o.beta1);
  o.beta2 = j.value("beta2", o.beta2);
  o.epsilon = j.value("epsilon", o.epsilon);
  o.seed = j.value("seed", o.seed);
  return o;
}

nlohmann::json to_json(const TrainReport& r) {
  return {{"epoch_loss", r.epoch_loss}, {"final_loss", r.final_loss}, {"epochs_run", r.epochs_run}, {"seed", r.seed}};
}

namespace {

nlohmann::json phantom_json(const PhantomSpec& p) {
  return {{"dims", {p.dims.nx, p.dims.ny, p.dims.nz}},
          {"seed", p.seed},
          {"n_ellipsoids", p.n_ellipsoids},
          {"texture_amplitude", p.texture_amplitude}};
}

}  // namespace

nlohmann::json to_json(const CellConfig& c) {
  return {{"phantom", phantom_json(c.phantom)},
          {"r", c.r},
          {"sigma", c.sigma},
          {"seed", c.seed},
          {"n_train", c.n_train},
          {"n_pred", c.n_pred},
          {"train", to_json(c.train)},
          {"threads", c.threads}};
}

CellConfig cell_from_json(const nlohmann::json& j) {
  CellConfig c;
  const auto& ph = j.at("phantom");
  const auto dims = ph.at("dims").get<std::vector<int>>();
  if (dims.size() != 3) throw std::invalid_argument("phantom dims must have three entries");
  c.phantom.dims = Dims{dims[0], dims[1], dims[2]};
  c.phantom.seed = ph.at("seed").get<std::uint64_t>();
  c.phantom.n_ellipsoids = ph.at("n_ellipsoids").get<int>();
  c.phantom.texture_amplitude = ph.at("texture_amplitude").get<double>();
  c.r = j.at("r").get<int>();
  c.sigma = j.at("sigma").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.n_train = j.at("n_train").get<int>();
  c.n_pred = j.at("n_pred").get<int>();
  c.train = train_options_from_json(j.at("train"));
  c.threads = j.value("threads", 1);
  return c;
}

nlohmann::json to_json(const CellResult& r) {
  auto eval = [](const EvalResult& e) {
    return nlohmann::json{{"mse_db", e.mse_db}, {"ssim", e.ssim}, {"voxels", e.voxels_evaluated}};
  };
  nlohmann::json j{{"tool", "sair"},
                   {"version", kVersion},
                   {"cell", to_json(r.config)},
                   {"ok", r.ok},
                   {"bicubic", eval(r.bicubic)},
                   {"sair", eval(r.sair)},
                   {"wall_seconds", r.wall_seconds},
                   {"train_report", to_json(r.report)}};
  if (!r.ok) j["error"] = r.error;
  return j;
}

void SweepSpec::validate() const {
  if (r_values.empty() || sigma_values.empty() || seeds.empty()) throw std::invalid_argument("sweep lists must be non-empty");
  for (int r : r_values)
    if (r < 1) throw std::invalid_argument("r values must be >= 1");
  for (double s : sigma_values)
    if (s < 0) throw std::invalid_argument("sigma values must be >= 0");
}

std::vector<CellConfig> SweepSpec::cells() const {
  std::vector<CellConfig> out;
  for (int r : r_values)
    for (double sigma : sigma_values)
      for (std::uint64_t seed : seeds) {
        CellConfig c;
        c.phantom = phantom;
        c.r = r;
        c.sigma = sigma;
        c.seed = seed;
        c.n_train = n_train;
        c.n_pred = n_pred;
        c.train = train;
        c.threads = 1;
        out.push_back(c);
      }
  return out;
}

SweepSpec default_resolution_sweep() { return SweepSpec{}; }

SweepSpec default_noise_sweep() {
  SweepSpec s;
  s.kind = SweepKind::noise;
  s.r_values = {3};
  s.sigma_values = {0.035, 0.075, 0.15};
  s.seeds = {0, 1, 2, 3, 4, 5};
  return s;
}

namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

std::string csv_row(const CellResult& r) {
  std::string row = "cell," + std::to_string(r.config.r) + "," + format_number(r.config.sigma) + "," +
                    std::to_string(r.config.seed) + ",";
  if (r.ok) {
    row += format_number(r.bicubic.mse_db) + "," + format_number(r.bicubic.ssim) + "," + format_number(r.sair.mse_db) +
           "," + format_number(r.sair.ssim) + ",";
  } else {
    row += ",,,,";
  }
  row += format_number(r.wall_seconds) + "," + (r.ok ? "ok" : "failed");
  return row;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<std::string> csv_median_rows(const std::vector<CellResult>& results) {
  std::vector<std::pair<int, double>> keys;
  std::map<std::pair<int, double>, std::vector<const CellResult*>> groups;
  for (const auto& r : results) {
    if (!r.ok) continue;
    const auto key = std::make_pair(r.config.r, r.config.sigma);
    if (groups.find(key) == groups.end()) keys.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<std::string> rows;
  for (const auto& key : keys) {
    const auto& g = groups[key];
    auto med = [&](auto field) {
      std::vector<double> v;
      for (const CellResult* r : g) v.push_back(field(*r));
      return format_number(median(v));
    };
    rows.push_back("median," + std::to_string(key.first) + "," + format_number(key.second) + ",," +
                   med([](const CellResult& r) { return r.bicubic.mse_db; }) + "," +
                   med([](const CellResult& r) { return r.bicubic.ssim; }) + "," +
                   med([](const CellResult& r) { return r.sair.mse_db; }) + "," +
                   med([](const CellResult& r) { return r.sair.ssim; }) + "," +
                   med([](const CellResult& r) { return r.wall_seconds; }) + ",n=" + std::to_string(g.size()));
  }
  return rows;
}

std::string cell_name(const CellConfig& c) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "r%d_sigma%.4g_seed%llu", c.r, c.sigma, static_cast<unsigned long long>(c.seed));
  return buf;
}

std::vector<CellResult> run_sweep(const SweepSpec& spec) {
  namespace fs = std::filesystem;
  spec.validate();
  const auto cells = spec.cells();
  fs::create_directories(spec.output_dir / "cells");

  std::vector<CellResult> results(cells.size());
  parallel_for(cells.size(), spec.workers, [&](std::size_t i) {
    results[i] = run_cell(cells[i]);
    std::ofstream(spec.output_dir / "cells" / (cell_name(cells[i]) + ".json")) << to_json(results[i]).dump(2) << '\n';
  });

  {
    std::ofstream csv(spec.output_dir / "results.csv", std::ios::trunc);
    csv << kCsvHeader << "\r\n";
    for (const auto& r : results) csv << csv_row(r) << "\r\n";
    for (const auto& row : csv_median_rows(results)) csv << row << "\r\n";
    if (!csv) throw std::runtime_error("cannot write " + (spec.output_dir / "results.csv").string());
  }

  nlohmann::json manifest{{"tool", "sair"},
                          {"version", kVersion},
                          {"csv_schema", kCsvSchema},
                          {"kind", spec.kind == SweepKind::resolution ? "sweep-r" : "sweep-noise"},
                          {"r_values", spec.r_values},
                          {"sigma_values", spec.sigma_values},
                          {"seeds", spec.seeds},
                          {"n_train", spec.n_train},
                          {"n_pred", spec.n_pred},
                          {"train", to_json(spec.train)},
                          {"phantom", phantom_json(spec.phantom)}};
  nlohmann::json names = nlohmann::json::array();
  for (const auto& c : cells) names.push_back("cells/" + cell_name(c) + ".json");
  manifest["cells"] = names;
  std::ofstream(spec.output_dir / "manifest.json") << manifest.dump(2) << '\n';
  return results;
}

}  // namespace sair
