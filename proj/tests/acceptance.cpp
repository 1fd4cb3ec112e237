// Acceptance run: one PASS/FAIL line per criterion.
//   acceptance --fast        criteria 1-4 (seconds)
//   acceptance --e2e --out D criteria 5-8 (hours on one core); cell manifests and a CSV go to D

#include "sair/fba.hpp"
#include "sair/image.hpp"
#include "sair/metrics.hpp"
#include "sair/operators.hpp"
#include "sair/parallel.hpp"
#include "sair/sweep.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <string>

namespace fs = std::filesystem;
using namespace sair;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

Volume random_volume(Dims d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Volume v(d, Spacing{});
  for (auto& x : v.data) x = u(rng);
  return v;
}

double max_diff(const Volume& a, const Volume& b) { return (a.data - b.data).abs().maxCoeff(); }

void criterion_operators() {
  const auto t0 = Clock::now();
  const Volume v = random_volume(Dims{24, 24, 24}, 1);

  double dc = 0.0;
  const Volume c = Volume::constant(Dims{20, 20, 20}, Spacing{}, 0.73);
  for (int r = 2; r <= 6; ++r)
    for (Axis a : {Axis::X, Axis::Y, Axis::Z})
      dc = std::max(dc, (blur_axis(c, gaussian_profile(r), a).data - 0.73).abs().maxCoeff());

  bool on_grid = true;
  for (int r = 2; r <= 6; ++r)
    for (Axis a : {Axis::X, Axis::Y, Axis::Z}) {
      const Volume coarse = downsample_axis(v, r, a);
      on_grid = on_grid && (downsample_axis(upsample_axis_bicubic(coarse, r, a), r, a).data == coarse.data).all();
    }
  const Volume d4 = downsample_axis(v, 4, Axis::Z);
  for (int x = 0; x < 24; ++x)
    for (int y = 0; y < 24; ++y)
      for (int z = 0; z < d4.dims.nz; ++z) on_grid = on_grid && d4(x, y, z) == v(x, y, 4 * z);

  const double rot0 = max_diff(rotate_z(v, 0.0), v);
  const Volume r90 = rotate_z(v, 90.0);
  double rot90 = 0.0;
  for (int x = 1; x < 23; ++x)
    for (int y = 1; y < 23; ++y)
      for (int z = 0; z < 24; ++z) rot90 = std::max(rot90, std::abs(r90(x, y, z) - v(y, 23 - x, z)));

  double equiv = 0.0;
  for (int r = 2; r <= 6; ++r) {
    const ForwardModelConfig cfg{r, gaussian_profile(r), 0.0, 0};
    equiv = std::max(equiv, max_diff(apply_forward_model(v, cfg, Axis::X),
                                     permute_xz(apply_forward_model(permute_xz(v), cfg, Axis::Z))));
  }
  const double secs = seconds_since(t0);
  report(1, dc < 1e-12 && on_grid && rot0 < 1e-6 && rot90 < 1e-6 && equiv < 1e-12 && secs < 60,
         fmt("blur DC dev %.2e, on-grid identities %s, rot0 %.2e, rot90 %.2e, permutation %.2e, %.1f s", dc,
             on_grid ? "exact" : "BROKEN", rot0, rot90, equiv, secs));
}

void criterion_gradients() {
  const auto t0 = Clock::now();
  double worst_generic = 0.0, worst_linear = 0.0;
  std::string worst_layer;
  int layers = 0;
  // Generic weights with mixed ReLU states; small step so no kink lies inside [x - h, x + h].
  for (const auto& row : test::gradient_check(test::gradcheck_params(21), test::gradcheck_batch(28), 21, 1e-6)) {
    if (row.max_rel_err >= worst_generic) worst_layer = row.layer;
    worst_generic = std::max(worst_generic, row.max_rel_err);
    ++layers;
  }
  // All units active, ramp inputs: the loss is exactly quadratic along each probe, any step works.
  for (const auto& row : test::gradient_check(test::active_params(21), test::ramp_batch(28), 21, 1e-3))
    worst_linear = std::max(worst_linear, row.max_rel_err);
  const double secs = seconds_since(t0);
  report(2, worst_generic < 1e-4 && worst_linear < 1e-4 && secs < 120,
         fmt("%d parameter groups, max rel err %.2e (h=1e-6, worst %s), %.2e (h=1e-3, kink-free net), %.1f s", layers,
             worst_generic, worst_layer.c_str(), worst_linear, secs));
}

void criterion_fba() {
  const auto t0 = Clock::now();
  EnsembleConfig cfg;
  const Volume v = random_volume(Dims{16, 16, 16}, 2);
  cfg.n_pred = 15;
  const double fixed = max_diff(fba_fuse(std::vector<Volume>(15, v), cfg), v);

  std::vector<Spectrum> stack;
  for (int m = 0; m < 15; ++m) stack.push_back(fft3(random_volume(Dims{12, 10, 8}, 100 + m)));
  const auto w = fba_weights(stack);
  Eigen::ArrayXd total = Eigen::ArrayXd::Zero(w[0].size());
  for (const auto& wm : w) total += wm;
  const double sum_dev = (total - 1.0).abs().maxCoeff();

  const int n = 32;
  Volume a(Dims{n, n, n}, Spacing{}), b(Dims{n, n, n}, Spacing{});
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z) {
        a(x, y, z) = 0.8 * std::cos(2 * std::numbers::pi * 5 * x / n);
        b(x, y, z) = 0.3 * std::sin(2 * std::numbers::pi * 7 * (y + z) / n);
      }
  cfg.n_pred = 2;
  Volume both = a;
  both.data += b.data;
  const double sines = max_diff(fba_fuse({a, b}, cfg), both);
  const double secs = seconds_since(t0);
  report(3, fixed < 1e-9 && sum_dev < 1e-12 && sines < 1e-8 && secs < 30,
         fmt("identical members %.2e, weight sum dev %.2e, disjoint sinusoids %.2e, %.1f s", fixed, sum_dev, sines,
             secs));
}

void criterion_metrics() {
  std::mt19937_64 rng(4);
  std::bernoulli_distribution keep(0.7);
  double ssim_err = 0.0, mse_err = 0.0;
  for (int t = 0; t < 50; ++t) {
    const test::Plane pa = test::random_plane(8, 8, rng), pb = test::random_plane(8, 8, rng);
    Volume a(Dims{8, 8, 1}, Spacing{}), b = a;
    Mask m(a.dims);
    std::vector<double> fa, fb;
    std::vector<bool> flags;
    for (int x = 0; x < 8; ++x)
      for (int y = 0; y < 8; ++y) {
        a(x, y, 0) = pa[x][y];
        b(x, y, 0) = pb[x][y];
        const bool k = (x == 0 && y == 0) || keep(rng);
        m.data[m.index(x, y, 0)] = k;
        fa.push_back(pa[x][y]);
        fb.push_back(pb[x][y]);
        flags.push_back(k);
      }
    const test::Plane ref = test::direct_ssim_map(pa, pb);
    double masked_ref = 0.0;
    int count = 0;
    for (int x = 0; x < 8; ++x)
      for (int y = 0; y < 8; ++y)
        if (flags[x * 8 + y]) {
          masked_ref += ref[x][y];
          ++count;
        }
    ssim_err = std::max(ssim_err, std::abs(ssim_masked(a, b, m) - masked_ref / count));
    mse_err = std::max(mse_err, std::abs(mse_db(a, b, m) - test::direct_mse_db(fa, fb, flags)));
  }
  const Volume x = random_volume(Dims{16, 16, 4}, 5);
  const double self = std::abs(ssim_masked(x, x, Mask(x.dims, true)) - 1.0);
  report(4, ssim_err < 1e-8 && mse_err < 1e-12 && self < 1e-12,
         fmt("50 random 8x8 instances: SSIM max dev %.2e, MSE dB max dev %.2e; |ssim(x,x) - 1| = %.1e", ssim_err,
             mse_err, self));
}

// ---- end-to-end ----

struct Key {
  int r;
  double sigma;
  auto operator<=>(const Key&) const = default;
};

struct Medians {
  double ssim_sair, ssim_bicubic, gain, mse_sair, mse_bicubic;
  int n;
};

Medians medians(const std::vector<CellResult>& cells) {
  std::vector<double> s, b, g, ms, mb;
  for (const auto& c : cells) {
    if (!c.ok) continue;
    s.push_back(c.sair.ssim);
    b.push_back(c.bicubic.ssim);
    g.push_back(c.sair.ssim - c.bicubic.ssim);
    ms.push_back(c.sair.mse_db);
    mb.push_back(c.bicubic.mse_db);
  }
  if (s.empty()) return {NAN, NAN, NAN, NAN, NAN, 0};
  return {median(s), median(b), median(g), median(ms), median(mb), static_cast<int>(s.size())};
}

bool all_ok(const std::vector<CellResult>& cells, std::size_t expected) {
  if (cells.size() != expected) return false;
  for (const auto& c : cells)
    if (!c.ok) return false;
  return true;
}

void run_e2e(const fs::path& out, int workers) {
  fs::create_directories(out / "cells");
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  const double base_sigma = 0.035;
  std::vector<CellConfig> cells;
  auto add = [&](int r, double sigma) {
    for (auto s : seeds) {
      CellConfig c;
      c.r = r;
      c.sigma = sigma;
      c.seed = s;
      cells.push_back(c);
    }
  };
  for (int r = 2; r <= 6; ++r) add(r, base_sigma);
  add(3, 0.075);
  add(3, 0.15);

  std::printf("running %zu cells on %d worker(s)\n", cells.size(), workers);
  std::fflush(stdout);
  const auto t0 = Clock::now();
  std::vector<CellResult> results(cells.size());
  parallel_for(cells.size(), workers, [&](std::size_t i) {
    results[i] = run_cell(cells[i]);
    std::ofstream(out / "cells" / (cell_name(cells[i]) + ".json")) << to_json(results[i]).dump(2) << '\n';
    std::printf("  %s\n", csv_row(results[i]).c_str());
    std::fflush(stdout);
  });
  const double total_secs = seconds_since(t0);
  {
    std::ofstream csv(out / "results.csv", std::ios::binary);
    csv << kCsvHeader << "\r\n";
    for (const auto& r : results) csv << csv_row(r) << "\r\n";
    for (const auto& row : csv_median_rows(results)) csv << row << "\r\n";
  }

  std::map<Key, std::vector<CellResult>> by;
  std::map<Key, double> secs;
  for (const auto& r : results) {
    by[{r.config.r, r.config.sigma}].push_back(r);
    secs[{r.config.r, r.config.sigma}] += r.wall_seconds;
  }

  // 5: r = 4.
  {
    const auto& g = by[{4, base_sigma}];
    const Medians m = medians(g);
    report(5, all_ok(g, 3) && m.gain >= 0.02 && m.mse_sair < m.mse_bicubic,
           fmt("r=4 sigma=%.3g, %d seeds: median SSIM gain %+.4f (SAIR %.4f vs bicubic %.4f), median MSE %.2f dB vs "
               "%.2f dB, %.0f s",
               base_sigma, m.n, m.gain, m.ssim_sair, m.ssim_bicubic, m.mse_sair, m.mse_bicubic,
               secs[{4, base_sigma}]));
  }
  // 6: r sweep.
  {
    bool ok = true, decreasing = true, above = true;
    double prev = INFINITY, sweep_secs = 0.0;
    std::string detail = "median SSIM SAIR/bicubic:";
    for (int r = 2; r <= 6; ++r) {
      const auto& g = by[{r, base_sigma}];
      const Medians m = medians(g);
      ok = ok && all_ok(g, 3);
      decreasing = decreasing && m.ssim_sair < prev;
      above = above && m.ssim_sair > m.ssim_bicubic;
      prev = m.ssim_sair;
      sweep_secs += secs[{r, base_sigma}];
      detail += fmt(" r=%d %.4f/%.4f", r, m.ssim_sair, m.ssim_bicubic);
    }
    detail += fmt("; strictly decreasing: %s, above bicubic at every r: %s, %.0f s", decreasing ? "yes" : "no",
                  above ? "yes" : "no", sweep_secs);
    report(6, ok && decreasing && above, detail);
  }
  // 7: noise levels at r = 3.
  {
    bool ok = true, decreasing = true;
    double prev = INFINITY, noise_secs = 0.0;
    std::string detail = "r=3 median SSIM SAIR:";
    for (double s : {0.035, 0.075, 0.15}) {
      const auto& g = by[{3, s}];
      const Medians m = medians(g);
      ok = ok && all_ok(g, 3);
      decreasing = decreasing && m.ssim_sair < prev;
      prev = m.ssim_sair;
      noise_secs += secs[{3, s}];
      detail += fmt(" sigma=%.3g %.4f (bicubic %.4f)", s, m.ssim_sair, m.ssim_bicubic);
    }
    detail += fmt("; strictly decreasing: %s, %.0f s", decreasing ? "yes" : "no", noise_secs);
    report(7, ok && decreasing, detail);
  }
  // 8: rerun a stored manifest at one and at two threads.
  {
    const fs::path manifest = out / "cells" / (cell_name(cells[6]) + ".json");  // r = 4, seed 0
    nlohmann::json stored;
    std::ifstream(manifest) >> stored;
    auto deviation = [&](int threads) -> double {
      CellConfig c = cell_from_json(stored.at("cell"));
      c.threads = threads;
      const CellResult again = run_cell(c);
      if (!again.ok) return INFINITY;
      double d = 0.0;
      for (const char* k : {"bicubic", "sair"}) {
        const EvalResult& e = std::string(k) == "sair" ? again.sair : again.bicubic;
        d = std::max(d, std::abs(e.ssim - stored[k]["ssim"].get<double>()));
        d = std::max(d, std::abs(e.mse_db - stored[k]["mse_db"].get<double>()));
      }
      return d;
    };
    const double one = deviation(1), two = deviation(2);
    report(8, one <= 1e-9 && two <= 1e-6,
           fmt("rerun of %s: max metric deviation %.2e at 1 thread, %.2e at 2 threads",
               manifest.filename().string().c_str(), one, two));
  }
  std::printf("end-to-end cells: %.0f s total\n", total_secs);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  bool fast = false, e2e = false;
  std::string out = "acceptance_out";
  int workers = 0;
  app.add_flag("--fast", fast, "Criteria 1-4");
  app.add_flag("--e2e", e2e, "Criteria 5-8");
  app.add_option("--out", out, "Directory for end-to-end outputs");
  app.add_option("--workers", workers, "Concurrent cells (default: SAIR_THREADS or hardware)");
  CLI11_PARSE(app, argc, argv);
  if (!fast && !e2e) fast = e2e = true;

  try {
    if (fast) {
      criterion_operators();
      criterion_gradients();
      criterion_fba();
      criterion_metrics();
    }
    if (e2e) run_e2e(out, workers > 0 ? workers : default_thread_count());
  } catch (const std::exception& e) {
    std::printf("FAIL: unexpected error: %s\n", e.what());
    return 1;
  }
  return failures == 0 ? 0 : 1;
}
