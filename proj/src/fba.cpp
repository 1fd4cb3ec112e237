#include "sair/fba.hpp"

#include "sair/dataset.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sair {
namespace {

using Complex = std::complex<double>;

// Transforms every line of `data` along `axis` in place.
void transform_axis(Eigen::ArrayXcd& data, Dims d, Axis axis, bool inverse) {
  const int n = d[axis];
  if (n == 1) return;
  const Eigen::Index stride = axis == Axis::X ? static_cast<Eigen::Index>(d.ny) * d.nz : (axis == Axis::Y ? d.nz : 1);
  Eigen::FFT<double> fft;
  std::vector<Complex> in(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
  auto run = [&](Eigen::Index base) {
    for (int i = 0; i < n; ++i) in[i] = data[base + i * stride];
    if (inverse)
      fft.inv(out, in);
    else
      fft.fwd(out, in);
    for (int i = 0; i < n; ++i) data[base + i * stride] = out[i];
  };
  const Eigen::Index sx = static_cast<Eigen::Index>(d.ny) * d.nz, sy = d.nz;
  if (axis == Axis::X) {
    for (int y = 0; y < d.ny; ++y)
      for (int z = 0; z < d.nz; ++z) run(y * sy + z);
  } else if (axis == Axis::Y) {
    for (int x = 0; x < d.nx; ++x)
      for (int z = 0; z < d.nz; ++z) run(x * sx + z);
  } else {
    for (int x = 0; x < d.nx; ++x)
      for (int y = 0; y < d.ny; ++y) run(x * sx + y * sy);
  }
}

// Circular separable Gaussian blur of a real field on the frequency grid.
Eigen::ArrayXd smooth_circular(const Eigen::ArrayXd& field, Dims d, double sigma) {
  const int h = static_cast<int>(std::ceil(3.0 * sigma));
  Eigen::ArrayXd k = Eigen::ArrayXd::LinSpaced(2 * h + 1, -h, h);
  k = (-k.square() / (2.0 * sigma * sigma)).exp();
  k /= k.sum();
  Eigen::ArrayXd cur = field, next(field.size());
  for (Axis axis : {Axis::X, Axis::Y, Axis::Z}) {
    const int n = d[axis];
    const Eigen::Index stride = axis == Axis::X ? static_cast<Eigen::Index>(d.ny) * d.nz : (axis == Axis::Y ? d.nz : 1);
    for (Eigen::Index i = 0; i < cur.size(); ++i) {
      const int pos = static_cast<int>((i / stride) % n);
      const Eigen::Index base = i - static_cast<Eigen::Index>(pos) * stride;
      double acc = 0.0;
      for (int t = -h; t <= h; ++t) acc += k[t + h] * cur[base + (((pos + t) % n + n) % n) * stride];
      next[i] = acc;
    }
    std::swap(cur, next);
  }
  return cur;
}

}  // namespace

Spectrum fft3(const Spectrum& s, bool inverse) {
  Spectrum out = s;
  for (Axis axis : {Axis::X, Axis::Y, Axis::Z}) transform_axis(out.data, out.dims, axis, inverse);
  return out;
}

Spectrum fft3(const Volume& v) { return fft3(Spectrum{v.dims, v.data.cast<Complex>()}, false); }

Spectrum ifft3_complex(const Spectrum& s) { return fft3(s, true); }

Volume ifft3(const Spectrum& s, Spacing spacing) {
  return Volume(s.dims, spacing, ifft3_complex(s).data.real());
}

std::vector<double> EnsembleConfig::angles() const { return training_angles(n_pred); }

void EnsembleConfig::validate() const {
  if (n_pred < 1) throw FusionError("n_pred must be >= 1");
  if (p_exponent != 2) throw FusionError("only p = 2 is supported");
  if (weight_smoothing < 0) throw FusionError("weight smoothing must be >= 0");
}

std::vector<Eigen::ArrayXd> fba_weights(const std::vector<Spectrum>& stack, double weight_smoothing) {
  if (stack.empty()) throw FusionError("empty spectrum stack");
  const Eigen::Index n = stack.front().data.size();
  for (const auto& s : stack)
    if (s.dims != stack.front().dims) throw FusionError("spectrum dims differ");

  std::vector<Eigen::ArrayXd> weights;
  weights.reserve(stack.size());
  Eigen::ArrayXd total = Eigen::ArrayXd::Zero(n);
  for (const auto& s : stack) {
    Eigen::ArrayXd power = s.data.abs2();
    if (weight_smoothing > 0) power = smooth_circular(power, s.dims, weight_smoothing);
    total += power;
    weights.push_back(std::move(power));
  }
  const double uniform = 1.0 / static_cast<double>(stack.size());
  const auto empty = total < 1e-30;
  for (auto& w : weights) w = empty.select(uniform, w / total);
  return weights;
}

Volume fba_fuse(const std::vector<Volume>& preds, const EnsembleConfig& cfg) {
  cfg.validate();
  if (preds.empty()) throw FusionError("no predictions to fuse");
  for (const auto& p : preds)
    if (p.dims != preds.front().dims) throw FusionError("prediction dims differ");
  if (preds.size() == 1) return preds.front();

  std::vector<Spectrum> stack;
  stack.reserve(preds.size());
  for (const auto& p : preds) stack.push_back(fft3(p));
  const auto weights = fba_weights(stack, cfg.weight_smoothing);

  Spectrum fused{preds.front().dims, Eigen::ArrayXcd::Zero(stack.front().data.size())};
  for (std::size_t m = 0; m < stack.size(); ++m) fused.data += weights[m] * stack[m].data;

  const Spectrum back = ifft3_complex(fused);
  double lo = preds.front().data.minCoeff(), hi = preds.front().data.maxCoeff();
  for (const auto& p : preds) {
    lo = std::min(lo, p.data.minCoeff());
    hi = std::max(hi, p.data.maxCoeff());
  }
  const double range = hi > lo ? hi - lo : 1.0;
  const double residue = back.data.imag().abs().maxCoeff();
  if (!(residue < 1e-8 * range)) throw FusionError("fused volume has a non-negligible imaginary part");
  return Volume(back.dims, preds.front().spacing, back.data.real());
}

}  // namespace sair
