#include "sair/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace sair {

double percentile(const Eigen::ArrayXd& values, double q) {
  if (values.size() == 0) throw VolumeError("percentile of an empty array");
  std::vector<double> sorted(values.data(), values.data() + values.size());
  std::sort(sorted.begin(), sorted.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return sorted[lo] + t * (sorted[hi] - sorted[lo]);
}

std::pair<Volume, IntensityScale> normalize_intensities(const Volume& v) {
  const IntensityScale scale{percentile(v.data, 0.5), percentile(v.data, 99.5)};
  if (!(scale.high > scale.low)) throw VolumeError("cannot normalize: robust intensity range is empty");
  Volume out = apply_scale(v, scale);
  out.data = out.data.max(0.0).min(1.0);
  return {std::move(out), scale};
}

Volume apply_scale(const Volume& v, const IntensityScale& s) {
  Volume out = v;
  out.data = (v.data - s.low) / (s.high - s.low);
  return out;
}

Volume invert_scale(const Volume& unit, const IntensityScale& s) {
  Volume out = unit;
  out.data = s.low + unit.data * (s.high - s.low);
  return out;
}

}  // namespace sair
