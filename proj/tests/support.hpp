#pragma once

#include "sair/volume.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace sair::test {

inline Volume random_volume(Dims d, std::uint64_t seed, Spacing s = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Volume v(d, s);
  for (auto& x : v.data) x = u(rng);
  return v;
}

inline Volume scaled(Volume v, double alpha) {
  v.data *= alpha;
  return v;
}

inline double max_abs_diff(const Volume& a, const Volume& b) { return (a.data - b.data).abs().maxCoeff(); }

/// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("sair_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace sair::test
