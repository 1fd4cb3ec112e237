#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace sair {

enum class Axis { X = 0, Y = 1, Z = 2 };

struct Dims {
  int nx = 0, ny = 0, nz = 0;

  int operator[](Axis a) const { return a == Axis::X ? nx : (a == Axis::Y ? ny : nz); }
  int& operator[](Axis a) { return a == Axis::X ? nx : (a == Axis::Y ? ny : nz); }
  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  bool operator==(const Dims&) const = default;
};

struct Spacing {
  double dx = 1.0, dy = 1.0, dz = 1.0;

  double operator[](Axis a) const { return a == Axis::X ? dx : (a == Axis::Y ? dy : dz); }
  double& operator[](Axis a) { return a == Axis::X ? dx : (a == Axis::Y ? dy : dz); }
  bool operator==(const Spacing&) const = default;
};

class VolumeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense 3D scalar field. Storage is row-major in (x, y, z): z varies fastest.
struct Volume {
  Dims dims;
  Spacing spacing;
  Eigen::ArrayXd data;

  Volume() = default;
  Volume(Dims d, Spacing s) : dims(d), spacing(s), data(Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(d.count()))) {
    validate_shape();
  }
  Volume(Dims d, Spacing s, Eigen::ArrayXd values) : dims(d), spacing(s), data(std::move(values)) {
    validate_shape();
  }

  static Volume constant(Dims d, Spacing s, double value) {
    Volume v(d, s);
    v.data.setConstant(value);
    return v;
  }

  Eigen::Index index(int x, int y, int z) const {
    return (static_cast<Eigen::Index>(x) * dims.ny + y) * dims.nz + z;
  }
  double operator()(int x, int y, int z) const { return data[index(x, y, z)]; }
  double& operator()(int x, int y, int z) { return data[index(x, y, z)]; }

  /// Stride of one step along `a` in the linear storage.
  Eigen::Index stride(Axis a) const {
    switch (a) {
      case Axis::X: return static_cast<Eigen::Index>(dims.ny) * dims.nz;
      case Axis::Y: return dims.nz;
      default: return 1;
    }
  }

  double resolution_ratio() const { return spacing.dz / spacing.dx; }
  bool all_finite() const { return data.isFinite().all(); }

  void validate_shape() const {
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) throw VolumeError("volume dims must be positive");
    if (!(spacing.dx > 0 && spacing.dy > 0 && spacing.dz > 0)) throw VolumeError("volume spacing must be positive");
    if (static_cast<std::size_t>(data.size()) != dims.count()) throw VolumeError("volume data size does not match dims");
  }
};

/// Boolean companion of a Volume; `true` marks voxels that take part in evaluation.
struct Mask {
  Dims dims;
  Eigen::Array<bool, Eigen::Dynamic, 1> data;

  Mask() = default;
  explicit Mask(Dims d, bool value = false)
      : dims(d), data(Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(static_cast<Eigen::Index>(d.count()), value)) {}

  Eigen::Index index(int x, int y, int z) const {
    return (static_cast<Eigen::Index>(x) * dims.ny + y) * dims.nz + z;
  }
  bool operator()(int x, int y, int z) const { return data[index(x, y, z)]; }
  Eigen::Index count() const { return data.count(); }
};

/// Swaps the x and z axes (and their spacings).
Volume permute_xz(const Volume& v);
Mask permute_xz(const Mask& m);

/// Keeps the sub-box starting at the origin with the given dims.
Volume crop(const Volume& v, Dims d);
Mask crop(const Mask& m, Dims d);

}  // namespace sair
