#include "sair/volume.hpp"

#include <algorithm>

namespace sair {

Volume permute_xz(const Volume& v) {
  Volume out(Dims{v.dims.nz, v.dims.ny, v.dims.nx}, Spacing{v.spacing.dz, v.spacing.dy, v.spacing.dx});
  for (int x = 0; x < v.dims.nx; ++x)
    for (int y = 0; y < v.dims.ny; ++y)
      for (int z = 0; z < v.dims.nz; ++z) out(z, y, x) = v(x, y, z);
  return out;
}

Mask permute_xz(const Mask& m) {
  Mask out(Dims{m.dims.nz, m.dims.ny, m.dims.nx});
  for (int x = 0; x < m.dims.nx; ++x)
    for (int y = 0; y < m.dims.ny; ++y)
      for (int z = 0; z < m.dims.nz; ++z) out.data[out.index(z, y, x)] = m(x, y, z);
  return out;
}

Volume crop(const Volume& v, Dims d) {
  if (d.nx > v.dims.nx || d.ny > v.dims.ny || d.nz > v.dims.nz) throw VolumeError("crop larger than volume");
  Volume out(d, v.spacing);
  for (int x = 0; x < d.nx; ++x)
    for (int y = 0; y < d.ny; ++y)
      for (int z = 0; z < d.nz; ++z) out(x, y, z) = v(x, y, z);
  return out;
}

Mask crop(const Mask& m, Dims d) {
  if (d.nx > m.dims.nx || d.ny > m.dims.ny || d.nz > m.dims.nz) throw VolumeError("crop larger than mask");
  Mask out(d);
  for (int x = 0; x < d.nx; ++x)
    for (int y = 0; y < d.ny; ++y)
      for (int z = 0; z < d.nz; ++z) out.data[out.index(x, y, z)] = m(x, y, z);
  return out;
}

}  // namespace sair
