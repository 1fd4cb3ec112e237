#include "sair/image.hpp"

namespace sair {

ImageD axial_slice(const Volume& v, int z) {
  ImageD img(v.dims.nx, v.dims.ny);
  for (int x = 0; x < v.dims.nx; ++x)
    for (int y = 0; y < v.dims.ny; ++y) img(x, y) = v(x, y, z);
  return img;
}

void set_axial_slice(Volume& v, int z, const ImageD& img) {
  if (img.rows() != v.dims.nx || img.cols() != v.dims.ny) throw VolumeError("axial slice shape mismatch");
  for (int x = 0; x < v.dims.nx; ++x)
    for (int y = 0; y < v.dims.ny; ++y) v(x, y, z) = img(x, y);
}

ImageD coronal_slice(const Volume& v, int y) {
  ImageD img(v.dims.nz, v.dims.nx);
  for (int x = 0; x < v.dims.nx; ++x)
    for (int z = 0; z < v.dims.nz; ++z) img(z, x) = v(x, y, z);
  return img;
}

void set_coronal_slice(Volume& v, int y, const ImageD& img) {
  if (img.rows() != v.dims.nz || img.cols() != v.dims.nx) throw VolumeError("coronal slice shape mismatch");
  for (int x = 0; x < v.dims.nx; ++x)
    for (int z = 0; z < v.dims.nz; ++z) v(x, y, z) = img(z, x);
}

}  // namespace sair
