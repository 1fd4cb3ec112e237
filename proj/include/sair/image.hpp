#pragma once

#include "sair/volume.hpp"

namespace sair {

/// 2D image; rows index the first axis, columns the second.
template <typename Scalar>
using Image = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ImageD = Image<double>;
using ImageF = Image<float>;

/// Fixed-z plane, rows = x, cols = y.
ImageD axial_slice(const Volume& v, int z);
void set_axial_slice(Volume& v, int z, const ImageD& img);

/// Fixed-y plane, rows = z, cols = x.
ImageD coronal_slice(const Volume& v, int y);
void set_coronal_slice(Volume& v, int y, const ImageD& img);

/// Mirror-pads rows/cols at the far end so both extents are even.
template <typename Derived>
Image<typename Derived::Scalar> pad_to_even(const Eigen::ArrayBase<Derived>& img) {
  const Eigen::Index rows = img.rows() + (img.rows() % 2), cols = img.cols() + (img.cols() % 2);
  Image<typename Derived::Scalar> out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::Index si = i < img.rows() ? i : 2 * (img.rows() - 1) - i;
    for (Eigen::Index j = 0; j < cols; ++j) {
      const Eigen::Index sj = j < img.cols() ? j : 2 * (img.cols() - 1) - j;
      out(i, j) = img(si, sj);
    }
  }
  return out;
}

}  // namespace sair
