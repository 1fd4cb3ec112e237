#pragma once

#include "sair/volume.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace sair {

enum class NiftiErrc {
  io,                    // file could not be opened, read or written
  bad_magic,             // magic is not "n+1\0"
  bad_header,            // sizeof_hdr != 348 (includes big-endian files)
  unsupported_datatype,  // anything but float32 / int16
  unsupported_dims,      // dim[0] outside {2, 3} or non-positive extents
  truncated,             // payload shorter than the header promises
};

class NiftiError : public std::runtime_error {
 public:
  NiftiError(NiftiErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  NiftiErrc code() const noexcept { return code_; }

 private:
  NiftiErrc code_;
};

inline constexpr int kNiftiHeaderSize = 348;
inline constexpr int kNiftiVoxOffset = 352;
inline constexpr short kNiftiFloat32 = 16;
inline constexpr short kNiftiInt16 = 4;

/// Reads a single-file little-endian NIfTI-1 volume (float32 or int16 payload).
Volume read_nifti(const std::filesystem::path& path);

/// Writes `v` as float32 NIfTI-1. The file is written to a sibling temporary and
/// renamed into place, so a failed write never leaves a partial output.
void write_nifti(const Volume& v, const std::filesystem::path& path);

void write_mask_nifti(const Mask& m, Spacing spacing, const std::filesystem::path& path);
/// Any non-zero voxel becomes `true`.
Mask read_mask_nifti(const std::filesystem::path& path);

}  // namespace sair
