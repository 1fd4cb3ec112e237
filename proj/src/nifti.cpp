#include "sair/nifti.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <vector>

static_assert(std::endian::native == std::endian::little, "NIfTI I/O assumes a little-endian host");

namespace sair {
namespace {

// Byte offsets of the NIfTI-1 header fields used here.
constexpr std::size_t kOffSizeofHdr = 0;
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffXyztUnits = 123;
constexpr std::size_t kOffDescrip = 148;
constexpr std::size_t kOffMagic = 344;

using Header = std::array<char, kNiftiVoxOffset>;

template <typename T>
T get(const Header& h, std::size_t off) {
  T value;
  std::memcpy(&value, h.data() + off, sizeof(T));
  return value;
}

template <typename T>
void put(Header& h, std::size_t off, T value) {
  std::memcpy(h.data() + off, &value, sizeof(T));
}

Header make_header(Dims d, Spacing s) {
  Header h{};
  put<std::int32_t>(h, kOffSizeofHdr, kNiftiHeaderSize);
  const std::array<std::int16_t, 8> dim{3, static_cast<std::int16_t>(d.nx), static_cast<std::int16_t>(d.ny),
                                        static_cast<std::int16_t>(d.nz), 1, 1, 1, 1};
  for (std::size_t i = 0; i < dim.size(); ++i) put(h, kOffDim + 2 * i, dim[i]);
  put<std::int16_t>(h, kOffDatatype, kNiftiFloat32);
  put<std::int16_t>(h, kOffBitpix, 32);
  const std::array<float, 8> pixdim{1.0f, static_cast<float>(s.dx), static_cast<float>(s.dy),
                                    static_cast<float>(s.dz), 1.0f, 1.0f, 1.0f, 1.0f};
  for (std::size_t i = 0; i < pixdim.size(); ++i) put(h, kOffPixdim + 4 * i, pixdim[i]);
  put<float>(h, kOffVoxOffset, static_cast<float>(kNiftiVoxOffset));
  put<float>(h, kOffSclSlope, 1.0f);
  put<float>(h, kOffSclInter, 0.0f);
  h[kOffXyztUnits] = 2;  // millimetres
  const char descrip[] = "sair";
  std::memcpy(h.data() + kOffDescrip, descrip, sizeof(descrip));
  std::memcpy(h.data() + kOffMagic, "n+1\0", 4);
  return h;
}

void write_payload(const Header& h, const std::vector<float>& payload, const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (path.has_parent_path() && !fs::is_directory(path.parent_path()))
    throw NiftiError(NiftiErrc::io, "output directory does not exist: " + path.parent_path().string());
  std::random_device rd;
  const fs::path tmp = path.string() + ".tmp" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw NiftiError(NiftiErrc::io, "cannot open for writing: " + tmp.string());
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw NiftiError(NiftiErrc::io, "write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw NiftiError(NiftiErrc::io, "cannot move output into place: " + path.string());
  }
}

}  // namespace

Volume read_nifti(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NiftiError(NiftiErrc::io, "cannot open: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < static_cast<std::size_t>(kNiftiHeaderSize))
    throw NiftiError(NiftiErrc::truncated, "file shorter than a NIfTI-1 header: " + path.string());

  Header h{};
  std::memcpy(h.data(), bytes.data(), std::min(bytes.size(), h.size()));

  if (get<std::int32_t>(h, kOffSizeofHdr) != kNiftiHeaderSize)
    throw NiftiError(NiftiErrc::bad_header, "sizeof_hdr is not 348 (big-endian or not NIfTI-1)");
  if (std::memcmp(h.data() + kOffMagic, "n+1\0", 4) != 0)
    throw NiftiError(NiftiErrc::bad_magic, "magic is not \"n+1\": " + path.string());

  const auto ndim = get<std::int16_t>(h, kOffDim);
  if (ndim < 2 || ndim > 3) throw NiftiError(NiftiErrc::unsupported_dims, "only 2D/3D images are supported");
  Dims d{get<std::int16_t>(h, kOffDim + 2), get<std::int16_t>(h, kOffDim + 4),
         ndim == 3 ? get<std::int16_t>(h, kOffDim + 6) : std::int16_t{1}};
  if (d.nx <= 0 || d.ny <= 0 || d.nz <= 0) throw NiftiError(NiftiErrc::unsupported_dims, "non-positive dim");

  const auto datatype = get<std::int16_t>(h, kOffDatatype);
  std::size_t elem = 0;
  if (datatype == kNiftiFloat32)
    elem = 4;
  else if (datatype == kNiftiInt16)
    elem = 2;
  else
    throw NiftiError(NiftiErrc::unsupported_datatype, "unsupported datatype code " + std::to_string(datatype));

  // pixdim is float32; going through the shortest decimal form makes 1.1f read back as 1.1.
  auto spacing_of = [&](int i) {
    const float p = std::abs(get<float>(h, kOffPixdim + 4 * static_cast<std::size_t>(i)));
    if (!(p > 0) || !std::isfinite(p)) return 1.0;
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), p);
    double out = p;
    std::from_chars(buf, res.ptr, out);
    return out;
  };
  Spacing s{spacing_of(1), spacing_of(2), ndim == 3 ? spacing_of(3) : 1.0};

  const auto offset = static_cast<std::size_t>(get<float>(h, kOffVoxOffset));
  const std::size_t start = std::max<std::size_t>(offset, kNiftiHeaderSize);
  const std::size_t n = d.count();
  if (bytes.size() < start + n * elem) throw NiftiError(NiftiErrc::truncated, "payload truncated: " + path.string());

  const float slope = get<float>(h, kOffSclSlope);
  const float inter = get<float>(h, kOffSclInter);
  const bool scaled = slope != 0.0f && !(slope == 1.0f && inter == 0.0f);

  Volume v(d, s);
  const char* src = bytes.data() + start;
  std::size_t i = 0;
  // File order is x fastest; storage order is z fastest.
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x, ++i) {
        double value;
        if (datatype == kNiftiFloat32) {
          float f;
          std::memcpy(&f, src + i * 4, 4);
          value = f;
        } else {
          std::int16_t k;
          std::memcpy(&k, src + i * 2, 2);
          value = k;
        }
        if (scaled) value = value * slope + inter;
        v(x, y, z) = value;
      }
  return v;
}

void write_nifti(const Volume& v, const std::filesystem::path& path) {
  v.validate_shape();
  std::vector<float> payload(v.dims.count());
  std::size_t i = 0;
  for (int z = 0; z < v.dims.nz; ++z)
    for (int y = 0; y < v.dims.ny; ++y)
      for (int x = 0; x < v.dims.nx; ++x) payload[i++] = static_cast<float>(v(x, y, z));
  write_payload(make_header(v.dims, v.spacing), payload, path);
}

void write_mask_nifti(const Mask& m, Spacing spacing, const std::filesystem::path& path) {
  Volume v(m.dims, spacing, m.data.cast<double>());
  write_nifti(v, path);
}

Mask read_mask_nifti(const std::filesystem::path& path) {
  const Volume v = read_nifti(path);
  Mask m(v.dims);
  m.data = v.data != 0.0;
  return m;
}

}  // namespace sair
