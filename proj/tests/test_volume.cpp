#include "sair/nifti.hpp"
#include "sair/normalize.hpp"
#include "sair/volume.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <vector>

using namespace sair;
using sair::test::max_abs_diff;
using sair::test::TempDir;

namespace {

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
T at(const std::vector<char>& b, std::size_t off) {
  T v;
  std::memcpy(&v, b.data() + off, sizeof(T));
  return v;
}

template <typename T>
void put(std::vector<char>& b, std::size_t off, T v) {
  std::memcpy(b.data() + off, &v, sizeof(T));
}

// Minimal hand-rolled NIfTI-1 writer, independent of the library's.
std::vector<char> handmade_header(std::int16_t ndim, std::int16_t nx, std::int16_t ny, std::int16_t nz,
                                  std::int16_t datatype, float dx, float dy, float dz) {
  std::vector<char> b(352, 0);
  put<std::int32_t>(b, 0, 348);
  const std::int16_t dim[8] = {ndim, nx, ny, nz, 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put(b, 40 + 2 * i, dim[i]);
  put<std::int16_t>(b, 70, datatype);
  put<std::int16_t>(b, 72, datatype == 4 ? 16 : 32);
  const float pixdim[8] = {1, dx, dy, dz, 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put(b, 76 + 4 * i, pixdim[i]);
  put<float>(b, 108, 352.0f);
  std::memcpy(b.data() + 344, "n+1\0", 4);
  return b;
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& b) {
  std::ofstream(p, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
}

NiftiErrc error_of(const std::filesystem::path& p) {
  try {
    read_nifti(p);
  } catch (const NiftiError& e) {
    return e.code();
  }
  FAIL("expected a NiftiError");
  return NiftiErrc::io;
}

Volume ramp(Dims d, Spacing s = {}) {
  Volume v(d, s);
  for (Eigen::Index i = 0; i < v.data.size(); ++i) v.data[i] = 0.25 * static_cast<double>(i) - 3.0;
  return v;
}

}  // namespace

TEST_CASE("volume indexing is z-fastest") {
  Volume v(Dims{2, 3, 4}, Spacing{});
  CHECK(v.index(0, 0, 1) == 1);
  CHECK(v.index(0, 1, 0) == 4);
  CHECK(v.index(1, 0, 0) == 12);
  CHECK(v.stride(Axis::X) == 12);
  CHECK(v.stride(Axis::Y) == 4);
  CHECK(v.stride(Axis::Z) == 1);
  CHECK_THROWS_AS(Volume(Dims{0, 1, 1}, Spacing{}), VolumeError);
  CHECK_THROWS_AS(Volume(Dims{1, 1, 1}, Spacing{1, 0, 1}), VolumeError);
}

TEST_CASE("permute_xz is an involution that swaps spacing") {
  const Volume v = sair::test::random_volume(Dims{3, 4, 5}, 7, Spacing{1, 2, 3});
  const Volume p = permute_xz(v);
  CHECK(p.dims == Dims{5, 4, 3});
  CHECK(p.spacing == Spacing{3, 2, 1});
  CHECK(p(4, 1, 2) == v(2, 1, 4));
  CHECK(max_abs_diff(permute_xz(p), v) == 0.0);
}

TEST_CASE("crop keeps the origin box") {
  const Volume v = ramp(Dims{4, 5, 6});
  const Volume c = crop(v, Dims{2, 3, 4});
  CHECK(c.dims == Dims{2, 3, 4});
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 3; ++y)
      for (int z = 0; z < 4; ++z) CHECK(c(x, y, z) == v(x, y, z));
  CHECK_THROWS(crop(v, Dims{5, 1, 1}));
}

TEST_CASE("read a handmade float32 file of ones") {
  TempDir dir("ones");
  auto bytes = handmade_header(3, 4, 4, 4, 16, 1, 1, 3);
  const std::vector<float> payload(64, 1.0f);
  bytes.insert(bytes.end(), reinterpret_cast<const char*>(payload.data()),
               reinterpret_cast<const char*>(payload.data() + payload.size()));
  write_bytes(dir / "ones.nii", bytes);
  const Volume v = read_nifti(dir / "ones.nii");
  CHECK(v.dims == Dims{4, 4, 4});
  CHECK(v.spacing == Spacing{1, 1, 3});
  CHECK((v.data == 1.0).all());
}

TEST_CASE("int16 fixture decodes to the script's integers") {
  const Volume v = read_nifti(std::filesystem::path(SAIR_TEST_DATA_DIR) / "int16_ramp.nii");
  REQUIRE(v.dims == Dims{7, 4, 4});
  CHECK(v.spacing == Spacing{2, 2, 5});
  // Values were written as (x + 7 (y + 4 z)) % 101 in x-fastest order.
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 7; ++x) CHECK(v(x, y, z) == static_cast<double>((x + 7 * (y + 4 * z)) % 101));
  CHECK(v(5, 2, 3) == 2.0);
  CHECK(v.data.sum() == 5105.0);
}

TEST_CASE("write_nifti header bytes") {
  TempDir dir("hdr");
  write_nifti(ramp(Dims{2, 3, 4}, Spacing{0.5, 0.5, 2}), dir / "r.nii");
  const auto b = read_bytes(dir / "r.nii");
  REQUIRE(b.size() == 352 + 24 * 4);
  CHECK(at<std::int32_t>(b, 0) == 348);
  CHECK(at<std::int16_t>(b, 40) == 3);
  CHECK(at<std::int16_t>(b, 42) == 2);
  CHECK(at<std::int16_t>(b, 44) == 3);
  CHECK(at<std::int16_t>(b, 46) == 4);
  CHECK(at<std::int16_t>(b, 70) == 16);
  CHECK(at<std::int16_t>(b, 72) == 32);
  CHECK(at<float>(b, 80) == 0.5f);
  CHECK(at<float>(b, 88) == 2.0f);
  CHECK(at<float>(b, 108) == 352.0f);
  CHECK(std::memcmp(b.data() + 344, "n+1\0", 4) == 0);
  // First payload value is voxel (0,0,0), second is (1,0,0): x runs fastest on disk.
  const Volume v = ramp(Dims{2, 3, 4});
  CHECK(at<float>(b, 352) == static_cast<float>(v(0, 0, 0)));
  CHECK(at<float>(b, 356) == static_cast<float>(v(1, 0, 0)));
}

TEST_CASE("float32 round trip is bit-exact") {
  TempDir dir("rt");
  Volume v = sair::test::random_volume(Dims{5, 6, 7}, 3, Spacing{0.8, 0.9, 2.5});
  v.data = v.data.cast<float>().cast<double>();
  write_nifti(v, dir / "v.nii");
  const Volume back = read_nifti(dir / "v.nii");
  CHECK(back.dims == v.dims);
  CHECK(back.spacing == v.spacing);
  CHECK((back.data == v.data).all());

  const Volume r = ramp(Dims{2, 3, 4});
  write_nifti(r, dir / "ramp.nii");
  CHECK((read_nifti(dir / "ramp.nii").data == r.data).all());
}

TEST_CASE("clinical spacing survives a round trip") {
  TempDir dir("sp");
  write_nifti(Volume(Dims{2, 2, 2}, Spacing{1.1, 1.1, 3.0}), dir / "s.nii");
  CHECK(read_nifti(dir / "s.nii").spacing == Spacing{1.1, 1.1, 3.0});
}

TEST_CASE("reader error classes") {
  TempDir dir("err");
  std::vector<float> payload(8, 0.0f);
  auto with_payload = [&](std::vector<char> h) {
    h.insert(h.end(), reinterpret_cast<const char*>(payload.data()),
             reinterpret_cast<const char*>(payload.data() + payload.size()));
    return h;
  };

  auto magic = with_payload(handmade_header(3, 2, 2, 2, 16, 1, 1, 1));
  std::memcpy(magic.data() + 344, "ni1\0", 4);
  write_bytes(dir / "magic.nii", magic);
  CHECK(error_of(dir / "magic.nii") == NiftiErrc::bad_magic);

  write_bytes(dir / "f64.nii", with_payload(handmade_header(3, 2, 2, 2, 64, 1, 1, 1)));
  CHECK(error_of(dir / "f64.nii") == NiftiErrc::unsupported_datatype);

  write_bytes(dir / "4d.nii", with_payload(handmade_header(4, 2, 2, 2, 16, 1, 1, 1)));
  CHECK(error_of(dir / "4d.nii") == NiftiErrc::unsupported_dims);

  auto shortfile = handmade_header(3, 2, 2, 2, 16, 1, 1, 1);
  shortfile.resize(352 + 5 * 4);
  write_bytes(dir / "short.nii", shortfile);
  CHECK(error_of(dir / "short.nii") == NiftiErrc::truncated);

  auto big = with_payload(handmade_header(3, 2, 2, 2, 16, 1, 1, 1));
  std::reverse(big.begin(), big.begin() + 4);
  write_bytes(dir / "be.nii", big);
  CHECK(error_of(dir / "be.nii") == NiftiErrc::bad_header);

  CHECK(error_of(dir / "missing.nii") == NiftiErrc::io);
}

TEST_CASE("failed write leaves no file behind") {
  TempDir dir("nowrite");
  const auto target = dir / "absent" / "v.nii";
  try {
    write_nifti(ramp(Dims{2, 2, 2}), target);
    FAIL("expected an error");
  } catch (const NiftiError& e) {
    CHECK(e.code() == NiftiErrc::io);
  }
  CHECK_FALSE(std::filesystem::exists(target));
  CHECK(std::distance(std::filesystem::directory_iterator(dir.path()), std::filesystem::directory_iterator{}) == 0);
}

TEST_CASE("mask round trip") {
  TempDir dir("mask");
  Mask m(Dims{3, 3, 3});
  m.data[4] = m.data[13] = true;
  write_mask_nifti(m, Spacing{}, dir / "m.nii");
  const Mask back = read_mask_nifti(dir / "m.nii");
  CHECK(back.dims == m.dims);
  CHECK((back.data == m.data).all());
}

TEST_CASE("percentile matches a sorted-rank oracle") {
  Eigen::ArrayXd values(1001);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (auto& x : values) x = u(rng);
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  for (double q : {0.0, 0.5, 25.0, 50.0, 99.5, 100.0}) {
    const double rank = q / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double expected = sorted[lo] + (rank - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    CHECK(percentile(values, q) == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("normalize_intensities") {
  SUBCASE("uniform [0, 100] maps onto [0, 1]") {
    Volume v(Dims{10, 10, 10}, Spacing{});
    for (Eigen::Index i = 0; i < v.data.size(); ++i) v.data[i] = 100.0 * static_cast<double>(i) / 999.0;
    const auto [n, s] = normalize_intensities(v);
    CHECK(n.data.minCoeff() == 0.0);
    CHECK(n.data.maxCoeff() == 1.0);
    CHECK(s.low == doctest::Approx(0.5));
    CHECK(s.high == doctest::Approx(99.5));
  }
  SUBCASE("two-point {0, 1} volume is unchanged") {
    Volume v(Dims{10, 10, 10}, Spacing{});
    for (Eigen::Index i = 0; i < v.data.size(); ++i) v.data[i] = i % 2;
    const auto [n, s] = normalize_intensities(v);
    CHECK((n.data == v.data).all());
  }
  SUBCASE("inverse recovers the unclamped voxels") {
    const Volume v = sair::test::random_volume(Dims{12, 12, 12}, 5);
    Volume scaled = v;
    scaled.data = 40.0 + 900.0 * v.data;
    const auto [n, s] = normalize_intensities(scaled);
    const Volume back = invert_scale(n, s);
    int checked = 0;
    for (Eigen::Index i = 0; i < n.data.size(); ++i)
      if (n.data[i] > 0.0 && n.data[i] < 1.0) {
        CHECK(std::abs(back.data[i] - scaled.data[i]) <= 1e-6 * std::abs(scaled.data[i]));
        ++checked;
      }
    CHECK(checked > static_cast<int>(0.98 * static_cast<double>(n.data.size())));
  }
  SUBCASE("monotone") {
    const Volume v = sair::test::random_volume(Dims{8, 8, 8}, 9);
    const Volume n = normalize_intensities(v).first;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(v.data.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v.data[a] < v.data[b]; });
    for (std::size_t i = 1; i < order.size(); ++i) CHECK(n.data[order[i - 1]] <= n.data[order[i]]);
  }
  SUBCASE("constant volume is rejected") {
    CHECK_THROWS_AS(normalize_intensities(Volume::constant(Dims{4, 4, 4}, Spacing{}, 2.0)), VolumeError);
  }
}
