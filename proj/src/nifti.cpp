#include "plseg/nifti.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace plseg::nifti {
namespace {

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;

template <typename T>
T load(const char* p, bool swap) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if (swap) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

template <typename T>
void store(char* p, T v) {
  std::memcpy(p, &v, sizeof(T));
}

int bytes_per_voxel(std::int16_t datatype) {
  switch (datatype) {
    case kUint8:
    case kInt8:
      return 1;
    case kInt16:
    case kUint16:
      return 2;
    case kInt32:
    case kFloat32:
      return 4;
    case kFloat64:
      return 8;
    default:
      return 0;
  }
}

struct Raw {
  Header header;
  bool swap = false;
  std::vector<char> payload;
};

Raw read_raw(const std::filesystem::path& path, bool with_payload) {
  static_assert(std::endian::native == std::endian::little, "NIfTI writer assumes a little-endian host");
  if (path.extension() == ".gz") throw FormatError(path.string() + ": compressed NIfTI is not supported");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> hdr(kHeaderSize);
  if (!in.read(hdr.data(), kHeaderSize)) throw FormatError(path.string() + ": truncated header");

  Raw raw;
  const auto sizeof_hdr = load<std::int32_t>(hdr.data(), false);
  if (sizeof_hdr != kHeaderSize) {
    if (load<std::int32_t>(hdr.data(), true) != kHeaderSize) {
      throw FormatError(path.string() + ": bad sizeof_hdr");
    }
    raw.swap = true;
  }
  if (std::memcmp(hdr.data() + 344, "n+1\0", 4) != 0) {
    throw FormatError(path.string() + ": not a single-file NIfTI-1 image (magic)");
  }
  const bool s = raw.swap;
  std::array<std::int16_t, 8> dim{};
  for (int d = 0; d < 8; ++d) dim[d] = load<std::int16_t>(hdr.data() + 40 + 2 * d, s);
  if (dim[0] < 2 || dim[0] > 7) throw FormatError(path.string() + ": unsupported dim[0]");
  for (int d = 4; d <= dim[0]; ++d) {
    if (dim[d] != 1) throw FormatError(path.string() + ": only 2D/3D images are supported");
  }
  const std::ptrdiff_t nx = dim[1];
  const std::ptrdiff_t ny = dim[2];
  const std::ptrdiff_t nz = dim[0] >= 3 ? dim[3] : 1;
  if (nx <= 0 || ny <= 0 || nz <= 0) throw FormatError(path.string() + ": non-positive dimension");

  std::array<float, 8> pixdim{};
  for (int d = 0; d < 8; ++d) pixdim[d] = load<float>(hdr.data() + 76 + 4 * d, s);
  // A 2D image has no meaningful dz; treat a missing one as 1 mm.
  const float dz = dim[0] >= 3 ? pixdim[3] : (pixdim[3] > 0.0f ? pixdim[3] : 1.0f);
  raw.header.spacing = {dz, pixdim[2], pixdim[1]};
  if (!std::isfinite(raw.header.spacing.dz) || !std::isfinite(raw.header.spacing.dy) ||
      !std::isfinite(raw.header.spacing.dx) || !raw.header.spacing.valid()) {
    throw FormatError(path.string() + ": voxel spacing must be positive");
  }

  raw.header.shape = {nz, ny, nx};
  raw.header.datatype = load<std::int16_t>(hdr.data() + 70, s);
  raw.header.scl_slope = load<float>(hdr.data() + 112, s);
  raw.header.scl_inter = load<float>(hdr.data() + 116, s);
  raw.header.descrip.assign(hdr.data() + 148, strnlen(hdr.data() + 148, 80));

  const int bpv = bytes_per_voxel(raw.header.datatype);
  if (bpv == 0) throw FormatError(path.string() + ": unsupported datatype " + std::to_string(raw.header.datatype));
  const auto bitpix = load<std::int16_t>(hdr.data() + 72, s);
  if (bitpix != 8 * bpv) throw FormatError(path.string() + ": bitpix does not match datatype");
  const auto vox_offset = static_cast<std::streamoff>(load<float>(hdr.data() + 108, s));
  if (vox_offset < kHeaderSize) throw FormatError(path.string() + ": bad vox_offset");

  if (with_payload) {
    const auto n = static_cast<std::size_t>(nx * ny * nz) * static_cast<std::size_t>(bpv);
    in.seekg(vox_offset);
    raw.payload.resize(n);
    if (!in.read(raw.payload.data(), static_cast<std::streamsize>(n))) {
      throw FormatError(path.string() + ": payload shorter than header shape");
    }
  }
  return raw;
}

template <typename Out>
Volume<Out> decode(const Raw& raw, bool apply_scaling) {
  const auto [nz, ny, nx] = raw.header.shape;
  Volume<Out> v(nz, ny, nx);
  const int bpv = bytes_per_voxel(raw.header.datatype);
  const bool scale = apply_scaling && raw.header.scl_slope != 0.0f &&
                     !(raw.header.scl_slope == 1.0f && raw.header.scl_inter == 0.0f);
  auto& out = v.data();
  for (std::size_t n = 0; n < out.size(); ++n) {
    const char* p = raw.payload.data() + n * static_cast<std::size_t>(bpv);
    double x = 0.0;
    switch (raw.header.datatype) {
      case kUint8: x = load<std::uint8_t>(p, false); break;
      case kInt8: x = load<std::int8_t>(p, false); break;
      case kInt16: x = load<std::int16_t>(p, raw.swap); break;
      case kUint16: x = load<std::uint16_t>(p, raw.swap); break;
      case kInt32: x = load<std::int32_t>(p, raw.swap); break;
      case kFloat32: x = load<float>(p, raw.swap); break;
      case kFloat64: x = load<double>(p, raw.swap); break;
    }
    if (scale) x = x * raw.header.scl_slope + raw.header.scl_inter;
    if constexpr (std::is_same_v<Out, std::uint8_t>) {
      out[n] = x != 0.0 ? 1 : 0;
    } else {
      out[n] = static_cast<Out>(x);
    }
  }
  return v;
}

std::vector<char> make_header(std::array<std::ptrdiff_t, 3> shape, const Spacing3& spacing, std::int16_t datatype,
                              const std::string& descrip) {
  if (!spacing.valid()) throw InvalidArgument("voxel spacing must be positive");
  for (auto e : shape) {
    if (e <= 0 || e > 32767) throw InvalidArgument("volume extent out of NIfTI-1 range");
  }
  std::vector<char> h(kVoxOffset, 0);
  store<std::int32_t>(h.data(), kHeaderSize);
  h[38] = 'r';
  const std::int16_t dim[8] = {3, static_cast<std::int16_t>(shape[2]), static_cast<std::int16_t>(shape[1]),
                               static_cast<std::int16_t>(shape[0]), 1, 1, 1, 1};
  for (int d = 0; d < 8; ++d) store<std::int16_t>(h.data() + 40 + 2 * d, dim[d]);
  store<std::int16_t>(h.data() + 70, datatype);
  store<std::int16_t>(h.data() + 72, static_cast<std::int16_t>(8 * bytes_per_voxel(datatype)));
  const float pixdim[8] = {1.0f, static_cast<float>(spacing.dx), static_cast<float>(spacing.dy),
                           static_cast<float>(spacing.dz), 0, 0, 0, 0};
  for (int d = 0; d < 8; ++d) store<float>(h.data() + 76 + 4 * d, pixdim[d]);
  store<float>(h.data() + 108, static_cast<float>(kVoxOffset));
  store<float>(h.data() + 112, 1.0f);
  h[123] = 2;  // NIFTI_UNITS_MM
  std::memcpy(h.data() + 148, descrip.data(), std::min<std::size_t>(descrip.size(), 79));
  // Scanner-anatomical sform: diagonal spacing, origin at voxel 0.
  store<std::int16_t>(h.data() + 254, 1);
  store<float>(h.data() + 280, pixdim[1]);
  store<float>(h.data() + 296 + 4, pixdim[2]);
  store<float>(h.data() + 312 + 8, pixdim[3]);
  std::memcpy(h.data() + 344, "n+1\0", 4);
  return h;
}

void write_file(const std::filesystem::path& path, const std::vector<char>& header, const char* payload,
                std::size_t bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload, static_cast<std::streamsize>(bytes));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

Header read_header(const std::filesystem::path& path) { return read_raw(path, false).header; }

Volume<float> read_float(const std::filesystem::path& path, Header* header) {
  const Raw raw = read_raw(path, true);
  if (header) *header = raw.header;
  return decode<float>(raw, true);
}

MaskVolume read_mask(const std::filesystem::path& path, Header* header) {
  const Raw raw = read_raw(path, true);
  if (header) *header = raw.header;
  return decode<std::uint8_t>(raw, false);
}

void write_float(const std::filesystem::path& path, const Volume<float>& data, const Spacing3& spacing,
                 const std::string& descrip) {
  const auto header = make_header(data.shape(), spacing, kFloat32, descrip);
  write_file(path, header, reinterpret_cast<const char*>(data.data().data()), data.size() * sizeof(float));
}

void write_mask(const std::filesystem::path& path, const MaskVolume& data, const Spacing3& spacing,
                const std::string& descrip) {
  const auto header = make_header(data.shape(), spacing, kUint8, descrip);
  write_file(path, header, reinterpret_cast<const char*>(data.data().data()), data.size());
}

}  // namespace plseg::nifti
