#include "dcesynth/volume_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "dcesynth/error.hpp"

namespace dcesynth {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "volume I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'C', 'E', 'V', 'O', 'L', '1', '\n'};

std::vector<char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open volume " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

template <typename T>
T load(const char* bytes) {
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

bool RawVolumeReader::accepts(const fs::path& path) const { return path.extension() == kRawVolumeExtension; }

Volume3D RawVolumeReader::read(const fs::path& path) const {
  const auto bytes = slurp(path);
  constexpr std::size_t header = kMagic.size() + 3 * sizeof(std::uint32_t);
  if (bytes.size() < header || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw IoError("not a raw volume: " + path.string());
  }
  const auto depth = load<std::uint32_t>(bytes.data() + 8);
  const auto height = load<std::uint32_t>(bytes.data() + 12);
  const auto width = load<std::uint32_t>(bytes.data() + 16);
  const std::size_t count = static_cast<std::size_t>(depth) * height * width;
  if (bytes.size() != header + count * sizeof(float)) {
    throw IoError("truncated raw volume: " + path.string());
  }
  std::vector<float> voxels(count);
  std::memcpy(voxels.data(), bytes.data() + header, count * sizeof(float));
  return Volume3D(static_cast<int>(depth), static_cast<int>(height), static_cast<int>(width), std::move(voxels));
}

void write_raw_volume(const Volume3D& volume, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write volume " + path.string());
  out.write(kMagic.data(), kMagic.size());
  for (int dim : {volume.depth(), volume.height(), volume.width()}) {
    const auto v = static_cast<std::uint32_t>(dim);
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  out.write(reinterpret_cast<const char*>(volume.voxels().data()),
            static_cast<std::streamsize>(volume.size() * sizeof(float)));
  if (!out) throw IoError("short write on volume " + path.string());
}

bool NiftiVolumeReader::accepts(const fs::path& path) const { return path.extension() == ".nii"; }

Volume3D NiftiVolumeReader::read(const fs::path& path) const {
  const auto bytes = slurp(path);
  if (bytes.size() < 352 || load<std::int32_t>(bytes.data()) != 348) {
    throw IoError("not a little-endian NIfTI-1 file: " + path.string());
  }
  const char* hdr = bytes.data();
  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[i] = load<std::int16_t>(hdr + 40 + 2 * i);
  if (dim[0] < 3) throw IoError("NIfTI volume has fewer than 3 dimensions: " + path.string());
  const auto datatype = load<std::int16_t>(hdr + 70);
  const float vox_offset = load<float>(hdr + 108);
  float slope = load<float>(hdr + 112);
  const float inter = load<float>(hdr + 116);
  if (slope == 0.0f) slope = 1.0f;

  const int width = dim[1];
  const int height = dim[2];
  const int depth = dim[3];
  const std::size_t count = static_cast<std::size_t>(width) * height * depth;
  const auto offset = static_cast<std::size_t>(vox_offset);

  auto convert = [&]<typename T>() {
    if (bytes.size() < offset + count * sizeof(T)) throw IoError("truncated NIfTI data: " + path.string());
    std::vector<float> voxels(count);
    for (std::size_t i = 0; i < count; ++i) {
      voxels[i] = static_cast<float>(load<T>(bytes.data() + offset + i * sizeof(T))) * slope + inter;
    }
    return voxels;
  };

  std::vector<float> voxels;
  switch (datatype) {
    case 2: voxels = convert.template operator()<std::uint8_t>(); break;
    case 4: voxels = convert.template operator()<std::int16_t>(); break;
    case 8: voxels = convert.template operator()<std::int32_t>(); break;
    case 16: voxels = convert.template operator()<float>(); break;
    case 64: voxels = convert.template operator()<double>(); break;
    case 256: voxels = convert.template operator()<std::int8_t>(); break;
    case 512: voxels = convert.template operator()<std::uint16_t>(); break;
    default: throw IoError("unsupported NIfTI datatype " + std::to_string(datatype) + " in " + path.string());
  }
  // NIfTI stores x fastest, then y, then z: identical to (slice, row, col).
  return Volume3D(depth, height, width, std::move(voxels));
}

Volume3D read_volume(const fs::path& path) {
  static const RawVolumeReader raw;
  static const NiftiVolumeReader nifti;
  for (const VolumeReader* reader : {static_cast<const VolumeReader*>(&raw), static_cast<const VolumeReader*>(&nifti)}) {
    if (reader->accepts(path)) return reader->read(path);
  }
  throw IoError("no volume reader for " + path.string() + " (supported: .dvol, .nii)");
}

}  // namespace dcesynth
