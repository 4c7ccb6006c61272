#include "das/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace das {
namespace {

static_assert(std::endian::native == std::endian::little,
              "DAST I/O assumes a little-endian host");

constexpr std::array<char, 4> kMagic = {'D', 'A', 'S', 'T'};
constexpr std::uint32_t kMaxRank = 8;

void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw std::runtime_error("DAST: truncated header");
  }
  return v;
}

}  // namespace

void write_dast(std::ostream& os, const Tensor& t) {
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, kDastVersion);
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
  os.write(reinterpret_cast<const char*>(t.data().data()),
           static_cast<std::streamsize>(t.size() * sizeof(float)));
  if (!os) throw std::runtime_error("DAST: write failed");
}

Tensor read_dast(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw std::runtime_error("DAST: bad magic");
  }
  const std::uint32_t version = get_u32(is);
  if (version != kDastVersion) {
    throw std::runtime_error("DAST: unsupported version " + std::to_string(version));
  }
  const std::uint32_t rank = get_u32(is);
  if (rank > kMaxRank) throw std::runtime_error("DAST: rank " + std::to_string(rank) + " too large");
  Shape shape(rank);
  for (auto& d : shape) d = get_u32(is);
  std::vector<float> data(numel(shape));
  if (!is.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(float)))) {
    throw std::runtime_error("DAST: truncated payload");
  }
  return Tensor(std::move(shape), std::move(data));
}

void save_dast(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_dast(os, t);
}

Tensor load_dast(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_dast(is);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace das
