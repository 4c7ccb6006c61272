#pragma once

// DAST tensor blobs: "DAST", u32 version, u32 rank, u32 dims[rank], f32 payload.
// All integers and floats little-endian, payload row-major.

#include <filesystem>
#include <iosfwd>

#include "das/tensor.hpp"

namespace das {

inline constexpr std::uint32_t kDastVersion = 1;

void write_dast(std::ostream& os, const Tensor& t);
Tensor read_dast(std::istream& is);

void save_dast(const std::filesystem::path& path, const Tensor& t);
Tensor load_dast(const std::filesystem::path& path);

}  // namespace das
