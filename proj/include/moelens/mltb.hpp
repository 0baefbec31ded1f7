#pragma once

// MLTB weight container.
//
//   bytes 0..5    ASCII "MLTB1\n"
//   bytes 6..13   uint64 little-endian length N of the JSON header
//   next N bytes  UTF-8 JSON: config fields plus "tensors": [{name, dims, offset}]
//   zero padding up to the next multiple of 64 (absolute file position)
//   payload       little-endian float32, row-major, in index order; every
//                 tensor starts on a 64-byte boundary, zero padded between.
//
// Tensor offsets are relative to the payload start, which is itself 64-byte
// aligned, so absolute positions are aligned as well.

#include "moelens/model.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace moelens {

inline constexpr char kMltbMagic[] = "MLTB1\n";
inline constexpr std::size_t kMltbAlignment = 64;

std::string serialize_mltb(const ModelBundle& model);
ModelBundle parse_mltb(const std::string& bytes);

ModelBundle load_model(const std::filesystem::path& path);
void save_model(const ModelBundle& model, const std::filesystem::path& path);

}  // namespace moelens
