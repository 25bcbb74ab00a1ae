#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nbe/types.hpp"

namespace nbe {

// FNV-1a over raw bytes; used for content-derived seeds and config hashes.
std::uint64_t fnv1a(const void* data, std::size_t len,
                    std::uint64_t h = 0xCBF29CE484222325ULL);

std::uint64_t fnv1a_str(const std::string& s);

// IEEE CRC-32 (reflected, poly 0xEDB88320).
std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t crc = 0);

std::uint64_t dataset_content_hash(const SpatialDataset& data);

// Little-endian scalar append/read on byte buffers.
void append_u32(std::string& buf, std::uint32_t v);
void append_u64(std::string& buf, std::uint64_t v);
void append_f32(std::string& buf, float v);
std::uint32_t read_u32(const std::string& buf, std::size_t off);
std::uint64_t read_u64(const std::string& buf, std::size_t off);
float read_f32(const std::string& buf, std::size_t off);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

// Dataset CSV: optional leading '#' metadata lines, then a
// `replicate,x,y,z` header with 1-based replicate indices.
void write_dataset_csv(const std::string& path, const SpatialDataset& data,
                       const std::string& meta_line = "");
SpatialDataset read_dataset_csv(const std::string& path);

// Fixed-format float rendering (shortest round-trip), locale-independent.
std::string format_double(double v);

}  // namespace nbe
