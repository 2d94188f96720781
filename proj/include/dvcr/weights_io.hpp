#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dvcr/encoder.hpp"

namespace dvcr {

// Little-endian container:
//   "DVCR" | u32 version | u32 config_len | config text ("key=value\n"...)
//   | u32 tensor_count | { u32 name_len | name | u32 rows | u32 cols | f64[rows*cols] row-major }
inline constexpr std::uint32_t kWeightsVersion = 1;

struct WeightsFile {
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, Matrix>> tensors;
};

std::vector<std::uint8_t> encode_weights(const std::map<std::string, std::string>& config,
                                         const std::vector<TensorRef>& tensors);
WeightsFile decode_weights(const std::vector<std::uint8_t>& bytes);

void write_weights(const std::filesystem::path& path, const std::map<std::string, std::string>& config,
                   const std::vector<TensorRef>& tensors);
WeightsFile read_weights(const std::filesystem::path& path);

// Copies tensors from `file` into `dest` by name, requiring identical shapes
// and an exact one-to-one name match.
void assign_tensors(const WeightsFile& file, const std::vector<TensorRef>& dest);

// Config accessors that raise FormatError on missing or malformed keys.
std::size_t config_size(const WeightsFile& f, const std::string& key);
std::string config_string(const WeightsFile& f, const std::string& key);

}  // namespace dvcr
