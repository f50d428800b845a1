#pragma once

#include <string>

#include "deconv/model.hpp"

namespace deconv {

// CSV: one observation per row, d numeric columns, optional header line.
Sample read_sample_csv(const std::string& path);
void write_sample_csv(const std::string& path, const Sample& sample);

// Binary: "DCNV", u32 n, u32 d, u32 reserved, then column-major float64 (little endian).
Sample read_sample_binary(const std::string& path);
void write_sample_binary(const std::string& path, const Sample& sample);

// Dispatches on the leading magic bytes.
Sample read_sample(const std::string& path);

}  // namespace deconv
