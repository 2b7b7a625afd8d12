// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#ifndef NMBE_BINIO_HPP
#define NMBE_BINIO_HPP

#include <bit>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "nmbe/common.hpp"

// Raw little-endian array files. All on-disk multi-byte values are
// little-endian; the build targets little-endian hosts only.
static_assert(std::endian::native == std::endian::little,
              "raw file I/O assumes a little-endian host");

namespace nmbe::binio {

void write_f32(const std::string& path, const std::vector<float>& values);
void write_f64(const std::string& path, const std::vector<double>& values);
/// complex64: interleaved float32 re/im pairs (numpy complex64 layout).
void write_c64(const std::string& path, const std::vector<std::complex<double>>& values);
/// complex128: interleaved float64 re/im pairs.
void write_c128(const std::string& path, const std::vector<std::complex<double>>& values);

/// Readers check the file holds exactly `count` elements and throw io_error
/// naming the path otherwise (count < 0 skips the check).
std::vector<float> read_f32(const std::string& path, std::int64_t count = -1);
std::vector<double> read_f64(const std::string& path, std::int64_t count = -1);
std::vector<std::complex<double>> read_c64(const std::string& path, std::int64_t count = -1);
std::vector<std::complex<double>> read_c128(const std::string& path, std::int64_t count = -1);

/// Random access into a c64 file without loading it fully.
std::vector<std::complex<double>> read_c64_slice(const std::string& path, std::int64_t offset_elems,
                                                 std::int64_t count);

std::int64_t file_size_bytes(const std::string& path);

}  // namespace nmbe::binio

#endif  // NMBE_BINIO_HPP
