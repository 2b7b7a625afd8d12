// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#include "nmbe/binio.hpp"

#include <filesystem>
#include <fstream>

namespace nmbe::binio {

namespace {

void write_bytes(const std::string& path, const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open for writing: " + path);
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw io_error("short write: " + path);
}

template <typename T>
std::vector<T> read_all(const std::string& path, std::int64_t count) {
  const std::int64_t bytes = file_size_bytes(path);
  if (bytes % static_cast<std::int64_t>(sizeof(T)) != 0) {
    throw io_error("truncated file (size not a multiple of element size): " + path);
  }
  const std::int64_t n = bytes / static_cast<std::int64_t>(sizeof(T));
  if (count >= 0 && n != count) {
    throw io_error("element count mismatch in " + path + ": expected " + std::to_string(count) +
                   ", file holds " + std::to_string(n));
  }
  std::vector<T> values(static_cast<std::size_t>(n));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open: " + path);
  in.read(reinterpret_cast<char*>(values.data()), bytes);
  if (!in) throw io_error("short read: " + path);
  return values;
}

}  // namespace

std::int64_t file_size_bytes(const std::string& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw io_error("cannot stat: " + path);
  return static_cast<std::int64_t>(size);
}

void write_f32(const std::string& path, const std::vector<float>& values) {
  write_bytes(path, values.data(), values.size() * sizeof(float));
}

void write_f64(const std::string& path, const std::vector<double>& values) {
  write_bytes(path, values.data(), values.size() * sizeof(double));
}

void write_c64(const std::string& path, const std::vector<std::complex<double>>& values) {
  std::vector<float> packed(values.size() * 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    packed[2 * i] = static_cast<float>(values[i].real());
    packed[2 * i + 1] = static_cast<float>(values[i].imag());
  }
  write_f32(path, packed);
}

void write_c128(const std::string& path, const std::vector<std::complex<double>>& values) {
  std::vector<double> packed(values.size() * 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    packed[2 * i] = values[i].real();
    packed[2 * i + 1] = values[i].imag();
  }
  write_f64(path, packed);
}

std::vector<float> read_f32(const std::string& path, std::int64_t count) {
  return read_all<float>(path, count);
}

std::vector<double> read_f64(const std::string& path, std::int64_t count) {
  return read_all<double>(path, count);
}

std::vector<std::complex<double>> read_c64(const std::string& path, std::int64_t count) {
  const auto packed = read_all<float>(path, count < 0 ? -1 : count * 2);
  std::vector<std::complex<double>> values(packed.size() / 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = {static_cast<double>(packed[2 * i]), static_cast<double>(packed[2 * i + 1])};
  }
  return values;
}

std::vector<std::complex<double>> read_c128(const std::string& path, std::int64_t count) {
  const auto packed = read_all<double>(path, count < 0 ? -1 : count * 2);
  std::vector<std::complex<double>> values(packed.size() / 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = {packed[2 * i], packed[2 * i + 1]};
  }
  return values;
}

std::vector<std::complex<double>> read_c64_slice(const std::string& path, std::int64_t offset_elems,
                                                 std::int64_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open: " + path);
  in.seekg(offset_elems * 8);
  std::vector<float> packed(static_cast<std::size_t>(count) * 2);
  in.read(reinterpret_cast<char*>(packed.data()), count * 8);
  if (!in) throw io_error("short read (slice) from: " + path);
  std::vector<std::complex<double>> values(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    values[i] = {static_cast<double>(packed[2 * i]), static_cast<double>(packed[2 * i + 1])};
  }
  return values;
}

}  // namespace nmbe::binio
