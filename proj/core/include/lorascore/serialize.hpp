// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Little-endian binary encoding shared by the model and adapter file formats,
// plus the FNV-1a hash used for fingerprints.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lorascore::io {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(std::span<const std::uint8_t> data);
  void str(std::string_view s);  // u32 length prefix
  void f32_array(std::span<const float> values);  // u64 count prefix

  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::vector<std::uint8_t> bytes(std::size_t n);
  std::string str();
  std::vector<float> f32_array();
  bool at_end() const { return pos_ == data_.size(); }
  void expect_end() const;

 private:
  void need(std::size_t n) const;
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
// Writes via a temporary file and rename so readers never see partial output.
void write_file(const std::string& path, std::string_view contents);

std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a_floats(std::span<const float> values, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace lorascore::io
