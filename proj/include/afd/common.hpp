// afd/common.hpp -- error taxonomy, seeded RNG, little-endian I/O helpers.

// Copyright 2026  AFD project authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef AFD_COMMON_HPP
#define AFD_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace afd {

// ---------------------------------------------------------------------------
// Errors. CLI maps DataError -> exit 2, NumericError -> exit 3 (usage is 1).
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

#define AFD_DEFINE_DATA_ERROR(NAME)                  \
  class NAME : public DataError {                    \
   public:                                           \
    using DataError::DataError;                      \
  }

AFD_DEFINE_DATA_ERROR(EmptyInput);
AFD_DEFINE_DATA_ERROR(ShapeError);
AFD_DEFINE_DATA_ERROR(ParseError);
AFD_DEFINE_DATA_ERROR(MarkupError);
AFD_DEFINE_DATA_ERROR(UnknownPhone);
AFD_DEFINE_DATA_ERROR(SplitError);
AFD_DEFINE_DATA_ERROR(DegenerateMatrix);
AFD_DEFINE_DATA_ERROR(IncompleteTable);
AFD_DEFINE_DATA_ERROR(UnsupportedFormat);
AFD_DEFINE_DATA_ERROR(IngestError);
AFD_DEFINE_DATA_ERROR(EmptyReference);

#undef AFD_DEFINE_DATA_ERROR

// ---------------------------------------------------------------------------
// RNG. mt19937_64 stream with hand-derived floats so draws are identical
// across standard libraries (std distributions are implementation-defined).
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  uint64_t seed() const { return seed_; }
  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_int(uint64_t n) { return engine_() % n; }

  bool bernoulli(double p) { return uniform() < p; }

  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Derive an independent stream, e.g. one per utterance.
  Rng fork(uint64_t salt) const { return Rng(mix64(seed_ ^ mix64(salt))); }

  static uint64_t mix64(uint64_t x) {
    // splitmix64 finalizer.
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
};

inline uint64_t fnv1a64(const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// ---------------------------------------------------------------------------
// Little-endian binary I/O. All on-disk formats are LE regardless of host.
// ---------------------------------------------------------------------------

namespace io {

inline void put_u16(std::string& out, uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(const void* data, size_t n) : p_(static_cast<const unsigned char*>(data)), n_(n) {}
  explicit Reader(const std::string& s) : Reader(s.data(), s.size()) {}

  size_t pos() const { return pos_; }
  size_t remaining() const { return n_ - pos_; }

  void need(size_t n, const char* what) const {
    if (pos_ + n > n_) throw ParseError(std::string("truncated input while reading ") + what);
  }

  uint16_t u16(const char* what = "u16") {
    need(2, what);
    uint16_t v = uint16_t(p_[pos_]) | (uint16_t(p_[pos_ + 1]) << 8);
    pos_ += 2;
    return v;
  }

  uint32_t u32(const char* what = "u32") {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(p_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32(const char* what = "f32") {
    uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::string bytes(size_t n, const char* what = "bytes") {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), n);
    pos_ += n;
    return s;
  }

  void skip(size_t n, const char* what = "skip") {
    need(n, what);
    pos_ += n;
  }

 private:
  const unsigned char* p_;
  size_t n_;
  size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IngestError("cannot open file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IngestError("cannot open file for writing: " + path);
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw IngestError("short write: " + path);
}

}  // namespace io

// Default location of the shipped data tables; overridable via environment.
inline std::string data_dir() {
  if (const char* env = std::getenv("AFD_DATA_DIR")) return env;
#ifdef AFD_DATA_DIR
  return AFD_DATA_DIR;
#else
  return "data";
#endif
}

}  // namespace afd

#endif  // AFD_COMMON_HPP
