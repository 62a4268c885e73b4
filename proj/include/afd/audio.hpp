// afd/audio.hpp -- PCM buffers plus NIST SPHERE / RIFF readers and writers.

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

#ifndef AFD_AUDIO_HPP
#define AFD_AUDIO_HPP

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <vector>

#include "afd/common.hpp"

namespace afd {

struct AudioBuffer {
  std::vector<int16_t> samples;
  int sample_rate = 16000;
  std::string utterance_id;

  void validate() const {
    if (sample_rate <= 0) throw DataError("AudioBuffer: sample_rate must be > 0");
    if (samples.empty()) throw EmptyInput("AudioBuffer: no samples");
  }
};

namespace detail {

inline std::map<std::string, std::string> parse_sphere_header(const std::string& header) {
  // SPHERE headers are "key -type value" lines inside a fixed-size ASCII block.
  std::map<std::string, std::string> fields;
  std::istringstream in(header);
  std::string line;
  while (std::getline(in, line)) {
    if (line == "end_head") break;
    std::istringstream ls(line);
    std::string key, type, value;
    if (!(ls >> key >> type)) continue;
    if (type.rfind("-s", 0) == 0) {
      // string value: remainder of the line after the type token
      std::getline(ls >> std::ws, value);
    } else {
      ls >> value;
    }
    if (!key.empty() && key[0] != ';') fields[key] = value;
  }
  return fields;
}

}  // namespace detail

// Reads NIST SPHERE ("NIST_1A") or RIFF WAVE 16-bit PCM bytes.
inline AudioBuffer read_audio(const std::string& bytes, const std::string& utterance_id = "") {
  AudioBuffer out;
  out.utterance_id = utterance_id;

  if (bytes.rfind("NIST_1A", 0) == 0) {
    io::Reader r(bytes);
    r.skip(8, "SPHERE magic");  // "NIST_1A\n"
    std::string size_line = r.bytes(8, "SPHERE header size");
    long header_size = std::strtol(size_line.c_str(), nullptr, 10);
    if (header_size <= 16 || size_t(header_size) > bytes.size())
      throw ParseError("SPHERE: bad header size");
    auto fields = detail::parse_sphere_header(bytes.substr(16, size_t(header_size) - 16));

    auto geti = [&](const char* key, long def) -> long {
      auto it = fields.find(key);
      return it == fields.end() ? def : std::strtol(it->second.c_str(), nullptr, 10);
    };
    long rate = geti("sample_rate", 16000);
    long count = geti("sample_count", -1);
    long nbytes = geti("sample_n_bytes", 2);
    long channels = geti("channel_count", 1);
    std::string byte_format = fields.count("sample_byte_format") ? fields["sample_byte_format"] : "01";
    std::string coding = fields.count("sample_coding") ? fields["sample_coding"] : "pcm";

    if (nbytes != 2 || channels != 1 || coding.rfind("pcm", 0) != 0)
      throw UnsupportedFormat("SPHERE: only 16-bit mono PCM is supported");
    if (count < 0) throw ParseError("SPHERE: missing sample_count");
    size_t payload = bytes.size() - size_t(header_size);
    if (payload < size_t(count) * 2) throw ParseError("SPHERE: payload shorter than sample_count");

    const bool big_endian = (byte_format == "10");
    out.sample_rate = int(rate);
    out.samples.resize(size_t(count));
    const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data()) + header_size;
    for (long i = 0; i < count; ++i) {
      uint16_t v = big_endian ? uint16_t((p[2 * i] << 8) | p[2 * i + 1])
                              : uint16_t(p[2 * i] | (p[2 * i + 1] << 8));
      out.samples[size_t(i)] = int16_t(v);
    }
    return out;
  }

  if (bytes.rfind("RIFF", 0) == 0) {
    io::Reader r(bytes);
    r.skip(4, "RIFF magic");
    r.u32("RIFF size");
    if (r.bytes(4, "WAVE tag") != "WAVE") throw UnsupportedFormat("RIFF: not a WAVE file");

    int channels = 0, bits = 0;
    uint32_t rate = 0;
    bool have_fmt = false;
    while (r.remaining() >= 8) {
      std::string id = r.bytes(4, "chunk id");
      uint32_t size = r.u32("chunk size");
      if (id == "fmt ") {
        if (size < 16) throw ParseError("RIFF: short fmt chunk");
        uint16_t format = r.u16("fmt format");
        channels = r.u16("fmt channels");
        rate = r.u32("fmt rate");
        r.u32("fmt byte rate");
        r.u16("fmt block align");
        bits = r.u16("fmt bits");
        r.skip(size - 16, "fmt extra");
        if (format != 1) throw UnsupportedFormat("RIFF: only PCM (format 1) is supported");
        have_fmt = true;
      } else if (id == "data") {
        if (!have_fmt) throw ParseError("RIFF: data chunk before fmt");
        if (channels != 1 || bits != 16) throw UnsupportedFormat("RIFF: only 16-bit mono PCM");
        if (r.remaining() < size) throw ParseError("RIFF: data chunk truncated");
        size_t count = size / 2;
        out.sample_rate = int(rate);
        out.samples.resize(count);
        std::string data = r.bytes(size, "data payload");
        const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data());
        for (size_t i = 0; i < count; ++i)
          out.samples[i] = int16_t(uint16_t(p[2 * i] | (p[2 * i + 1] << 8)));
        return out;
      } else {
        if (r.remaining() < size) throw ParseError("RIFF: chunk truncated");
        r.skip(size + (size & 1), "chunk payload");
      }
    }
    throw ParseError("RIFF: no data chunk");
  }

  throw UnsupportedFormat("read_audio: unknown magic (expected NIST_1A or RIFF)");
}

inline AudioBuffer read_audio_file(const std::string& path, const std::string& utterance_id = "") {
  return read_audio(io::read_file(path), utterance_id);
}

inline std::string write_riff(const AudioBuffer& audio) {
  audio.validate();
  const uint32_t data_size = uint32_t(audio.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  io::put_u32(out, 36 + data_size);
  out += "WAVEfmt ";
  io::put_u32(out, 16);
  io::put_u16(out, 1);  // PCM
  io::put_u16(out, 1);  // mono
  io::put_u32(out, uint32_t(audio.sample_rate));
  io::put_u32(out, uint32_t(audio.sample_rate) * 2);
  io::put_u16(out, 2);
  io::put_u16(out, 16);
  out += "data";
  io::put_u32(out, data_size);
  for (int16_t s : audio.samples) io::put_u16(out, uint16_t(s));
  return out;
}

// Minimal SPHERE writer; used by tests and fixtures.
inline std::string write_sphere(const AudioBuffer& audio) {
  audio.validate();
  std::ostringstream h;
  h << "NIST_1A\n   1024\n";
  h << "sample_rate -i " << audio.sample_rate << "\n";
  h << "sample_count -i " << audio.samples.size() << "\n";
  h << "sample_n_bytes -i 2\n";
  h << "channel_count -i 1\n";
  h << "sample_byte_format -s2 01\n";
  h << "sample_coding -s3 pcm\n";
  h << "end_head\n";
  std::string out = h.str();
  if (out.size() > 1024) throw Error("SPHERE header overflow");
  out.resize(1024, ' ');
  for (int16_t s : audio.samples) io::put_u16(out, uint16_t(s));
  return out;
}

}  // namespace afd

#endif  // AFD_AUDIO_HPP
