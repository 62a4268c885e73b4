// afd/checkpoint.hpp -- model checkpoint file: "AFDC" magic, u32 manifest
// length, JSON manifest (config, tensor shapes/offsets, version, rng seed),
// then a raw little-endian f32 blob.

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

#ifndef AFD_CHECKPOINT_HPP
#define AFD_CHECKPOINT_HPP

#include <nlohmann/json.hpp>

#include "afd/nnet.hpp"

namespace afd {

struct Checkpoint {
  ModelConfig config;
  ModelParameters model;
  uint64_t seed = 0;
};

inline std::string write_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json manifest;
  manifest["version"] = ckpt.model.version;
  manifest["seed"] = ckpt.seed;
  manifest["config"] = ckpt.config.to_json();

  std::string blob;
  nlohmann::json tensors = nlohmann::json::array();
  for (size_t i = 0; i < ckpt.model.tensors.count(); ++i) {
    const auto& m = ckpt.model.tensors.values[i];
    tensors.push_back({{"name", ckpt.model.tensors.names[i]},
                       {"rows", m.rows()},
                       {"cols", m.cols()},
                       {"offset", blob.size()}});
    for (long r = 0; r < m.rows(); ++r)
      for (long c = 0; c < m.cols(); ++c) io::put_f32(blob, m(r, c));
  }
  manifest["tensors"] = std::move(tensors);

  const std::string header = manifest.dump();
  std::string out;
  out += "AFDC";
  io::put_u32(out, uint32_t(header.size()));
  out += header;
  out += blob;
  return out;
}

inline Checkpoint read_checkpoint(const std::string& bytes) {
  io::Reader r(bytes);
  if (r.bytes(4, "AFDC magic") != "AFDC") throw ParseError("checkpoint: bad magic");
  const uint32_t len = r.u32("manifest length");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(r.bytes(len, "manifest"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: bad manifest: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.config = ModelConfig::from_json(manifest.at("config"));
  ckpt.model.version = manifest.value("version", "afd-1");
  ckpt.seed = manifest.value("seed", uint64_t(0));

  const size_t blob_start = r.pos();
  for (const auto& t : manifest.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const long rows = t.at("rows").get<long>();
    const long cols = t.at("cols").get<long>();
    const size_t offset = t.at("offset").get<size_t>();
    const int idx = ckpt.model.tensors.add(name, rows, cols);
    io::Reader tr(bytes.data() + blob_start, bytes.size() - blob_start);
    tr.skip(offset, "tensor offset");
    auto& m = ckpt.model.tensors.values[size_t(idx)];
    for (long i = 0; i < rows; ++i)
      for (long j = 0; j < cols; ++j) m(i, j) = tr.f32(name.c_str());
  }
  ckpt.model.tensors.check_finite();
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  io::write_file(path, write_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return read_checkpoint(io::read_file(path));
}

}  // namespace afd

#endif  // AFD_CHECKPOINT_HPP
