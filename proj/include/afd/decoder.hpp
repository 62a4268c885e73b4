// afd/decoder.hpp -- inference: greedy phone decoding and indicator decoding
// in sampled (LAS-MTL-S) and mapped (LAS-MTL-M) feedback modes, with
// posteriorgram and attention output.

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

#ifndef AFD_DECODER_HPP
#define AFD_DECODER_HPP

#include <optional>

#include "afd/checkpoint.hpp"
#include "afd/nnet.hpp"

namespace afd {

enum class DecodeMode { Phones, IndicatorsSampled, IndicatorsMapped };

struct DecodeResult {
  std::optional<PhoneSequence> phones;
  std::optional<MatF> posteriorgram;  // steps x (feature_count + 1)
  MatF attention;                     // emitted steps (incl. eos) x encoder length
  DecodeMode mode = DecodeMode::Phones;
  bool truncated = false;
};

inline long default_max_len(long encoder_length) { return encoder_length * 3; }

// Greedy argmax decoding of the phone head; stops at <eos> or max_len.
inline DecodeResult decode_phones_greedy(const AcousticFeatures& features,
                                         const ModelParameters& model, const ModelConfig& cfg,
                                         long max_len = 0) {
  Tape<float> tape;
  Graph<float> graph(tape, model.tensors);
  Rng none(0);
  std::vector<int> enc =
      encode_on_tape(graph, cfg, Mat<float>(features.data), /*train=*/false, none);
  const int keys = tape.stack_rows(enc);
  const long enc_len = long(enc.size());
  if (max_len <= 0) max_len = default_max_len(enc_len);

  const int sos = cfg.phone_count;
  const int eos = cfg.phone_count + 1;

  DecodeResult out;
  out.mode = DecodeMode::Phones;
  std::vector<MatF> attention_rows;
  PhoneSequence seq;
  seq.utterance_id = features.utterance_id;

  LstmNodes<float> state{tape.zeros(1, cfg.decoder_units), tape.zeros(1, cfg.decoder_units)};
  int prev = sos;
  out.truncated = true;
  for (long s = 0; s < max_len; ++s) {
    AttendNodes<float> att = attend_on_tape(graph, "ph", state.h, keys);
    const int emb = tape.row(graph.param("ph.emb"), prev);
    DecoderStepNodes<float> step =
        decoder_step_on_tape(graph, "ph", emb, state, att.context, cfg, false, none);
    attention_rows.push_back(tape.val(att.attention));
    state = step.state;
    const MatF& logits = tape.val(step.logits);
    if (!logits.allFinite()) throw NumericError("decode: non-finite logits");
    // argmax over the vocabulary excluding <sos>, which is never emitted.
    int best = -1;
    for (int j = 0; j < int(logits.cols()); ++j) {
      if (j == sos) continue;
      if (best < 0 || logits(0, j) > logits(0, best)) best = j;
    }
    if (best == eos) {
      out.truncated = false;
      break;
    }
    seq.phones.push_back(best);
    prev = best;
  }

  out.attention.resize(long(attention_rows.size()), enc_len);
  for (size_t i = 0; i < attention_rows.size(); ++i) out.attention.row(long(i)) = attention_rows[i];
  out.phones = std::move(seq);
  return out;
}

// Indicator decoding. Per step the head emits feature posteriors; the
// feedback vector is either a thresholded/sampled bit vector (sampled mode)
// or the nearest phone's matrix column (mapped mode, which also yields the
// phone sequence). Stops when the eos bit exceeds 0.5.
inline DecodeResult decode_indicators(const AcousticFeatures& features,
                                      const ModelParameters& model, const ModelConfig& cfg,
                                      const FeatureMatrix& matrix, DecodeMode mode,
                                      long max_len = 0, std::optional<uint64_t> sample_seed = {}) {
  if (mode == DecodeMode::Phones) throw DataError("decode_indicators: bad mode");
  const int Fi = cfg.indicator_dims();
  if (matrix.feature_count() != Fi)
    throw ShapeError("decode_indicators: matrix feature rows " +
                     std::to_string(matrix.feature_count()) + " vs head dims " +
                     std::to_string(Fi));

  Tape<float> tape;
  Graph<float> graph(tape, model.tensors);
  Rng none(0);
  std::optional<Rng> sampler;
  if (sample_seed) sampler.emplace(*sample_seed);

  std::vector<int> enc =
      encode_on_tape(graph, cfg, Mat<float>(features.data), /*train=*/false, none);
  const int keys = tape.stack_rows(enc);
  const long enc_len = long(enc.size());
  if (max_len <= 0) max_len = default_max_len(enc_len);

  DecodeResult out;
  out.mode = mode;
  std::vector<MatF> attention_rows;
  std::vector<std::vector<float>> pg_rows;
  PhoneSequence seq;
  seq.utterance_id = features.utterance_id;

  LstmNodes<float> state{tape.zeros(1, cfg.decoder_units), tape.zeros(1, cfg.decoder_units)};
  MatF prev = MatF::Zero(1, Fi);
  out.truncated = true;
  for (long s = 0; s < max_len; ++s) {
    AttendNodes<float> att = attend_on_tape(graph, "ind", state.h, keys);
    DecoderStepNodes<float> step =
        decoder_step_on_tape(graph, "ind", tape.leaf(prev), state, att.context, cfg, false, none);
    attention_rows.push_back(tape.val(att.attention));
    state = step.state;

    const MatF& z = tape.val(step.logits);
    if (!z.allFinite()) throw NumericError("decode: non-finite indicator logits");
    IndicatorPosteriors phi;
    phi.values.resize(size_t(Fi));
    for (int j = 0; j < Fi; ++j) phi.values[size_t(j)] = 1.0f / (1.0f + std::exp(-z(0, j)));
    pg_rows.push_back(phi.values);

    const bool hit_eos = phi.values[size_t(Fi - 1)] > 0.5f;

    if (mode == DecodeMode::IndicatorsMapped) {
      const NearestPhone nearest = nearest_phone_features(phi, matrix);
      for (int j = 0; j < Fi; ++j) prev(0, j) = nearest.features[size_t(j)];
      // Keep the per-row argmax rule identical to posteriorgram_to_phones.
      if (nearest.phone != matrix.phones().eos) seq.phones.push_back(nearest.phone);
    } else {
      for (int j = 0; j < Fi; ++j) {
        const bool bit = sampler ? sampler->bernoulli(double(phi.values[size_t(j)]))
                                 : (phi.values[size_t(j)] > 0.5f);
        prev(0, j) = bit ? 1.0f : 0.0f;
      }
    }

    if (hit_eos) {
      out.truncated = false;
      break;
    }
  }

  out.attention.resize(long(attention_rows.size()), enc_len);
  for (size_t i = 0; i < attention_rows.size(); ++i) out.attention.row(long(i)) = attention_rows[i];
  MatF pg(long(pg_rows.size()), Fi);
  for (size_t i = 0; i < pg_rows.size(); ++i)
    for (int j = 0; j < Fi; ++j) pg(long(i), j) = pg_rows[i][size_t(j)];
  out.posteriorgram = std::move(pg);
  if (mode == DecodeMode::IndicatorsMapped) out.phones = std::move(seq);
  return out;
}

// Per-row Eq. 1 argmax over the posteriorgram; rows mapping to <eos> drop out.
inline PhoneSequence posteriorgram_to_phones(const MatF& posteriorgram, const FeatureMatrix& m,
                                             const std::string& utterance_id = "") {
  if (posteriorgram.rows() > 0 && int(posteriorgram.cols()) != m.feature_count())
    throw ShapeError("posteriorgram_to_phones: dims mismatch");
  PhoneSequence out;
  out.utterance_id = utterance_id;
  for (long r = 0; r < posteriorgram.rows(); ++r) {
    IndicatorPosteriors phi;
    phi.values.resize(size_t(posteriorgram.cols()));
    for (long j = 0; j < posteriorgram.cols(); ++j) phi.values[size_t(j)] = posteriorgram(r, j);
    const NearestPhone nearest = nearest_phone_features(phi, m);
    if (nearest.phone != m.phones().eos) out.phones.push_back(nearest.phone);
  }
  return out;
}

// ---------------------------------------------------------------------------
// ATT1 attention file: "ATT1", u32 rows, u32 cols, f32 LE row-major.
// ---------------------------------------------------------------------------

inline std::string write_att1(const MatF& attention) {
  std::string out;
  out += "ATT1";
  io::put_u32(out, uint32_t(attention.rows()));
  io::put_u32(out, uint32_t(attention.cols()));
  for (long r = 0; r < attention.rows(); ++r)
    for (long c = 0; c < attention.cols(); ++c) io::put_f32(out, attention(r, c));
  return out;
}

inline MatF read_att1(const std::string& bytes) {
  io::Reader r(bytes);
  if (r.bytes(4, "ATT1 magic") != "ATT1") throw ParseError("ATT1: bad magic");
  const uint32_t rows = r.u32("rows");
  const uint32_t cols = r.u32("cols");
  MatF m{long(rows), long(cols)};
  for (uint32_t i = 0; i < rows; ++i)
    for (uint32_t j = 0; j < cols; ++j) m(long(i), long(j)) = r.f32("payload");
  return m;
}

}  // namespace afd

#endif  // AFD_DECODER_HPP
