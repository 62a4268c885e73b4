// afd/nnet.hpp -- the sequence model: pyramidal bidirectional LSTM encoder,
// Luong (general) attention, a phone decoder and an indicator decoder sharing
// the encoder, joint loss with equal task weights, Adam training step, and a
// finite-difference gradient verifier.

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

#ifndef AFD_NNET_HPP
#define AFD_NNET_HPP

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "afd/artic.hpp"
#include "afd/autodiff.hpp"
#include "afd/frontend.hpp"

namespace afd {

enum class RunMode { Train, Infer };
enum class FeedbackMode { Sampled, Mapped };  // LAS-MTL-S vs LAS-MTL-M

struct ModelConfig {
  int encoder_layers = 3;
  int encoder_units = 256;
  int decoder_units = 256;
  double dropout_prob = 0.2;
  double scheduled_sampling_prob = 0.1;
  double l2_decay = 1e-5;
  double learning_rate = 1e-3;
  double grad_clip = 5.0;
  int input_dims = 0;
  int phone_count = 0;    // real phones, sil included, <sos>/<eos> excluded
  int feature_count = 0;  // named articulatory features, <eos> bit excluded

  int vocab_size() const { return phone_count + 2; }
  int indicator_dims() const { return feature_count + 1; }
  int keys_dim() const { return 2 * encoder_units; }
  int reduction_factor() const { return 1 << (encoder_layers - 1); }

  void validate() const {
    if (encoder_layers < 1 || encoder_layers > 6) throw DataError("config: encoder_layers out of range");
    if (encoder_units < 1 || decoder_units < 1) throw DataError("config: units must be positive");
    if (input_dims < 1) throw DataError("config: input_dims must be positive");
    if (phone_count < 1) throw DataError("config: phone_count must be positive");
    if (feature_count < 1) throw DataError("config: feature_count must be positive");
    for (double p : {dropout_prob, scheduled_sampling_prob})
      if (p < 0.0 || p > 1.0) throw DataError("config: probabilities must lie in [0,1]");
    if (l2_decay < 0 || learning_rate < 0 || grad_clip <= 0)
      throw DataError("config: bad optimizer constants");
  }

  nlohmann::json to_json() const {
    return {{"encoder_layers", encoder_layers},
            {"encoder_units", encoder_units},
            {"decoder_units", decoder_units},
            {"dropout_prob", dropout_prob},
            {"scheduled_sampling_prob", scheduled_sampling_prob},
            {"l2_decay", l2_decay},
            {"learning_rate", learning_rate},
            {"grad_clip", grad_clip},
            {"input_dims", input_dims},
            {"phone_count", phone_count},
            {"feature_count", feature_count}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    auto get = [&](const char* k, auto& field) {
      if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
    };
    get("encoder_layers", c.encoder_layers);
    get("encoder_units", c.encoder_units);
    get("decoder_units", c.decoder_units);
    get("dropout_prob", c.dropout_prob);
    get("scheduled_sampling_prob", c.scheduled_sampling_prob);
    get("l2_decay", c.l2_decay);
    get("learning_rate", c.learning_rate);
    get("grad_clip", c.grad_clip);
    get("input_dims", c.input_dims);
    get("phone_count", c.phone_count);
    get("feature_count", c.feature_count);
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------
// Named parameter store.
// ---------------------------------------------------------------------------

template <class T>
struct Params {
  std::vector<std::string> names;
  std::vector<Mat<T>> values;
  std::unordered_map<std::string, int> index;

  int add(const std::string& name, long rows, long cols) {
    if (index.count(name)) throw DataError("duplicate parameter: " + name);
    index[name] = int(names.size());
    names.push_back(name);
    values.push_back(Mat<T>::Zero(rows, cols));
    return int(names.size()) - 1;
  }

  Mat<T>& at(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw DataError("unknown parameter: " + name);
    return values[size_t(it->second)];
  }
  const Mat<T>& at(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw DataError("unknown parameter: " + name);
    return values[size_t(it->second)];
  }

  size_t count() const { return names.size(); }

  size_t scalar_count() const {
    size_t n = 0;
    for (const auto& v : values) n += size_t(v.size());
    return n;
  }

  template <class U>
  Params<U> cast() const {
    Params<U> out;
    out.names = names;
    out.index = index;
    out.values.reserve(values.size());
    for (const auto& v : values) out.values.push_back(v.template cast<U>());
    return out;
  }

  Params zeros_like() const {
    Params out;
    out.names = names;
    out.index = index;
    out.values.reserve(values.size());
    for (const auto& v : values) out.values.push_back(Mat<T>::Zero(v.rows(), v.cols()));
    return out;
  }

  void check_finite() const {
    for (size_t i = 0; i < values.size(); ++i)
      if (!values[i].allFinite())
        throw NumericError("non-finite values in tensor " + names[i]);
  }
};

struct ModelParameters {
  Params<float> tensors;
  std::string version = "afd-1";
};

namespace detail {

inline void add_lstm_params(Params<float>& p, const std::string& prefix, int in_dim, int units) {
  p.add(prefix + ".Wx", in_dim, 4 * units);
  p.add(prefix + ".Wh", units, 4 * units);
  p.add(prefix + ".b", 1, 4 * units);
}

}  // namespace detail

// Uniform Glorot-style init; LSTM forget-gate biases start at 1.
inline ModelParameters init_parameters(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParameters model;
  Params<float>& p = model.tensors;

  const int U = cfg.encoder_units;
  const int Ud = cfg.decoder_units;
  const int K = cfg.keys_dim();
  const int V = cfg.vocab_size();
  const int Fi = cfg.indicator_dims();
  const int E = cfg.decoder_units;  // phone embedding width

  for (int l = 0; l < cfg.encoder_layers; ++l) {
    const int in_dim = (l == 0) ? cfg.input_dims : 2 * K;  // pyramid concat doubles 2U
    detail::add_lstm_params(p, "enc.l" + std::to_string(l) + ".fwd", in_dim, U);
    detail::add_lstm_params(p, "enc.l" + std::to_string(l) + ".bwd", in_dim, U);
  }

  p.add("ph.emb", V, E);
  p.add("ph.att.Wa", Ud, K);
  detail::add_lstm_params(p, "ph.dec", E + K, Ud);
  p.add("ph.out.Wc", Ud + K, Ud);
  p.add("ph.out.bc", 1, Ud);
  p.add("ph.out.Wy", Ud, V);
  p.add("ph.out.by", 1, V);

  p.add("ind.att.Wa", Ud, K);
  detail::add_lstm_params(p, "ind.dec", Fi + K, Ud);
  p.add("ind.out.Wc", Ud + K, Ud);
  p.add("ind.out.bc", 1, Ud);
  p.add("ind.out.Wy", Ud, Fi);
  p.add("ind.out.by", 1, Fi);

  for (size_t i = 0; i < p.values.size(); ++i) {
    Mat<float>& m = p.values[i];
    const bool is_bias = p.names[i].ends_with(".b") || p.names[i].ends_with(".bc") ||
                         p.names[i].ends_with(".by");
    if (is_bias) {
      m.setZero();
      if (p.names[i].ends_with(".b")) {
        // LSTM bias layout [i f o g]: forget gate slice starts at units.
        const long units = m.cols() / 4;
        for (long j = 0; j < units; ++j) m(0, units + j) = 1.0f;
      }
      continue;
    }
    const double limit = std::sqrt(6.0 / double(m.rows() + m.cols()));
    for (long r = 0; r < m.rows(); ++r)
      for (long c = 0; c < m.cols(); ++c) m(r, c) = float(rng.uniform(-limit, limit));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Graph construction. A Graph binds one tape to a parameter set: parameters
// become leaf nodes on first use and their gradients can be read back after
// backward().
// ---------------------------------------------------------------------------

template <class T>
class Graph {
 public:
  Graph(Tape<T>& tape, const Params<T>& params) : tape_(tape), params_(params) {}

  Tape<T>& tape() { return tape_; }

  int param(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    const int node = tape_.leaf(params_.at(name));
    cache_.emplace(name, node);
    return node;
  }

  // Accumulates tape gradients of used parameters into `grads` (same layout).
  void accumulate_grads(Params<T>& grads) {
    for (const auto& [name, node] : cache_) {
      const auto& g = tape_.grad(node);
      if (g.size() > 0) grads.at(name) += g;
    }
  }

 private:
  Tape<T>& tape_;
  const Params<T>& params_;
  std::unordered_map<std::string, int> cache_;
};

template <class T>
struct LstmNodes {
  int h = -1;
  int c = -1;
};

template <class T>
LstmNodes<T> lstm_step(Graph<T>& g, const std::string& prefix, int x, LstmNodes<T> s, int units) {
  Tape<T>& t = g.tape();
  int z = t.add(t.add(t.matmul(x, g.param(prefix + ".Wx")),
                      t.matmul(s.h, g.param(prefix + ".Wh"))),
                g.param(prefix + ".b"));
  const int i = t.sigmoid(t.slice_cols(z, 0, units));
  const int f = t.sigmoid(t.slice_cols(z, units, units));
  const int o = t.sigmoid(t.slice_cols(z, 2 * units, units));
  const int u = t.tanh_op(t.slice_cols(z, 3 * units, units));
  LstmNodes<T> out;
  out.c = t.add(t.hadamard(f, s.c), t.hadamard(i, u));
  out.h = t.hadamard(o, t.tanh_op(out.c));
  return out;
}

template <class T>
Mat<T> dropout_mask(long cols, double keep_prob, Rng& rng) {
  Mat<T> m(1, cols);
  const T scale = T(1.0 / keep_prob);
  for (long j = 0; j < cols; ++j) m(0, j) = rng.bernoulli(keep_prob) ? scale : T(0);
  return m;
}

// Bidirectional pyramidal encoder. Returns the per-step top-layer nodes
// (1 x 2U each); callers stack them into the attention keys.
template <class T>
std::vector<int> encode_on_tape(Graph<T>& g, const ModelConfig& cfg, const Mat<T>& features,
                                bool train, Rng& rng) {
  if (features.cols() != cfg.input_dims)
    throw ShapeError("encode: input dims " + std::to_string(features.cols()) + " vs config " +
                     std::to_string(cfg.input_dims));
  if (features.rows() < 1) throw EmptyInput("encode: no frames");
  Tape<T>& t = g.tape();
  const int input = t.leaf(features);
  std::vector<int> steps(size_t(features.rows()));
  for (long i = 0; i < features.rows(); ++i) steps[size_t(i)] = t.row(input, i);

  const double keep = 1.0 - (train ? cfg.dropout_prob : 0.0);
  for (int layer = 0; layer < cfg.encoder_layers; ++layer) {
    if (layer > 0) {
      // Pyramid: concatenate consecutive pairs, halving time (odd tail padded).
      std::vector<int> reduced;
      reduced.reserve((steps.size() + 1) / 2);
      for (size_t i = 0; i < steps.size(); i += 2) {
        const int second = (i + 1 < steps.size())
                               ? steps[i + 1]
                               : t.zeros(1, t.val(steps[i]).cols());
        reduced.push_back(t.concat_cols(steps[i], second));
      }
      steps = std::move(reduced);
    }
    const std::string base = "enc.l" + std::to_string(layer);
    const long T_len = long(steps.size());
    std::vector<int> fwd(static_cast<size_t>(T_len)), bwd(static_cast<size_t>(T_len));
    LstmNodes<T> s{t.zeros(1, cfg.encoder_units), t.zeros(1, cfg.encoder_units)};
    for (long i = 0; i < T_len; ++i) {
      s = lstm_step(g, base + ".fwd", steps[size_t(i)], s, cfg.encoder_units);
      fwd[size_t(i)] = s.h;
    }
    s = LstmNodes<T>{t.zeros(1, cfg.encoder_units), t.zeros(1, cfg.encoder_units)};
    for (long i = T_len - 1; i >= 0; --i) {
      s = lstm_step(g, base + ".bwd", steps[size_t(i)], s, cfg.encoder_units);
      bwd[size_t(i)] = s.h;
    }
    for (long i = 0; i < T_len; ++i) {
      int combined = t.concat_cols(fwd[size_t(i)], bwd[size_t(i)]);
      if (train && cfg.dropout_prob > 0.0)
        combined = t.mul_const(combined, dropout_mask<T>(t.val(combined).cols(), keep, rng));
      steps[size_t(i)] = combined;
    }
  }
  return steps;
}

template <class T>
struct AttendNodes {
  int context = -1;
  int attention = -1;  // 1 x L row
};

// Luong "general" attention: scores = (q Wa) K^T.
template <class T>
AttendNodes<T> attend_on_tape(Graph<T>& g, const std::string& head, int query, int keys) {
  Tape<T>& t = g.tape();
  const int projected = t.matmul(query, g.param(head + ".att.Wa"));
  const int attn = t.softmax_row(t.matmul_nt(projected, keys));
  return {t.matmul(attn, keys), attn};
}

template <class T>
struct DecoderStepNodes {
  int logits = -1;
  LstmNodes<T> state;
};

// One decoder step: LSTM over [input; context], then the Luong-style output
// tanh([h; context] Wc + bc) Wy + by. `input` is an embedding row for the
// phone head or the previous indicator vector for the feature head.
template <class T>
DecoderStepNodes<T> decoder_step_on_tape(Graph<T>& g, const std::string& head, int input,
                                         LstmNodes<T> state, int context, const ModelConfig& cfg,
                                         bool train, Rng& rng) {
  Tape<T>& t = g.tape();
  const int x = t.concat_cols(input, context);
  LstmNodes<T> next = lstm_step(g, head + ".dec", x, state, cfg.decoder_units);
  int hc = t.concat_cols(next.h, context);
  int attnh = t.tanh_op(t.add(t.matmul(hc, g.param(head + ".out.Wc")), g.param(head + ".out.bc")));
  if (train && cfg.dropout_prob > 0.0)
    attnh = t.mul_const(attnh, dropout_mask<T>(t.val(attnh).cols(), 1.0 - cfg.dropout_prob, rng));
  const int logits = t.add(t.matmul(attnh, g.param(head + ".out.Wy")), g.param(head + ".out.by"));
  return {logits, next};
}

// ---------------------------------------------------------------------------
// Joint forward pass for one utterance (teacher forcing + scheduled sampling).
// ---------------------------------------------------------------------------

struct TrainingExample {
  std::string id;
  MatF features;                  // frames x input_dims, already normalized
  std::vector<int> phone_targets;  // inventory indices, no <sos>/<eos>
};

struct ForwardStats {
  double loss = 0.0;        // CE + BCE, averaged per step
  double phone_loss = 0.0;  // CE component
  double indicator_loss = 0.0;
};

template <class T>
struct ForwardResult {
  int loss_node = -1;
  ForwardStats stats;
};

// Builds the full MTL graph for one utterance. The FeatureMatrix supplies
// indicator targets (columns of the winning phones) and, in mapped mode, the
// feedback refinement. Scheduled sampling feeds the model's own previous
// output with probability cfg.scheduled_sampling_prob; those feedback values
// are constants on the tape (no gradient flows through the replay).
template <class T>
ForwardResult<T> forward_mtl(Graph<T>& g, const ModelConfig& cfg, const TrainingExample& ex,
                             const FeatureMatrix& matrix, FeedbackMode mode, bool train,
                             Rng& rng) {
  Tape<T>& t = g.tape();
  if (ex.phone_targets.empty()) throw EmptyInput("forward_mtl: empty target sequence");
  const int sos = cfg.phone_count;
  const int eos = cfg.phone_count + 1;
  const int Fi = cfg.indicator_dims();
  if (matrix.feature_count() != Fi)
    throw ShapeError("forward_mtl: matrix feature rows vs config feature_count");

  Mat<T> feats = ex.features.template cast<T>();
  std::vector<int> enc = encode_on_tape(g, cfg, feats, train, rng);
  const int keys = t.stack_rows(enc);

  // Phone targets with <eos>; indicator targets are matrix columns + eos row.
  std::vector<int> targets = ex.phone_targets;
  targets.push_back(eos);
  const long steps = long(targets.size());

  std::vector<int> ce_terms, bce_terms;
  ce_terms.reserve(size_t(steps));
  bce_terms.reserve(size_t(steps));

  // Phone decoder.
  {
    LstmNodes<T> state{t.zeros(1, cfg.decoder_units), t.zeros(1, cfg.decoder_units)};
    int prev_symbol = sos;
    for (long s = 0; s < steps; ++s) {
      AttendNodes<T> att = attend_on_tape(g, "ph", state.h, keys);
      const int emb = t.row(g.param("ph.emb"), prev_symbol);
      DecoderStepNodes<T> step =
          decoder_step_on_tape(g, "ph", emb, state, att.context, cfg, train, rng);
      ce_terms.push_back(t.ce_from_logits(step.logits, targets[size_t(s)]));
      state = step.state;

      const bool sample = train && rng.bernoulli(cfg.scheduled_sampling_prob);
      if (sample) {
        // Model's own output, <sos> excluded (matches greedy decoding).
        const Mat<T>& z = t.val(step.logits);
        int best = -1;
        for (int j = 0; j < int(z.cols()); ++j) {
          if (j == sos) continue;
          if (best < 0 || z(0, j) > z(0, best)) best = j;
        }
        prev_symbol = best;
      } else {
        prev_symbol = targets[size_t(s)];
      }
    }
  }

  // Indicator decoder.
  {
    LstmNodes<T> state{t.zeros(1, cfg.decoder_units), t.zeros(1, cfg.decoder_units)};
    Mat<T> prev_vec = Mat<T>::Zero(1, Fi);  // the <sos> analog
    for (long s = 0; s < steps; ++s) {
      AttendNodes<T> att = attend_on_tape(g, "ind", state.h, keys);
      const int input = t.leaf(prev_vec);
      DecoderStepNodes<T> step =
          decoder_step_on_tape(g, "ind", input, state, att.context, cfg, train, rng);

      const std::vector<float> target_bits = matrix.column_for_phone(targets[size_t(s)]);
      Mat<T> target_row(1, Fi);
      for (int j = 0; j < Fi; ++j) target_row(0, j) = T(target_bits[size_t(j)]);
      bce_terms.push_back(t.bce_sum_from_logits(step.logits, target_row));
      state = step.state;

      const bool sample = train && rng.bernoulli(cfg.scheduled_sampling_prob);
      if (sample) {
        // Feed back the model's own output, refined per decoding mode.
        const Mat<T>& z = t.val(step.logits);
        IndicatorPosteriors phi;
        phi.values.resize(size_t(Fi));
        for (int j = 0; j < Fi; ++j)
          phi.values[size_t(j)] = float(1.0 / (1.0 + std::exp(-double(z(0, j)))));
        if (mode == FeedbackMode::Mapped) {
          const NearestPhone nearest = nearest_phone_features(phi, matrix);
          for (int j = 0; j < Fi; ++j) prev_vec(0, j) = T(nearest.features[size_t(j)]);
        } else {
          for (int j = 0; j < Fi; ++j)
            prev_vec(0, j) = T(rng.bernoulli(phi.values[size_t(j)]) ? 1 : 0);
        }
      } else {
        for (int j = 0; j < Fi; ++j) prev_vec(0, j) = T(target_bits[size_t(j)]);
      }
    }
  }

  const T inv_steps = T(1) / T(steps);
  const int ce_avg = t.scale(t.add_all(ce_terms), inv_steps);
  const int bce_avg = t.scale(t.add_all(bce_terms), inv_steps);
  ForwardResult<T> out;
  out.loss_node = t.add(ce_avg, bce_avg);
  out.stats.phone_loss = double(t.val(ce_avg)(0, 0));
  out.stats.indicator_loss = double(t.val(bce_avg)(0, 0));
  out.stats.loss = double(t.val(out.loss_node)(0, 0));
  if (!std::isfinite(out.stats.loss)) throw NumericError("forward_mtl: non-finite loss");
  return out;
}

// ---------------------------------------------------------------------------
// Value-level operation surface. These run tiny single-step tapes in infer
// mode; the decoders and tests use them where a full graph is not needed.
// ---------------------------------------------------------------------------

struct EncoderOutput {
  MatF states;  // reduced length x keys_dim
  int reduction_factor = 1;
  int frame_span_ms = 10;

  long length() const { return states.rows(); }
};

inline EncoderOutput encode(const AcousticFeatures& features, const ModelParameters& model,
                            const ModelConfig& cfg, RunMode mode = RunMode::Infer,
                            Rng* rng = nullptr) {
  Rng fallback(0);
  Rng& r = rng ? *rng : fallback;
  if (mode == RunMode::Train && !rng) throw DataError("encode: train mode requires an rng");
  Tape<float> tape;
  Graph<float> graph(tape, model.tensors);
  std::vector<int> rows =
      encode_on_tape(graph, cfg, Mat<float>(features.data), mode == RunMode::Train, r);
  EncoderOutput out;
  out.reduction_factor = cfg.reduction_factor();
  out.frame_span_ms = features.step_ms * out.reduction_factor;
  out.states.resize(long(rows.size()), cfg.keys_dim());
  for (size_t i = 0; i < rows.size(); ++i) out.states.row(long(i)) = tape.val(rows[i]);
  if (!out.states.allFinite()) throw NumericError("encode: non-finite activation");
  return out;
}

struct AttendResult {
  std::vector<float> context;
  std::vector<float> attention;
};

inline AttendResult attend(const std::vector<float>& query, const EncoderOutput& keys,
                           const ModelParameters& model, const std::string& head = "ph") {
  Tape<float> tape;
  Graph<float> graph(tape, model.tensors);
  MatF q(1, long(query.size()));
  for (size_t i = 0; i < query.size(); ++i) q(0, long(i)) = query[i];
  const int keys_node = tape.leaf(keys.states);
  AttendNodes<float> nodes = attend_on_tape(graph, head, tape.leaf(q), keys_node);
  AttendResult out;
  const MatF& ctx = tape.val(nodes.context);
  const MatF& att = tape.val(nodes.attention);
  out.context.assign(ctx.data(), ctx.data() + ctx.size());
  out.attention.assign(att.data(), att.data() + att.size());
  return out;
}

struct DecoderState {
  MatF h, c;  // 1 x decoder_units each

  static DecoderState zero(const ModelConfig& cfg) {
    return {MatF::Zero(1, cfg.decoder_units), MatF::Zero(1, cfg.decoder_units)};
  }
};

struct PhoneStepResult {
  std::vector<float> logits;  // vocab_size = phone_count + specials
  DecoderState state;
};

inline PhoneStepResult phone_decoder_step(int prev_symbol, const DecoderState& state,
                                          const std::vector<float>& context,
                                          const ModelParameters& model, const ModelConfig& cfg) {
  if (prev_symbol < 0 || prev_symbol >= cfg.vocab_size())
    throw ShapeError("phone_decoder_step: symbol out of range");
  Tape<float> tape;
  Graph<float> graph(tape, model.tensors);
  Rng none(0);
  MatF ctx(1, long(context.size()));
  for (size_t i = 0; i < context.size(); ++i) ctx(0, long(i)) = context[i];
  LstmNodes<float> s{tape.leaf(state.h), tape.leaf(state.c)};
  const int emb = tape.row(graph.param("ph.emb"), prev_symbol);
  DecoderStepNodes<float> step =
      decoder_step_on_tape(graph, "ph", emb, s, tape.leaf(ctx), cfg, false, none);
  const MatF& z = tape.val(step.logits);
  if (!z.allFinite()) throw NumericError("phone_decoder_step: non-finite logits");
  PhoneStepResult out;
  out.logits.assign(z.data(), z.data() + z.size());
  out.state = {tape.val(step.state.h), tape.val(step.state.c)};
  return out;
}

struct IndicatorStepResult {
  std::vector<float> probabilities;  // feature_count + 1 (eos bit), in (0,1)
  DecoderState state;
};

inline IndicatorStepResult indicator_decoder_step(const std::vector<float>& prev_features,
                                                  const DecoderState& state,
                                                  const std::vector<float>& context,
                                                  const ModelParameters& model,
                                                  const ModelConfig& cfg) {
  if (int(prev_features.size()) != cfg.indicator_dims())
    throw ShapeError("indicator_decoder_step: prev vector dims");
  Tape<float> tape;
  Graph<float> graph(tape, model.tensors);
  Rng none(0);
  MatF prev(1, long(prev_features.size()));
  for (size_t i = 0; i < prev_features.size(); ++i) prev(0, long(i)) = prev_features[i];
  MatF ctx(1, long(context.size()));
  for (size_t i = 0; i < context.size(); ++i) ctx(0, long(i)) = context[i];
  LstmNodes<float> s{tape.leaf(state.h), tape.leaf(state.c)};
  DecoderStepNodes<float> step =
      decoder_step_on_tape(graph, "ind", tape.leaf(prev), s, tape.leaf(ctx), cfg, false, none);
  const MatF z = tape.val(step.logits);
  if (!z.allFinite()) throw NumericError("indicator_decoder_step: non-finite output");
  IndicatorStepResult out;
  out.probabilities.resize(size_t(z.cols()));
  for (long j = 0; j < z.cols(); ++j)
    out.probabilities[size_t(j)] = 1.0f / (1.0f + std::exp(-z(0, j)));
  out.state = {tape.val(step.state.h), tape.val(step.state.c)};
  return out;
}

// ---------------------------------------------------------------------------
// mtl_loss -- the loss contract on plain values (equal task weights, each
// task averaged per decoder step, BCE summed over indicator bits).
// ---------------------------------------------------------------------------

inline double mtl_loss(const std::vector<std::vector<float>>& phone_logits,
                       const std::vector<std::vector<float>>& indicator_probs,
                       const std::vector<int>& phone_targets,
                       const MatF& indicator_targets) {
  if (phone_logits.size() != phone_targets.size())
    throw ShapeError("mtl_loss: phone sequence length mismatch");
  if (long(indicator_probs.size()) != indicator_targets.rows())
    throw ShapeError("mtl_loss: indicator sequence length mismatch");
  double ce = 0.0;
  for (size_t s = 0; s < phone_logits.size(); ++s) {
    const auto& z = phone_logits[s];
    const int target = phone_targets[s];
    if (target < 0 || target >= int(z.size())) throw ShapeError("mtl_loss: target out of range");
    double mx = z[0];
    for (float v : z) mx = std::max(mx, double(v));
    double sum = 0.0;
    for (float v : z) sum += std::exp(double(v) - mx);
    ce += -(double(z[size_t(target)]) - mx - std::log(sum));
  }
  double bce = 0.0;
  for (size_t s = 0; s < indicator_probs.size(); ++s) {
    const auto& probs = indicator_probs[s];
    if (long(probs.size()) != indicator_targets.cols())
      throw ShapeError("mtl_loss: indicator dims mismatch");
    for (long j = 0; j < indicator_targets.cols(); ++j) {
      double p = std::min(1.0 - kPosteriorClamp, std::max(kPosteriorClamp, double(probs[size_t(j)])));
      const double y = double(indicator_targets(long(s), j));
      bce += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
  }
  const double n_ph = double(phone_logits.size());
  const double n_ind = double(indicator_probs.size());
  return (n_ph > 0 ? ce / n_ph : 0.0) + (n_ind > 0 ? bce / n_ind : 0.0);
}

// ---------------------------------------------------------------------------
// Training step: per-utterance graphs, summed gradients, global norm clip,
// Adam with classic L2 decay. The reported loss excludes the decay term.
// ---------------------------------------------------------------------------

struct AdamState {
  Params<float> m, v;
  int64_t step = 0;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;

  static AdamState like(const Params<float>& p) {
    AdamState s;
    s.m = p.zeros_like();
    s.v = p.zeros_like();
    return s;
  }
};

inline ForwardStats train_step(const std::vector<TrainingExample>& batch, ModelParameters& model,
                               const ModelConfig& cfg, const FeatureMatrix& matrix,
                               FeedbackMode mode, AdamState& adam, Rng& rng, int workers = 1) {
  if (batch.empty()) throw EmptyInput("train_step: empty batch");
  ForwardStats stats;

  // One salt per step; per-utterance streams depend only on (salt, id) so the
  // batch order cannot change the result. Workers take contiguous utterance
  // ranges and their partial gradients reduce in worker order, so a fixed
  // worker count is bitwise deterministic.
  const uint64_t salt = rng.next_u64();
  auto process_range = [&](size_t begin, size_t end, Params<float>& grads, ForwardStats& local) {
    for (size_t i = begin; i < end; ++i) {
      const TrainingExample& ex = batch[i];
      Rng ex_rng(Rng::mix64(salt ^ fnv1a64(ex.id)));
      Tape<float> tape;
      Graph<float> graph(tape, model.tensors);
      ForwardResult<float> fwd =
          forward_mtl(graph, cfg, ex, matrix, mode, /*train=*/true, ex_rng);
      tape.backward(fwd.loss_node);
      graph.accumulate_grads(grads);
      local.loss += fwd.stats.loss;
      local.phone_loss += fwd.stats.phone_loss;
      local.indicator_loss += fwd.stats.indicator_loss;
    }
  };

  Params<float> grads = model.tensors.zeros_like();
  const size_t n_workers =
      std::max<size_t>(1, std::min<size_t>(size_t(std::max(workers, 1)), batch.size()));
  if (n_workers == 1) {
    process_range(0, batch.size(), grads, stats);
  } else {
    std::vector<Params<float>> worker_grads(n_workers);
    std::vector<ForwardStats> worker_stats(n_workers);
    std::vector<std::exception_ptr> worker_errors(n_workers);
    std::vector<std::thread> pool;
    const size_t chunk = (batch.size() + n_workers - 1) / n_workers;
    for (size_t w = 0; w < n_workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          worker_grads[w] = model.tensors.zeros_like();
          const size_t begin = w * chunk;
          const size_t end = std::min(batch.size(), begin + chunk);
          if (begin < end) process_range(begin, end, worker_grads[w], worker_stats[w]);
        } catch (...) {
          worker_errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : worker_errors)
      if (e) std::rethrow_exception(e);
    for (size_t w = 0; w < n_workers; ++w) {
      for (size_t i = 0; i < grads.values.size(); ++i)
        grads.values[i] += worker_grads[w].values[i];
      stats.loss += worker_stats[w].loss;
      stats.phone_loss += worker_stats[w].phone_loss;
      stats.indicator_loss += worker_stats[w].indicator_loss;
    }
  }
  const float inv_b = 1.0f / float(batch.size());
  stats.loss *= inv_b;
  stats.phone_loss *= inv_b;
  stats.indicator_loss *= inv_b;

  // Mean over the batch, L2 decay, global-norm clip.
  double sq_norm = 0.0;
  for (size_t i = 0; i < grads.values.size(); ++i) {
    grads.values[i] *= inv_b;
    if (cfg.l2_decay > 0)
      grads.values[i] += float(cfg.l2_decay) * model.tensors.values[i];
    if (!grads.values[i].allFinite())
      throw NumericError("train_step: non-finite gradient in " + grads.names[i]);
    sq_norm += double(grads.values[i].squaredNorm());
  }
  const double norm = std::sqrt(sq_norm);
  if (norm > cfg.grad_clip) {
    const float s = float(cfg.grad_clip / norm);
    for (auto& g : grads.values) g *= s;
  }

  adam.step += 1;
  const double bc1 = 1.0 - std::pow(adam.beta1, double(adam.step));
  const double bc2 = 1.0 - std::pow(adam.beta2, double(adam.step));
  const float lr = float(cfg.learning_rate);
  for (size_t i = 0; i < grads.values.size(); ++i) {
    auto& m = adam.m.values[i];
    auto& v = adam.v.values[i];
    const auto& g = grads.values[i];
    m = float(adam.beta1) * m + float(1.0 - adam.beta1) * g;
    v = float(adam.beta2) * v + float(1.0 - adam.beta2) * g.cwiseProduct(g);
    const auto m_hat = (m / float(bc1)).eval();
    const auto v_hat = (v / float(bc2)).eval();
    model.tensors.values[i] -=
        lr * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + float(adam.epsilon)).matrix());
  }
  model.tensors.check_finite();
  return stats;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification (double precision).
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_relative_error = 0.0;
  // Absolute error over coordinates whose gradient is ~0 (relative error is
  // meaningless there).
  double max_zero_grad_abs_error = 0.0;
  size_t coordinates = 0;
  std::string worst_tensor;
};

// Central differences against the analytic gradient on sampled coordinates.
// Dropout and scheduled sampling are forced off; this checks every
// differentiable path end to end (encoder, both attentions, both decoders,
// both loss heads).
//
// Coordinates whose gradient magnitude sits below zero_grad_cutoff are held
// to the absolute bound instead of the relative one: with a loss of order 10
// the FD noise floor in double is ~1e-9, which would swamp the relative error
// of genuinely tiny gradients while the absolute bound (1e-8) still catches
// any real defect there.
inline GradCheckReport check_gradients(const ModelParameters& model, const ModelConfig& config,
                                       const std::vector<TrainingExample>& batch,
                                       const FeatureMatrix& matrix, double epsilon,
                                       const std::vector<std::string>& tensor_subset = {},
                                       int max_coords_per_tensor = 8, uint64_t seed = 911,
                                       double zero_grad_cutoff = 1e-5) {
  ModelConfig cfg = config;
  cfg.dropout_prob = 0.0;
  cfg.scheduled_sampling_prob = 0.0;

  Params<double> theta = model.tensors.cast<double>();
  Rng dummy(0);

  auto loss_at = [&](const Params<double>& p) {
    double total = 0.0;
    for (const auto& ex : batch) {
      Tape<double> tape;
      Graph<double> graph(tape, p);
      total += forward_mtl(graph, cfg, ex, matrix, FeedbackMode::Mapped, false, dummy).stats.loss;
    }
    return total / double(batch.size());
  };

  // Analytic gradient.
  Params<double> analytic = theta.zeros_like();
  for (const auto& ex : batch) {
    Tape<double> tape;
    Graph<double> graph(tape, theta);
    ForwardResult<double> fwd =
        forward_mtl(graph, cfg, ex, matrix, FeedbackMode::Mapped, false, dummy);
    tape.backward(fwd.loss_node);
    graph.accumulate_grads(analytic);
  }
  for (auto& g : analytic.values) g /= double(batch.size());

  std::vector<int> tensors;
  if (tensor_subset.empty()) {
    for (int i = 0; i < int(theta.count()); ++i) tensors.push_back(i);
  } else {
    for (const auto& name : tensor_subset) {
      auto it = theta.index.find(name);
      if (it == theta.index.end()) throw DataError("check_gradients: unknown tensor " + name);
      tensors.push_back(it->second);
    }
  }

  GradCheckReport report;
  Rng pick(seed);
  for (int ti : tensors) {
    Mat<double>& m = theta.values[size_t(ti)];
    const long n = m.size();
    std::vector<long> coords;
    if (n <= max_coords_per_tensor) {
      for (long i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < max_coords_per_tensor; ++i)
        coords.push_back(long(pick.uniform_int(uint64_t(n))));
    }
    for (long flat : coords) {
      const long r = flat / m.cols(), c = flat % m.cols();
      const double saved = m(r, c);
      m(r, c) = saved + epsilon;
      const double up = loss_at(theta);
      m(r, c) = saved - epsilon;
      const double down = loss_at(theta);
      m(r, c) = saved;
      const double fd = (up - down) / (2.0 * epsilon);
      const double an = analytic.values[size_t(ti)](r, c);
      const double abs_err = std::abs(fd - an);
      const double denom = std::max(std::abs(fd), std::abs(an));
      report.coordinates += 1;
      if (denom < zero_grad_cutoff) {
        // Zero-gradient coordinate: fall back to the absolute error.
        report.max_zero_grad_abs_error = std::max(report.max_zero_grad_abs_error, abs_err);
        continue;
      }
      const double rel = abs_err / denom;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_tensor = theta.names[size_t(ti)];
      }
    }
  }
  return report;
}

}  // namespace afd

#endif  // AFD_NNET_HPP
