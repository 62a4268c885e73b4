// afd/frontend.hpp -- acoustic front end: mel filterbank + log-energy or MFCC
// features at a 20 ms window / 10 ms step, delta expansion, global CMVN.

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

#ifndef AFD_FRONTEND_HPP
#define AFD_FRONTEND_HPP

#include <complex>
#include <vector>

#include <nlohmann/json.hpp>

#include "afd/audio.hpp"
#include "afd/matrix.hpp"

namespace afd {

enum class FeatureKind : uint16_t { FBANK_E = 0, MFCC = 1 };

struct AcousticFeatures {
  MatF data;  // frames x dims
  int window_ms = 20;
  int step_ms = 10;
  FeatureKind kind = FeatureKind::FBANK_E;
  bool deltas_applied = false;
  bool normalized = false;
  std::string utterance_id;

  long frames() const { return data.rows(); }
  long dims() const { return data.cols(); }
};

struct FrontendConfig {
  int window_ms = 20;
  int step_ms = 10;
  int n_fft = 512;
  int n_mels = 40;
  int n_mfcc = 13;
  double low_hz = 20.0;
  double high_hz = 8000.0;
  double preemphasis = 0.97;  // 0 disables
  double energy_floor = 1e-10;
};

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> variance;
  int64_t frame_count = 0;
};

namespace dsp {

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// In-place iterative radix-2 FFT.
inline void fft(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw Error("fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * 3.14159265358979323846 / double(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

struct MelFilterbank {
  MatD weights;                   // n_mels x (n_fft/2 + 1)
  std::vector<double> center_hz;  // per filter

  MelFilterbank(int n_mels, int n_fft, int sample_rate, double low_hz, double high_hz) {
    const int n_bins = n_fft / 2 + 1;
    weights = MatD::Zero(n_mels, n_bins);
    center_hz.resize(size_t(n_mels));
    const double mel_lo = hz_to_mel(low_hz);
    const double mel_hi = hz_to_mel(high_hz);
    std::vector<double> edge_hz(size_t(n_mels) + 2);
    for (int i = 0; i < n_mels + 2; ++i)
      edge_hz[size_t(i)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * double(i) / double(n_mels + 1));
    for (int m = 0; m < n_mels; ++m) {
      const double l = edge_hz[size_t(m)], c = edge_hz[size_t(m) + 1], r = edge_hz[size_t(m) + 2];
      center_hz[size_t(m)] = c;
      for (int k = 0; k < n_bins; ++k) {
        const double f = double(k) * sample_rate / double(n_fft);
        double w = 0.0;
        if (f >= l && f <= c && c > l)
          w = (f - l) / (c - l);
        else if (f > c && f <= r && r > c)
          w = (r - f) / (r - c);
        weights(m, k) = w;
      }
    }
  }
};

// Orthonormal DCT-II basis, n_out x n_in.
inline MatD dct_matrix(int n_out, int n_in) {
  MatD m(n_out, n_in);
  const double pi = 3.14159265358979323846;
  for (int k = 0; k < n_out; ++k) {
    const double scale = (k == 0) ? std::sqrt(1.0 / n_in) : std::sqrt(2.0 / n_in);
    for (int n = 0; n < n_in; ++n)
      m(k, n) = scale * std::cos(pi * (2.0 * n + 1.0) * k / (2.0 * n_in));
  }
  return m;
}

}  // namespace dsp

namespace detail {

// Shared framing + filterbank stage. Returns per-frame (log mels, log energy).
inline void analyze(const AudioBuffer& audio, const FrontendConfig& cfg, MatD& log_mels,
                    std::vector<double>& log_energy) {
  audio.validate();
  const int win = audio.sample_rate * cfg.window_ms / 1000;
  const int step = audio.sample_rate * cfg.step_ms / 1000;
  const long n = long(audio.samples.size());
  if (n < win)
    throw EmptyInput("frontend: audio shorter than one window (" + std::to_string(n) + " < " +
                     std::to_string(win) + " samples)");
  if (cfg.n_fft < win) throw DataError("frontend: n_fft smaller than the window");

  const long n_frames = (n - win) / step + 1;
  const int n_bins = cfg.n_fft / 2 + 1;

  std::vector<double> emphasized(static_cast<size_t>(n));
  if (cfg.preemphasis > 0.0) {
    emphasized[0] = double(audio.samples[0]) * (1.0 - cfg.preemphasis);
    for (long i = 1; i < n; ++i)
      emphasized[size_t(i)] = double(audio.samples[size_t(i)]) -
                              cfg.preemphasis * double(audio.samples[size_t(i) - 1]);
  } else {
    for (long i = 0; i < n; ++i) emphasized[size_t(i)] = double(audio.samples[size_t(i)]);
  }

  std::vector<double> hamming(static_cast<size_t>(win));
  for (int i = 0; i < win; ++i)
    hamming[size_t(i)] = 0.54 - 0.46 * std::cos(2.0 * 3.14159265358979323846 * i / (win - 1));

  const dsp::MelFilterbank bank(cfg.n_mels, cfg.n_fft, audio.sample_rate, cfg.low_hz, cfg.high_hz);

  log_mels.resize(n_frames, cfg.n_mels);
  log_energy.assign(size_t(n_frames), 0.0);

  std::vector<std::complex<double>> buf(size_t(cfg.n_fft));
  Eigen::VectorXd power(n_bins);
  for (long t = 0; t < n_frames; ++t) {
    const long start = t * step;
    double energy = 0.0;
    for (int i = 0; i < win; ++i) {
      const double s = emphasized[size_t(start + i)];
      energy += s * s;
      buf[size_t(i)] = s * hamming[size_t(i)];
    }
    for (int i = win; i < cfg.n_fft; ++i) buf[size_t(i)] = 0.0;
    log_energy[size_t(t)] = std::log(std::max(energy, cfg.energy_floor));

    dsp::fft(buf);
    for (int k = 0; k < n_bins; ++k) power(k) = std::norm(buf[size_t(k)]);

    Eigen::VectorXd mel = bank.weights * power;
    for (int m = 0; m < cfg.n_mels; ++m)
      log_mels(t, m) = std::log(std::max(mel(m), cfg.energy_floor));
  }
}

}  // namespace detail

// 40 log mel energies + log frame energy per 20 ms / 10 ms frame.
inline AcousticFeatures extract_fbank(const AudioBuffer& audio, const FrontendConfig& cfg = {}) {
  MatD log_mels;
  std::vector<double> log_energy;
  detail::analyze(audio, cfg, log_mels, log_energy);

  AcousticFeatures out;
  out.kind = FeatureKind::FBANK_E;
  out.window_ms = cfg.window_ms;
  out.step_ms = cfg.step_ms;
  out.utterance_id = audio.utterance_id;
  out.data.resize(log_mels.rows(), cfg.n_mels + 1);
  for (long t = 0; t < log_mels.rows(); ++t) {
    for (int m = 0; m < cfg.n_mels; ++m) out.data(t, m) = float(log_mels(t, m));
    out.data(t, cfg.n_mels) = float(log_energy[size_t(t)]);
  }
  return out;
}

// 13 cepstral coefficients (orthonormal DCT-II of the log mels, c0 included).
inline AcousticFeatures extract_mfcc(const AudioBuffer& audio, const FrontendConfig& cfg = {}) {
  MatD log_mels;
  std::vector<double> log_energy;
  detail::analyze(audio, cfg, log_mels, log_energy);

  const MatD dct = dsp::dct_matrix(cfg.n_mfcc, cfg.n_mels);
  MatD ceps = log_mels * dct.transpose();

  AcousticFeatures out;
  out.kind = FeatureKind::MFCC;
  out.window_ms = cfg.window_ms;
  out.step_ms = cfg.step_ms;
  out.utterance_id = audio.utterance_id;
  out.data = ceps.cast<float>();
  return out;
}

// Standard regression deltas over a +/-N window with replicated edges.
// Output is [static | delta | delta-delta], 3x the input width.
inline AcousticFeatures add_deltas(const AcousticFeatures& features, int regression_window = 2) {
  if (features.frames() < 1) throw EmptyInput("add_deltas: no frames");
  if (features.deltas_applied) throw DataError("add_deltas: deltas already applied");

  const long T = features.frames();
  const long D = features.dims();
  auto compute = [&](const MatF& src) {
    MatF dst(T, D);
    double denom = 0.0;
    for (int n = 1; n <= regression_window; ++n) denom += 2.0 * n * n;
    for (long t = 0; t < T; ++t) {
      for (long d = 0; d < D; ++d) {
        double acc = 0.0;
        for (int n = 1; n <= regression_window; ++n) {
          const long hi = std::min(T - 1, t + n);
          const long lo = std::max(long(0), t - n);
          acc += n * (double(src(hi, d)) - double(src(lo, d)));
        }
        dst(t, d) = float(acc / denom);
      }
    }
    return dst;
  };

  MatF delta = compute(features.data);
  MatF ddelta = compute(delta);

  AcousticFeatures out = features;
  out.data.resize(T, 3 * D);
  out.data.leftCols(D) = features.data;
  out.data.middleCols(D, D) = delta;
  out.data.rightCols(D) = ddelta;
  out.deltas_applied = true;
  return out;
}

// Global per-dimension stats over a corpus. Two-pass; per-utterance partial
// sums are reduced in sorted order, so the result is bitwise identical under
// any corpus permutation (and under a parallel map over utterances).
inline NormalizationStats fit_normalization(const std::vector<AcousticFeatures>& corpus) {
  if (corpus.empty()) throw EmptyInput("fit_normalization: empty corpus");
  const long D = corpus.front().dims();
  NormalizationStats stats;
  stats.mean.assign(size_t(D), 0.0);
  stats.variance.assign(size_t(D), 0.0);

  auto reduce_sorted = [&](std::vector<std::vector<double>>& partials,
                           std::vector<double>& out) {
    std::sort(partials.begin(), partials.end());
    for (const auto& p : partials)
      for (long d = 0; d < D; ++d) out[size_t(d)] += p[size_t(d)];
  };

  std::vector<std::vector<double>> partials;
  partials.reserve(corpus.size());
  for (const auto& f : corpus) {
    if (f.dims() != D) throw ShapeError("fit_normalization: inconsistent dims in corpus");
    stats.frame_count += f.frames();
    std::vector<double> sum(size_t(D), 0.0);
    for (long t = 0; t < f.frames(); ++t)
      for (long d = 0; d < D; ++d) sum[size_t(d)] += double(f.data(t, d));
    partials.push_back(std::move(sum));
  }
  if (stats.frame_count == 0) throw EmptyInput("fit_normalization: corpus has no frames");
  reduce_sorted(partials, stats.mean);
  for (long d = 0; d < D; ++d) stats.mean[size_t(d)] /= double(stats.frame_count);

  partials.clear();
  for (const auto& f : corpus) {
    std::vector<double> sum(size_t(D), 0.0);
    for (long t = 0; t < f.frames(); ++t)
      for (long d = 0; d < D; ++d) {
        const double c = double(f.data(t, d)) - stats.mean[size_t(d)];
        sum[size_t(d)] += c * c;
      }
    partials.push_back(std::move(sum));
  }
  reduce_sorted(partials, stats.variance);
  for (long d = 0; d < D; ++d) stats.variance[size_t(d)] /= double(stats.frame_count);
  return stats;
}

constexpr double kVarianceEpsilon = 1e-8;

inline AcousticFeatures apply_normalization(const AcousticFeatures& features,
                                            const NormalizationStats& stats) {
  if (size_t(features.dims()) != stats.mean.size())
    throw ShapeError("apply_normalization: dims " + std::to_string(features.dims()) +
                     " vs stats " + std::to_string(stats.mean.size()));
  AcousticFeatures out = features;
  for (long d = 0; d < features.dims(); ++d) {
    const float m = float(stats.mean[size_t(d)]);
    const float inv = float(1.0 / std::sqrt(stats.variance[size_t(d)] + kVarianceEpsilon));
    for (long t = 0; t < features.frames(); ++t)
      out.data(t, d) = (features.data(t, d) - m) * inv;
  }
  out.normalized = true;
  return out;
}

// ---------------------------------------------------------------------------
// AFP1 feature file format: "AFP1", u32 frames, u32 dims, u16 kind,
// u16 flags (bit0 deltas, bit1 normalized), f32 LE row-major payload.
// ---------------------------------------------------------------------------

inline std::string write_afp1(const AcousticFeatures& f) {
  std::string out;
  out.reserve(16 + size_t(f.frames()) * size_t(f.dims()) * 4);
  out += "AFP1";
  io::put_u32(out, uint32_t(f.frames()));
  io::put_u32(out, uint32_t(f.dims()));
  io::put_u16(out, uint16_t(f.kind));
  uint16_t flags = (f.deltas_applied ? 1 : 0) | (f.normalized ? 2 : 0);
  io::put_u16(out, flags);
  for (long t = 0; t < f.frames(); ++t)
    for (long d = 0; d < f.dims(); ++d) io::put_f32(out, f.data(t, d));
  return out;
}

inline AcousticFeatures read_afp1(const std::string& bytes) {
  io::Reader r(bytes);
  if (r.bytes(4, "AFP1 magic") != "AFP1") throw ParseError("AFP1: bad magic");
  AcousticFeatures f;
  const uint32_t frames = r.u32("frame_count");
  const uint32_t dims = r.u32("dims");
  const uint16_t kind = r.u16("kind");
  const uint16_t flags = r.u16("flags");
  if (kind > 1) throw ParseError("AFP1: unknown kind code");
  f.kind = FeatureKind(kind);
  f.deltas_applied = flags & 1;
  f.normalized = flags & 2;
  f.data.resize(long(frames), long(dims));
  for (uint32_t t = 0; t < frames; ++t)
    for (uint32_t d = 0; d < dims; ++d) f.data(long(t), long(d)) = r.f32("payload");
  return f;
}

inline nlohmann::json stats_to_json(const NormalizationStats& s) {
  return nlohmann::json{{"mean", s.mean}, {"variance", s.variance}, {"frame_count", s.frame_count}};
}

inline NormalizationStats stats_from_json(const nlohmann::json& j) {
  NormalizationStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.variance = j.at("variance").get<std::vector<double>>();
  s.frame_count = j.at("frame_count").get<int64_t>();
  if (s.mean.size() != s.variance.size()) throw ParseError("stats: mean/variance size mismatch");
  for (double v : s.variance)
    if (v < 0) throw ParseError("stats: negative variance");
  return s;
}

}  // namespace afd

#endif  // AFD_FRONTEND_HPP
