// afd/align.hpp -- soft attention to hard alignment (DTW over 1 - weight),
// projection of symbol-level outputs to base acoustic frames and to external
// markup segments via attention peaks.

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

#ifndef AFD_ALIGN_HPP
#define AFD_ALIGN_HPP

#include <limits>
#include <vector>

#include "afd/matrix.hpp"
#include "afd/phoneset.hpp"

namespace afd {

struct AlignmentPath {
  struct Point {
    int decoder_step = 0;
    int encoder_frame = 0;
    float weight = 0.0f;  // attention weight at this cell
  };
  std::vector<Point> points;  // monotone from (0,0) to (D-1, E-1)
};

// Minimum-cost monotonic path through the attention matrix with cell cost
// 1 - weight and moves (d+1,e), (d,e+1), (d+1,e+1). Backtrace prefers the
// diagonal, then the previous step, then the previous frame.
inline AlignmentPath hard_align_dtw(const MatF& attention) {
  const long D = attention.rows(), E = attention.cols();
  if (D == 0 || E == 0) throw EmptyInput("hard_align_dtw: empty attention matrix");

  MatD cost(D, E);
  Mat<int8_t> from(D, E);  // 0 = diag, 1 = from (d-1,e), 2 = from (d,e-1)
  for (long d = 0; d < D; ++d) {
    for (long e = 0; e < E; ++e) {
      const double c = 1.0 - double(attention(d, e));
      if (d == 0 && e == 0) {
        cost(d, e) = c;
        from(d, e) = 0;
        continue;
      }
      double best = std::numeric_limits<double>::infinity();
      int8_t dir = 0;
      if (d > 0 && e > 0 && cost(d - 1, e - 1) < best) {
        best = cost(d - 1, e - 1);
        dir = 0;
      }
      if (d > 0 && cost(d - 1, e) < best) {
        best = cost(d - 1, e);
        dir = 1;
      }
      if (e > 0 && cost(d, e - 1) < best) {
        best = cost(d, e - 1);
        dir = 2;
      }
      cost(d, e) = best + c;
      from(d, e) = dir;
    }
  }

  AlignmentPath path;
  long d = D - 1, e = E - 1;
  while (true) {
    path.points.push_back({int(d), int(e), attention(d, e)});
    if (d == 0 && e == 0) break;
    switch (from(d, e)) {
      case 0: --d; --e; break;
      case 1: --d; break;
      default: --e; break;
    }
  }
  std::reverse(path.points.begin(), path.points.end());
  return path;
}

inline double path_cost(const AlignmentPath& path) {
  double c = 0.0;
  for (const auto& p : path.points) c += 1.0 - double(p.weight);
  return c;
}

struct FrameLabeling {
  std::vector<int> phones;             // one per base frame
  std::vector<std::vector<float>> bits;  // binary feature vector per base frame
  int frame_step_ms = 10;
};

// Expands a hard alignment to base frames: encoder frame e covers base frames
// [e*r, (e+1)*r); a frame claimed by several decoder steps goes to the step
// with the larger attention weight (earlier step on ties).
inline FrameLabeling project_frames(const AlignmentPath& path, const std::vector<int>& symbols,
                                    const std::vector<std::vector<float>>& symbol_bits,
                                    int reduction_factor) {
  if (path.points.empty()) throw EmptyInput("project_frames: empty path");
  if (reduction_factor < 1) throw DataError("project_frames: bad reduction factor");
  if (!symbol_bits.empty() && symbol_bits.size() != symbols.size())
    throw ShapeError("project_frames: bits/symbols length mismatch");

  long max_step = 0, max_frame = 0;
  for (const auto& p : path.points) {
    max_step = std::max(max_step, long(p.decoder_step));
    max_frame = std::max(max_frame, long(p.encoder_frame));
  }
  if (max_step >= long(symbols.size()))
    throw ShapeError("project_frames: path has steps beyond the symbol sequence");

  const long E = max_frame + 1;
  std::vector<int> owner(size_t(E), -1);
  std::vector<float> owner_weight(size_t(E), -1.0f);
  for (const auto& p : path.points) {
    if (p.weight > owner_weight[size_t(p.encoder_frame)]) {
      owner_weight[size_t(p.encoder_frame)] = p.weight;
      owner[size_t(p.encoder_frame)] = p.decoder_step;
    }
  }

  FrameLabeling out;
  out.phones.resize(size_t(E) * size_t(reduction_factor));
  if (!symbol_bits.empty()) out.bits.resize(out.phones.size());
  for (long e = 0; e < E; ++e) {
    const int step = owner[size_t(e)];
    for (int k = 0; k < reduction_factor; ++k) {
      const size_t frame = size_t(e) * size_t(reduction_factor) + size_t(k);
      out.phones[frame] = symbols[size_t(step)];
      if (!symbol_bits.empty()) out.bits[frame] = symbol_bits[size_t(step)];
    }
  }
  return out;
}

struct SegmentLabel {
  TimedSegment segment;
  int phone = -1;                  // predicted label
  std::vector<float> bits;         // predicted feature vector
  bool claimed = false;            // had its own attention peak
};

// Assigns each decoder step to the markup segment containing its attention
// peak; a segment claimed by several steps keeps the highest-weight claimant;
// unclaimed segments inherit the nearest claimed label (earlier on ties).
inline std::vector<SegmentLabel> project_segments(const MatF& attention,
                                                  const std::vector<int>& symbols,
                                                  const std::vector<std::vector<float>>& symbol_bits,
                                                  const std::vector<TimedSegment>& segments,
                                                  int reduction_factor, int step_samples) {
  if (segments.empty()) throw EmptyInput("project_segments: no segments");
  if (attention.rows() < long(symbols.size()))
    throw ShapeError("project_segments: fewer attention rows than symbols");
  if (!symbol_bits.empty() && symbol_bits.size() != symbols.size())
    throw ShapeError("project_segments: bits/symbols length mismatch");

  std::vector<SegmentLabel> out(segments.size());
  for (size_t i = 0; i < segments.size(); ++i) out[i].segment = segments[i];
  std::vector<float> claim_weight(segments.size(), -1.0f);

  for (size_t s = 0; s < symbols.size(); ++s) {
    long peak = 0;
    attention.row(long(s)).maxCoeff(&peak);
    const float weight = attention(long(s), peak);
    // Superframe center in samples.
    const int64_t sample =
        (int64_t(peak) * reduction_factor + reduction_factor / 2) * step_samples;
    long seg = -1;
    for (size_t i = 0; i < segments.size(); ++i)
      if (sample >= segments[i].start_sample && sample < segments[i].end_sample) {
        seg = long(i);
        break;
      }
    if (seg < 0) continue;  // peak outside the markup span
    if (weight > claim_weight[size_t(seg)]) {
      claim_weight[size_t(seg)] = weight;
      out[size_t(seg)].phone = symbols[s];
      out[size_t(seg)].bits = symbol_bits.empty() ? std::vector<float>{} : symbol_bits[s];
      out[size_t(seg)].claimed = true;
    }
  }

  // Nearest-claimed inheritance by segment midpoint distance, earlier wins ties.
  for (size_t i = 0; i < out.size(); ++i) {
    if (out[i].claimed) continue;
    const int64_t mid = (out[i].segment.start_sample + out[i].segment.end_sample) / 2;
    int64_t best_dist = std::numeric_limits<int64_t>::max();
    long best = -1;
    for (size_t j = 0; j < out.size(); ++j) {
      if (!out[j].claimed) continue;
      const int64_t mj = (out[j].segment.start_sample + out[j].segment.end_sample) / 2;
      const int64_t dist = std::abs(mid - mj);
      if (dist < best_dist) {
        best_dist = dist;
        best = long(j);
      }
    }
    if (best >= 0) {
      out[i].phone = out[size_t(best)].phone;
      out[i].bits = out[size_t(best)].bits;
    }
  }
  return out;
}

// Text form: one "frame_index phone feature_bits_hex" line per base frame.
inline std::string frame_labeling_to_text(const FrameLabeling& labeling,
                                          const PhoneInventory& inventory) {
  std::ostringstream out;
  for (size_t f = 0; f < labeling.phones.size(); ++f) {
    out << f << " " << inventory.symbol(labeling.phones[f]);
    if (!labeling.bits.empty()) {
      out << " ";
      const auto& bits = labeling.bits[f];
      // Hex nibbles, most significant feature first.
      int nibble = 0, count = 0;
      std::string hex;
      for (size_t b = 0; b < bits.size(); ++b) {
        nibble = (nibble << 1) | (bits[b] > 0.5f ? 1 : 0);
        if (++count == 4) {
          hex += "0123456789abcdef"[nibble];
          nibble = 0;
          count = 0;
        }
      }
      if (count > 0) hex += "0123456789abcdef"[nibble << (4 - count)];
      out << hex;
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace afd

#endif  // AFD_ALIGN_HPP
