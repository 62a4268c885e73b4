// afd/eval.hpp -- phone error rate, sequence- and frame-level articulatory
// feature accuracy, and substitution confusion statistics.

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

#ifndef AFD_EVAL_HPP
#define AFD_EVAL_HPP

#include <iomanip>
#include <map>
#include <vector>

#include <nlohmann/json.hpp>

#include "afd/align.hpp"
#include "afd/artic.hpp"
#include "afd/phoneset.hpp"

namespace afd {

struct EditOp {
  enum Type { Match, Substitute, Insert, Delete } type;
  int hyp_index = -1;  // -1 for deletions
  int ref_index = -1;  // -1 for insertions
};

struct EditAlignment {
  std::vector<EditOp> ops;
  int distance = 0;  // unit-cost Levenshtein distance
};

// Minimum edit alignment with unit costs. Backtrace tie-break:
// match > substitute > delete > insert.
inline EditAlignment edit_alignment(const std::vector<int>& hyp, const std::vector<int>& ref) {
  const size_t H = hyp.size(), R = ref.size();
  std::vector<std::vector<int>> d(H + 1, std::vector<int>(R + 1, 0));
  for (size_t i = 0; i <= H; ++i) d[i][0] = int(i);
  for (size_t j = 0; j <= R; ++j) d[0][j] = int(j);
  for (size_t i = 1; i <= H; ++i)
    for (size_t j = 1; j <= R; ++j) {
      const int sub = d[i - 1][j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      const int ins = d[i - 1][j] + 1;  // hyp symbol not in ref
      const int del = d[i][j - 1] + 1;  // ref symbol missing from hyp
      d[i][j] = std::min(sub, std::min(ins, del));
    }

  EditAlignment out;
  out.distance = d[H][R];
  size_t i = H, j = R;
  std::vector<EditOp> rev;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && hyp[i - 1] == ref[j - 1] && d[i][j] == d[i - 1][j - 1]) {
      rev.push_back({EditOp::Match, int(i - 1), int(j - 1)});
      --i; --j;
    } else if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1) {
      rev.push_back({EditOp::Substitute, int(i - 1), int(j - 1)});
      --i; --j;
    } else if (j > 0 && d[i][j] == d[i][j - 1] + 1) {
      rev.push_back({EditOp::Delete, -1, int(j - 1)});
      --j;
    } else {
      rev.push_back({EditOp::Insert, int(i - 1), -1});
      --i;
    }
  }
  out.ops.assign(rev.rbegin(), rev.rend());
  return out;
}

// Corpus-level pooling: sum of edit distances over sum of reference lengths.
inline double phone_error_rate(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pairs) {
  int64_t distance = 0, ref_len = 0;
  for (const auto& [hyp, ref] : pairs) {
    if (ref.empty()) throw EmptyReference("phone_error_rate: empty reference");
    distance += edit_alignment(hyp, ref).distance;
    ref_len += int64_t(ref.size());
  }
  if (ref_len == 0) throw EmptyReference("phone_error_rate: no reference symbols");
  return double(distance) / double(ref_len);
}

// Per-feature accuracy over an aligned pair of feature-vector sequences.
// Aligned pairs compare the bit; insertions and deletions charge one error to
// every feature.
inline std::vector<double> feature_accuracy_sequence(
    const std::vector<std::vector<float>>& hyp_bits,
    const std::vector<std::vector<float>>& ref_bits, const EditAlignment& alignment,
    int feature_count) {
  for (const auto& v : hyp_bits)
    if (int(v.size()) < feature_count) throw ShapeError("feature_accuracy_sequence: hyp dims");
  for (const auto& v : ref_bits)
    if (int(v.size()) < feature_count) throw ShapeError("feature_accuracy_sequence: ref dims");

  std::vector<int64_t> correct(size_t(feature_count), 0);
  int64_t total = 0;
  for (const auto& op : alignment.ops) {
    ++total;
    if (op.type == EditOp::Match || op.type == EditOp::Substitute) {
      const auto& h = hyp_bits.at(size_t(op.hyp_index));
      const auto& r = ref_bits.at(size_t(op.ref_index));
      for (int f = 0; f < feature_count; ++f)
        if ((h[size_t(f)] > 0.5f) == (r[size_t(f)] > 0.5f)) ++correct[size_t(f)];
    }
    // Insert/Delete: one error for every feature (no increment).
  }
  std::vector<double> acc(size_t(feature_count), 1.0);
  if (total > 0)
    for (int f = 0; f < feature_count; ++f)
      acc[size_t(f)] = double(correct[size_t(f)]) / double(total);
  return acc;
}

// Frame-level accuracy against markup segments. Ground truth per 10 ms frame
// is the matrix column of the segment containing the frame center; frames
// inside the markup span with no covering segment raise MarkupError, frames
// past the last segment (pyramid padding) are ignored.
inline std::vector<double> feature_accuracy_frames(const FrameLabeling& predicted,
                                                   const std::vector<TimedSegment>& truth,
                                                   const FeatureMatrix& m, int step_samples) {
  if (truth.empty()) throw EmptyInput("feature_accuracy_frames: no segments");
  const int F = m.features().named_count();
  std::vector<int64_t> correct(size_t(F), 0);
  int64_t total = 0;

  const int64_t span_end = truth.back().end_sample;
  for (size_t frame = 0; frame < predicted.phones.size(); ++frame) {
    const int64_t center = int64_t(frame) * step_samples + step_samples / 2;
    if (center >= span_end) break;  // padding tail beyond the markup
    long seg = -1;
    for (size_t i = 0; i < truth.size(); ++i)
      if (center >= truth[i].start_sample && center < truth[i].end_sample) {
        seg = long(i);
        break;
      }
    if (seg < 0)
      throw MarkupError("feature_accuracy_frames: frame " + std::to_string(frame) +
                        " not covered by markup");
    const std::vector<float> ref = m.column_for_phone(truth[size_t(seg)].phone);
    const std::vector<float>& hyp = predicted.bits.at(frame);
    ++total;
    for (int f = 0; f < F; ++f)
      if ((hyp[size_t(f)] > 0.5f) == (ref[size_t(f)] > 0.5f)) ++correct[size_t(f)];
  }
  std::vector<double> acc(size_t(F), 1.0);
  if (total > 0)
    for (int f = 0; f < F; ++f) acc[size_t(f)] = double(correct[size_t(f)]) / double(total);
  return acc;
}

// Substitution histogram over a corpus of alignments.
inline std::map<std::pair<int, int>, int64_t> confusion_counts(
    const std::vector<std::tuple<std::vector<int>, std::vector<int>, EditAlignment>>& corpus) {
  std::map<std::pair<int, int>, int64_t> counts;
  for (const auto& [hyp, ref, alignment] : corpus)
    for (const auto& op : alignment.ops)
      if (op.type == EditOp::Substitute)
        counts[{ref.at(size_t(op.ref_index)), hyp.at(size_t(op.hyp_index))}] += 1;
  return counts;
}

struct EvalReport {
  double per = 0.0;
  std::vector<std::string> feature_names;
  std::vector<double> per_feature_sequence_acc;
  std::vector<double> per_feature_frame_acc;  // empty when frames not evaluated
  std::map<std::pair<int, int>, int64_t> confusions;

  nlohmann::json to_json(const PhoneInventory& inventory) const {
    nlohmann::json j;
    j["per"] = per;
    if (!feature_names.empty()) {
      nlohmann::json seq = nlohmann::json::object(), frm = nlohmann::json::object();
      for (size_t f = 0; f < feature_names.size(); ++f) {
        if (f < per_feature_sequence_acc.size()) seq[feature_names[f]] = per_feature_sequence_acc[f];
        if (f < per_feature_frame_acc.size()) frm[feature_names[f]] = per_feature_frame_acc[f];
      }
      j["per_feature_sequence_acc"] = std::move(seq);
      if (!per_feature_frame_acc.empty()) j["per_feature_frame_acc"] = std::move(frm);
    }
    nlohmann::json conf = nlohmann::json::array();
    for (const auto& [pair, count] : confusions)
      conf.push_back({{"ref", inventory.symbol(pair.first)},
                      {"hyp", inventory.symbol(pair.second)},
                      {"count", count}});
    j["confusions"] = std::move(conf);
    return j;
  }
};

// Human-readable report in the layout of the paper-style feature table.
inline std::string format_report(const EvalReport& report,
                                 const PhoneInventory* inventory = nullptr) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1);
  out << "PER " << report.per * 100.0 << "%\n";
  if (!report.feature_names.empty()) {
    out << "\nFeature               sequence";
    if (!report.per_feature_frame_acc.empty()) out << "   frames";
    out << "\n";
    for (size_t f = 0; f < report.feature_names.size(); ++f) {
      out << std::left << std::setw(22) << report.feature_names[f] << std::right << std::setw(7)
          << report.per_feature_sequence_acc[f] * 100.0 << "%";
      if (f < report.per_feature_frame_acc.size())
        out << std::setw(8) << report.per_feature_frame_acc[f] * 100.0 << "%";
      out << "\n";
    }
  }
  if (!report.confusions.empty()) {
    // Top substitutions, most frequent first.
    std::vector<std::pair<std::pair<int, int>, int64_t>> sorted(report.confusions.begin(),
                                                                report.confusions.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    out << "\nTop confusions (ref -> hyp):\n";
    for (size_t i = 0; i < std::min<size_t>(sorted.size(), 10); ++i) {
      const auto [ref, hyp] = sorted[i].first;
      if (inventory)
        out << "  " << inventory->symbol(ref) << " -> " << inventory->symbol(hyp);
      else
        out << "  " << ref << " -> " << hyp;
      out << "  x" << sorted[i].second << "\n";
    }
  }
  return out.str();
}

}  // namespace afd

#endif  // AFD_EVAL_HPP
