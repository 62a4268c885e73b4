// afd/svg.hpp -- dependency-free SVG heatmaps for attention matrices and
// indicator posteriorgrams (with optional ground-truth markers).

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

#ifndef AFD_SVG_HPP
#define AFD_SVG_HPP

#include <string>
#include <vector>

#include "afd/matrix.hpp"

namespace afd {

namespace detail {

constexpr int kCell = 12;       // pixels per matrix cell
constexpr int kLabelPad = 120;  // room for row labels

inline std::string gray(float value) {
  // 0 -> white, 1 -> black.
  float v = std::min(1.0f, std::max(0.0f, value));
  const int level = int((1.0f - v) * 255.0f + 0.5f);
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", level, level, level);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

// Grayscale heatmap; one rect per cell, darkness proportional to the value.
// Row labels (e.g. feature names or decoded symbols) are optional. When
// reference bits are supplied (posteriorgram figures) a white circle marks
// every ground-truth active cell.
inline std::string render_heatmap_svg(const MatF& values,
                                      const std::vector<std::string>& row_labels = {},
                                      const MatF* reference_bits = nullptr,
                                      const std::string& title = "") {
  if (values.size() == 0) throw EmptyInput("render_heatmap_svg: empty matrix");
  if (!row_labels.empty() && long(row_labels.size()) != values.rows())
    throw ShapeError("render_heatmap_svg: label count vs rows");
  if (reference_bits &&
      (reference_bits->rows() != values.rows() || reference_bits->cols() != values.cols()))
    throw ShapeError("render_heatmap_svg: reference shape mismatch");

  const int pad_left = row_labels.empty() ? 10 : detail::kLabelPad;
  const int pad_top = title.empty() ? 10 : 30;
  const long W = pad_left + values.cols() * detail::kCell + 10;
  const long H = pad_top + values.rows() * detail::kCell + 10;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  if (!title.empty())
    svg << "<text x=\"" << pad_left << "\" y=\"20\" font-family=\"monospace\" font-size=\"13\">"
        << detail::escape(title) << "</text>\n";
  for (long r = 0; r < values.rows(); ++r) {
    for (long c = 0; c < values.cols(); ++c) {
      svg << "<rect x=\"" << pad_left + c * detail::kCell << "\" y=\""
          << pad_top + r * detail::kCell << "\" width=\"" << detail::kCell << "\" height=\""
          << detail::kCell << "\" fill=\"" << detail::gray(values(r, c)) << "\"/>\n";
    }
    if (!row_labels.empty())
      svg << "<text x=\"4\" y=\"" << pad_top + r * detail::kCell + detail::kCell - 3
          << "\" font-family=\"monospace\" font-size=\"9\">" << detail::escape(row_labels[size_t(r)])
          << "</text>\n";
  }
  if (reference_bits) {
    for (long r = 0; r < values.rows(); ++r)
      for (long c = 0; c < values.cols(); ++c)
        if ((*reference_bits)(r, c) > 0.5f)
          svg << "<circle cx=\"" << pad_left + c * detail::kCell + detail::kCell / 2 << "\" cy=\""
              << pad_top + r * detail::kCell + detail::kCell / 2 << "\" r=\"3\" fill=\"white\" "
              << "stroke=\"#444444\" stroke-width=\"1\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

// Attention heatmap: rows = decoder steps, columns = encoder frames.
inline std::string render_attention_svg(const MatF& attention,
                                        const std::vector<std::string>& step_labels = {},
                                        const std::string& title = "") {
  return render_heatmap_svg(attention, step_labels, nullptr, title);
}

// Posteriorgram heatmap: transposed to features x steps so each feature is a
// row, with optional ground-truth markers.
inline std::string render_posteriorgram_svg(const MatF& posteriorgram,
                                            const std::vector<std::string>& feature_names,
                                            const MatF* reference_bits = nullptr,
                                            const std::string& title = "") {
  MatF transposed = posteriorgram.transpose();
  MatF ref_t;
  const MatF* ref = nullptr;
  if (reference_bits) {
    ref_t = reference_bits->transpose();
    ref = &ref_t;
  }
  return render_heatmap_svg(transposed, feature_names, ref, title);
}

}  // namespace afd

#endif  // AFD_SVG_HPP
