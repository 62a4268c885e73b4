// afd/artic.hpp -- articulatory feature inventory, the binary phone-feature
// mapping matrix, and the indicator-to-phone decoding algebra:
//
//   P = log(phi) * M + log(1 - phi) * (1 - M)
//
// followed by argmax and reverse mapping (the refined indicator vector is the
// winning phone's column). Swapping the matrix for a different phone
// inventory gives the cross-lingual decoding path; nothing else changes.

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

#ifndef AFD_ARTIC_HPP
#define AFD_ARTIC_HPP

#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "afd/matrix.hpp"
#include "afd/phoneset.hpp"

namespace afd {

constexpr const char* kEosFeature = "<eos>";

// Posterior clamp before logs; Eq. 1 would hit -inf at saturated sigmoids.
constexpr double kPosteriorClamp = 1e-7;

struct FeatureInventory {
  std::vector<std::string> names;  // named features, then the reserved <eos> indicator
  int eos = -1;

  static FeatureInventory make(std::vector<std::string> feature_names) {
    FeatureInventory inv;
    std::unordered_map<std::string, int> seen;
    for (const auto& n : feature_names)
      if (!seen.emplace(n, 1).second) throw DataError("FeatureInventory: duplicate name " + n);
    if (seen.count(kEosFeature))
      throw DataError("FeatureInventory: <eos> is reserved");
    inv.names = std::move(feature_names);
    inv.eos = int(inv.names.size());
    inv.names.push_back(kEosFeature);
    for (size_t i = 0; i < inv.names.size(); ++i) inv.index_[inv.names[i]] = int(i);
    return inv;
  }

  static FeatureInventory from_json(const nlohmann::json& j) {
    return make(j.at("features").get<std::vector<std::string>>());
  }

  int size() const { return int(names.size()); }           // includes <eos>
  int named_count() const { return int(names.size()) - 1; }  // reporting features

  int index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("unknown feature name: " + name);
    return it->second;
  }

 private:
  std::unordered_map<std::string, int> index_;
};

struct IndicatorPosteriors {
  std::vector<float> values;  // one per feature row, in [0,1]
};

struct PhoneLogPosteriors {
  std::vector<double> values;  // one per matrix column
};

// Binary features x phones matrix. Columns cover every non-special phone of
// the inventory plus one <eos> column; col_phone maps columns back to
// inventory indices.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;

  const FeatureInventory& features() const { return features_; }
  const PhoneInventory& phones() const { return phones_; }
  const MatF& bits() const { return bits_; }
  int feature_count() const { return int(bits_.rows()); }
  int column_count() const { return int(bits_.cols()); }

  int column_of_phone(int phone_idx) const {
    auto it = phone_col_.find(phone_idx);
    if (it == phone_col_.end()) throw DataError("phone has no matrix column");
    return it->second;
  }
  int phone_of_column(int col) const { return col_phone_.at(size_t(col)); }
  int eos_column() const { return eos_col_; }

  std::vector<float> column(int col) const {
    std::vector<float> v(size_t(bits_.rows()));
    for (long i = 0; i < bits_.rows(); ++i) v[size_t(i)] = bits_(i, col);
    return v;
  }

  std::vector<float> column_for_phone(int phone_idx) const {
    return column(column_of_phone(phone_idx));
  }

  friend FeatureMatrix build_feature_matrix(const FeatureInventory&, const PhoneInventory&,
                                            const nlohmann::json&);

 private:
  FeatureInventory features_;
  PhoneInventory phones_;
  MatF bits_;
  std::vector<int> col_phone_;
  std::unordered_map<int, int> phone_col_;
  int eos_col_ = -1;
};

// Builds and validates the matrix from a {"map": {phone: [feature...]}} table.
inline FeatureMatrix build_feature_matrix(const FeatureInventory& features,
                                          const PhoneInventory& phones,
                                          const nlohmann::json& table) {
  FeatureMatrix m;
  m.features_ = features;
  m.phones_ = phones;

  const auto& map = table.contains("map") ? table.at("map") : table;
  const int F = features.size();
  const int silence_row = features.index_of("silence");
  const int vowel_row = features.index_of("vowel");
  const int consonantal_row = features.index_of("consonantal");

  std::vector<int> cols;
  for (int p = 0; p < phones.size(); ++p)
    if (!phones.is_special(p)) cols.push_back(p);

  m.bits_ = MatF::Zero(F, long(cols.size()) + 1);
  m.col_phone_.resize(cols.size() + 1);

  for (size_t c = 0; c < cols.size(); ++c) {
    const int p = cols[c];
    const std::string& sym = phones.symbol(p);
    if (!map.contains(sym)) throw IncompleteTable("feature table missing phone: " + sym);
    for (const auto& fname : map.at(sym)) {
      const int row = features.index_of(fname.get<std::string>());
      if (row == features.eos) throw DataError("feature table may not set <eos>");
      m.bits_(row, long(c)) = 1.0f;
    }
    m.col_phone_[c] = p;
    m.phone_col_[p] = int(c);
  }

  // Reserved <eos> column: eos bit only.
  m.eos_col_ = int(cols.size());
  m.bits_(features.eos, m.eos_col_) = 1.0f;
  m.col_phone_[size_t(m.eos_col_)] = phones.eos;
  m.phone_col_[phones.eos] = m.eos_col_;

  // Invariants: sil column is silence-only, non-sil phones are not silent,
  // vowel/consonantal exclusive, all columns pairwise distinct.
  for (size_t c = 0; c <= cols.size(); ++c) {
    const int p = m.col_phone_[c];
    if (p == phones.sil) {
      if (m.bits_(silence_row, long(c)) != 1.0f)
        throw DataError("sil column must set the silence feature");
      for (int r = 0; r < F; ++r)
        if (r != silence_row && m.bits_(r, long(c)) != 0.0f)
          throw DataError("sil column must have no articulatory bits");
    } else if (p != phones.eos && m.bits_(silence_row, long(c)) != 0.0f) {
      throw DataError("non-sil phone sets the silence feature: " + phones.symbol(p));
    }
    if (m.bits_(vowel_row, long(c)) == 1.0f && m.bits_(consonantal_row, long(c)) == 1.0f)
      throw DataError("vowel and consonantal both set for " + phones.symbol(p));
  }
  for (size_t a = 0; a < m.col_phone_.size(); ++a)
    for (size_t b = a + 1; b < m.col_phone_.size(); ++b)
      if (m.bits_.col(long(a)) == m.bits_.col(long(b)))
        throw DegenerateMatrix("indistinguishable phones: " +
                               phones.symbol(m.col_phone_[a]) + " vs " +
                               phones.symbol(m.col_phone_[b]));
  return m;
}

// Same feature space, different phone inventory: the cross-lingual swap.
inline FeatureMatrix remap_inventory(const FeatureMatrix& m, const PhoneInventory& new_phones,
                                     const nlohmann::json& new_table) {
  return build_feature_matrix(m.features(), new_phones, new_table);
}

inline void check_phi(const IndicatorPosteriors& phi, const FeatureMatrix& m) {
  if (int(phi.values.size()) != m.feature_count())
    throw ShapeError("indicator posteriors: " + std::to_string(phi.values.size()) +
                     " values vs " + std::to_string(m.feature_count()) + " features");
}

// Eq. 1. Phi is clamped to [eps, 1-eps] before the logs.
inline PhoneLogPosteriors phone_log_posteriors(const IndicatorPosteriors& phi,
                                               const FeatureMatrix& m) {
  check_phi(phi, m);
  const int F = m.feature_count();
  const int C = m.column_count();
  std::vector<double> log_p(static_cast<size_t>(F)), log_q(static_cast<size_t>(F));
  for (int i = 0; i < F; ++i) {
    double v = double(phi.values[size_t(i)]);
    if (!std::isfinite(v)) throw NumericError("non-finite indicator posterior");
    v = std::min(1.0 - kPosteriorClamp, std::max(kPosteriorClamp, v));
    log_p[size_t(i)] = std::log(v);
    log_q[size_t(i)] = std::log(1.0 - v);
  }
  PhoneLogPosteriors out;
  out.values.assign(size_t(C), 0.0);
  for (int j = 0; j < C; ++j) {
    double acc = 0.0;
    for (int i = 0; i < F; ++i)
      acc += (m.bits()(i, j) != 0.0f) ? log_p[size_t(i)] : log_q[size_t(i)];
    out.values[size_t(j)] = acc;
  }
  return out;
}

// argmax over columns; ties broken toward the lower phone index.
inline int argmax_column(const PhoneLogPosteriors& p, const FeatureMatrix& m) {
  int best = 0;
  for (int j = 1; j < int(p.values.size()); ++j) {
    const double d = p.values[size_t(j)] - p.values[size_t(best)];
    if (d > 0 || (d == 0 && m.phone_of_column(j) < m.phone_of_column(best))) best = j;
  }
  return best;
}

struct NearestPhone {
  int phone = -1;                 // inventory index
  std::vector<float> features;    // the matrix column (refined indicators)
};

// Reverse mapping: posteriors are rounded to the closest phone's column,
// which filters out feature combinations that never occur in the language.
inline NearestPhone nearest_phone_features(const IndicatorPosteriors& phi,
                                           const FeatureMatrix& m) {
  PhoneLogPosteriors p = phone_log_posteriors(phi, m);
  const int col = argmax_column(p, m);
  return {m.phone_of_column(col), m.column(col)};
}

// ---------------------------------------------------------------------------
// IPG1 posteriorgram file: "IPG1", u32 steps, u32 features, f32 LE row-major.
// ---------------------------------------------------------------------------

inline std::string write_ipg1(const MatF& posteriors) {
  std::string out;
  out += "IPG1";
  io::put_u32(out, uint32_t(posteriors.rows()));
  io::put_u32(out, uint32_t(posteriors.cols()));
  for (long t = 0; t < posteriors.rows(); ++t)
    for (long f = 0; f < posteriors.cols(); ++f) io::put_f32(out, posteriors(t, f));
  return out;
}

inline MatF read_ipg1(const std::string& bytes) {
  io::Reader r(bytes);
  if (r.bytes(4, "IPG1 magic") != "IPG1") throw ParseError("IPG1: bad magic");
  const uint32_t steps = r.u32("steps");
  const uint32_t feats = r.u32("features");
  MatF m{long(steps), long(feats)};
  for (uint32_t t = 0; t < steps; ++t)
    for (uint32_t f = 0; f < feats; ++f) m(long(t), long(f)) = r.f32("payload");
  return m;
}

}  // namespace afd

#endif  // AFD_ARTIC_HPP
