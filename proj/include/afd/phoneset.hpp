// afd/phoneset.hpp -- phone inventories, 61->39 allophone folding, timed
// phonetic markup (.PHN) parsing, and split validation.

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

#ifndef AFD_PHONESET_HPP
#define AFD_PHONESET_HPP

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "afd/common.hpp"

namespace afd {

constexpr const char* kSosSymbol = "<sos>";
constexpr const char* kEosSymbol = "<eos>";

struct PhoneInventory {
  std::vector<std::string> symbols;  // phones first, then <sos>, <eos>
  int sos = -1;
  int eos = -1;
  int sil = -1;

  // Builds an inventory from plain phone symbols; <sos>/<eos> are appended.
  static PhoneInventory make(std::vector<std::string> phones, const std::string& silence_symbol) {
    PhoneInventory inv;
    std::unordered_set<std::string> seen;
    for (const auto& p : phones) {
      if (!seen.insert(p).second) throw DataError("PhoneInventory: duplicate symbol " + p);
      if (p == kSosSymbol || p == kEosSymbol)
        throw DataError("PhoneInventory: reserved symbol in phone list: " + p);
    }
    inv.symbols = std::move(phones);
    inv.sos = int(inv.symbols.size());
    inv.symbols.push_back(kSosSymbol);
    inv.eos = int(inv.symbols.size());
    inv.symbols.push_back(kEosSymbol);
    for (size_t i = 0; i < inv.symbols.size(); ++i) inv.index_.emplace(inv.symbols[i], int(i));
    auto it = inv.index_.find(silence_symbol);
    if (it == inv.index_.end())
      throw DataError("PhoneInventory: silence symbol not present: " + silence_symbol);
    inv.sil = it->second;
    return inv;
  }

  static PhoneInventory from_json(const nlohmann::json& j) {
    return make(j.at("phones").get<std::vector<std::string>>(),
                j.at("silence").get<std::string>());
  }

  int size() const { return int(symbols.size()); }
  // Count of real phones (excluding <sos>/<eos>).
  int phone_count() const { return int(symbols.size()) - 2; }

  bool is_special(int idx) const { return idx == sos || idx == eos; }

  int index_of(const std::string& symbol) const {
    auto it = index_.find(symbol);
    if (it == index_.end()) throw UnknownPhone("unknown phone symbol: " + symbol);
    return it->second;
  }

  bool contains(const std::string& symbol) const { return index_.count(symbol) > 0; }

  const std::string& symbol(int idx) const {
    if (idx < 0 || idx >= size()) throw DataError("phone index out of range");
    return symbols[size_t(idx)];
  }

 private:
  std::unordered_map<std::string, int> index_;
};

struct PhoneSequence {
  std::string utterance_id;
  std::vector<int> phones;
};

struct TimedSegment {
  int64_t start_sample = 0;
  int64_t end_sample = 0;
  int phone = -1;
};

// Allophone folding table (e.g. Lee-Hon 61->39) plus deletions.
struct ReductionTable {
  std::unordered_map<std::string, std::string> folding;
  std::unordered_set<std::string> deleted;
  std::unordered_set<std::string> classes;  // image of the folding

  static ReductionTable from_json(const nlohmann::json& j) {
    ReductionTable t;
    for (auto& [k, v] : j.at("folding").items()) {
      t.folding[k] = v.get<std::string>();
      t.classes.insert(v.get<std::string>());
    }
    if (j.contains("deleted"))
      for (const auto& d : j.at("deleted")) t.deleted.insert(d.get<std::string>());
    return t;
  }

  // Maps one symbol; returns empty string when the symbol is deleted.
  std::string map(const std::string& symbol) const {
    if (deleted.count(symbol)) return {};
    auto it = folding.find(symbol);
    if (it != folding.end()) return it->second;
    // Symbols already in the reduced set map to themselves.
    if (classes.count(symbol)) return symbol;
    throw UnknownPhone("reduce_phones: symbol not covered by table: " + symbol);
  }

  // Distinct class symbols (the reduced inventory image), sorted.
  std::vector<std::string> image() const {
    std::set<std::string> sorted(classes.begin(), classes.end());
    return {sorted.begin(), sorted.end()};
  }
};

// Folds a sequence over `src` into inventory `dst`. Deleted symbols (glottal
// stop q) are removed; adjacent duplicates are kept (see collapse_repeats).
inline PhoneSequence reduce_phones(const PhoneSequence& seq, const ReductionTable& table,
                                   const PhoneInventory& src, const PhoneInventory& dst) {
  PhoneSequence out;
  out.utterance_id = seq.utterance_id;
  out.phones.reserve(seq.phones.size());
  for (int idx : seq.phones) {
    const std::string& sym = src.symbol(idx);
    if (src.is_special(idx)) throw DataError("reduce_phones: special symbol in target sequence");
    std::string mapped = table.map(sym);
    if (mapped.empty()) continue;  // deleted
    out.phones.push_back(dst.index_of(mapped));
  }
  return out;
}

// Evaluation convention: collapse runs of `symbol` (typically sil) to one.
inline PhoneSequence collapse_repeats(const PhoneSequence& seq, int symbol) {
  PhoneSequence out;
  out.utterance_id = seq.utterance_id;
  for (size_t i = 0; i < seq.phones.size(); ++i) {
    if (!out.phones.empty() && seq.phones[i] == symbol && out.phones.back() == symbol) continue;
    out.phones.push_back(seq.phones[i]);
  }
  return out;
}

// Parses TIMIT-style markup: one "start end symbol" line per segment.
inline std::vector<TimedSegment> parse_phn(const std::string& text,
                                           const PhoneInventory& inventory) {
  std::vector<TimedSegment> segments;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    int64_t start, end;
    std::string symbol;
    if (!(ls >> start >> end >> symbol))
      throw ParseError("parse_phn: malformed line " + std::to_string(line_no) + ": " + line);
    std::string extra;
    if (ls >> extra)
      throw ParseError("parse_phn: trailing tokens on line " + std::to_string(line_no));
    if (start < 0 || end <= start)
      throw MarkupError("parse_phn: bad span on line " + std::to_string(line_no) + " (" +
                        std::to_string(start) + ", " + std::to_string(end) + ")");
    segments.push_back({start, end, inventory.index_of(symbol)});
  }
  std::stable_sort(segments.begin(), segments.end(),
                   [](const TimedSegment& a, const TimedSegment& b) {
                     return a.start_sample < b.start_sample;
                   });
  for (size_t i = 1; i < segments.size(); ++i)
    if (segments[i].start_sample < segments[i - 1].end_sample)
      throw MarkupError("parse_phn: overlapping segments near sample " +
                        std::to_string(segments[i].start_sample));
  return segments;
}

inline std::string serialize_phn(const std::vector<TimedSegment>& segments,
                                 const PhoneInventory& inventory) {
  std::ostringstream out;
  for (const auto& s : segments)
    out << s.start_sample << " " << s.end_sample << " " << inventory.symbol(s.phone) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Split validation. Utterance ids are "<SPEAKER>_<PROMPT>"; the prompt code
// identifies the phrase text (TIMIT SA/SX/SI sentence ids).
// ---------------------------------------------------------------------------

inline std::string speaker_of(const std::string& utterance_id) {
  auto pos = utterance_id.find('_');
  if (pos == std::string::npos || pos == 0)
    throw SplitError("cannot derive speaker from utterance id: " + utterance_id);
  return utterance_id.substr(0, pos);
}

inline std::string phrase_of(const std::string& utterance_id) {
  auto pos = utterance_id.find('_');
  if (pos == std::string::npos || pos + 1 >= utterance_id.size())
    throw SplitError("cannot derive phrase from utterance id: " + utterance_id);
  return utterance_id.substr(pos + 1);
}

struct SplitReport {
  size_t train_utterances = 0, dev_utterances = 0, test_utterances = 0;
  size_t train_speakers = 0, dev_speakers = 0, test_speakers = 0;
};

inline SplitReport validate_split(const std::vector<std::string>& train,
                                  const std::vector<std::string>& dev,
                                  const std::vector<std::string>& test) {
  auto speakers = [](const std::vector<std::string>& ids) {
    std::set<std::string> s;
    for (const auto& id : ids) s.insert(speaker_of(id));
    return s;
  };
  auto phrases = [](const std::vector<std::string>& ids) {
    std::set<std::string> s;
    for (const auto& id : ids) s.insert(phrase_of(id));
    return s;
  };

  const auto tr_spk = speakers(train), dv_spk = speakers(dev), te_spk = speakers(test);
  auto check_disjoint = [](const std::set<std::string>& a, const std::set<std::string>& b,
                           const char* what) {
    for (const auto& x : a)
      if (b.count(x)) throw SplitError(std::string("split violation: ") + what + " shared: " + x);
  };
  check_disjoint(tr_spk, dv_spk, "train/dev speaker");
  check_disjoint(tr_spk, te_spk, "train/test speaker");
  check_disjoint(dv_spk, te_spk, "dev/test speaker");

  // Core test phrases must not occur in train or dev.
  const auto te_ph = phrases(test);
  for (const auto& id : train)
    if (te_ph.count(phrase_of(id)))
      throw SplitError("split violation: test phrase in train: " + phrase_of(id));
  for (const auto& id : dev)
    if (te_ph.count(phrase_of(id)))
      throw SplitError("split violation: test phrase in dev: " + phrase_of(id));

  SplitReport r;
  r.train_utterances = train.size();
  r.dev_utterances = dev.size();
  r.test_utterances = test.size();
  r.train_speakers = tr_spk.size();
  r.dev_speakers = dv_spk.size();
  r.test_speakers = te_spk.size();
  return r;
}

}  // namespace afd

#endif  // AFD_PHONESET_HPP
