// Scoring tests: edit alignment vs a DP oracle, PER pooling, feature
// accuracies, confusion counts.

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

#include <catch2/catch_amalgamated.hpp>

#include "afd/corpus.hpp"
#include "afd/eval.hpp"

using namespace afd;

namespace {

// Independent distance-only Wagner-Fischer oracle.
int dp_oracle(const std::vector<int>& hyp, const std::vector<int>& ref) {
  std::vector<int> prev(ref.size() + 1), cur(ref.size() + 1);
  for (size_t j = 0; j <= ref.size(); ++j) prev[j] = int(j);
  for (size_t i = 1; i <= hyp.size(); ++i) {
    cur[0] = int(i);
    for (size_t j = 1; j <= ref.size(); ++j) {
      const int sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[ref.size()];
}

// Replays ref -> hyp through the op list.
std::vector<int> replay(const EditAlignment& a, const std::vector<int>& hyp,
                        const std::vector<int>& ref) {
  std::vector<int> out;
  for (const auto& op : a.ops) {
    switch (op.type) {
      case EditOp::Match: out.push_back(ref.at(size_t(op.ref_index))); break;
      case EditOp::Substitute: out.push_back(hyp.at(size_t(op.hyp_index))); break;
      case EditOp::Insert: out.push_back(hyp.at(size_t(op.hyp_index))); break;
      case EditOp::Delete: break;  // ref symbol dropped
    }
  }
  return out;
}

}  // namespace

TEST_CASE("edit alignment: hand cases") {
  // Identical sequences: all matches.
  {
    const EditAlignment a = edit_alignment({1, 2, 3}, {1, 2, 3});
    REQUIRE(a.distance == 0);
    REQUIRE(a.ops.size() == 3);
    for (const auto& op : a.ops) REQUIRE(op.type == EditOp::Match);
  }
  // One insertion.
  {
    const EditAlignment a = edit_alignment({0, 1, 2}, {0, 2});
    REQUIRE(a.distance == 1);
    int inserts = 0;
    for (const auto& op : a.ops) inserts += op.type == EditOp::Insert;
    REQUIRE(inserts == 1);
  }
  // Empty hypothesis: all deletions.
  {
    const EditAlignment a = edit_alignment({}, {5, 6, 7});
    REQUIRE(a.distance == 3);
    REQUIRE(a.ops.size() == 3);
    for (const auto& op : a.ops) REQUIRE(op.type == EditOp::Delete);
  }
}

TEST_CASE("edit alignment: 500 random pairs agree with the DP oracle exactly") {
  Rng rng(500);
  for (int iter = 0; iter < 500; ++iter) {
    std::vector<int> hyp(rng.uniform_int(21)), ref(rng.uniform_int(21));
    for (auto& v : hyp) v = int(rng.uniform_int(10));
    for (auto& v : ref) v = int(rng.uniform_int(10));
    const EditAlignment a = edit_alignment(hyp, ref);
    REQUIRE(a.distance == dp_oracle(hyp, ref));
    // Replaying the ops transforms ref into hyp.
    REQUIRE(replay(a, hyp, ref) == hyp);
    // Op cost adds up to the distance.
    int cost = 0;
    for (const auto& op : a.ops) cost += op.type != EditOp::Match;
    REQUIRE(cost == a.distance);
  }
}

TEST_CASE("PER: pooling, hand values, order invariance, errors") {
  REQUIRE(phone_error_rate({{{1, 2, 3}, {1, 2, 3}}}) == 0.0);
  REQUIRE(phone_error_rate({{{0, 1, 2}, {0, 2}}}) == Catch::Approx(0.5));
  REQUIRE(phone_error_rate({{{}, {1, 2, 3}}}) == Catch::Approx(1.0));

  // Corpus pooling: sum distances / sum ref lengths.
  const std::vector<std::pair<std::vector<int>, std::vector<int>>> corpus = {
      {{0, 1, 2}, {0, 2}},      // d=1, len 2
      {{4, 4, 4, 4}, {4, 4}},   // d=2, len 2
      {{7}, {7, 8, 9, 1}},      // d=3, len 4
  };
  REQUIRE(phone_error_rate(corpus) == Catch::Approx(6.0 / 8.0));

  auto shuffled = corpus;
  std::swap(shuffled[0], shuffled[2]);
  REQUIRE(phone_error_rate(shuffled) == phone_error_rate(corpus));

  REQUIRE_THROWS_AS(phone_error_rate({{{1}, {}}}), EmptyReference);
}

TEST_CASE("sequence feature accuracy: perfect, n->ng, ins/del charging") {
  const SyntheticSetup setup = make_synthetic_setup(8);
  const auto table = nlohmann::json::parse(io::read_file(data_dir() + "/features_39.json"));
  const PhoneInventory p39 =
      PhoneInventory::from_json(nlohmann::json::parse(io::read_file(data_dir() + "/phones_39.json")));
  const FeatureInventory features = FeatureInventory::from_json(table);
  const FeatureMatrix m = build_feature_matrix(features, p39, table);
  const int F = features.named_count();

  auto bits_of = [&](const std::vector<std::string>& syms) {
    std::vector<std::vector<float>> bits;
    for (const auto& s : syms) bits.push_back(m.column_for_phone(p39.index_of(s)));
    return bits;
  };
  auto ids_of = [&](const std::vector<std::string>& syms) {
    std::vector<int> ids;
    for (const auto& s : syms) ids.push_back(p39.index_of(s));
    return ids;
  };

  // Perfect recognition: accuracy 1 for every feature.
  {
    const std::vector<std::string> seq = {"sil", "n", "iy", "sil"};
    const EditAlignment a = edit_alignment(ids_of(seq), ids_of(seq));
    const auto acc = feature_accuracy_sequence(bits_of(seq), bits_of(seq), a, F);
    for (double v : acc) REQUIRE(v == 1.0);
  }
  // n -> ng substitution: manner intact, place bits differ.
  {
    const std::vector<std::string> hyp = {"ng"}, ref = {"n"};
    const EditAlignment a = edit_alignment(ids_of(hyp), ids_of(ref));
    const auto acc = feature_accuracy_sequence(bits_of(hyp), bits_of(ref), a, F);
    REQUIRE(acc[size_t(features.index_of("nasal"))] == 1.0);
    REQUIRE(acc[size_t(features.index_of("consonantal"))] == 1.0);
    REQUIRE(acc[size_t(features.index_of("voiced"))] == 1.0);
    REQUIRE(acc[size_t(features.index_of("alveolar"))] == 0.0);
    REQUIRE(acc[size_t(features.index_of("velar"))] == 0.0);
    REQUIRE(acc[size_t(features.index_of("anterior"))] == 0.0);
  }
  // Insertions and deletions charge every feature one error.
  {
    const std::vector<std::string> hyp = {"n", "iy"}, ref = {"n"};
    const EditAlignment a = edit_alignment(ids_of(hyp), ids_of(ref));
    const auto acc = feature_accuracy_sequence(bits_of(hyp), bits_of(ref), a, F);
    for (double v : acc) REQUIRE(v == Catch::Approx(0.5));
  }
}

TEST_CASE("frame feature accuracy: exact, one bad frame, markup errors") {
  const auto table = nlohmann::json::parse(io::read_file(data_dir() + "/features_39.json"));
  const PhoneInventory p39 =
      PhoneInventory::from_json(nlohmann::json::parse(io::read_file(data_dir() + "/phones_39.json")));
  const FeatureInventory features = FeatureInventory::from_json(table);
  const FeatureMatrix m = build_feature_matrix(features, p39, table);
  const int F = features.named_count();
  const int step = 160;

  const int aa = p39.index_of("aa");
  const int iy = p39.index_of("iy");
  // Ten 10 ms frames; segments: aa covers the first 5, iy the rest.
  std::vector<TimedSegment> truth = {{0, 5 * step, aa}, {5 * step, 10 * step, iy}};

  FrameLabeling predicted;
  for (int f = 0; f < 10; ++f) {
    const int phone = f < 5 ? aa : iy;
    predicted.phones.push_back(phone);
    predicted.bits.push_back(m.column_for_phone(phone));
  }
  auto acc = feature_accuracy_frames(predicted, truth, m, step);
  for (double v : acc) REQUIRE(v == 1.0);

  // One mislabeled frame, differing feature bits drop by exactly 0.1.
  predicted.bits[7] = m.column_for_phone(aa);
  predicted.phones[7] = aa;
  acc = feature_accuracy_frames(predicted, truth, m, step);
  const auto aa_col = m.column_for_phone(aa);
  const auto iy_col = m.column_for_phone(iy);
  for (int f = 0; f < F; ++f) {
    if (aa_col[size_t(f)] != iy_col[size_t(f)])
      REQUIRE(acc[size_t(f)] == Catch::Approx(0.9));
    else
      REQUIRE(acc[size_t(f)] == 1.0);
  }

  // A gap in the markup raises MarkupError.
  std::vector<TimedSegment> gappy = {{0, 3 * step, aa}, {7 * step, 10 * step, iy}};
  REQUIRE_THROWS_AS(feature_accuracy_frames(predicted, gappy, m, step), MarkupError);
  REQUIRE_THROWS_AS(feature_accuracy_frames(predicted, {}, m, step), EmptyInput);
}

TEST_CASE("confusion counts") {
  // Perfect corpus: empty map.
  {
    std::vector<std::tuple<std::vector<int>, std::vector<int>, EditAlignment>> corpus;
    const std::vector<int> seq = {1, 2, 3};
    corpus.emplace_back(seq, seq, edit_alignment(seq, seq));
    REQUIRE(confusion_counts(corpus).empty());
  }
  // Constructed: three ah->ih substitutions.
  {
    std::vector<std::tuple<std::vector<int>, std::vector<int>, EditAlignment>> corpus;
    const int ah = 100, ih = 200;
    for (int i = 0; i < 3; ++i) {
      const std::vector<int> hyp = {1, ih, 2}, ref = {1, ah, 2};
      corpus.emplace_back(hyp, ref, edit_alignment(hyp, ref));
    }
    const auto counts = confusion_counts(corpus);
    REQUIRE(counts.at({ah, ih}) == 3);
    REQUIRE(counts.size() == 1);
  }
  // Random corpus: totals equal the number of substitution ops.
  {
    Rng rng(77);
    std::vector<std::tuple<std::vector<int>, std::vector<int>, EditAlignment>> corpus;
    int64_t substitutions = 0;
    for (int u = 0; u < 50; ++u) {
      std::vector<int> hyp(1 + rng.uniform_int(12)), ref(1 + rng.uniform_int(12));
      for (auto& v : hyp) v = int(rng.uniform_int(6));
      for (auto& v : ref) v = int(rng.uniform_int(6));
      EditAlignment a = edit_alignment(hyp, ref);
      for (const auto& op : a.ops) substitutions += op.type == EditOp::Substitute;
      corpus.emplace_back(hyp, ref, a);
    }
    int64_t total = 0;
    for (const auto& [pair, count] : confusion_counts(corpus)) total += count;
    REQUIRE(total == substitutions);
  }
}

TEST_CASE("per-feature accuracy is 1 whenever PER is 0 with a shared matrix") {
  const auto table = nlohmann::json::parse(io::read_file(data_dir() + "/features_39.json"));
  const PhoneInventory p39 =
      PhoneInventory::from_json(nlohmann::json::parse(io::read_file(data_dir() + "/phones_39.json")));
  const FeatureMatrix m =
      build_feature_matrix(FeatureInventory::from_json(table), p39, table);
  Rng rng(8);
  for (int iter = 0; iter < 20; ++iter) {
    std::vector<int> seq(1 + rng.uniform_int(10));
    for (auto& v : seq) v = int(rng.uniform_int(uint64_t(p39.phone_count())));
    const EditAlignment a = edit_alignment(seq, seq);
    std::vector<std::vector<float>> bits;
    for (int p : seq) bits.push_back(m.column_for_phone(p));
    const auto acc =
        feature_accuracy_sequence(bits, bits, a, m.features().named_count());
    for (double v : acc) REQUIRE(v == 1.0);
  }
}

TEST_CASE("report serialization") {
  EvalReport report;
  report.per = 0.218;
  report.feature_names = {"nasal", "vowel"};
  report.per_feature_sequence_acc = {0.98, 0.97};
  report.confusions[{1, 2}] = 5;
  const PhoneInventory inv = PhoneInventory::make({"aa", "ah", "ih"}, "aa");
  const auto j = report.to_json(inv);
  REQUIRE(j.at("per").get<double>() == Catch::Approx(0.218));
  REQUIRE(j.at("per_feature_sequence_acc").at("nasal").get<double>() == Catch::Approx(0.98));
  REQUIRE(j.at("confusions")[0].at("ref") == "ah");
  const std::string text = format_report(report, &inv);
  REQUIRE(text.find("PER 21.8%") != std::string::npos);
  REQUIRE(text.find("nasal") != std::string::npos);
  REQUIRE(text.find("ah -> ih") != std::string::npos);
}
