// Feature matrix and indicator-to-phone algebra tests: the Bernoulli product
// oracle, argmax/reverse mapping, the shipped 39-phone table, remapping.

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

#include "afd/artic.hpp"

using namespace afd;

namespace {

// Brute-force oracle: log of the Bernoulli product with the same clamp.
std::vector<double> bernoulli_oracle(const std::vector<float>& phi, const MatF& bits) {
  std::vector<double> out(size_t(bits.cols()), 0.0);
  for (long j = 0; j < bits.cols(); ++j) {
    double prod_log = 0.0;
    for (long i = 0; i < bits.rows(); ++i) {
      double p = std::min(1.0 - kPosteriorClamp,
                          std::max(kPosteriorClamp, double(phi[size_t(i)])));
      prod_log += (bits(i, j) != 0.0f) ? std::log(p) : std::log(1.0 - p);
    }
    out[size_t(j)] = prod_log;
  }
  return out;
}

struct Toy {
  FeatureInventory features;
  PhoneInventory phones;
  FeatureMatrix matrix;
};

Toy make_toy() {
  Toy t;
  t.features = FeatureInventory::make({"f1", "f2", "silence", "vowel", "consonantal"});
  t.phones = PhoneInventory::make({"a", "b", "c", "sil"}, "sil");
  nlohmann::json table = {
      {"a", {"f1"}}, {"b", {"f2"}}, {"c", {"f1", "f2"}}, {"sil", {"silence"}}};
  t.matrix = build_feature_matrix(t.features, t.phones, table);
  return t;
}

IndicatorPosteriors phi_for(const FeatureMatrix& m, std::vector<float> named) {
  IndicatorPosteriors phi;
  phi.values = std::move(named);
  phi.values.resize(size_t(m.feature_count()), 0.0f);
  return phi;
}

}  // namespace

TEST_CASE("toy matrix construction and validation") {
  const Toy toy = make_toy();
  REQUIRE(toy.matrix.feature_count() == 6);   // 5 named + eos
  REQUIRE(toy.matrix.column_count() == 5);    // 4 phones + eos

  // Degenerate table: two identical columns.
  nlohmann::json bad = {
      {"a", {"f1"}}, {"b", {"f1"}}, {"c", {"f1", "f2"}}, {"sil", {"silence"}}};
  REQUIRE_THROWS_AS(build_feature_matrix(toy.features, toy.phones, bad), DegenerateMatrix);

  // Missing phone.
  nlohmann::json incomplete = {{"a", {"f1"}}, {"b", {"f2"}}, {"sil", {"silence"}}};
  REQUIRE_THROWS_AS(build_feature_matrix(toy.features, toy.phones, incomplete), IncompleteTable);

  // sil must be silence-only.
  nlohmann::json bad_sil = {
      {"a", {"f1"}}, {"b", {"f2"}}, {"c", {"f1", "f2"}}, {"sil", {"silence", "f1"}}};
  REQUIRE_THROWS_AS(build_feature_matrix(toy.features, toy.phones, bad_sil), DataError);

  // vowel+consonantal exclusivity.
  nlohmann::json both = {{"a", {"vowel", "consonantal"}},
                         {"b", {"f2"}},
                         {"c", {"f1", "f2"}},
                         {"sil", {"silence"}}};
  REQUIRE_THROWS_AS(build_feature_matrix(toy.features, toy.phones, both), DataError);
}

TEST_CASE("Eq. 1 hand-computed example") {
  const Toy toy = make_toy();
  const IndicatorPosteriors phi = phi_for(toy.matrix, {0.9f, 0.2f});
  const PhoneLogPosteriors p = phone_log_posteriors(phi, toy.matrix);

  const int a = toy.matrix.column_of_phone(toy.phones.index_of("a"));
  const int b = toy.matrix.column_of_phone(toy.phones.index_of("b"));
  const int c = toy.matrix.column_of_phone(toy.phones.index_of("c"));
  // With the remaining features at (clamped) zero, the shared log(1-eps)
  // terms cancel in comparisons; the two named features give the paper's
  // worked values up to that shared constant.
  const double shared = 4.0 * std::log(1.0 - kPosteriorClamp);
  REQUIRE(p.values[size_t(a)] - shared == Catch::Approx(-0.3285).margin(5e-4));
  REQUIRE(p.values[size_t(b)] - shared == Catch::Approx(-3.9120).margin(5e-4));
  REQUIRE(p.values[size_t(c)] - shared == Catch::Approx(-1.7148).margin(5e-4));

  const NearestPhone nearest = nearest_phone_features(phi, toy.matrix);
  REQUIRE(nearest.phone == toy.phones.index_of("a"));
  REQUIRE(nearest.features == toy.matrix.column_for_phone(toy.phones.index_of("a")));
}

TEST_CASE("uninformative posterior scores all phones identically") {
  const Toy toy = make_toy();
  IndicatorPosteriors phi;
  phi.values.assign(size_t(toy.matrix.feature_count()), 0.5f);
  const PhoneLogPosteriors p = phone_log_posteriors(phi, toy.matrix);
  const double expected = double(toy.matrix.feature_count()) * std::log(0.5);
  for (double v : p.values) REQUIRE(v == Catch::Approx(expected).margin(1e-9));
}

TEST_CASE("posterior equal to a column scores highest; k flipped bits cost k steps") {
  const Toy toy = make_toy();
  const int b_phone = toy.phones.index_of("b");
  const auto col = toy.matrix.column_for_phone(b_phone);
  IndicatorPosteriors phi;
  phi.values = col;  // exact one-hot features, clamped internally
  const PhoneLogPosteriors p = phone_log_posteriors(phi, toy.matrix);
  const int b_col = toy.matrix.column_of_phone(b_phone);
  const double step = std::log(1.0 - kPosteriorClamp) - std::log(kPosteriorClamp);
  for (int j = 0; j < toy.matrix.column_count(); ++j) {
    if (j == b_col) continue;
    int hamming = 0;
    for (int i = 0; i < toy.matrix.feature_count(); ++i)
      if (toy.matrix.bits()(i, j) != toy.matrix.bits()(i, b_col)) ++hamming;
    REQUIRE(p.values[size_t(b_col)] - p.values[size_t(j)] ==
            Catch::Approx(double(hamming) * step).epsilon(1e-9));
  }

  // Fixed point of the reverse mapping.
  const NearestPhone nearest = nearest_phone_features(phi, toy.matrix);
  REQUIRE(nearest.phone == b_phone);
  REQUIRE(nearest.features == col);
}

TEST_CASE("exact tie breaks toward the lower phone index") {
  // Two features, phones x=(1,0) and y=(0,1); phi=(0.5, 0.5) ties them.
  auto features = FeatureInventory::make({"f1", "f2", "silence", "vowel", "consonantal"});
  auto phones = PhoneInventory::make({"x", "y", "sil"}, "sil");
  nlohmann::json table = {{"x", {"f1"}}, {"y", {"f2"}}, {"sil", {"silence"}}};
  const FeatureMatrix m = build_feature_matrix(features, phones, table);
  IndicatorPosteriors phi;
  phi.values.assign(size_t(m.feature_count()), 0.0f);
  phi.values[0] = 0.5f;
  phi.values[1] = 0.5f;
  const NearestPhone nearest = nearest_phone_features(phi, m);
  REQUIRE(nearest.phone == phones.index_of("x"));
}

TEST_CASE("oracle equivalence and argmax agreement on random instances") {
  const Toy toy = make_toy();
  Rng rng(2024);
  for (int iter = 0; iter < 200; ++iter) {
    IndicatorPosteriors phi;
    for (int i = 0; i < toy.matrix.feature_count(); ++i) {
      double v = rng.uniform();
      if (rng.bernoulli(0.1)) v = rng.bernoulli(0.5) ? 0.0 : 1.0;  // exercise the clamp
      phi.values.push_back(float(v));
    }
    const PhoneLogPosteriors p = phone_log_posteriors(phi, toy.matrix);
    const auto oracle = bernoulli_oracle(phi.values, toy.matrix.bits());
    for (size_t j = 0; j < oracle.size(); ++j)
      REQUIRE(std::abs(p.values[j] - oracle[j]) < 1e-9);

    int best = 0;
    for (size_t j = 1; j < oracle.size(); ++j)
      if (oracle[j] > oracle[size_t(best)]) best = int(j);
    REQUIRE(argmax_column(p, toy.matrix) == best);
  }
}

TEST_CASE("monotonicity: raising phi_i helps phones with the bit set") {
  const Toy toy = make_toy();
  IndicatorPosteriors phi = phi_for(toy.matrix, {0.4f, 0.3f});
  const PhoneLogPosteriors before = phone_log_posteriors(phi, toy.matrix);
  phi.values[0] = 0.6f;
  const PhoneLogPosteriors after = phone_log_posteriors(phi, toy.matrix);
  for (int j = 0; j < toy.matrix.column_count(); ++j) {
    const bool has_bit = toy.matrix.bits()(0, j) != 0.0f;
    if (has_bit)
      REQUIRE(after.values[size_t(j)] > before.values[size_t(j)]);
    else
      REQUIRE(after.values[size_t(j)] < before.values[size_t(j)]);
  }
}

TEST_CASE("shipped 39-phone table: distinct columns, coverage, sil column") {
  const auto table = nlohmann::json::parse(io::read_file(data_dir() + "/features_39.json"));
  const auto p39 = nlohmann::json::parse(io::read_file(data_dir() + "/phones_39.json"));
  const FeatureInventory features = FeatureInventory::from_json(table);
  const PhoneInventory phones = PhoneInventory::from_json(p39);
  REQUIRE(features.named_count() == 28);

  const FeatureMatrix m = build_feature_matrix(features, phones, table);
  REQUIRE(m.column_count() == 40);  // 39 phones + eos

  // Pairwise Hamming distance >= 1 (the build validates this; cross-check).
  for (int a = 0; a < m.column_count(); ++a)
    for (int b = a + 1; b < m.column_count(); ++b) {
      int hamming = 0;
      for (int i = 0; i < m.feature_count(); ++i)
        if (m.bits()(i, a) != m.bits()(i, b)) ++hamming;
      REQUIRE(hamming >= 1);
    }

  // Silence column: silence bit only.
  const auto sil_col = m.column_for_phone(phones.sil);
  const int silence_row = features.index_of("silence");
  for (int i = 0; i < m.feature_count(); ++i)
    REQUIRE(sil_col[size_t(i)] == (i == silence_row ? 1.0f : 0.0f));

  // Every named feature appears somewhere.
  for (int i = 0; i < features.named_count(); ++i)
    REQUIRE(m.bits().row(i).sum() > 0.0f);

  // The n/ng substitution keeps manner bits and differs in place bits.
  const auto n_col = m.column_for_phone(phones.index_of("n"));
  const auto ng_col = m.column_for_phone(phones.index_of("ng"));
  REQUIRE(n_col[size_t(features.index_of("nasal"))] == 1.0f);
  REQUIRE(ng_col[size_t(features.index_of("nasal"))] == 1.0f);
  REQUIRE(n_col[size_t(features.index_of("alveolar"))] != ng_col[size_t(features.index_of("alveolar"))]);
}

TEST_CASE("closure: nearest_phone_features always returns a matrix column") {
  const Toy toy = make_toy();
  Rng rng(5150);
  for (int iter = 0; iter < 500; ++iter) {
    IndicatorPosteriors phi;
    for (int i = 0; i < toy.matrix.feature_count(); ++i)
      phi.values.push_back(float(rng.uniform()));
    const NearestPhone nearest = nearest_phone_features(phi, toy.matrix);
    REQUIRE(nearest.features == toy.matrix.column_for_phone(nearest.phone));
  }
}

TEST_CASE("remap_inventory swaps the phone set without touching the algebra") {
  const Toy toy = make_toy();

  // Identical table: same columns under the same phones.
  const FeatureMatrix same = remap_inventory(
      toy.matrix, toy.phones,
      nlohmann::json{{"a", {"f1"}}, {"b", {"f2"}}, {"c", {"f1", "f2"}}, {"sil", {"silence"}}});
  REQUIRE(same.bits() == toy.matrix.bits());

  // Superset inventory: decoding ranges over more columns, Eq. 1 unchanged.
  auto bigger = PhoneInventory::make({"a", "b", "c", "d", "sil"}, "sil");
  nlohmann::json super = {{"a", {"f1"}},
                          {"b", {"f2"}},
                          {"c", {"f1", "f2"}},
                          {"d", {"f1", "vowel"}},
                          {"sil", {"silence"}}};
  const FeatureMatrix remapped = remap_inventory(toy.matrix, bigger, super);
  REQUIRE(remapped.column_count() == toy.matrix.column_count() + 1);
  REQUIRE(remapped.feature_count() == toy.matrix.feature_count());
  IndicatorPosteriors phi = phi_for(toy.matrix, {0.9f, 0.2f});
  const auto p_old = phone_log_posteriors(phi, toy.matrix);
  const auto p_new = phone_log_posteriors(phi, remapped);
  // Shared phones keep their scores.
  for (const char* sym : {"a", "b", "c", "sil"})
    REQUIRE(p_new.values[size_t(remapped.column_of_phone(bigger.index_of(sym)))] ==
            Catch::Approx(p_old.values[size_t(
                toy.matrix.column_of_phone(toy.phones.index_of(sym)))]));

  // Degenerate remap.
  nlohmann::json degenerate = {{"a", {"f1"}},
                               {"b", {"f1"}},
                               {"c", {"f1", "f2"}},
                               {"d", {"vowel"}},
                               {"sil", {"silence"}}};
  REQUIRE_THROWS_AS(remap_inventory(toy.matrix, bigger, degenerate), DegenerateMatrix);
}

TEST_CASE("renormalization does not change the argmax") {
  const Toy toy = make_toy();
  Rng rng(31);
  for (int iter = 0; iter < 50; ++iter) {
    IndicatorPosteriors phi;
    for (int i = 0; i < toy.matrix.feature_count(); ++i)
      phi.values.push_back(float(rng.uniform()));
    PhoneLogPosteriors p = phone_log_posteriors(phi, toy.matrix);
    const int before = argmax_column(p, toy.matrix);
    for (auto& v : p.values) v += 17.5;  // constant shift
    REQUIRE(argmax_column(p, toy.matrix) == before);
  }
}

TEST_CASE("shape errors") {
  const Toy toy = make_toy();
  IndicatorPosteriors phi;
  phi.values = {0.5f, 0.5f};  // wrong length
  REQUIRE_THROWS_AS(phone_log_posteriors(phi, toy.matrix), ShapeError);
}

TEST_CASE("IPG1 round trip") {
  Rng rng(8);
  MatF pg(5, 29);
  for (long i = 0; i < pg.size(); ++i) pg.data()[i] = float(rng.uniform());
  const std::string bytes = write_ipg1(pg);
  const MatF back = read_ipg1(bytes);
  REQUIRE(back.rows() == 5);
  REQUIRE(back.cols() == 29);
  REQUIRE(std::memcmp(back.data(), pg.data(), sizeof(float) * 5 * 29) == 0);
  REQUIRE_THROWS_AS(read_ipg1("IPGX"), ParseError);
}
