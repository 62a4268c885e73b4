// Decoder tests: determinism, eos/truncation, mode invariants, the
// posteriorgram argmax oracle, ATT1 round trip.

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
#include "afd/decoder.hpp"

using namespace afd;

namespace {

struct Fixture {
  SyntheticSetup setup = make_synthetic_setup(3);
  ModelConfig cfg;
  ModelParameters model;

  explicit Fixture(uint64_t seed = 7) {
    cfg.encoder_layers = 2;
    cfg.encoder_units = 6;
    cfg.decoder_units = 6;
    cfg.input_dims = 5;
    cfg.phone_count = setup.inventory.phone_count();
    cfg.feature_count = setup.features.named_count();
    Rng rng(seed);
    model = init_parameters(cfg, rng);
  }

  AcousticFeatures features(long frames, uint64_t seed = 3) const {
    AcousticFeatures f;
    f.utterance_id = "fx";
    f.data.resize(frames, cfg.input_dims);
    Rng rng(seed);
    for (long i = 0; i < f.data.size(); ++i) f.data.data()[i] = float(rng.gaussian() * 0.7);
    return f;
  }
};

}  // namespace

TEST_CASE("greedy phone decode: deterministic, bounded, attention rows match") {
  Fixture fx;
  const AcousticFeatures f = fx.features(24);
  const DecodeResult a = decode_phones_greedy(f, fx.model, fx.cfg);
  const DecodeResult b = decode_phones_greedy(f, fx.model, fx.cfg);
  REQUIRE(a.phones.has_value());
  REQUIRE(a.phones->phones == b.phones->phones);
  REQUIRE(a.attention == b.attention);

  // Attention rows = emitted symbols including the final (eos or cap) step.
  const long emitted = long(a.phones->phones.size()) + (a.truncated ? 0 : 1);
  REQUIRE(a.attention.rows() == emitted);
  const long enc_len = (24 + 1) / 2;
  REQUIRE(a.attention.cols() == enc_len);
  for (long r = 0; r < a.attention.rows(); ++r)
    REQUIRE(a.attention.row(r).sum() == Catch::Approx(1.0f).margin(1e-5));

  // No <sos>/<eos> in the stored sequence.
  for (int p : a.phones->phones) REQUIRE(!fx.setup.inventory.is_special(p));

  // max_len respected with the truncation flag.
  const DecodeResult capped = decode_phones_greedy(f, fx.model, fx.cfg, 2);
  REQUIRE(capped.phones->phones.size() <= 2);
  if (capped.phones->phones.size() == 2) REQUIRE(capped.truncated);
}

TEST_CASE("single-phone inventory can only emit that phone") {
  // One real phone + sil: whatever the weights, outputs are drawn from the
  // inventory (never specials).
  SyntheticSetup setup = make_synthetic_setup(1);
  ModelConfig cfg;
  cfg.encoder_layers = 2;
  cfg.encoder_units = 5;
  cfg.decoder_units = 5;
  cfg.input_dims = 4;
  cfg.phone_count = setup.inventory.phone_count();
  cfg.feature_count = setup.features.named_count();
  Rng rng(3);
  ModelParameters model = init_parameters(cfg, rng);
  AcousticFeatures f;
  f.data = MatF::Random(12, 4);
  const DecodeResult result = decode_phones_greedy(f, model, cfg);
  for (int p : result.phones->phones) {
    REQUIRE(p < setup.inventory.phone_count());
    REQUIRE(!setup.inventory.is_special(p));
  }
}

TEST_CASE("indicator decode: posteriorgram/attention shapes and agreement invariant") {
  Fixture fx;
  const AcousticFeatures f = fx.features(30);
  for (DecodeMode mode : {DecodeMode::IndicatorsMapped, DecodeMode::IndicatorsSampled}) {
    const DecodeResult r = decode_indicators(f, fx.model, fx.cfg, fx.setup.matrix, mode);
    REQUIRE(r.posteriorgram.has_value());
    REQUIRE(r.posteriorgram->cols() == fx.cfg.indicator_dims());
    REQUIRE(r.posteriorgram->rows() == r.attention.rows());
    REQUIRE(r.posteriorgram->minCoeff() > 0.0f);
    REQUIRE(r.posteriorgram->maxCoeff() < 1.0f);

    if (mode == DecodeMode::IndicatorsMapped) {
      REQUIRE(r.phones.has_value());
      // Mapped phone output equals posteriorgram_to_phones on its own rows.
      const PhoneSequence again = posteriorgram_to_phones(*r.posteriorgram, fx.setup.matrix);
      REQUIRE(r.phones->phones == again.phones);
    } else {
      REQUIRE(!r.phones.has_value());
    }
  }

  // Determinism in both default modes.
  const DecodeResult s1 =
      decode_indicators(f, fx.model, fx.cfg, fx.setup.matrix, DecodeMode::IndicatorsSampled);
  const DecodeResult s2 =
      decode_indicators(f, fx.model, fx.cfg, fx.setup.matrix, DecodeMode::IndicatorsSampled);
  REQUIRE(*s1.posteriorgram == *s2.posteriorgram);

  // Stochastic sampling path is seeded and reproducible.
  const DecodeResult st1 = decode_indicators(f, fx.model, fx.cfg, fx.setup.matrix,
                                             DecodeMode::IndicatorsSampled, 0, uint64_t(9));
  const DecodeResult st2 = decode_indicators(f, fx.model, fx.cfg, fx.setup.matrix,
                                             DecodeMode::IndicatorsSampled, 0, uint64_t(9));
  REQUIRE(*st1.posteriorgram == *st2.posteriorgram);
}

TEST_CASE("a remapped matrix changes the feedback path, not the network shapes") {
  Fixture fx;
  const AcousticFeatures f = fx.features(20);

  // Superset inventory over the same feature space.
  std::vector<std::string> phones;
  for (int p = 0; p < fx.setup.inventory.size(); ++p)
    if (!fx.setup.inventory.is_special(p)) phones.push_back(fx.setup.inventory.symbol(p));
  phones.push_back("eh");
  auto bigger = PhoneInventory::make(phones, "sil");
  const auto table = nlohmann::json::parse(io::read_file(data_dir() + "/features_39.json"));
  const FeatureMatrix remapped = remap_inventory(fx.setup.matrix, bigger, table);

  const DecodeResult a =
      decode_indicators(f, fx.model, fx.cfg, fx.setup.matrix, DecodeMode::IndicatorsMapped);
  const DecodeResult b =
      decode_indicators(f, fx.model, fx.cfg, remapped, DecodeMode::IndicatorsMapped);
  REQUIRE(a.posteriorgram->cols() == b.posteriorgram->cols());
  REQUIRE(b.attention.cols() == a.attention.cols());
  // First-step posteriors are identical: the matrix only enters via feedback.
  REQUIRE(a.posteriorgram->row(0) == b.posteriorgram->row(0));

  // Dimension mismatch is rejected.
  auto small_features = FeatureInventory::make({"f1", "silence", "vowel", "consonantal"});
  auto small_phones = PhoneInventory::make({"x", "sil"}, "sil");
  const FeatureMatrix wrong = build_feature_matrix(
      small_features, small_phones, nlohmann::json{{"x", {"f1"}}, {"sil", {"silence"}}});
  REQUIRE_THROWS_AS(
      decode_indicators(f, fx.model, fx.cfg, wrong, DecodeMode::IndicatorsMapped), ShapeError);
}

TEST_CASE("posteriorgram_to_phones: exact columns, oracle argmax, empty input") {
  Fixture fx;
  const FeatureMatrix& m = fx.setup.matrix;
  const int Fi = m.feature_count();

  // Rows equal to matrix columns map to those phones; eos rows are dropped.
  std::vector<int> chosen = {fx.setup.inventory.index_of("aa"),
                             fx.setup.inventory.index_of("iy"), fx.setup.inventory.sil};
  MatF pg(long(chosen.size()) + 1, Fi);
  for (size_t i = 0; i < chosen.size(); ++i) {
    const auto col = m.column_for_phone(chosen[i]);
    for (int j = 0; j < Fi; ++j) pg(long(i), j) = col[size_t(j)];
  }
  const auto eos_col = m.column(m.eos_column());
  for (int j = 0; j < Fi; ++j) pg(long(chosen.size()), j) = eos_col[size_t(j)];
  const PhoneSequence seq = posteriorgram_to_phones(pg, m, "u");
  REQUIRE(seq.phones == chosen);

  // Random posteriorgram matches the brute-force per-row argmax oracle.
  Rng rng(12);
  MatF random_pg(6, Fi);
  for (long i = 0; i < random_pg.size(); ++i) random_pg.data()[i] = float(rng.uniform());
  const PhoneSequence decoded = posteriorgram_to_phones(random_pg, m);
  size_t k = 0;
  for (long r = 0; r < random_pg.rows(); ++r) {
    double best = -1e300;
    int best_col = 0;
    for (int j = 0; j < m.column_count(); ++j) {
      double acc = 0.0;
      for (int i = 0; i < Fi; ++i) {
        const double p = std::clamp(double(random_pg(r, i)), kPosteriorClamp,
                                    1.0 - kPosteriorClamp);
        acc += (m.bits()(i, j) != 0.0f) ? std::log(p) : std::log(1.0 - p);
      }
      if (acc > best) {
        best = acc;
        best_col = j;
      }
    }
    const int phone = m.phone_of_column(best_col);
    if (phone == m.phones().eos) continue;
    REQUIRE(decoded.phones.at(k) == phone);
    ++k;
  }
  REQUIRE(k == decoded.phones.size());

  // Empty input.
  REQUIRE(posteriorgram_to_phones(MatF(0, Fi), m).phones.empty());
}

TEST_CASE("ATT1 round trip") {
  Rng rng(4);
  MatF att(3, 7);
  for (long i = 0; i < att.size(); ++i) att.data()[i] = float(rng.uniform());
  const std::string bytes = write_att1(att);
  const MatF back = read_att1(bytes);
  REQUIRE(back.rows() == 3);
  REQUIRE(back.cols() == 7);
  REQUIRE(std::memcmp(back.data(), att.data(), sizeof(float) * 21) == 0);
  REQUIRE_THROWS_AS(read_att1("ATTX"), ParseError);
}
