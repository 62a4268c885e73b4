// Corpus tests: synthetic generator determinism and separability, corpus
// persistence round trip, TIMIT mini-layout ingestion.

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

#include <filesystem>

#include "afd/corpus.hpp"
#include "afd/frontend.hpp"

using namespace afd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("afd_test_" + std::to_string(Rng::mix64(uint64_t(std::time(nullptr)) ^
                                                    uint64_t(::getpid()))));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("synthetic corpus: deterministic per seed") {
  const SyntheticSetup setup = make_synthetic_setup(8);
  const auto a = generate_synthetic(42, 8, setup.inventory, setup.matrix);
  const auto b = generate_synthetic(42, 8, setup.inventory, setup.matrix);
  REQUIRE(a.size() == 8);
  for (size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].id == b[i].id);
    REQUIRE(a[i].audio.samples == b[i].audio.samples);  // byte-identical
    REQUIRE(a[i].phones.phones == b[i].phones.phones);
  }
  const auto c = generate_synthetic(43, 8, setup.inventory, setup.matrix);
  REQUIRE(a[0].audio.samples != c[0].audio.samples);
}

TEST_CASE("synthetic corpus: valid segment tilings, sil wrapping") {
  const SyntheticSetup setup = make_synthetic_setup(8);
  const auto corpus = generate_synthetic(7, 64, setup.inventory, setup.matrix);
  REQUIRE(corpus.size() == 64);
  for (const auto& utt : corpus) {
    REQUIRE(!utt.segments.empty());
    REQUIRE(utt.segments.front().start_sample == 0);
    REQUIRE(utt.segments.back().end_sample == int64_t(utt.audio.samples.size()));
    for (size_t i = 1; i < utt.segments.size(); ++i)
      REQUIRE(utt.segments[i].start_sample == utt.segments[i - 1].end_sample);
    REQUIRE(utt.phones.phones.front() == setup.inventory.sil);
    REQUIRE(utt.phones.phones.back() == setup.inventory.sil);
    // Content length within the configured band (3..6 + two sils).
    REQUIRE(utt.phones.phones.size() >= 5);
    REQUIRE(utt.phones.phones.size() <= 8);
  }
  REQUIRE_THROWS_AS(generate_synthetic(1, 0, setup.inventory, setup.matrix), EmptyInput);
}

TEST_CASE("synthetic corpus: phone classes are spectrally separable") {
  const SyntheticSetup setup = make_synthetic_setup(4);
  const auto corpus = generate_synthetic(11, 24, setup.inventory, setup.matrix);

  // Mean fbank vector per phone over all segments, via ground-truth spans.
  const int n_phones = setup.inventory.phone_count();
  std::vector<Eigen::VectorXd> mean(static_cast<size_t>(n_phones));
  std::vector<long> count(static_cast<size_t>(n_phones), 0);
  const FrontendConfig cfg;
  for (const auto& utt : corpus) {
    const AcousticFeatures f = extract_fbank(utt.audio, cfg);
    for (const auto& seg : utt.segments) {
      const long first = seg.start_sample / 160;
      const long last = std::min(f.frames() - 1, seg.end_sample / 160 - 2);
      for (long t = first; t <= last; ++t) {
        Eigen::VectorXd row = f.data.row(t).cast<double>();
        if (count[size_t(seg.phone)] == 0)
          mean[size_t(seg.phone)] = Eigen::VectorXd::Zero(row.size());
        mean[size_t(seg.phone)] += row;
        count[size_t(seg.phone)] += 1;
      }
    }
  }
  for (int p = 0; p < n_phones; ++p) {
    REQUIRE(count[size_t(p)] > 0);
    mean[size_t(p)] /= double(count[size_t(p)]);
  }
  // Distinct class means: every pair separated in feature space.
  for (int a = 0; a < n_phones; ++a)
    for (int b = a + 1; b < n_phones; ++b)
      REQUIRE((mean[size_t(a)] - mean[size_t(b)]).norm() > 1.0);
}

TEST_CASE("corpus persistence round trip") {
  const SyntheticSetup setup = make_synthetic_setup(5);
  const auto corpus = generate_synthetic(3, 6, setup.inventory, setup.matrix);
  TempDir dir;
  save_corpus(dir.path.string(), corpus, setup.inventory, 3);
  const LoadedCorpus back = load_corpus(dir.path.string());
  REQUIRE(back.seed == 3);
  REQUIRE(back.inventory.phone_count() == setup.inventory.phone_count());
  REQUIRE(back.utterances.size() == corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    REQUIRE(back.utterances[i].id == corpus[i].id);
    REQUIRE(back.utterances[i].audio.samples == corpus[i].audio.samples);
    REQUIRE(back.utterances[i].phones.phones == corpus[i].phones.phones);
    REQUIRE(back.utterances[i].segments.size() == corpus[i].segments.size());
  }
}

TEST_CASE("TIMIT mini layout: splits, SA exclusion, prompt filtering") {
  const PhoneInventory p61 =
      PhoneInventory::from_json(nlohmann::json::parse(io::read_file(data_dir() + "/phones_61.json")));
  TempDir root;

  auto write_utt = [&](const std::string& section, const std::string& speaker,
                       const std::string& prompt) {
    const fs::path dir = root.path / section / "DR1" / speaker;
    fs::create_directories(dir);
    AudioBuffer audio;
    audio.sample_rate = 16000;
    audio.samples.assign(8000, 100);
    io::write_file((dir / (prompt + ".WAV")).string(), write_sphere(audio));
    io::write_file((dir / (prompt + ".PHN")).string(), "0 4000 h#\n4000 8000 aa\n");
  };

  // Train speaker with an SA record (must be dropped).
  write_utt("TRAIN", "FAAA0", "SX1");
  write_utt("TRAIN", "FAAA0", "SA1");
  write_utt("TRAIN", "MBBB0", "SI100");
  // Core test speaker (MDAB0 is in the standard core list).
  write_utt("TEST", "MDAB0", "SX200");
  write_utt("TEST", "MDAB0", "SI300");
  write_utt("TEST", "MDAB0", "SA1");
  // Non-core test speaker: one prompt shared with the core (filtered from
  // dev), one unique (kept).
  write_utt("TEST", "MCCC0", "SX200");
  write_utt("TEST", "MCCC0", "SI400");

  const auto utterances = load_timit(root.path.string(), p61);

  std::map<std::string, Split> by_id;
  for (const auto& u : utterances) by_id[u.id] = u.split;

  REQUIRE(by_id.size() == 5);
  REQUIRE(by_id.at("FAAA0_SX1") == Split::Train);
  REQUIRE(by_id.at("MBBB0_SI100") == Split::Train);
  REQUIRE(by_id.count("FAAA0_SA1") == 0);
  REQUIRE(by_id.at("MDAB0_SX200") == Split::TestCore);
  REQUIRE(by_id.at("MDAB0_SI300") == Split::TestCore);
  REQUIRE(by_id.count("MDAB0_SA1") == 0);
  REQUIRE(by_id.count("MCCC0_SX200") == 0);  // shares a core prompt
  REQUIRE(by_id.at("MCCC0_SI400") == Split::Dev);

  // Segments parsed and aligned with phone sequences.
  for (const auto& u : utterances) {
    REQUIRE(u.segments.size() == 2);
    REQUIRE(u.phones.phones.size() == 2);
    REQUIRE(u.audio_path.size() > 0);
  }

  REQUIRE_THROWS_AS(load_timit((root.path / "nope").string(), p61), IngestError);
}

TEST_CASE("utterance validation catches inconsistent markup") {
  const SyntheticSetup setup = make_synthetic_setup(3);
  auto corpus = generate_synthetic(5, 1, setup.inventory, setup.matrix);
  Utterance utt = corpus[0];
  utt.segments[0].phone = (utt.segments[0].phone + 1) % setup.inventory.phone_count();
  REQUIRE_THROWS_AS(validate_utterance(utt), MarkupError);

  utt = corpus[0];
  utt.segments[1].start_sample += 5;
  REQUIRE_THROWS_AS(validate_utterance(utt), MarkupError);
}
