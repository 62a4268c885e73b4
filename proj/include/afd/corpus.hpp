// afd/corpus.hpp -- corpus ingestion: TIMIT directory layout (SPHERE audio +
// .PHN markup, speaker-disjoint splits) and a deterministic synthetic corpus
// generator for desk-scale end-to-end runs.

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

#ifndef AFD_CORPUS_HPP
#define AFD_CORPUS_HPP

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "afd/artic.hpp"
#include "afd/audio.hpp"
#include "afd/phoneset.hpp"

namespace afd {

enum class Split { Train, Dev, TestCore };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    default: return "test_core";
  }
}

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "dev") return Split::Dev;
  if (s == "test_core") return Split::TestCore;
  throw ParseError("unknown split name: " + s);
}

struct Utterance {
  std::string id;       // "<SPEAKER>_<PROMPT>"
  std::string speaker;
  Split split = Split::Train;
  AudioBuffer audio;    // may be empty when audio_path is set (lazy)
  std::string audio_path;
  PhoneSequence phones;
  std::vector<TimedSegment> segments;

  bool audio_loaded() const { return !audio.samples.empty(); }

  void load_audio_if_needed() {
    if (!audio_loaded() && !audio_path.empty()) audio = read_audio_file(audio_path, id);
  }
};

// Segments must tile the audio span and agree with the phone sequence.
inline void validate_utterance(const Utterance& utt) {
  if (utt.segments.empty()) return;
  if (utt.segments.size() != utt.phones.phones.size())
    throw MarkupError(utt.id + ": segments/phones count mismatch");
  for (size_t i = 0; i < utt.segments.size(); ++i) {
    if (utt.segments[i].phone != utt.phones.phones[i])
      throw MarkupError(utt.id + ": segment label differs from phone sequence at " +
                        std::to_string(i));
    if (i > 0 && utt.segments[i].start_sample != utt.segments[i - 1].end_sample)
      throw MarkupError(utt.id + ": segments do not tile the utterance");
  }
  if (utt.audio_loaded() &&
      utt.segments.back().end_sample > int64_t(utt.audio.samples.size()))
    throw MarkupError(utt.id + ": markup extends past the audio");
}

// ---------------------------------------------------------------------------
// TIMIT ingestion. Never vendored; paths come from AFD_TIMIT_ROOT.
// ---------------------------------------------------------------------------

// The standard 24-speaker core test set.
inline const std::set<std::string>& timit_core_test_speakers() {
  static const std::set<std::string> speakers = {
      "MDAB0", "MWBT0", "FELC0", "MTAS1", "MWEW0", "FPAS0", "MJMP0", "MLNT0",
      "FPKT0", "MLLL0", "MTLS0", "FJLM0", "MBPM0", "MKLT0", "FNLP0", "MCMJ0",
      "MJDH0", "FMGD0", "MGRT0", "MNJM0", "FDHC0", "MJLN0", "MPAM0", "FMLD0"};
  return speakers;
}

namespace detail {

inline std::string upper(std::string s) {
  for (auto& c : s) c = char(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

struct TimitFile {
  std::string speaker, prompt, wav, phn;
};

inline std::vector<TimitFile> scan_timit_section(const std::filesystem::path& section) {
  namespace fs = std::filesystem;
  std::vector<TimitFile> files;
  if (!fs::exists(section)) return files;
  for (const auto& entry : fs::recursive_directory_iterator(section)) {
    if (!entry.is_regular_file()) continue;
    const fs::path p = entry.path();
    const std::string ext = upper(p.extension().string());
    if (ext != ".PHN") continue;
    TimitFile f;
    f.prompt = upper(p.stem().string());
    f.speaker = upper(p.parent_path().filename().string());
    f.phn = p.string();
    for (const char* wav_ext : {".WAV", ".wav"}) {
      fs::path wav = p.parent_path() / (p.stem().string() + wav_ext);
      if (fs::exists(wav)) {
        f.wav = wav.string();
        break;
      }
    }
    if (f.wav.empty()) throw IngestError("TIMIT: missing WAV for " + p.string());
    files.push_back(std::move(f));
  }
  std::sort(files.begin(), files.end(), [](const TimitFile& a, const TimitFile& b) {
    return std::tie(a.speaker, a.prompt) < std::tie(b.speaker, b.prompt);
  });
  return files;
}

inline std::filesystem::path find_section(const std::filesystem::path& root, const char* name) {
  namespace fs = std::filesystem;
  for (const auto& candidate : {fs::path(name), fs::path(detail::upper(name))}) {
    if (fs::exists(root / candidate)) return root / candidate;
  }
  std::string lower(name);
  for (auto& c : lower) c = char(std::tolower(static_cast<unsigned char>(c)));
  if (fs::exists(root / lower)) return root / lower;
  throw IngestError("TIMIT: section not found under " + root.string() + ": " + name);
}

}  // namespace detail

// Loads the TIMIT layout: train = the 462-speaker set without SA records,
// test = the 24-speaker core set, dev = remaining test speakers minus any
// utterance whose prompt occurs in the core set (keeps phrases disjoint).
// Audio stays on disk (lazy) unless load_audio is set.
inline std::vector<Utterance> load_timit(const std::string& root, const PhoneInventory& inv61,
                                         bool load_audio = false) {
  namespace fs = std::filesystem;
  if (!fs::exists(root)) throw IngestError("TIMIT root does not exist: " + root);
  const auto train_files = detail::scan_timit_section(detail::find_section(root, "train"));
  const auto test_files = detail::scan_timit_section(detail::find_section(root, "test"));
  if (train_files.empty() || test_files.empty())
    throw IngestError("TIMIT: no utterances found under " + root);

  const auto& core = timit_core_test_speakers();
  std::set<std::string> core_prompts;
  for (const auto& f : test_files)
    if (core.count(f.speaker) && f.prompt.rfind("SA", 0) != 0) core_prompts.insert(f.prompt);

  std::vector<Utterance> out;
  auto ingest = [&](const detail::TimitFile& f, Split split) {
    Utterance utt;
    utt.speaker = f.speaker;
    utt.id = f.speaker + "_" + f.prompt;
    utt.split = split;
    utt.audio_path = f.wav;
    utt.segments = parse_phn(io::read_file(f.phn), inv61);
    utt.phones.utterance_id = utt.id;
    for (const auto& s : utt.segments) utt.phones.phones.push_back(s.phone);
    if (load_audio) utt.load_audio_if_needed();
    validate_utterance(utt);
    out.push_back(std::move(utt));
  };

  for (const auto& f : train_files) {
    if (f.prompt.rfind("SA", 0) == 0) continue;  // SA records excluded
    ingest(f, Split::Train);
  }
  for (const auto& f : test_files) {
    if (f.prompt.rfind("SA", 0) == 0) continue;
    if (core.count(f.speaker)) {
      ingest(f, Split::TestCore);
    } else if (!core_prompts.count(f.prompt)) {
      ingest(f, Split::Dev);
    }
  }

  std::vector<std::string> train_ids, dev_ids, test_ids;
  for (const auto& u : out) {
    if (u.split == Split::Train) train_ids.push_back(u.id);
    else if (u.split == Split::Dev) dev_ids.push_back(u.id);
    else test_ids.push_back(u.id);
  }
  validate_split(train_ids, dev_ids, test_ids);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus: each phone renders as a band-limited tone with its own
// center frequency (spacing >= 500 Hz); sil is near-silence. Utterances are
// random phone strings wrapped in sil, with exact ground-truth segments.
// ---------------------------------------------------------------------------

struct SyntheticConfig {
  int sample_rate = 16000;
  int min_content_phones = 3;
  int max_content_phones = 6;
  int phone_ms = 120;       // nominal duration
  int phone_jitter_ms = 40;  // +/- uniform jitter
  int sil_ms = 100;
  double tone_amplitude = 7000.0;
  double noise_amplitude = 60.0;
  double base_hz = 550.0;
  double spacing_hz = 500.0;
};

inline std::vector<Utterance> generate_synthetic(uint64_t seed, int n_utterances,
                                                 const PhoneInventory& inventory,
                                                 const FeatureMatrix& matrix,
                                                 const SyntheticConfig& cfg = {}) {
  if (inventory.phone_count() > 12)
    throw DataError("generate_synthetic: inventory larger than 12 phones");
  if (n_utterances < 1) throw EmptyInput("generate_synthetic: need at least one utterance");
  // A valid FeatureMatrix is distinct-column by construction; it just has to
  // cover this inventory.
  for (int p = 0; p < inventory.size(); ++p)
    if (!inventory.is_special(p)) matrix.column_of_phone(p);

  // Content phones: every real phone except sil, in inventory order.
  std::vector<int> content;
  for (int p = 0; p < inventory.size(); ++p)
    if (!inventory.is_special(p) && p != inventory.sil) content.push_back(p);
  if (content.empty()) throw DataError("generate_synthetic: no content phones");

  auto tone_hz = [&](int phone) {
    for (size_t k = 0; k < content.size(); ++k)
      if (content[k] == phone) return cfg.base_hz + cfg.spacing_hz * double(k);
    return 0.0;  // sil
  };

  Rng rng(seed);
  std::vector<Utterance> out;
  out.reserve(size_t(n_utterances));
  const double two_pi = 6.283185307179586;

  for (int u = 0; u < n_utterances; ++u) {
    Utterance utt;
    utt.speaker = "s" + std::to_string(u % 8);
    utt.id = utt.speaker + "_u" + std::to_string(1000 + u);
    utt.split = Split::Train;
    utt.audio.sample_rate = cfg.sample_rate;
    utt.audio.utterance_id = utt.id;
    utt.phones.utterance_id = utt.id;

    const int n_content =
        cfg.min_content_phones +
        int(rng.uniform_int(uint64_t(cfg.max_content_phones - cfg.min_content_phones + 1)));
    std::vector<int> phones;
    phones.push_back(inventory.sil);
    for (int i = 0; i < n_content; ++i)
      phones.push_back(content[rng.uniform_int(content.size())]);
    phones.push_back(inventory.sil);

    int64_t cursor = 0;
    for (int phone : phones) {
      int duration_ms = cfg.sil_ms;
      if (phone != inventory.sil) {
        duration_ms = cfg.phone_ms - cfg.phone_jitter_ms +
                      int(rng.uniform_int(uint64_t(2 * cfg.phone_jitter_ms + 1)));
      }
      const int64_t n = int64_t(duration_ms) * cfg.sample_rate / 1000;
      const double hz = tone_hz(phone);
      const int64_t ramp = std::min<int64_t>(n / 4, cfg.sample_rate * 5 / 1000);
      for (int64_t i = 0; i < n; ++i) {
        double v = cfg.noise_amplitude * (rng.uniform() * 2.0 - 1.0);
        if (hz > 0.0) {
          double env = 1.0;
          if (i < ramp) env = double(i) / double(ramp);
          if (n - 1 - i < ramp) env = std::min(env, double(n - 1 - i) / double(ramp));
          v += cfg.tone_amplitude * env * std::sin(two_pi * hz * double(i) / cfg.sample_rate);
        }
        utt.audio.samples.push_back(int16_t(std::lround(std::clamp(v, -32000.0, 32000.0))));
      }
      utt.segments.push_back({cursor, cursor + n, phone});
      utt.phones.phones.push_back(phone);
      cursor += n;
    }
    validate_utterance(utt);
    out.push_back(std::move(utt));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus persistence: RIFF + .PHN per utterance plus a JSON manifest.
// ---------------------------------------------------------------------------

inline void save_corpus(const std::string& dir, const std::vector<Utterance>& utterances,
                        const PhoneInventory& inventory, uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["seed"] = seed;
  manifest["sample_rate"] = utterances.empty() ? 16000 : utterances.front().audio.sample_rate;
  std::vector<std::string> phones(inventory.symbols.begin(),
                                  inventory.symbols.begin() + inventory.phone_count());
  manifest["phones"] = phones;
  manifest["silence"] = inventory.symbol(inventory.sil);
  nlohmann::json list = nlohmann::json::array();
  for (const auto& utt : utterances) {
    const std::string wav = utt.id + ".wav";
    const std::string phn = utt.id + ".phn";
    io::write_file((fs::path(dir) / wav).string(), write_riff(utt.audio));
    io::write_file((fs::path(dir) / phn).string(), serialize_phn(utt.segments, inventory));
    list.push_back({{"id", utt.id},
                    {"speaker", utt.speaker},
                    {"split", split_name(utt.split)},
                    {"wav", wav},
                    {"phn", phn}});
  }
  manifest["utterances"] = std::move(list);
  io::write_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2));
}

struct LoadedCorpus {
  PhoneInventory inventory;
  std::vector<Utterance> utterances;
  uint64_t seed = 0;
};

inline LoadedCorpus load_corpus(const std::string& dir, bool load_audio = true) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(manifest_path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("corpus manifest: " + std::string(e.what()));
  }
  LoadedCorpus out;
  out.seed = manifest.value("seed", uint64_t(0));
  out.inventory = PhoneInventory::make(manifest.at("phones").get<std::vector<std::string>>(),
                                       manifest.at("silence").get<std::string>());
  for (const auto& entry : manifest.at("utterances")) {
    Utterance utt;
    utt.id = entry.at("id").get<std::string>();
    utt.speaker = entry.at("speaker").get<std::string>();
    utt.split = split_from_name(entry.at("split").get<std::string>());
    utt.audio_path = (fs::path(dir) / entry.at("wav").get<std::string>()).string();
    utt.segments = parse_phn(io::read_file((fs::path(dir) / entry.at("phn").get<std::string>()).string()),
                             out.inventory);
    utt.phones.utterance_id = utt.id;
    for (const auto& s : utt.segments) utt.phones.phones.push_back(s.phone);
    if (load_audio) utt.load_audio_if_needed();
    validate_utterance(utt);
    out.utterances.push_back(std::move(utt));
  }
  return out;
}

// Small fixed setup for desk-scale runs and tests: a handful of real phones
// with their shipped feature rows.
struct SyntheticSetup {
  PhoneInventory inventory;
  FeatureInventory features;
  FeatureMatrix matrix;
};

inline SyntheticSetup make_synthetic_setup(int n_phones = 8) {
  static const std::vector<std::string> pool = {"aa", "iy", "uw", "s",  "sh", "m",
                                                "t",  "k",  "n",  "eh", "f",  "ow"};
  if (n_phones < 1 || n_phones > int(pool.size()))
    throw DataError("make_synthetic_setup: 1..12 phones supported");
  std::vector<std::string> phones(pool.begin(), pool.begin() + n_phones);
  phones.push_back("sil");

  const auto features_json =
      nlohmann::json::parse(io::read_file(data_dir() + "/features_39.json"));
  SyntheticSetup setup;
  setup.inventory = PhoneInventory::make(phones, "sil");
  setup.features = FeatureInventory::from_json(features_json);
  setup.matrix = build_feature_matrix(setup.features, setup.inventory, features_json);
  return setup;
}

}  // namespace afd

#endif  // AFD_CORPUS_HPP
