// afd/cli.hpp -- command-line pipeline: featurize, fit-norm, synth-corpus,
// train, decode, align, eval, plot, gradcheck. Exit codes: 0 success,
// 1 usage, 2 data error, 3 numeric error.

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

#ifndef AFD_CLI_HPP
#define AFD_CLI_HPP

#include <atomic>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "afd/align.hpp"
#include "afd/checkpoint.hpp"
#include "afd/corpus.hpp"
#include "afd/decoder.hpp"
#include "afd/eval.hpp"
#include "afd/svg.hpp"

namespace afd::cli {

constexpr const char* kVersion = "afd 0.1.0";

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Shared plumbing.
// ---------------------------------------------------------------------------

inline std::string hash_hex(const std::string& bytes) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return buf;
}

// Every artifact-producing command records one of these next to its outputs.
inline void write_run_manifest(const std::string& path, const std::string& command,
                               const std::vector<std::string>& args, uint64_t seed,
                               const std::vector<std::string>& inputs,
                               const std::vector<std::string>& outputs,
                               const nlohmann::json& config = {}) {
  nlohmann::json j;
  j["command"] = command;
  j["args"] = args;
  j["version"] = kVersion;
  j["seed"] = seed;
  nlohmann::json in = nlohmann::json::object();
  for (const auto& p : inputs)
    if (fs::exists(p) && fs::is_regular_file(p)) in[p] = hash_hex(io::read_file(p));
  j["input_hashes"] = std::move(in);
  j["outputs"] = outputs;
  if (!config.is_null() && !config.empty()) j["config"] = config;
  io::write_file(path, j.dump(2));
}

// Deterministic per-utterance parallelism for featurize/decode stages.
template <class Fn>
void parallel_for(size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[size_t(w)] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct FrontendChoice {
  std::string type = "mfcc";  // mfcc | fbank
  bool deltas = true;
};

inline AcousticFeatures featurize_buffer(const AudioBuffer& audio, const FrontendChoice& choice,
                                         const FrontendConfig& cfg = {}) {
  AcousticFeatures f;
  if (choice.type == "mfcc")
    f = extract_mfcc(audio, cfg);
  else if (choice.type == "fbank")
    f = extract_fbank(audio, cfg);
  else
    throw DataError("unknown feature type: " + choice.type);
  if (choice.deltas) f = add_deltas(f);
  return f;
}

// Frontend sidecar saved with a checkpoint so decode matches training.
inline nlohmann::json frontend_sidecar(const FrontendChoice& choice,
                                       const NormalizationStats& stats) {
  nlohmann::json j = stats_to_json(stats);
  j["feature_type"] = choice.type;
  j["deltas"] = choice.deltas;
  return j;
}

inline std::pair<FrontendChoice, NormalizationStats> load_frontend_sidecar(
    const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("stats file: " + std::string(e.what()));
  }
  FrontendChoice choice;
  choice.type = j.value("feature_type", "mfcc");
  choice.deltas = j.value("deltas", true);
  return {choice, stats_from_json(j)};
}

// Transcript files: one utterance per line, "<id> <phone> <phone> ...".
struct Transcript {
  std::string id;
  std::vector<std::string> symbols;
};

inline std::vector<Transcript> read_transcripts(const std::string& path) {
  std::istringstream in(io::read_file(path));
  std::vector<Transcript> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    Transcript t;
    if (!(ls >> t.id)) continue;  // blank line
    std::string sym;
    while (ls >> sym) t.symbols.push_back(sym);
    out.push_back(std::move(t));
  }
  return out;
}

inline void write_transcripts(const std::string& path, const std::vector<Transcript>& lines) {
  std::ostringstream out;
  for (const auto& t : lines) {
    out << t.id;
    for (const auto& s : t.symbols) out << " " << s;
    out << "\n";
  }
  io::write_file(path, out.str());
}

// Shipped data tables.
inline nlohmann::json load_data_json(const std::string& path) {
  try {
    return nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

struct Tables {
  PhoneInventory phones61;
  PhoneInventory phones39;
  ReductionTable reduction;
  FeatureInventory features;
  nlohmann::json feature_table;
};

inline Tables load_tables(const std::string& dir) {
  Tables t;
  const auto p61 = load_data_json(dir + "/phones_61.json");
  t.phones61 = PhoneInventory::from_json(p61);
  t.reduction = ReductionTable::from_json(p61);
  t.phones39 = PhoneInventory::from_json(load_data_json(dir + "/phones_39.json"));
  t.feature_table = load_data_json(dir + "/features_39.json");
  t.features = FeatureInventory::from_json(t.feature_table);
  return t;
}

// ---------------------------------------------------------------------------
// Corpus preparation shared by train/decode: features + reduced targets.
// ---------------------------------------------------------------------------

struct PreparedUtterance {
  std::string id;
  Split split = Split::Train;
  AcousticFeatures features;          // un-normalized
  std::vector<int> targets;           // indices in the model inventory
  std::vector<TimedSegment> segments;  // in the model inventory (when exact)
};

struct PreparedCorpus {
  PhoneInventory inventory;  // the model's phone inventory
  std::vector<PreparedUtterance> utterances;
};

// A corpus directory is either a generated corpus (manifest.json) or a raw
// TIMIT tree (TRAIN/TEST sections, SPHERE + .PHN).
inline LoadedCorpus load_any_corpus(const std::string& dir, const std::string& data_directory) {
  if (fs::exists(fs::path(dir) / "manifest.json")) return load_corpus(dir, /*load_audio=*/true);
  LoadedCorpus out;
  out.inventory = PhoneInventory::from_json(load_data_json(data_directory + "/phones_61.json"));
  out.utterances = load_timit(dir, out.inventory, /*load_audio=*/false);
  return out;
}

inline PreparedCorpus prepare_corpus(const std::string& corpus_dir, const FrontendChoice& choice,
                                     const std::string& data_directory, int workers) {
  LoadedCorpus corpus = load_any_corpus(corpus_dir, data_directory);
  PreparedCorpus out;

  // TIMIT-style corpora (h# present) are folded to the reduced set; synthetic
  // corpora already use model symbols.
  const bool needs_reduction = corpus.inventory.contains("h#") || corpus.inventory.contains("q");
  ReductionTable reduction;
  if (needs_reduction) {
    const auto p61 = load_data_json(data_directory + "/phones_61.json");
    reduction = ReductionTable::from_json(p61);
    out.inventory = PhoneInventory::from_json(load_data_json(data_directory + "/phones_39.json"));
  } else {
    out.inventory = corpus.inventory;
  }

  out.utterances.resize(corpus.utterances.size());
  parallel_for(corpus.utterances.size(), workers, [&](size_t i) {
    Utterance& utt = corpus.utterances[i];
    utt.load_audio_if_needed();
    PreparedUtterance prep;
    prep.id = utt.id;
    prep.split = utt.split;
    prep.features = featurize_buffer(utt.audio, choice);
    prep.features.utterance_id = utt.id;
    // Lazily loaded audio is dropped once featurized (keeps TIMIT-scale runs
    // in memory bounds).
    if (!utt.audio_path.empty()) {
      utt.audio.samples.clear();
      utt.audio.samples.shrink_to_fit();
    }
    if (needs_reduction) {
      PhoneSequence reduced =
          reduce_phones(utt.phones, reduction, corpus.inventory, out.inventory);
      prep.targets = reduced.phones;
      // Segment labels fold individually (deleted symbols keep their span on
      // the previous label for frame scoring, so exact segments are dropped
      // when any deletion happened).
      if (reduced.phones.size() == utt.segments.size()) {
        prep.segments.reserve(utt.segments.size());
        for (const auto& s : utt.segments) {
          const std::string mapped = reduction.map(corpus.inventory.symbol(s.phone));
          prep.segments.push_back({s.start_sample, s.end_sample,
                                   mapped.empty() ? out.inventory.sil
                                                  : out.inventory.index_of(mapped)});
        }
      }
    } else {
      prep.targets = utt.phones.phones;
      prep.segments = utt.segments;
    }
    out.utterances[i] = std::move(prep);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

inline int cmd_featurize(const std::string& wav, const std::string& corpus,
                         const std::string& out, const std::string& outdir,
                         const FrontendChoice& choice, const std::string& stats_path, int workers,
                         const std::vector<std::string>& raw_args) {
  NormalizationStats stats;
  bool normalize = false;
  if (!stats_path.empty()) {
    auto [_, loaded] = load_frontend_sidecar(stats_path);
    stats = loaded;
    normalize = true;
  }

  std::vector<std::string> inputs, outputs;
  if (!wav.empty()) {
    if (out.empty()) throw DataError("featurize: --out required with --wav");
    AcousticFeatures f = featurize_buffer(read_audio_file(wav), choice);
    if (normalize) f = apply_normalization(f, stats);
    io::write_file(out, write_afp1(f));
    inputs = {wav};
    outputs = {out};
    write_run_manifest(out + ".manifest.json", "featurize", raw_args, 0, inputs, outputs);
    return 0;
  }
  if (corpus.empty()) throw DataError("featurize: need --wav or --corpus");
  if (outdir.empty()) throw DataError("featurize: --outdir required with --corpus");

  LoadedCorpus loaded = load_corpus(corpus, true);
  fs::create_directories(outdir);
  std::vector<std::string> written(loaded.utterances.size());
  parallel_for(loaded.utterances.size(), workers, [&](size_t i) {
    const Utterance& utt = loaded.utterances[i];
    AcousticFeatures f = featurize_buffer(utt.audio, choice);
    f.utterance_id = utt.id;
    if (normalize) f = apply_normalization(f, stats);
    const std::string path = (fs::path(outdir) / (utt.id + ".afp")).string();
    io::write_file(path, write_afp1(f));
    written[i] = path;
  });
  write_run_manifest((fs::path(outdir) / "run_manifest.json").string(), "featurize", raw_args, 0,
                     {(fs::path(corpus) / "manifest.json").string()}, written);
  return 0;
}

inline int cmd_fit_norm(const std::string& dir, const std::string& out,
                        const std::vector<std::string>& raw_args) {
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".afp")
      paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw EmptyInput("fit-norm: no .afp files under " + dir);
  std::vector<AcousticFeatures> corpus;
  corpus.reserve(paths.size());
  for (const auto& p : paths) corpus.push_back(read_afp1(io::read_file(p)));
  const NormalizationStats stats = fit_normalization(corpus);
  io::write_file(out, stats_to_json(stats).dump(2));
  write_run_manifest(out + ".manifest.json", "fit-norm", raw_args, 0, paths, {out});
  return 0;
}

inline int cmd_synth_corpus(const std::string& out, uint64_t seed, int n_utterances, int n_phones,
                            const std::string& data_directory,
                            const std::vector<std::string>& raw_args) {
  SyntheticSetup setup = [&] {
    // make_synthetic_setup reads from the configured data dir.
    if (!data_directory.empty()) setenv("AFD_DATA_DIR", data_directory.c_str(), 1);
    return make_synthetic_setup(n_phones);
  }();
  auto utterances = generate_synthetic(seed, n_utterances, setup.inventory, setup.matrix);
  save_corpus(out, utterances, setup.inventory, seed);
  write_run_manifest((fs::path(out) / "run_manifest.json").string(), "synth-corpus", raw_args,
                     seed, {}, {(fs::path(out) / "manifest.json").string()});
  std::cout << "wrote " << utterances.size() << " utterances to " << out << "\n";
  return 0;
}

struct TrainOptions {
  std::string corpus, out, config_path, data_directory;
  FrontendChoice frontend;
  std::string mode = "mapped";  // sampled | mapped
  int epochs = 20;
  int batch_size = 8;
  uint64_t seed = 1;
  int workers = 1;
  // Flag overrides, NaN = keep config value.
  double learning_rate = -1, dropout = -1, l2_decay = -1, ss_prob = -1;
  int encoder_layers = 0, encoder_units = 0, decoder_units = 0;
};

inline FeedbackMode parse_mode(const std::string& mode) {
  if (mode == "sampled" || mode == "s") return FeedbackMode::Sampled;
  if (mode == "mapped" || mode == "m") return FeedbackMode::Mapped;
  throw DataError("unknown feedback mode: " + mode);
}

inline int cmd_train(const TrainOptions& opt, const std::vector<std::string>& raw_args) {
  PreparedCorpus corpus = prepare_corpus(opt.corpus, opt.frontend, opt.data_directory, opt.workers);

  // Normalization fitted on the training split only.
  std::vector<AcousticFeatures> train_feats;
  for (const auto& u : corpus.utterances)
    if (u.split == Split::Train) train_feats.push_back(u.features);
  if (train_feats.empty()) throw EmptyInput("train: corpus has no training utterances");
  const NormalizationStats stats = fit_normalization(train_feats);

  const nlohmann::json feature_table =
      load_data_json(opt.data_directory + "/features_39.json");
  const FeatureInventory features = FeatureInventory::from_json(feature_table);
  const FeatureMatrix matrix = build_feature_matrix(features, corpus.inventory, feature_table);

  ModelConfig cfg;
  if (!opt.config_path.empty()) cfg = ModelConfig::from_json(load_data_json(opt.config_path));
  cfg.input_dims = int(train_feats.front().dims());
  cfg.phone_count = corpus.inventory.phone_count();
  cfg.feature_count = features.named_count();
  if (opt.learning_rate > 0) cfg.learning_rate = opt.learning_rate;
  if (opt.dropout >= 0) cfg.dropout_prob = opt.dropout;
  if (opt.l2_decay >= 0) cfg.l2_decay = opt.l2_decay;
  if (opt.ss_prob >= 0) cfg.scheduled_sampling_prob = opt.ss_prob;
  if (opt.encoder_layers > 0) cfg.encoder_layers = opt.encoder_layers;
  if (opt.encoder_units > 0) cfg.encoder_units = opt.encoder_units;
  if (opt.decoder_units > 0) cfg.decoder_units = opt.decoder_units;
  cfg.validate();

  std::vector<TrainingExample> examples;
  for (const auto& u : corpus.utterances) {
    if (u.split != Split::Train) continue;
    TrainingExample ex;
    ex.id = u.id;
    ex.features = apply_normalization(u.features, stats).data;
    ex.phone_targets = u.targets;
    examples.push_back(std::move(ex));
  }
  // Bucket by length: stable sort keeps same-length order deterministic.
  std::stable_sort(examples.begin(), examples.end(),
                   [](const TrainingExample& a, const TrainingExample& b) {
                     return a.features.rows() < b.features.rows();
                   });
  std::vector<std::vector<TrainingExample>> batches;
  for (size_t i = 0; i < examples.size(); i += size_t(opt.batch_size)) {
    batches.emplace_back(examples.begin() + long(i),
                         examples.begin() + long(std::min(examples.size(),
                                                          i + size_t(opt.batch_size))));
  }

  Rng rng(opt.seed);
  ModelParameters model = init_parameters(cfg, rng);
  AdamState adam = AdamState::like(model.tensors);
  const FeedbackMode mode = parse_mode(opt.mode);

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    // Shuffle batch order, keep buckets intact.
    std::vector<size_t> order(batches.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    double epoch_loss = 0.0;
    for (size_t bi : order)
      epoch_loss +=
          train_step(batches[bi], model, cfg, matrix, mode, adam, rng, opt.workers).loss;
    std::cout << "epoch " << epoch << " loss " << epoch_loss / double(batches.size()) << "\n";
  }

  Checkpoint ckpt{cfg, model, opt.seed};
  save_checkpoint(opt.out, ckpt);
  io::write_file(opt.out + ".stats.json", frontend_sidecar(opt.frontend, stats).dump(2));
  write_run_manifest(opt.out + ".manifest.json", "train", raw_args, opt.seed,
                     {(fs::path(opt.corpus) / "manifest.json").string()},
                     {opt.out, opt.out + ".stats.json"}, cfg.to_json());
  return 0;
}

struct DecodeOptions {
  std::string ckpt, stats, corpus, wav, outdir, data_directory;
  std::string mode = "phones";  // phones | ind-s | ind-m
  std::string split = "";       // filter: train/dev/test_core; empty = all
  int workers = 1;
  long max_len = 0;
  std::optional<uint64_t> sample_seed;
};

inline int cmd_decode(const DecodeOptions& opt, const std::vector<std::string>& raw_args) {
  const Checkpoint ckpt = load_checkpoint(opt.ckpt);
  const std::string stats_path = opt.stats.empty() ? opt.ckpt + ".stats.json" : opt.stats;
  auto [choice, stats] = load_frontend_sidecar(stats_path);

  fs::create_directories(opt.outdir);
  std::vector<std::string> outputs;

  // Assemble utterances: either one wav or a corpus directory.
  PreparedCorpus corpus;
  if (!opt.wav.empty()) {
    PreparedUtterance u;
    u.id = fs::path(opt.wav).stem().string();
    u.features = featurize_buffer(read_audio_file(opt.wav, u.id), choice);
    corpus.utterances.push_back(std::move(u));
    corpus.inventory =
        PhoneInventory::from_json(load_data_json(opt.data_directory + "/phones_39.json"));
  } else if (!opt.corpus.empty()) {
    corpus = prepare_corpus(opt.corpus, choice, opt.data_directory, opt.workers);
    if (!opt.split.empty()) {
      const Split want = split_from_name(opt.split);
      std::erase_if(corpus.utterances,
                    [&](const PreparedUtterance& u) { return u.split != want; });
    }
  } else {
    throw DataError("decode: need --wav or --corpus");
  }
  if (corpus.inventory.phone_count() != ckpt.config.phone_count)
    throw ShapeError("decode: corpus inventory size does not match the checkpoint");

  const nlohmann::json feature_table =
      load_data_json(opt.data_directory + "/features_39.json");
  const FeatureInventory features = FeatureInventory::from_json(feature_table);
  const FeatureMatrix matrix = build_feature_matrix(features, corpus.inventory, feature_table);

  DecodeMode mode = DecodeMode::Phones;
  if (opt.mode == "ind-s") mode = DecodeMode::IndicatorsSampled;
  else if (opt.mode == "ind-m") mode = DecodeMode::IndicatorsMapped;
  else if (opt.mode != "phones") throw DataError("decode: unknown mode " + opt.mode);

  std::vector<Transcript> hyp(corpus.utterances.size()), ref(corpus.utterances.size());
  std::vector<std::vector<std::string>> written(corpus.utterances.size());
  parallel_for(corpus.utterances.size(), opt.workers, [&](size_t i) {
    const PreparedUtterance& u = corpus.utterances[i];
    AcousticFeatures f = apply_normalization(u.features, stats);
    f.utterance_id = u.id;
    DecodeResult result;
    if (mode == DecodeMode::Phones) {
      result = decode_phones_greedy(f, ckpt.model, ckpt.config, opt.max_len);
    } else {
      result = decode_indicators(f, ckpt.model, ckpt.config, matrix, mode, opt.max_len,
                                 opt.sample_seed);
    }

    Transcript t;
    t.id = u.id;
    PhoneSequence phones;
    if (result.phones) {
      phones = *result.phones;
    } else if (result.posteriorgram) {
      phones = posteriorgram_to_phones(*result.posteriorgram, matrix, u.id);
    }
    for (int p : phones.phones) t.symbols.push_back(corpus.inventory.symbol(p));
    hyp[i] = std::move(t);

    Transcript r;
    r.id = u.id;
    for (int p : u.targets) r.symbols.push_back(corpus.inventory.symbol(p));
    ref[i] = std::move(r);

    const std::string att_path = (fs::path(opt.outdir) / (u.id + ".att")).string();
    io::write_file(att_path, write_att1(result.attention));
    written[i].push_back(att_path);
    if (result.posteriorgram) {
      const std::string ipg_path = (fs::path(opt.outdir) / (u.id + ".ipg")).string();
      io::write_file(ipg_path, write_ipg1(*result.posteriorgram));
      written[i].push_back(ipg_path);
      // Ground-truth bits for figure overlays, when targets are known.
      if (!u.targets.empty()) {
        MatF bits(long(u.targets.size()) + 1, matrix.feature_count());
        for (size_t s = 0; s < u.targets.size(); ++s) {
          const auto col = matrix.column_for_phone(u.targets[s]);
          for (int j = 0; j < matrix.feature_count(); ++j) bits(long(s), j) = col[size_t(j)];
        }
        const auto eos_col = matrix.column(matrix.eos_column());
        for (int j = 0; j < matrix.feature_count(); ++j)
          bits(long(u.targets.size()), j) = eos_col[size_t(j)];
        const std::string ref_path = (fs::path(opt.outdir) / (u.id + ".ref.ipg")).string();
        io::write_file(ref_path, write_ipg1(bits));
        written[i].push_back(ref_path);
      }
    }
    if (result.truncated)
      std::cerr << "warning: decode truncated at max_len for " << u.id << "\n";
  });

  std::vector<std::string> all_written;
  for (auto& w : written) all_written.insert(all_written.end(), w.begin(), w.end());
  const std::string hyp_path = (fs::path(opt.outdir) / "hyp.txt").string();
  write_transcripts(hyp_path, hyp);
  all_written.push_back(hyp_path);
  bool have_refs = false;
  for (const auto& r : ref)
    if (!r.symbols.empty()) have_refs = true;
  if (have_refs) {
    const std::string ref_path = (fs::path(opt.outdir) / "ref.txt").string();
    write_transcripts(ref_path, ref);
    all_written.push_back(ref_path);
  }
  write_run_manifest((fs::path(opt.outdir) / "run_manifest.json").string(), "decode", raw_args,
                     ckpt.seed, {opt.ckpt, stats_path}, all_written);
  return 0;
}

struct AlignOptions {
  std::string att, symbols, out, seg_out, phn, data_directory;
  int reduction = 4;
  int step_samples = 160;
};

inline int cmd_align(const AlignOptions& opt, const std::vector<std::string>& raw_args) {
  const MatF attention = read_att1(io::read_file(opt.att));
  const auto transcripts = read_transcripts(opt.symbols);
  if (transcripts.size() != 1)
    throw DataError("align: symbols file must hold exactly one utterance line");
  const Tables tables = load_tables(opt.data_directory);
  const FeatureMatrix matrix =
      build_feature_matrix(tables.features, tables.phones39, tables.feature_table);

  std::vector<int> symbols;
  std::vector<std::vector<float>> bits;
  for (const auto& s : transcripts[0].symbols) {
    const int idx = tables.phones39.index_of(s);
    symbols.push_back(idx);
    bits.push_back(matrix.column_for_phone(idx));
  }

  MatF att = attention;
  if (att.rows() == long(symbols.size()) + 1) {
    // Final row is the eos step; frame projection covers the phones only.
    att = attention.topRows(attention.rows() - 1);
  } else if (att.rows() != long(symbols.size())) {
    throw ShapeError("align: attention rows vs symbol count");
  }

  const AlignmentPath path = hard_align_dtw(att);
  const FrameLabeling labels = project_frames(path, symbols, bits, opt.reduction);
  io::write_file(opt.out, frame_labeling_to_text(labels, tables.phones39));
  std::vector<std::string> outputs = {opt.out};

  if (!opt.phn.empty()) {
    if (opt.seg_out.empty()) throw DataError("align: --seg-out required with --phn");
    const auto segments = parse_phn(io::read_file(opt.phn), tables.phones39);
    const auto labels_per_segment =
        project_segments(att, symbols, bits, segments, opt.reduction, opt.step_samples);
    std::ostringstream seg_text;
    for (const auto& s : labels_per_segment)
      seg_text << s.segment.start_sample << " " << s.segment.end_sample << " "
               << (s.phone >= 0 ? tables.phones39.symbol(s.phone) : "?") << "\n";
    io::write_file(opt.seg_out, seg_text.str());
    outputs.push_back(opt.seg_out);
  }
  write_run_manifest(opt.out + ".manifest.json", "align", raw_args, 0,
                     {opt.att, opt.symbols}, outputs);
  return 0;
}

struct EvalOptions {
  std::string hyp, ref, data_directory;
  bool json_output = false;
  bool with_features = false;
  bool collapse_sil = true;
};

inline int cmd_eval(const EvalOptions& opt, std::ostream& out) {
  const auto hyp_lines = read_transcripts(opt.hyp);
  const auto ref_lines = read_transcripts(opt.ref);
  std::map<std::string, const Transcript*> by_id;
  for (const auto& r : ref_lines) by_id[r.id] = &r;
  if (hyp_lines.size() != ref_lines.size())
    throw DataError("eval: hyp and ref utterance counts differ");

  // Local interning keeps eval usable on arbitrary symbol sets.
  std::unordered_map<std::string, int> intern;
  std::vector<std::string> symbols;
  auto id_of = [&](const std::string& s) {
    auto it = intern.find(s);
    if (it != intern.end()) return it->second;
    intern[s] = int(symbols.size());
    symbols.push_back(s);
    return int(symbols.size()) - 1;
  };

  std::optional<FeatureMatrix> matrix;
  std::optional<PhoneInventory> inventory;
  if (opt.with_features) {
    Tables tables = load_tables(opt.data_directory);
    inventory = tables.phones39;
    matrix = build_feature_matrix(tables.features, tables.phones39, tables.feature_table);
  }

  auto to_indices = [&](const std::vector<std::string>& toks) {
    std::vector<int> ids;
    int sil = -1;
    if (intern.count("sil")) sil = intern.at("sil");
    for (const auto& s : toks) ids.push_back(id_of(s));
    if (opt.collapse_sil && intern.count("sil")) {
      PhoneSequence seq;
      seq.phones = ids;
      ids = collapse_repeats(seq, intern.at("sil")).phones;
    }
    (void)sil;
    return ids;
  };

  std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
  std::vector<std::tuple<std::vector<int>, std::vector<int>, EditAlignment>> corpus;
  std::vector<double> feature_correct, feature_total;
  int named = matrix ? matrix->features().named_count() : 0;
  std::vector<int64_t> seq_correct(size_t(named), 0);
  int64_t seq_total = 0;

  for (const auto& h : hyp_lines) {
    auto it = by_id.find(h.id);
    if (it == by_id.end()) throw DataError("eval: no reference for utterance " + h.id);
    std::vector<int> hyp_ids = to_indices(h.symbols);
    std::vector<int> ref_ids = to_indices(it->second->symbols);
    if (ref_ids.empty()) throw EmptyReference("eval: empty reference for " + h.id);
    EditAlignment alignment = edit_alignment(hyp_ids, ref_ids);
    if (matrix) {
      auto bits_of = [&](const std::vector<int>& ids) {
        std::vector<std::vector<float>> bits;
        for (int id : ids)
          bits.push_back(matrix->column_for_phone(inventory->index_of(symbols[size_t(id)])));
        return bits;
      };
      const auto acc = feature_accuracy_sequence(bits_of(hyp_ids), bits_of(ref_ids), alignment,
                                                 named);
      // Re-pool counts over the corpus: acc * ops is the per-file correct count.
      for (int f = 0; f < named; ++f)
        seq_correct[size_t(f)] += int64_t(std::llround(acc[size_t(f)] * double(alignment.ops.size())));
      seq_total += int64_t(alignment.ops.size());
    }
    corpus.emplace_back(hyp_ids, ref_ids, alignment);
    pairs.emplace_back(std::move(hyp_ids), std::move(ref_ids));
  }

  EvalReport report;
  report.per = phone_error_rate(pairs);
  report.confusions = confusion_counts(corpus);
  if (matrix) {
    report.feature_names.assign(matrix->features().names.begin(),
                                matrix->features().names.begin() + named);
    for (int f = 0; f < named; ++f)
      report.per_feature_sequence_acc.push_back(
          seq_total ? double(seq_correct[size_t(f)]) / double(seq_total) : 1.0);
  }

  if (opt.json_output) {
    // Symbol table for confusions comes from the interning order.
    nlohmann::json j;
    j["per"] = report.per;
    if (!report.feature_names.empty()) {
      nlohmann::json seq = nlohmann::json::object();
      for (size_t f = 0; f < report.feature_names.size(); ++f)
        seq[report.feature_names[f]] = report.per_feature_sequence_acc[f];
      j["per_feature_sequence_acc"] = std::move(seq);
    }
    nlohmann::json conf = nlohmann::json::array();
    for (const auto& [pair, count] : report.confusions)
      conf.push_back({{"ref", symbols[size_t(pair.first)]},
                      {"hyp", symbols[size_t(pair.second)]},
                      {"count", count}});
    j["confusions"] = std::move(conf);
    out << j.dump(2) << "\n";
  } else {
    std::ostringstream text;
    text << std::fixed << std::setprecision(1) << "PER " << report.per * 100.0 << "%\n";
    if (!report.feature_names.empty()) {
      text << "\nFeature                sequence\n";
      for (size_t f = 0; f < report.feature_names.size(); ++f)
        text << std::left << std::setw(23) << report.feature_names[f] << std::right
             << std::setw(6) << report.per_feature_sequence_acc[f] * 100.0 << "%\n";
    }
    if (!report.confusions.empty()) {
      std::vector<std::pair<std::pair<int, int>, int64_t>> sorted(report.confusions.begin(),
                                                                  report.confusions.end());
      std::stable_sort(sorted.begin(), sorted.end(),
                       [](const auto& a, const auto& b) { return a.second > b.second; });
      text << "\nTop confusions (ref -> hyp):\n";
      for (size_t i = 0; i < std::min<size_t>(sorted.size(), 10); ++i)
        text << "  " << symbols[size_t(sorted[i].first.first)] << " -> "
             << symbols[size_t(sorted[i].first.second)] << "  x" << sorted[i].second << "\n";
    }
    out << text.str();
  }
  return 0;
}

struct PlotOptions {
  std::string att, ipg, ref, out, title, data_directory;
};

inline int cmd_plot(const PlotOptions& opt, const std::vector<std::string>& raw_args) {
  if (!opt.att.empty()) {
    const MatF attention = read_att1(io::read_file(opt.att));
    io::write_file(opt.out, render_attention_svg(attention, {}, opt.title));
  } else if (!opt.ipg.empty()) {
    const MatF pg = read_ipg1(io::read_file(opt.ipg));
    const FeatureInventory features = FeatureInventory::from_json(
        load_data_json(opt.data_directory + "/features_39.json"));
    if (long(features.size()) != pg.cols())
      throw ShapeError("plot: posteriorgram width vs feature table");
    MatF ref;
    const MatF* ref_ptr = nullptr;
    if (!opt.ref.empty()) {
      ref = read_ipg1(io::read_file(opt.ref));
      if (ref.rows() != pg.rows() || ref.cols() != pg.cols())
        throw ShapeError("plot: reference bits shape vs posteriorgram");
      ref_ptr = &ref;
    }
    io::write_file(opt.out, render_posteriorgram_svg(pg, features.names, ref_ptr, opt.title));
  } else {
    throw DataError("plot: need --att or --ipg");
  }
  write_run_manifest(opt.out + ".manifest.json", "plot", raw_args, 0,
                     {opt.att.empty() ? opt.ipg : opt.att}, {opt.out});
  return 0;
}

inline int cmd_gradcheck(double epsilon, uint64_t seed, std::ostream& out) {
  SyntheticSetup setup = make_synthetic_setup(3);
  ModelConfig cfg;
  cfg.encoder_layers = 2;
  cfg.encoder_units = 5;
  cfg.decoder_units = 5;
  cfg.input_dims = 4;
  cfg.phone_count = setup.inventory.phone_count();
  cfg.feature_count = setup.features.named_count();
  Rng rng(seed);
  ModelParameters model = init_parameters(cfg, rng);
  TrainingExample ex;
  ex.id = "gradcheck";
  ex.features.resize(9, cfg.input_dims);
  for (long i = 0; i < ex.features.size(); ++i)
    ex.features.data()[i] = float(rng.gaussian() * 0.5);
  ex.phone_targets = {0, 1, 2};
  const GradCheckReport report =
      check_gradients(model, cfg, {ex}, setup.matrix, epsilon, {}, 6, seed);
  out << "gradcheck: max relative error " << report.max_relative_error
      << ", zero-grad abs error " << report.max_zero_grad_abs_error << " over "
      << report.coordinates << " coordinates (worst: " << report.worst_tensor << ")\n";
  if (report.max_relative_error >= 1e-4 || report.max_zero_grad_abs_error >= 1e-8)
    throw NumericError("gradient check failed");
  return 0;
}

// ---------------------------------------------------------------------------
// Argument wiring.
// ---------------------------------------------------------------------------

inline int run_command(const std::vector<std::string>& args, std::ostream& out = std::cout) {
  CLI::App app{"attention-based phone recognition and articulatory feature detection"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  const std::string default_data = data_dir();

  // featurize
  auto* featurize = app.add_subcommand("featurize", "extract acoustic features");
  std::string f_wav, f_corpus, f_out, f_outdir, f_stats;
  FrontendChoice f_choice;
  bool f_no_deltas = false;
  int f_workers = 1;
  featurize->add_option("--wav", f_wav, "single input wav/sphere file");
  featurize->add_option("--corpus", f_corpus, "corpus directory (manifest.json)");
  featurize->add_option("--out", f_out, "output .afp (single file mode)");
  featurize->add_option("--outdir", f_outdir, "output directory (corpus mode)");
  featurize->add_option("--type", f_choice.type, "mfcc|fbank")->default_str("mfcc");
  featurize->add_flag("--no-deltas", f_no_deltas, "skip delta expansion");
  featurize->add_option("--stats", f_stats, "apply normalization stats");
  featurize->add_option("--workers", f_workers, "parallel workers");

  // fit-norm
  auto* fit_norm = app.add_subcommand("fit-norm", "fit global normalization stats");
  std::string n_dir, n_out;
  fit_norm->add_option("--feats", n_dir, "directory of .afp files")->required();
  fit_norm->add_option("--out", n_out, "output stats json")->required();

  // synth-corpus
  auto* synth = app.add_subcommand("synth-corpus", "generate a synthetic corpus");
  std::string s_out, s_data = default_data;
  uint64_t s_seed = 42;
  int s_utts = 64, s_phones = 8;
  synth->add_option("--out", s_out, "output directory")->required();
  synth->add_option("--seed", s_seed, "rng seed");
  synth->add_option("--utterances", s_utts, "number of utterances");
  synth->add_option("--phones", s_phones, "number of content phones (1..12)");
  synth->add_option("--data", s_data, "data table directory");

  // train
  auto* train = app.add_subcommand("train", "train the joint model");
  TrainOptions t_opt;
  t_opt.data_directory = default_data;
  bool t_no_deltas = false;
  train->add_option("--corpus", t_opt.corpus, "corpus directory")->required();
  train->add_option("--out", t_opt.out, "output checkpoint path")->required();
  train->add_option("--config", t_opt.config_path, "model config json");
  train->add_option("--type", t_opt.frontend.type, "mfcc|fbank");
  train->add_flag("--no-deltas", t_no_deltas, "skip delta expansion");
  train->add_option("--mode", t_opt.mode, "feedback mode: sampled|mapped");
  train->add_option("--epochs", t_opt.epochs, "training epochs");
  train->add_option("--batch", t_opt.batch_size, "batch size");
  train->add_option("--seed", t_opt.seed, "rng seed");
  train->add_option("--workers", t_opt.workers, "per-utterance workers (featurize + batch)");
  train->add_option("--learning-rate", t_opt.learning_rate, "override learning rate");
  train->add_option("--dropout", t_opt.dropout, "override dropout probability");
  train->add_option("--l2", t_opt.l2_decay, "override l2 decay");
  train->add_option("--ss-prob", t_opt.ss_prob, "override scheduled sampling probability");
  train->add_option("--encoder-layers", t_opt.encoder_layers, "override encoder layers");
  train->add_option("--encoder-units", t_opt.encoder_units, "override encoder units");
  train->add_option("--decoder-units", t_opt.decoder_units, "override decoder units");
  train->add_option("--data", t_opt.data_directory, "data table directory");

  // decode
  auto* decode = app.add_subcommand("decode", "decode phones or indicators");
  DecodeOptions d_opt;
  d_opt.data_directory = default_data;
  uint64_t d_seed = 0;
  bool d_have_seed = false;
  decode->add_option("--ckpt", d_opt.ckpt, "checkpoint path")->required();
  decode->add_option("--stats", d_opt.stats, "frontend stats json (default <ckpt>.stats.json)");
  decode->add_option("--corpus", d_opt.corpus, "corpus directory");
  decode->add_option("--wav", d_opt.wav, "single wav/sphere input");
  decode->add_option("--outdir", d_opt.outdir, "output directory")->required();
  decode->add_option("--mode", d_opt.mode, "phones|ind-s|ind-m");
  decode->add_option("--split", d_opt.split, "corpus split filter");
  decode->add_option("--max-len", d_opt.max_len, "decode length cap");
  decode->add_option("--workers", d_opt.workers, "parallel workers");
  decode->add_option("--sample-seed", d_seed, "stochastic sampling seed (ind-s)")
      ->each([&](const std::string&) { d_have_seed = true; });
  decode->add_option("--data", d_opt.data_directory, "data table directory");

  // align
  auto* align = app.add_subcommand("align", "project a decode onto frames/segments");
  AlignOptions a_opt;
  a_opt.data_directory = default_data;
  align->add_option("--att", a_opt.att, "attention file (.att)")->required();
  align->add_option("--symbols", a_opt.symbols, "one-line transcript for the utterance")->required();
  align->add_option("--out", a_opt.out, "frame labels output")->required();
  align->add_option("--reduction", a_opt.reduction, "encoder reduction factor");
  align->add_option("--step-samples", a_opt.step_samples, "base frame step in samples");
  align->add_option("--phn", a_opt.phn, "markup segments for segment projection");
  align->add_option("--seg-out", a_opt.seg_out, "segment projection output");
  align->add_option("--data", a_opt.data_directory, "data table directory");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score hypotheses against references");
  EvalOptions e_opt;
  e_opt.data_directory = default_data;
  eval_cmd->add_option("--hyp", e_opt.hyp, "hypothesis transcripts")->required();
  eval_cmd->add_option("--ref", e_opt.ref, "reference transcripts")->required();
  eval_cmd->add_flag("--json", e_opt.json_output, "machine-readable output");
  eval_cmd->add_flag("--features", e_opt.with_features, "report per-feature sequence accuracy");
  eval_cmd->add_flag("!--no-collapse-sil", e_opt.collapse_sil, "keep repeated sil symbols");
  eval_cmd->add_option("--data", e_opt.data_directory, "data table directory");

  // plot
  auto* plot = app.add_subcommand("plot", "render attention/posteriorgram SVG");
  PlotOptions p_opt;
  p_opt.data_directory = default_data;
  plot->add_option("--att", p_opt.att, "attention file (.att)");
  plot->add_option("--ipg", p_opt.ipg, "posteriorgram file (.ipg)");
  plot->add_option("--ref", p_opt.ref, "ground-truth bits (.ipg) for markers");
  plot->add_option("--out", p_opt.out, "output .svg")->required();
  plot->add_option("--title", p_opt.title, "figure title");
  plot->add_option("--data", p_opt.data_directory, "data table directory");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  double g_eps = 1e-5;
  uint64_t g_seed = 7;
  gradcheck->add_option("--epsilon", g_eps, "finite difference step");
  gradcheck->add_option("--seed", g_seed, "rng seed");

  std::vector<std::string> raw = args;
  try {
    // CLI11 parses argv-style reversed vectors.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    if (*featurize) {
      f_choice.deltas = !f_no_deltas;
      return cmd_featurize(f_wav, f_corpus, f_out, f_outdir, f_choice, f_stats, f_workers, raw);
    }
    if (*fit_norm) return cmd_fit_norm(n_dir, n_out, raw);
    if (*synth) return cmd_synth_corpus(s_out, s_seed, s_utts, s_phones, s_data, raw);
    if (*train) {
      t_opt.frontend.deltas = !t_no_deltas;
      return cmd_train(t_opt, raw);
    }
    if (*decode) {
      if (d_have_seed) d_opt.sample_seed = d_seed;
      return cmd_decode(d_opt, raw);
    }
    if (*align) return cmd_align(a_opt, raw);
    if (*eval_cmd) return cmd_eval(e_opt, out);
    if (*plot) return cmd_plot(p_opt, raw);
    if (*gradcheck) return cmd_gradcheck(g_eps, g_seed, out);
    std::cerr << "no subcommand given\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace afd::cli

#endif  // AFD_CLI_HPP
