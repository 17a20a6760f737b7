// Copyright 2026 The emetts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Synthetic "toy phonetic language" corpus. Each utterance is a random
// phoneme string split into words; prosody follows fixed per-phoneme base
// tables modulated by an emotion rule and an emphasis rule on one word, and
// the mel target is a fixed random linear map of the frame-level prosody.

#ifndef EMETTS_CORPUS_CORPUS_HPP_
#define EMETTS_CORPUS_CORPUS_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emetts/numerics/tensor.hpp"
#include "emetts/prosody/prosody.hpp"
#include "json.hpp"

namespace emetts {

enum class Emotion : int { kNeutral = 0, kAngry = 1, kHappy = 2, kSad = 3, kSurprise = 4 };
inline constexpr int kNumEmotions = 5;
inline constexpr std::array<Emotion, kNumEmotions> kAllEmotions{Emotion::kNeutral, Emotion::kAngry, Emotion::kHappy,
                                                                Emotion::kSad, Emotion::kSurprise};

std::string_view emotion_name(Emotion e);
/// Accepts the lowercase name or the integer code.
Emotion parse_emotion(std::string_view s);

struct EmotionRule {
  double pitch_offset = 0.0;
  double pitch_slope = 0.0;
  double duration_scale = 1.0;
  double energy_offset = 0.0;
  /// Rise over the final word, ramping linearly to this value at its last phoneme.
  double end_rise = 0.0;
};

struct EmphasisRule {
  double pitch_boost = 0.7;
  double duration_boost = 1.4;
  double energy_boost = 0.4;
};

struct GeneratorConfig {
  std::uint64_t seed = 42;
  /// Seeds the fixed tables (base prosody, mel map), i.e. the "language".
  std::uint64_t language_seed = 1234;
  int vocab_size = 32;
  int n_speakers = 4;
  int min_words = 3;
  int max_words = 6;
  int min_word_phonemes = 2;
  int max_word_phonemes = 4;
  int n_mel = 20;
  double noise_std = 0.05;
  double base_pitch_spread = 0.1;
  double base_dur_min = 3.5;
  double base_dur_max = 4.5;
  double base_energy_spread = 0.3;
  double speaker_mel_spread = 0.3;
  double texture_amplitude = 0.1;
  /// When false, utterances carry no emphasis span.
  bool emphasize = true;
  int n_train = 2000;
  int n_val = 200;
  std::array<EmotionRule, kNumEmotions> emotions = default_emotion_rules();
  EmphasisRule emphasis;

  int max_phonemes() const { return max_words * max_word_phonemes; }
  void validate() const;

  static std::array<EmotionRule, kNumEmotions> default_emotion_rules();
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, GeneratorConfig& c);

struct Utterance {
  int id = 0;
  PhonemeSequence phonemes;
  int speaker = 0;
  Emotion emotion = Emotion::kNeutral;
  std::optional<EmphasisSpan> span;
  ProsodyTargets targets;
  TensorF mel;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

/// Fixed tables derived from language_seed.
struct LanguageTables {
  std::vector<double> base_pitch;
  std::vector<double> base_dur;
  std::vector<double> base_energy;
  /// [vocab_size + 2, n_mel]: phoneme one-hot rows, then pitch and energy rows.
  std::vector<double> mel_map;
  /// [n_speakers, n_mel]
  std::vector<double> speaker_mel;
  std::vector<double> texture_freq;
  std::vector<double> texture_phase;

  static LanguageTables build(const GeneratorConfig& c);
};

/// Deterministic in (config, id): each utterance draws from its own stream
/// seeded by (seed, id). Emotion is id mod 5, which balances contiguous splits.
Utterance generate_utterance(const GeneratorConfig& config, const LanguageTables& tables, int id);

/// Frame-level mel rendering of given targets (the generator's map).
TensorF render_mel(const GeneratorConfig& config, const LanguageTables& tables, const PhonemeSequence& phonemes,
                   int speaker, const ProsodyTargets& targets);

inline constexpr int kCorpusSchemaVersion = 1;

struct CorpusManifest {
  int schema_version = kCorpusSchemaVersion;
  GeneratorConfig config;
  NormalizationStats stats;
  std::vector<int> train_ids;
  std::vector<int> val_ids;
};

struct Corpus {
  CorpusManifest manifest;
  std::vector<Utterance> train;
  std::vector<Utterance> val;
};

/// Generates n_train + n_val utterances (ids 0..n_train-1 train, the rest
/// val) and fits normalization stats on the train split.
Corpus generate_corpus(const GeneratorConfig& config);

/// Raw variance values of every utterance carrying a span.
std::vector<RawVariance> collect_raw_variances(const std::vector<Utterance>& utts);

/// One record: JSON metadata/prosody line, then the mel tensor.
void write_utterance(std::ostream& os, const Utterance& u);
Utterance read_utterance(std::istream& is, const std::string& context);

/// Layout: <dir>/manifest.json, <dir>/train/<id>.utt, <dir>/val/<id>.utt.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);
CorpusManifest load_manifest(const std::filesystem::path& dir);

nlohmann::json manifest_to_json(const CorpusManifest& m);

}  // namespace emetts

#endif  // EMETTS_CORPUS_CORPUS_HPP_
