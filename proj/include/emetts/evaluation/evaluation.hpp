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

// Objective emphasis and emotion checks on synthesized prosody: a prominence
// oracle that names the emphasized word, per-emotion recognition accuracy,
// and pairwise emotion separation.

#ifndef EMETTS_EVALUATION_EVALUATION_HPP_
#define EMETTS_EVALUATION_EVALUATION_HPP_

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emetts/corpus/corpus.hpp"
#include "emetts/model/model.hpp"
#include "json.hpp"

namespace emetts {

struct ProminenceScore {
  int word_index = 0;
  /// Mean in-word pitch minus sentence mean (z-units).
  double pitch_component = 0.0;
  /// Mean in-word frames per phoneme over the sentence mean, minus 1.
  double duration_component = 0.0;
  double score = 0.0;
};

/// One score per word. `pitch` and `durations` are phoneme-level.
std::vector<ProminenceScore> prominence_scores(std::span<const WordBoundary> words, std::span<const double> pitch,
                                               std::span<const double> durations);

/// Argmax of the prominence score, lowest index on ties. Rejects fewer than two words.
int predict_emphasized_word(std::span<const WordBoundary> words, std::span<const double> pitch,
                            std::span<const double> durations);
int predict_emphasized_word(std::span<const WordBoundary> words, std::span<const double> pitch,
                            std::span<const int> durations);

struct EmotionCell {
  int correct = 0;
  int n = 0;
  double accuracy() const { return n > 0 ? static_cast<double>(correct) / n : 0.0; }
};

struct EmphasisEvalReport {
  std::array<EmotionCell, kNumEmotions> per_emotion{};
  bool ea_enabled = true;
  double emphasis_scale = 1.0;

  /// Per-emotion accuracies averaged with weights n.
  double mean_accuracy() const;
  int total() const;
  /// Fold one outcome into the report.
  void add(Emotion emotion, bool correct);
};

void to_json(nlohmann::json& j, const EmphasisEvalReport& r);

/// Oracle applied to the corpus's own targets instead of model output.
EmphasisEvalReport evaluate_targets(const std::vector<Utterance>& utts);

/// Synthesizes every utterance with its span and checks the oracle's pick.
/// Rejects utterances without a span or with fewer than two words.
EmphasisEvalReport evaluate_emphasis(const AcousticModel& model, const std::vector<Utterance>& utts,
                                     bool ea_enabled = true, double emphasis_scale = 1.0);

/// Rejects a checkpoint whose layout cannot consume the corpus.
void check_checkpoint_corpus(const AcousticModel& model, const CorpusManifest& manifest);

/// Aligned text table, one row per report: label, Mean, then each emotion.
std::string format_emphasis_table(const std::vector<std::pair<std::string, EmphasisEvalReport>>& rows);

struct SeparationText {
  PhonemeSequence phonemes;
  std::optional<EmphasisSpan> span;
};

struct EmotionSeparationReport {
  /// Mean over texts of the L2 distance between frame-averaged mels.
  std::array<std::array<double, kNumEmotions>, kNumEmotions> distance{};
  /// Mean over texts of the phoneme-mean synthesized pitch.
  std::array<double, kNumEmotions> mean_pitch{};
  /// Largest elementwise difference between two syntheses of the same input.
  double repeat_distance = 0.0;
  int n_texts = 0;

  /// angry > happy > neutral > sad.
  bool pitch_order_matches_rules() const;
};

void to_json(nlohmann::json& j, const EmotionSeparationReport& r);

inline constexpr int kMinSeparationTexts = 20;

EmotionSeparationReport evaluate_emotion_separation(const AcousticModel& model, const std::vector<SeparationText>& texts,
                                                    int speaker);

/// Texts (with spans) taken from the first `n` utterances.
std::vector<SeparationText> separation_texts(const std::vector<Utterance>& utts, int n);

}  // namespace emetts

#endif  // EMETTS_EVALUATION_EVALUATION_HPP_
