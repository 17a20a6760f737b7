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

// Phoneme-level prosody: sequences with word boundaries, emphasis spans and
// masks, and the variance-based emphasis features (span mean minus sentence
// mean of pitch and duration, normalized to [0, 2]).

#ifndef EMETTS_PROSODY_PROSODY_HPP_
#define EMETTS_PROSODY_PROSODY_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

namespace emetts {

/// Inclusive phoneme range [start, end] of one word.
struct WordBoundary {
  int start = 0;
  int end = 0;
  int length() const { return end - start + 1; }
  friend bool operator==(const WordBoundary&, const WordBoundary&) = default;
};

struct PhonemeSequence {
  std::vector<int> ids;
  std::vector<WordBoundary> words;

  int length() const { return static_cast<int>(ids.size()); }
  /// Throws std::invalid_argument unless the words tile the sequence and
  /// 1 <= length <= max_phonemes.
  void validate(int max_phonemes) const;
  friend bool operator==(const PhonemeSequence&, const PhonemeSequence&) = default;
};

struct EmphasisSpan {
  int word_index = 0;
  int start = 0;
  int end = 0;
  friend bool operator==(const EmphasisSpan&, const EmphasisSpan&) = default;
};

/// Span covering word `word_index` of `seq`.
EmphasisSpan span_for_word(const PhonemeSequence& seq, int word_index);

/// Throws std::invalid_argument unless the span matches a word boundary.
void validate_span(const EmphasisSpan& span, const PhonemeSequence& seq);

enum class Resolution { kPhoneme, kFrame };

struct EmphasisMask {
  std::vector<std::uint8_t> values;
  Resolution resolution = Resolution::kPhoneme;

  std::size_t size() const { return values.size(); }
  bool any() const;
};

/// Phoneme-level mask of `length` positions, ones inside the span (if any).
EmphasisMask make_phoneme_mask(int length, const std::optional<EmphasisSpan>& span);

/// Repeats each phoneme's mask bit durations[i] times.
EmphasisMask expand_mask_to_frames(const EmphasisMask& mask, std::span<const int> durations);

/// Per-phoneme prosody in model units: pitch and energy in z-units,
/// durations in frames.
struct ProsodyTargets {
  std::vector<double> pitch;
  std::vector<double> energy;
  std::vector<int> duration;

  std::size_t size() const { return pitch.size(); }
  void validate() const;
  int total_frames() const;
  friend bool operator==(const ProsodyTargets&, const ProsodyTargets&) = default;
};

struct NormalizationStats {
  double pitch_p5 = 0.0;
  double pitch_p95 = 1.0;
  double dur_p5 = 0.0;
  double dur_p95 = 1.0;

  /// Frames represented by one normalized duration unit: (p95 - p5) / 2.
  double dur_unit() const { return (dur_p95 - dur_p5) / 2.0; }
  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

struct VarianceFeatures {
  double w_pitch = 0.0;
  double s_pitch = 0.0;
  double w_dur = 0.0;
  double s_dur = 0.0;
  double raw_pitch_var = 0.0;
  double raw_dur_var = 0.0;
  double norm_pitch_var = 0.0;
  double norm_dur_var = 0.0;
  std::vector<double> pitch_track;
  std::vector<double> dur_track;
  bool has_span = false;
};

/// Span-mean minus sentence-mean of pitch and duration. Raw values only,
/// used to fit normalization statistics over a corpus.
struct RawVariance {
  double pitch = 0.0;
  double dur = 0.0;
};
RawVariance raw_variance(const ProsodyTargets& targets, const EmphasisSpan& span);

/// Affine map 2 (raw - p5) / (p95 - p5), clamped to [0, 2].
double normalize_to_range(double raw, double p5, double p95);

/// Full feature set. Without a span every field is zero and has_span is false.
VarianceFeatures compute_variance_features(const ProsodyTargets& targets,
                                           const std::optional<EmphasisSpan>& span,
                                           const NormalizationStats& stats);

/// q-quantile (q in [0, 1]) with linear interpolation between closest ranks:
/// position (n - 1) q in the sorted sample.
double percentile(std::vector<double> values, double q);

/// 5th/95th percentiles of raw pitch and duration variances. Requires at
/// least 20 values and p5 < p95 for each feature.
NormalizationStats fit_normalization_stats(std::span<const RawVariance> values);

void to_json(nlohmann::json& j, const NormalizationStats& s);
void from_json(const nlohmann::json& j, NormalizationStats& s);

inline constexpr int kMinStatsUtterances = 20;

}  // namespace emetts

#endif  // EMETTS_PROSODY_PROSODY_HPP_
