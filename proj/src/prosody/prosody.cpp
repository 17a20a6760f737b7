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

#include "emetts/prosody/prosody.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace emetts {

void PhonemeSequence::validate(int max_phonemes) const {
  if (ids.empty()) throw std::invalid_argument("phoneme sequence is empty");
  if (length() > max_phonemes) {
    throw std::invalid_argument("phoneme sequence of length " + std::to_string(length()) +
                                " exceeds max_phonemes " + std::to_string(max_phonemes));
  }
  if (words.empty()) throw std::invalid_argument("phoneme sequence has no word boundaries");
  int expect = 0;
  for (const auto& w : words) {
    if (w.start != expect || w.end < w.start) {
      throw std::invalid_argument("word boundaries do not tile the sequence at phoneme " +
                                  std::to_string(expect));
    }
    expect = w.end + 1;
  }
  if (expect != length()) throw std::invalid_argument("word boundaries do not cover the sequence");
}

EmphasisSpan span_for_word(const PhonemeSequence& seq, int word_index) {
  if (word_index < 0 || word_index >= static_cast<int>(seq.words.size())) {
    throw std::invalid_argument("word index " + std::to_string(word_index) + " out of range");
  }
  const auto& w = seq.words[static_cast<std::size_t>(word_index)];
  return {word_index, w.start, w.end};
}

void validate_span(const EmphasisSpan& span, const PhonemeSequence& seq) {
  if (span.start < 0 || span.start > span.end || span.end >= seq.length()) {
    throw std::invalid_argument("emphasis span [" + std::to_string(span.start) + ", " +
                                std::to_string(span.end) + "] outside sequence of length " +
                                std::to_string(seq.length()));
  }
  if (span.word_index < 0 || span.word_index >= static_cast<int>(seq.words.size()) ||
      seq.words[static_cast<std::size_t>(span.word_index)] != WordBoundary{span.start, span.end}) {
    throw std::invalid_argument("emphasis span does not match the boundary of word " +
                                std::to_string(span.word_index));
  }
}

bool EmphasisMask::any() const {
  return std::any_of(values.begin(), values.end(), [](std::uint8_t v) { return v != 0; });
}

EmphasisMask make_phoneme_mask(int length, const std::optional<EmphasisSpan>& span) {
  if (length < 1) throw std::invalid_argument("mask length must be positive");
  EmphasisMask mask;
  mask.values.assign(static_cast<std::size_t>(length), 0);
  if (span) {
    if (span->start < 0 || span->end >= length || span->start > span->end) {
      throw std::invalid_argument("emphasis span outside mask of length " + std::to_string(length));
    }
    for (int i = span->start; i <= span->end; ++i) mask.values[static_cast<std::size_t>(i)] = 1;
  }
  return mask;
}

EmphasisMask expand_mask_to_frames(const EmphasisMask& mask, std::span<const int> durations) {
  if (mask.resolution != Resolution::kPhoneme) throw std::invalid_argument("mask is already frame-level");
  if (mask.size() != durations.size()) {
    throw std::invalid_argument("mask has " + std::to_string(mask.size()) + " positions but " +
                                std::to_string(durations.size()) + " durations were given");
  }
  EmphasisMask out;
  out.resolution = Resolution::kFrame;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    if (durations[i] < 1) throw std::invalid_argument("duration < 1 at phoneme " + std::to_string(i));
    out.values.insert(out.values.end(), static_cast<std::size_t>(durations[i]), mask.values[i]);
  }
  return out;
}

void ProsodyTargets::validate() const {
  if (pitch.empty()) throw std::invalid_argument("prosody targets are empty");
  if (energy.size() != pitch.size() || duration.size() != pitch.size()) {
    throw std::invalid_argument("prosody tracks have different lengths");
  }
  for (std::size_t i = 0; i < pitch.size(); ++i) {
    if (!std::isfinite(pitch[i]) || !std::isfinite(energy[i])) {
      throw std::invalid_argument("non-finite prosody value at phoneme " + std::to_string(i));
    }
    if (duration[i] < 1) throw std::invalid_argument("duration < 1 at phoneme " + std::to_string(i));
  }
}

int ProsodyTargets::total_frames() const {
  int n = 0;
  for (int d : duration) n += d;
  return n;
}

namespace {

struct Means {
  double span_pitch = 0, sent_pitch = 0, span_dur = 0, sent_dur = 0;
};

Means means(const ProsodyTargets& t, const EmphasisSpan& span) {
  const int n = static_cast<int>(t.size());
  if (n == 0) throw std::invalid_argument("variance features need a non-empty sequence");
  if (span.start < 0 || span.end >= n || span.start > span.end) {
    throw std::invalid_argument("emphasis span [" + std::to_string(span.start) + ", " +
                                std::to_string(span.end) + "] outside sequence of length " +
                                std::to_string(n));
  }
  Means m;
  for (int i = 0; i < n; ++i) {
    m.sent_pitch += t.pitch[static_cast<std::size_t>(i)];
    m.sent_dur += t.duration[static_cast<std::size_t>(i)];
  }
  for (int i = span.start; i <= span.end; ++i) {
    m.span_pitch += t.pitch[static_cast<std::size_t>(i)];
    m.span_dur += t.duration[static_cast<std::size_t>(i)];
  }
  const double k = span.end - span.start + 1;
  m.sent_pitch /= n;
  m.sent_dur /= n;
  m.span_pitch /= k;
  m.span_dur /= k;
  return m;
}

}  // namespace

RawVariance raw_variance(const ProsodyTargets& targets, const EmphasisSpan& span) {
  const Means m = means(targets, span);
  return {m.span_pitch - m.sent_pitch, m.span_dur - m.sent_dur};
}

double normalize_to_range(double raw, double p5, double p95) {
  if (!(p5 < p95)) throw std::invalid_argument("normalize_to_range: p5 must be below p95");
  return std::clamp(2.0 * (raw - p5) / (p95 - p5), 0.0, 2.0);
}

VarianceFeatures compute_variance_features(const ProsodyTargets& targets,
                                           const std::optional<EmphasisSpan>& span,
                                           const NormalizationStats& stats) {
  const std::size_t n = targets.size();
  if (n == 0) throw std::invalid_argument("variance features need a non-empty sequence");
  VarianceFeatures f;
  f.pitch_track.assign(n, 0.0);
  f.dur_track.assign(n, 0.0);
  if (!span) return f;

  const Means m = means(targets, *span);
  f.has_span = true;
  f.w_pitch = m.span_pitch;
  f.s_pitch = m.sent_pitch;
  f.w_dur = m.span_dur;
  f.s_dur = m.sent_dur;
  f.raw_pitch_var = f.w_pitch - f.s_pitch;
  f.raw_dur_var = f.w_dur - f.s_dur;
  f.norm_pitch_var = normalize_to_range(f.raw_pitch_var, stats.pitch_p5, stats.pitch_p95);
  f.norm_dur_var = normalize_to_range(f.raw_dur_var, stats.dur_p5, stats.dur_p95);
  for (int i = span->start; i <= span->end; ++i) {
    f.pitch_track[static_cast<std::size_t>(i)] = f.norm_pitch_var;
    f.dur_track[static_cast<std::size_t>(i)] = f.norm_dur_var;
  }
  return f;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile rank outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

NormalizationStats fit_normalization_stats(std::span<const RawVariance> values) {
  if (values.size() < static_cast<std::size_t>(kMinStatsUtterances)) {
    throw std::invalid_argument("normalization stats need at least " + std::to_string(kMinStatsUtterances) +
                                " utterances, got " + std::to_string(values.size()));
  }
  std::vector<double> pitch, dur;
  for (const auto& v : values) {
    pitch.push_back(v.pitch);
    dur.push_back(v.dur);
  }
  NormalizationStats s;
  s.pitch_p5 = percentile(pitch, 0.05);
  s.pitch_p95 = percentile(pitch, 0.95);
  s.dur_p5 = percentile(dur, 0.05);
  s.dur_p95 = percentile(dur, 0.95);
  if (!(s.pitch_p5 < s.pitch_p95)) throw std::invalid_argument("degenerate pitch variance distribution (p5 == p95)");
  if (!(s.dur_p5 < s.dur_p95)) throw std::invalid_argument("degenerate duration variance distribution (p5 == p95)");
  return s;
}

void to_json(nlohmann::json& j, const NormalizationStats& s) {
  j = {{"pitch_p5", s.pitch_p5}, {"pitch_p95", s.pitch_p95}, {"dur_p5", s.dur_p5}, {"dur_p95", s.dur_p95}};
}

void from_json(const nlohmann::json& j, NormalizationStats& s) {
  s.pitch_p5 = j.at("pitch_p5").get<double>();
  s.pitch_p95 = j.at("pitch_p95").get<double>();
  s.dur_p5 = j.at("dur_p5").get<double>();
  s.dur_p95 = j.at("dur_p95").get<double>();
}

}  // namespace emetts
