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

#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "emetts/prosody/prosody.hpp"

using namespace emetts;

namespace {

ProsodyTargets targets(std::vector<double> pitch, std::vector<int> dur) {
  ProsodyTargets t;
  t.energy.assign(pitch.size(), 0.0);
  t.pitch = std::move(pitch);
  t.duration = std::move(dur);
  return t;
}

const NormalizationStats kStats{-1.0, 3.0, -1.0, 3.0};

}  // namespace

TEST_CASE("variance features: hand arithmetic") {
  SUBCASE("pitch over the last two phonemes") {
    auto f = compute_variance_features(targets({1, 2, 3, 4}, {1, 1, 1, 1}), EmphasisSpan{1, 2, 3}, kStats);
    CHECK(f.w_pitch == 3.5);
    CHECK(f.s_pitch == 2.5);
    CHECK(f.raw_pitch_var == 1.0);
    CHECK(f.norm_pitch_var == 1.0);
  }
  SUBCASE("duration over the last two phonemes") {
    auto f = compute_variance_features(targets({0, 0, 0, 0}, {2, 2, 4, 4}), EmphasisSpan{1, 2, 3}, kStats);
    CHECK(f.w_dur == 4.0);
    CHECK(f.s_dur == 3.0);
    CHECK(f.raw_dur_var == 1.0);
  }
  SUBCASE("span over the whole sentence") {
    auto f = compute_variance_features(targets({0.3, -1.2, 2.5}, {3, 5, 4}), EmphasisSpan{0, 0, 2}, kStats);
    CHECK(f.raw_pitch_var == 0.0);
    CHECK(f.raw_dur_var == 0.0);
  }
  SUBCASE("tracks are zero outside the span") {
    auto f = compute_variance_features(targets({1, 2, 3, 4}, {2, 2, 4, 4}), EmphasisSpan{1, 2, 3}, kStats);
    CHECK(f.pitch_track == std::vector<double>{0, 0, 1.0, 1.0});
    CHECK(f.dur_track == std::vector<double>{0, 0, 1.0, 1.0});
  }
  SUBCASE("no span yields all-zero features") {
    auto f = compute_variance_features(targets({1, 2, 3}, {1, 2, 3}), std::nullopt, kStats);
    CHECK_FALSE(f.has_span);
    CHECK(f.pitch_track == std::vector<double>(3, 0.0));
    CHECK(f.norm_dur_var == 0.0);
  }
  SUBCASE("empty sequence rejected") {
    CHECK_THROWS_AS(compute_variance_features(ProsodyTargets{}, EmphasisSpan{0, 0, 0}, kStats),
                    std::invalid_argument);
  }
}

TEST_CASE("normalize_to_range") {
  CHECK(normalize_to_range(1.0, -1.0, 3.0) == 1.0);
  CHECK(normalize_to_range(-1.0, -1.0, 3.0) == 0.0);
  CHECK(normalize_to_range(7.0, -1.0, 3.0) == 2.0);
  CHECK(normalize_to_range(-9.0, -1.0, 3.0) == 0.0);
  CHECK_THROWS_AS(normalize_to_range(0.0, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(normalize_to_range(0.0, 2.0, 1.0), std::invalid_argument);
}

TEST_CASE("fit_normalization_stats") {
  SUBCASE("0..100 uniformly gives 5 and 95") {
    std::vector<double> sorted;
    for (int i = 0; i <= 100; ++i) sorted.push_back(i);
    // Oracle: rank (n-1) q on the sorted list falls exactly on an element.
    CHECK(sorted[static_cast<std::size_t>(0.05 * 100)] == 5.0);
    std::vector<RawVariance> raw;
    for (int i = 100; i >= 0; --i) raw.push_back({double(i), double(i)});
    auto s = fit_normalization_stats(raw);
    CHECK(s.pitch_p5 == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(s.pitch_p95 == doctest::Approx(95.0).epsilon(1e-12));
    CHECK(s.dur_p5 == doctest::Approx(5.0).epsilon(1e-12));
  }
  SUBCASE("translation equivariance") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> d;
    std::vector<RawVariance> raw, shifted;
    for (int i = 0; i < 57; ++i) {
      raw.push_back({d(rng), d(rng)});
      shifted.push_back({raw.back().pitch + 2.5, raw.back().dur + 2.5});
    }
    auto a = fit_normalization_stats(raw);
    auto b = fit_normalization_stats(shifted);
    CHECK(b.pitch_p5 == doctest::Approx(a.pitch_p5 + 2.5).epsilon(1e-12));
    CHECK(b.pitch_p95 == doctest::Approx(a.pitch_p95 + 2.5).epsilon(1e-12));
    CHECK(b.dur_p5 == doctest::Approx(a.dur_p5 + 2.5).epsilon(1e-12));
    CHECK(b.dur_p95 == doctest::Approx(a.dur_p95 + 2.5).epsilon(1e-12));
  }
  SUBCASE("20 identical values are degenerate") {
    std::vector<RawVariance> raw(20, RawVariance{0.4, 0.4});
    CHECK_THROWS_AS(fit_normalization_stats(raw), std::invalid_argument);
  }
  SUBCASE("fewer than 20 utterances rejected") {
    std::vector<RawVariance> raw;
    for (int i = 0; i < 19; ++i) raw.push_back({double(i), double(i)});
    CHECK_THROWS_AS(fit_normalization_stats(raw), std::invalid_argument);
  }
}

TEST_CASE("expand_mask_to_frames") {
  auto mask = [](std::vector<std::uint8_t> v) { return EmphasisMask{std::move(v), Resolution::kPhoneme}; };
  std::vector<int> d23{2, 3};
  CHECK(expand_mask_to_frames(mask({0, 1}), d23).values == std::vector<std::uint8_t>{0, 0, 1, 1, 1});
  CHECK(expand_mask_to_frames(mask({0, 0}), d23).values == std::vector<std::uint8_t>(5, 0));
  std::vector<int> d4{4};
  auto one = expand_mask_to_frames(mask({1}), d4);
  CHECK(one.values == std::vector<std::uint8_t>(4, 1));
  CHECK(one.resolution == Resolution::kFrame);
  CHECK_THROWS_AS(expand_mask_to_frames(mask({1, 0, 1}), d23), std::invalid_argument);
}

TEST_CASE("phoneme sequences and spans") {
  PhonemeSequence seq{{3, 4, 5, 6, 7}, {{0, 1}, {2, 4}}};
  CHECK_NOTHROW(seq.validate(10));
  CHECK_THROWS(seq.validate(4));
  PhonemeSequence gap{{1, 2, 3}, {{0, 0}, {2, 2}}};
  CHECK_THROWS(gap.validate(10));
  CHECK(span_for_word(seq, 1) == EmphasisSpan{1, 2, 4});
  CHECK_NOTHROW(validate_span(EmphasisSpan{1, 2, 4}, seq));
  CHECK_THROWS(validate_span(EmphasisSpan{1, 2, 3}, seq));
  CHECK_THROWS(validate_span(EmphasisSpan{1, 4, 6}, seq));
  CHECK(make_phoneme_mask(5, EmphasisSpan{1, 2, 4}).values == std::vector<std::uint8_t>{0, 0, 1, 1, 1});
  CHECK_FALSE(make_phoneme_mask(5, std::nullopt).any());
}

namespace {

struct Instance {
  ProsodyTargets targets;
  EmphasisSpan span;
};

Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len(1, 24);
  std::normal_distribution<double> pitch(0.0, 1.5);
  std::uniform_int_distribution<int> dur(1, 12);
  const int n = len(rng);
  Instance inst;
  for (int i = 0; i < n; ++i) {
    inst.targets.pitch.push_back(pitch(rng));
    inst.targets.energy.push_back(0.0);
    inst.targets.duration.push_back(dur(rng));
  }
  std::uniform_int_distribution<int> a(0, n - 1);
  int s = a(rng), e = a(rng);
  if (s > e) std::swap(s, e);
  inst.span = {0, s, e};
  return inst;
}

}  // namespace

TEST_CASE("variance features match a two-loop oracle on 1000 random instances") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    auto inst = random_instance(rng);
    const auto& t = inst.targets;
    double in_p = 0, in_d = 0, all_p = 0, all_d = 0;
    int in_n = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      all_p += t.pitch[i];
      all_d += t.duration[i];
      for (int j = inst.span.start; j <= inst.span.end; ++j) {
        if (static_cast<int>(i) == j) {
          in_p += t.pitch[i];
          in_d += t.duration[i];
          ++in_n;
        }
      }
    }
    const double n = static_cast<double>(t.size());
    auto f = compute_variance_features(t, inst.span, kStats);
    CHECK(std::abs(f.w_pitch - in_p / in_n) <= 1e-12);
    CHECK(std::abs(f.s_pitch - all_p / n) <= 1e-12);
    CHECK(std::abs(f.w_dur - in_d / in_n) <= 1e-12);
    CHECK(std::abs(f.s_dur - all_d / n) <= 1e-12);
    CHECK(f.raw_pitch_var == f.w_pitch - f.s_pitch);
    CHECK(f.raw_dur_var == f.w_dur - f.s_dur);
    CHECK(f.norm_pitch_var >= 0.0);
    CHECK(f.norm_pitch_var <= 2.0);
    CHECK(f.norm_dur_var >= 0.0);
    CHECK(f.norm_dur_var <= 2.0);

    double track_sum = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const bool inside = static_cast<int>(i) >= inst.span.start && static_cast<int>(i) <= inst.span.end;
      if (inside) {
        track_sum += f.pitch_track[i];
        CHECK(f.dur_track[i] == f.norm_dur_var);
      } else {
        CHECK(f.pitch_track[i] == 0.0);
        CHECK(f.dur_track[i] == 0.0);
      }
    }
    // Summing in_n copies rounds at most once per addition.
    CHECK(std::abs(track_sum / in_n - f.norm_pitch_var) <= in_n * 2.3e-16 * f.norm_pitch_var);

    auto shifted = t;
    for (auto& p : shifted.pitch) p += 3.25;
    auto g = compute_variance_features(shifted, inst.span, kStats);
    CHECK(std::abs(g.raw_pitch_var - f.raw_pitch_var) <= 1e-12);
  }
}
