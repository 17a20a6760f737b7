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

#include "emetts/evaluation/evaluation.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "emetts/training/training.hpp"

namespace emetts {

namespace {

std::vector<double> frame_mean(const TensorF& mel) {
  std::vector<double> m(mel.cols(), 0.0);
  for (std::size_t r = 0; r < mel.rows(); ++r) {
    for (std::size_t c = 0; c < mel.cols(); ++c) m[c] += mel.at(r, c);
  }
  for (auto& v : m) v /= static_cast<double>(mel.rows());
  return m;
}

double l2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double max_abs_diff(const TensorF& a, const TensorF& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

void check_utterance(const Utterance& u) {
  if (u.phonemes.words.size() < 2) {
    throw std::invalid_argument("utterance " + std::to_string(u.id) + ": emphasis evaluation needs at least 2 words");
  }
  if (!u.span) throw std::invalid_argument("utterance " + std::to_string(u.id) + ": no emphasis span");
}

}  // namespace

std::vector<ProminenceScore> prominence_scores(std::span<const WordBoundary> words, std::span<const double> pitch,
                                               std::span<const double> durations) {
  if (pitch.size() != durations.size()) {
    throw std::invalid_argument("prominence: " + std::to_string(pitch.size()) + " pitch values for " +
                                std::to_string(durations.size()) + " durations");
  }
  if (pitch.empty()) throw std::invalid_argument("prominence: empty sequence");
  const auto n = static_cast<double>(pitch.size());
  double pitch_mean = 0.0, dur_mean = 0.0;
  for (std::size_t i = 0; i < pitch.size(); ++i) {
    pitch_mean += pitch[i];
    dur_mean += durations[i];
  }
  pitch_mean /= n;
  dur_mean /= n;
  if (!(dur_mean > 0.0)) throw std::invalid_argument("prominence: mean duration must be positive");

  std::vector<ProminenceScore> out;
  for (std::size_t w = 0; w < words.size(); ++w) {
    const auto& b = words[w];
    if (b.start < 0 || b.end < b.start || static_cast<std::size_t>(b.end) >= pitch.size()) {
      throw std::invalid_argument("prominence: word " + std::to_string(w) + " outside the sequence");
    }
    double p = 0.0, d = 0.0;
    for (int i = b.start; i <= b.end; ++i) {
      p += pitch[static_cast<std::size_t>(i)];
      d += durations[static_cast<std::size_t>(i)];
    }
    ProminenceScore s;
    s.word_index = static_cast<int>(w);
    s.pitch_component = p / b.length() - pitch_mean;
    s.duration_component = (d / b.length()) / dur_mean - 1.0;
    s.score = s.pitch_component + s.duration_component;
    if (!std::isfinite(s.score)) throw std::invalid_argument("prominence: non-finite score");
    out.push_back(s);
  }
  return out;
}

int predict_emphasized_word(std::span<const WordBoundary> words, std::span<const double> pitch,
                            std::span<const double> durations) {
  if (words.size() < 2) throw std::invalid_argument("predict_emphasized_word: needs at least 2 words");
  const auto scores = prominence_scores(words, pitch, durations);
  int best = 0;
  for (std::size_t w = 1; w < scores.size(); ++w) {
    if (scores[w].score > scores[static_cast<std::size_t>(best)].score) best = static_cast<int>(w);
  }
  return best;
}

int predict_emphasized_word(std::span<const WordBoundary> words, std::span<const double> pitch,
                            std::span<const int> durations) {
  const std::vector<double> d(durations.begin(), durations.end());
  return predict_emphasized_word(words, pitch, std::span<const double>(d));
}

double EmphasisEvalReport::mean_accuracy() const {
  const int n = total();
  if (n == 0) return 0.0;
  double s = 0.0;
  for (const auto& c : per_emotion) s += c.accuracy() * c.n;
  return s / n;
}

int EmphasisEvalReport::total() const {
  int n = 0;
  for (const auto& c : per_emotion) n += c.n;
  return n;
}

void EmphasisEvalReport::add(Emotion emotion, bool correct) {
  auto& c = per_emotion[static_cast<std::size_t>(emotion)];
  c.n += 1;
  c.correct += correct ? 1 : 0;
}

void to_json(nlohmann::json& j, const EmphasisEvalReport& r) {
  nlohmann::json cells = nlohmann::json::object();
  for (Emotion e : kAllEmotions) {
    const auto& c = r.per_emotion[static_cast<std::size_t>(e)];
    cells[std::string(emotion_name(e))] = {{"accuracy", c.accuracy()}, {"correct", c.correct}, {"n", c.n}};
  }
  j = {{"mean_accuracy", r.mean_accuracy()},
       {"n", r.total()},
       {"ea_enabled", r.ea_enabled},
       {"emphasis_scale", r.emphasis_scale},
       {"per_emotion", cells}};
}

EmphasisEvalReport evaluate_targets(const std::vector<Utterance>& utts) {
  EmphasisEvalReport r;
  for (const auto& u : utts) {
    check_utterance(u);
    const int pick = predict_emphasized_word(u.phonemes.words, u.targets.pitch,
                                             std::span<const int>(u.targets.duration));
    r.add(u.emotion, pick == u.span->word_index);
  }
  return r;
}

void check_checkpoint_corpus(const AcousticModel& model, const CorpusManifest& manifest) {
  check_model_corpus_compatibility(model.config(), manifest.config);
}

EmphasisEvalReport evaluate_emphasis(const AcousticModel& model, const std::vector<Utterance>& utts, bool ea_enabled,
                                     double emphasis_scale) {
  EmphasisEvalReport r;
  r.ea_enabled = ea_enabled;
  r.emphasis_scale = emphasis_scale;
  const SynthesisOptions opts{emphasis_scale, ea_enabled};
  for (const auto& u : utts) {
    check_utterance(u);
    if (u.speaker >= model.config().n_speakers) {
      throw std::invalid_argument("utterance " + std::to_string(u.id) + ": speaker outside the model's range");
    }
    const auto s = synthesize(model, u.phonemes, static_cast<int>(u.emotion), u.speaker, u.span, opts);
    const int pick = predict_emphasized_word(u.phonemes.words, s.pitch, std::span<const int>(s.durations));
    r.add(u.emotion, pick == u.span->word_index);
  }
  return r;
}

std::string format_emphasis_table(const std::vector<std::pair<std::string, EmphasisEvalReport>>& rows) {
  std::size_t label_w = 5;
  for (const auto& [label, r] : rows) label_w = std::max(label_w, label.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(label_w)) << "Model" << std::right;
  os << std::setw(10) << "Mean";
  for (Emotion e : kAllEmotions) {
    std::string name(emotion_name(e));
    name[0] = static_cast<char>(std::toupper(name[0]));
    os << std::setw(10) << name;
  }
  os << '\n';
  os << std::fixed << std::setprecision(3);
  for (const auto& [label, r] : rows) {
    os << std::left << std::setw(static_cast<int>(label_w)) << label << std::right;
    os << std::setw(10) << r.mean_accuracy();
    for (const auto& c : r.per_emotion) os << std::setw(10) << c.accuracy();
    os << '\n';
  }
  return os.str();
}

bool EmotionSeparationReport::pitch_order_matches_rules() const {
  auto p = [&](Emotion e) { return mean_pitch[static_cast<std::size_t>(e)]; };
  return p(Emotion::kAngry) > p(Emotion::kHappy) && p(Emotion::kHappy) > p(Emotion::kNeutral) &&
         p(Emotion::kNeutral) > p(Emotion::kSad);
}

void to_json(nlohmann::json& j, const EmotionSeparationReport& r) {
  nlohmann::json pitch = nlohmann::json::object();
  std::vector<std::string> names;
  for (Emotion e : kAllEmotions) {
    names.emplace_back(emotion_name(e));
    pitch[names.back()] = r.mean_pitch[static_cast<std::size_t>(e)];
  }
  j = {{"emotions", names},
       {"distance", r.distance},
       {"mean_pitch", pitch},
       {"repeat_distance", r.repeat_distance},
       {"n_texts", r.n_texts},
       {"pitch_order_matches_rules", r.pitch_order_matches_rules()}};
}

EmotionSeparationReport evaluate_emotion_separation(const AcousticModel& model, const std::vector<SeparationText>& texts,
                                                    int speaker) {
  if (static_cast<int>(texts.size()) < kMinSeparationTexts) {
    throw std::invalid_argument("emotion separation needs at least " + std::to_string(kMinSeparationTexts) +
                                " texts, got " + std::to_string(texts.size()));
  }
  EmotionSeparationReport r;
  r.n_texts = static_cast<int>(texts.size());
  for (const auto& text : texts) {
    std::array<std::vector<double>, kNumEmotions> means;
    for (int e = 0; e < kNumEmotions; ++e) {
      const auto a = synthesize(model, text.phonemes, e, speaker, text.span);
      const auto b = synthesize(model, text.phonemes, e, speaker, text.span);
      r.repeat_distance = std::max(r.repeat_distance, max_abs_diff(a.mel, b.mel));
      means[static_cast<std::size_t>(e)] = frame_mean(a.mel);
      double p = 0.0;
      for (double v : a.pitch) p += v;
      r.mean_pitch[static_cast<std::size_t>(e)] += p / static_cast<double>(a.pitch.size());
    }
    for (std::size_t i = 0; i < kNumEmotions; ++i) {
      for (std::size_t k = i + 1; k < kNumEmotions; ++k) {
        const double d = l2(means[i], means[k]);
        r.distance[i][k] += d;
        r.distance[k][i] += d;
      }
    }
  }
  const auto n = static_cast<double>(texts.size());
  for (auto& row : r.distance) {
    for (auto& v : row) v /= n;
  }
  for (auto& p : r.mean_pitch) p /= n;
  return r;
}

std::vector<SeparationText> separation_texts(const std::vector<Utterance>& utts, int n) {
  if (n < 0 || static_cast<std::size_t>(n) > utts.size()) {
    throw std::invalid_argument("separation_texts: asked for " + std::to_string(n) + " of " +
                                std::to_string(utts.size()) + " utterances");
  }
  std::vector<SeparationText> out;
  for (int i = 0; i < n; ++i) out.push_back({utts[static_cast<std::size_t>(i)].phonemes, utts[static_cast<std::size_t>(i)].span});
  return out;
}

}  // namespace emetts
