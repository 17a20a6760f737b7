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

#include "emetts/corpus/corpus.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "emetts/numerics/tensor_io.hpp"

namespace emetts {

namespace {

constexpr std::array<std::string_view, kNumEmotions> kEmotionNames{"neutral", "angry", "happy", "sad", "surprise"};

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id, std::uint32_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32), salt};
  return std::mt19937_64(seq);
}

}  // namespace

std::string_view emotion_name(Emotion e) { return kEmotionNames.at(static_cast<std::size_t>(e)); }

Emotion parse_emotion(std::string_view s) {
  for (std::size_t i = 0; i < kEmotionNames.size(); ++i) {
    if (s == kEmotionNames[i] || s == std::to_string(i)) return static_cast<Emotion>(i);
  }
  throw std::invalid_argument("unknown emotion '" + std::string(s) + "'");
}

std::array<EmotionRule, kNumEmotions> GeneratorConfig::default_emotion_rules() {
  std::array<EmotionRule, kNumEmotions> r{};
  r[static_cast<int>(Emotion::kAngry)] = {0.8, 0.0, 0.9, 0.0, 0.0};
  r[static_cast<int>(Emotion::kHappy)] = {0.5, 0.01, 1.0, 0.0, 0.0};
  r[static_cast<int>(Emotion::kSad)] = {-0.6, 0.0, 1.3, 0.0, 0.0};
  r[static_cast<int>(Emotion::kSurprise)] = {0.2, 0.0, 1.0, 0.0, 1.0};
  return r;
}

void GeneratorConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("generator config: " + what);
  };
  require(vocab_size >= 2, "vocab_size must be >= 2");
  require(n_speakers >= 1, "n_speakers must be >= 1");
  require(min_words >= 1 && min_words <= max_words, "need 1 <= min_words <= max_words");
  require(min_word_phonemes >= 1 && min_word_phonemes <= max_word_phonemes,
          "need 1 <= min_word_phonemes <= max_word_phonemes");
  require(n_mel >= 1, "n_mel must be >= 1");
  require(noise_std >= 0.0, "noise_std must be >= 0");
  require(base_dur_min >= 1.0 && base_dur_min <= base_dur_max, "need 1 <= base_dur_min <= base_dur_max");
  require(n_train >= 0 && n_val >= 0, "split sizes must be non-negative");
  for (const auto& e : emotions) {
    require(e.duration_scale >= 0.5 && e.duration_scale <= 2.0, "duration_scale must lie in [0.5, 2]");
  }
  require(emphasis.pitch_boost > 0.0, "emphasis pitch_boost must be > 0");
  require(emphasis.duration_boost > 1.0, "emphasis duration_boost must be > 1");
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"language_seed", c.language_seed},
                     {"vocab_size", c.vocab_size},
                     {"n_speakers", c.n_speakers},
                     {"min_words", c.min_words},
                     {"max_words", c.max_words},
                     {"min_word_phonemes", c.min_word_phonemes},
                     {"max_word_phonemes", c.max_word_phonemes},
                     {"n_mel", c.n_mel},
                     {"noise_std", c.noise_std},
                     {"base_pitch_spread", c.base_pitch_spread},
                     {"base_dur_min", c.base_dur_min},
                     {"base_dur_max", c.base_dur_max},
                     {"base_energy_spread", c.base_energy_spread},
                     {"speaker_mel_spread", c.speaker_mel_spread},
                     {"texture_amplitude", c.texture_amplitude},
                     {"emphasize", c.emphasize},
                     {"n_train", c.n_train},
                     {"n_val", c.n_val}};
  nlohmann::json rules = nlohmann::json::object();
  for (auto e : kAllEmotions) {
    const auto& r = c.emotions[static_cast<std::size_t>(e)];
    rules[std::string(emotion_name(e))] = {{"pitch_offset", r.pitch_offset},
                                           {"pitch_slope", r.pitch_slope},
                                           {"duration_scale", r.duration_scale},
                                           {"energy_offset", r.energy_offset},
                                           {"end_rise", r.end_rise}};
  }
  j["emotion_rules"] = rules;
  j["emphasis_rule"] = {{"pitch_boost", c.emphasis.pitch_boost},
                        {"duration_boost", c.emphasis.duration_boost},
                        {"energy_boost", c.emphasis.energy_boost}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  const GeneratorConfig d;
  c.seed = j.value("seed", d.seed);
  c.language_seed = j.value("language_seed", d.language_seed);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.n_speakers = j.value("n_speakers", d.n_speakers);
  c.min_words = j.value("min_words", d.min_words);
  c.max_words = j.value("max_words", d.max_words);
  c.min_word_phonemes = j.value("min_word_phonemes", d.min_word_phonemes);
  c.max_word_phonemes = j.value("max_word_phonemes", d.max_word_phonemes);
  c.n_mel = j.value("n_mel", d.n_mel);
  c.noise_std = j.value("noise_std", d.noise_std);
  c.base_pitch_spread = j.value("base_pitch_spread", d.base_pitch_spread);
  c.base_dur_min = j.value("base_dur_min", d.base_dur_min);
  c.base_dur_max = j.value("base_dur_max", d.base_dur_max);
  c.base_energy_spread = j.value("base_energy_spread", d.base_energy_spread);
  c.speaker_mel_spread = j.value("speaker_mel_spread", d.speaker_mel_spread);
  c.texture_amplitude = j.value("texture_amplitude", d.texture_amplitude);
  c.emphasize = j.value("emphasize", d.emphasize);
  c.n_train = j.value("n_train", d.n_train);
  c.n_val = j.value("n_val", d.n_val);
  c.emotions = d.emotions;
  if (j.contains("emotion_rules")) {
    for (auto e : kAllEmotions) {
      const std::string key(emotion_name(e));
      if (!j["emotion_rules"].contains(key)) continue;
      const auto& r = j["emotion_rules"][key];
      auto& dst = c.emotions[static_cast<std::size_t>(e)];
      dst.pitch_offset = r.value("pitch_offset", dst.pitch_offset);
      dst.pitch_slope = r.value("pitch_slope", dst.pitch_slope);
      dst.duration_scale = r.value("duration_scale", dst.duration_scale);
      dst.energy_offset = r.value("energy_offset", dst.energy_offset);
      dst.end_rise = r.value("end_rise", dst.end_rise);
    }
  }
  c.emphasis = d.emphasis;
  if (j.contains("emphasis_rule")) {
    const auto& r = j["emphasis_rule"];
    c.emphasis.pitch_boost = r.value("pitch_boost", d.emphasis.pitch_boost);
    c.emphasis.duration_boost = r.value("duration_boost", d.emphasis.duration_boost);
    c.emphasis.energy_boost = r.value("energy_boost", d.emphasis.energy_boost);
  }
}

LanguageTables LanguageTables::build(const GeneratorConfig& c) {
  c.validate();
  auto rng = stream(c.language_seed, 0, 0x7a61u);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> dur(c.base_dur_min, c.base_dur_max);
  std::normal_distribution<double> gauss(0.0, 0.5);
  LanguageTables t;
  for (int p = 0; p < c.vocab_size; ++p) {
    t.base_pitch.push_back(c.base_pitch_spread * unit(rng));
    t.base_dur.push_back(dur(rng));
    t.base_energy.push_back(c.base_energy_spread * unit(rng));
  }
  const auto rows = static_cast<std::size_t>(c.vocab_size + 2);
  const auto n_mel = static_cast<std::size_t>(c.n_mel);
  t.mel_map.resize(rows * n_mel);
  for (auto& v : t.mel_map) v = gauss(rng);
  t.speaker_mel.resize(static_cast<std::size_t>(c.n_speakers) * n_mel);
  for (auto& v : t.speaker_mel) v = c.speaker_mel_spread * unit(rng);
  std::uniform_real_distribution<double> freq(0.05, 0.6);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (std::size_t k = 0; k < n_mel; ++k) {
    t.texture_freq.push_back(freq(rng));
    t.texture_phase.push_back(phase(rng));
  }
  return t;
}

TensorF render_mel(const GeneratorConfig& c, const LanguageTables& tables, const PhonemeSequence& phonemes,
                   int speaker, const ProsodyTargets& targets) {
  const auto n_mel = static_cast<std::size_t>(c.n_mel);
  const auto vocab = static_cast<std::size_t>(c.vocab_size);
  const int frames = targets.total_frames();
  TensorF mel({static_cast<std::size_t>(frames), n_mel});
  std::size_t f = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto ph = static_cast<std::size_t>(phonemes.ids[i]);
    for (int k = 0; k < targets.duration[i]; ++k, ++f) {
      for (std::size_t m = 0; m < n_mel; ++m) {
        double v = tables.mel_map[ph * n_mel + m] + tables.mel_map[vocab * n_mel + m] * targets.pitch[i] +
                   tables.mel_map[(vocab + 1) * n_mel + m] * targets.energy[i] +
                   tables.speaker_mel[static_cast<std::size_t>(speaker) * n_mel + m] +
                   c.texture_amplitude * std::sin(tables.texture_freq[m] * static_cast<double>(f) +
                                                  tables.texture_phase[m]);
        mel.at(f, m) = static_cast<float>(v);
      }
    }
  }
  return mel;
}

Utterance generate_utterance(const GeneratorConfig& c, const LanguageTables& tables, int id) {
  if (id < 0) throw std::invalid_argument("utterance id must be non-negative");
  auto rng = stream(c.seed, static_cast<std::uint64_t>(id), 0x5eedu);
  std::uniform_int_distribution<int> n_words_d(c.min_words, c.max_words);
  std::uniform_int_distribution<int> word_len_d(c.min_word_phonemes, c.max_word_phonemes);
  std::uniform_int_distribution<int> phoneme_d(0, c.vocab_size - 1);
  std::uniform_int_distribution<int> speaker_d(0, c.n_speakers - 1);
  std::normal_distribution<double> noise(0.0, 1.0);

  Utterance u;
  u.id = id;
  u.emotion = static_cast<Emotion>(id % kNumEmotions);
  u.speaker = speaker_d(rng);
  const int n_words = n_words_d(rng);
  int pos = 0;
  for (int w = 0; w < n_words; ++w) {
    const int len = word_len_d(rng);
    u.phonemes.words.push_back({pos, pos + len - 1});
    for (int k = 0; k < len; ++k) u.phonemes.ids.push_back(phoneme_d(rng));
    pos += len;
  }
  if (c.emphasize) {
    std::uniform_int_distribution<int> word_d(0, n_words - 1);
    u.span = span_for_word(u.phonemes, word_d(rng));
  }

  const auto& rule = c.emotions[static_cast<std::size_t>(u.emotion)];
  const auto& last = u.phonemes.words.back();
  const int n = u.phonemes.length();
  for (int i = 0; i < n; ++i) {
    const auto ph = static_cast<std::size_t>(u.phonemes.ids[static_cast<std::size_t>(i)]);
    const bool in_span = u.span && i >= u.span->start && i <= u.span->end;
    double pitch = tables.base_pitch[ph] + rule.pitch_offset + rule.pitch_slope * i;
    if (i >= last.start) pitch += rule.end_rise * static_cast<double>(i - last.start + 1) / last.length();
    if (in_span) pitch += c.emphasis.pitch_boost;
    double energy = tables.base_energy[ph] + rule.energy_offset;
    if (in_span) energy += c.emphasis.energy_boost;
    // Noise draws happen unconditionally so the stream layout does not depend on noise_std.
    const double np = noise(rng), ne = noise(rng);
    pitch += c.noise_std * np;
    energy += c.noise_std * ne;
    double dur = tables.base_dur[ph] * rule.duration_scale * (in_span ? c.emphasis.duration_boost : 1.0);
    u.targets.pitch.push_back(pitch);
    u.targets.energy.push_back(energy);
    u.targets.duration.push_back(std::max(1, static_cast<int>(std::lround(dur))));
  }
  u.mel = render_mel(c, tables, u.phonemes, u.speaker, u.targets);
  return u;
}

std::vector<RawVariance> collect_raw_variances(const std::vector<Utterance>& utts) {
  std::vector<RawVariance> out;
  for (const auto& u : utts) {
    if (u.span) out.push_back(raw_variance(u.targets, *u.span));
  }
  return out;
}

Corpus generate_corpus(const GeneratorConfig& config) {
  if (config.n_train <= 0 || config.n_val <= 0) throw std::invalid_argument("n_train and n_val must be > 0");
  const auto tables = LanguageTables::build(config);
  Corpus corpus;
  corpus.manifest.config = config;
  for (int id = 0; id < config.n_train + config.n_val; ++id) {
    auto u = generate_utterance(config, tables, id);
    if (id < config.n_train) {
      corpus.manifest.train_ids.push_back(id);
      corpus.train.push_back(std::move(u));
    } else {
      corpus.manifest.val_ids.push_back(id);
      corpus.val.push_back(std::move(u));
    }
  }
  if (config.emphasize) corpus.manifest.stats = fit_normalization_stats(collect_raw_variances(corpus.train));
  return corpus;
}

void write_utterance(std::ostream& os, const Utterance& u) {
  nlohmann::json j;
  j["id"] = u.id;
  j["speaker"] = u.speaker;
  j["emotion"] = emotion_name(u.emotion);
  j["phonemes"] = u.phonemes.ids;
  nlohmann::json words = nlohmann::json::array();
  for (const auto& w : u.phonemes.words) words.push_back({w.start, w.end});
  j["words"] = words;
  if (u.span) {
    j["span"] = {{"word", u.span->word_index}, {"start", u.span->start}, {"end", u.span->end}};
  } else {
    j["span"] = nullptr;
  }
  j["pitch"] = u.targets.pitch;
  j["energy"] = u.targets.energy;
  j["duration"] = u.targets.duration;
  os << j.dump() << '\n';
  write_tensor(os, u.mel);
}

Utterance read_utterance(std::istream& is, const std::string& context) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError(context + ": corrupt header (missing record line)");
  Utterance u;
  try {
    auto j = nlohmann::json::parse(line);
    u.id = j.at("id").get<int>();
    u.speaker = j.at("speaker").get<int>();
    u.emotion = parse_emotion(j.at("emotion").get<std::string>());
    u.phonemes.ids = j.at("phonemes").get<std::vector<int>>();
    for (const auto& w : j.at("words")) u.phonemes.words.push_back({w.at(0).get<int>(), w.at(1).get<int>()});
    if (!j.at("span").is_null()) {
      const auto& s = j["span"];
      u.span = EmphasisSpan{s.at("word").get<int>(), s.at("start").get<int>(), s.at("end").get<int>()};
    }
    u.targets.pitch = j.at("pitch").get<std::vector<double>>();
    u.targets.energy = j.at("energy").get<std::vector<double>>();
    u.targets.duration = j.at("duration").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(context + ": corrupt header (" + e.what() + ")");
  } catch (const std::invalid_argument& e) {
    throw FormatError(context + ": corrupt header (" + e.what() + ")");
  }
  u.mel = read_tensor(is, context);
  if (u.mel.rank() != 2 || static_cast<int>(u.mel.dim(0)) != u.targets.total_frames()) {
    throw FormatError(context + ": corrupt header (mel frames disagree with durations)");
  }
  return u;
}

nlohmann::json manifest_to_json(const CorpusManifest& m) {
  nlohmann::json j;
  j["schema_version"] = m.schema_version;
  j["config"] = m.config;
  j["seed"] = m.config.seed;
  j["n_train"] = m.train_ids.size();
  j["n_val"] = m.val_ids.size();
  j["stats"] = m.stats;
  j["train_ids"] = m.train_ids;
  j["val_ids"] = m.val_ids;
  return j;
}

namespace {

std::filesystem::path record_path(const std::filesystem::path& dir, const char* split, int id) {
  std::ostringstream name;
  name << std::setw(6) << std::setfill('0') << id << ".utt";
  return dir / split / name.str();
}

void write_split(const std::filesystem::path& dir, const char* split, const std::vector<Utterance>& utts) {
  std::filesystem::create_directories(dir / split);
  for (const auto& u : utts) {
    const auto path = record_path(dir, split, u.id);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
    write_utterance(os, u);
    if (!os) throw std::runtime_error(path.string() + ": write failed");
  }
}

std::vector<Utterance> read_split(const std::filesystem::path& dir, const char* split, const std::vector<int>& ids) {
  std::vector<Utterance> out;
  out.reserve(ids.size());
  for (int id : ids) {
    const auto path = record_path(dir, split, id);
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error(path.string() + ": cannot open for reading");
    out.push_back(read_utterance(is, path.string()));
    if (out.back().id != id) throw FormatError(path.string() + ": corrupt header (id mismatch)");
  }
  return out;
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_split(dir, "train", corpus.train);
  write_split(dir, "val", corpus.val);
  const auto path = dir / "manifest.json";
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  os << manifest_to_json(corpus.manifest).dump(2) << '\n';
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}

CorpusManifest load_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream is(path);
  if (!is) throw std::runtime_error(path.string() + ": cannot open for reading");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": corrupt header (" + e.what() + ")");
  }
  const int version = j.value("schema_version", -1);
  if (version != kCorpusSchemaVersion) {
    throw FormatError(path.string() + ": unsupported schema version " + std::to_string(version) + " (expected " +
                      std::to_string(kCorpusSchemaVersion) + ")");
  }
  CorpusManifest m;
  try {
    m.config = j.at("config").get<GeneratorConfig>();
    m.stats = j.at("stats").get<NormalizationStats>();
    m.train_ids = j.at("train_ids").get<std::vector<int>>();
    m.val_ids = j.at("val_ids").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": corrupt header (" + e.what() + ")");
  }
  return m;
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus c;
  c.manifest = load_manifest(dir);
  c.train = read_split(dir, "train", c.manifest.train_ids);
  c.val = read_split(dir, "val", c.manifest.val_ids);
  return c;
}

}  // namespace emetts
