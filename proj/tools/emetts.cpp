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

// emetts: corpus generation, training, synthesis, gradient checks and
// emphasis evaluation from the command line.
//
// Exit codes: 0 success, 2 configuration error, 3 input error,
// 4 a check or threshold failed.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "emetts/corpus/corpus.hpp"
#include "emetts/evaluation/evaluation.hpp"
#include "emetts/model/model.hpp"
#include "emetts/numerics/tensor_io.hpp"
#include "emetts/training/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace emetts::cli {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInput = 3;
constexpr int kExitThreshold = 4;

/// Failure carrying its exit code.
struct CliError : std::runtime_error {
  CliError(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

[[noreturn]] void config_error(const std::string& m) { throw CliError(kExitConfig, m); }
[[noreturn]] void input_error(const std::string& m) { throw CliError(kExitInput, m); }

/// Runs `f`, rethrowing any library exception as a CliError with `code`.
template <typename F>
auto classify(int code, const std::string& what, F&& f) {
  try {
    return f();
  } catch (const CliError&) {
    throw;
  } catch (const std::exception& e) {
    throw CliError(code, what + ": " + e.what());
  }
}

json read_json_file(const std::string& path, int code) {
  std::ifstream is(path);
  if (!is) throw CliError(code, path + ": cannot open");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw CliError(code, path + ": invalid JSON (" + e.what() + ")");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) config_error(path.string() + ": cannot open for writing");
  os << text;
  if (!os) config_error(path.string() + ": write failed");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void prepare_out_dir(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_directory(dir, ec)) config_error(dir.string() + ": exists and is not a directory");
  if (fs::exists(dir, ec) && !fs::is_empty(dir, ec) && !force) {
    config_error(dir.string() + ": directory is not empty (use --force to overwrite)");
  }
  if (fs::exists(dir, ec) && force) {
    for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path(), ec);
  }
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) config_error(dir.string() + ": cannot create directory (" + ec.message() + ")");
  const auto probe = dir / ".write-probe";
  {
    std::ofstream os(probe);
    if (!os) config_error(dir.string() + ": not writable");
  }
  fs::remove(probe, ec);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) config_error(dir.string() + ": cannot create directory");
}

/// A model directory (model.json), a training checkpoint, or a training output directory.
AcousticModel load_model(const fs::path& path) {
  fs::path dir;
  for (const auto& candidate : {path, path / "model", path / "checkpoint" / "model"}) {
    if (fs::exists(candidate / "model.json")) {
      dir = candidate;
      break;
    }
  }
  if (dir.empty()) input_error(path.string() + ": no model.json found");
  return classify(kExitInput, "checkpoint", [&] { return AcousticModel::load(dir); });
}

Corpus load_corpus_dir(const fs::path& dir) {
  return classify(kExitInput, "corpus", [&] { return load_corpus(dir); });
}

// ---------------------------------------------------------------------------
// gen-corpus

struct GenCorpusArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

int cmd_gen_corpus(const GenCorpusArgs& a) {
  GeneratorConfig config;
  if (!a.config.empty()) {
    const auto j = read_json_file(a.config, kExitConfig);
    config = classify(kExitConfig, a.config, [&] { return j.get<GeneratorConfig>(); });
  }
  if (a.seed) config.seed = *a.seed;
  classify(kExitConfig, "generator config", [&] {
    config.validate();
    return 0;
  });
  prepare_out_dir(a.out, a.force);
  const auto corpus = classify(kExitConfig, "generate", [&] { return generate_corpus(config); });
  classify(kExitConfig, "write corpus", [&] {
    write_corpus(corpus, a.out);
    return 0;
  });
  write_json(fs::path(a.out) / "effective-config.json", json{{"generator", config}});

  std::array<int, kNumEmotions> per_emotion{};
  for (const auto& u : corpus.train) per_emotion[static_cast<std::size_t>(u.emotion)] += 1;
  const auto& s = corpus.manifest.stats;
  std::cout << "corpus written to " << a.out << "\n"
            << "  train " << corpus.train.size() << ", val " << corpus.val.size() << ", seed " << config.seed << "\n"
            << "  stats pitch p5/p95 " << s.pitch_p5 << " / " << s.pitch_p95 << ", duration p5/p95 " << s.dur_p5
            << " / " << s.dur_p95 << "\n  train per emotion:";
  for (Emotion e : kAllEmotions) std::cout << " " << emotion_name(e) << "=" << per_emotion[static_cast<std::size_t>(e)];
  std::cout << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string ckpt;
  std::string phonemes;
  std::string emotion = "neutral";
  int speaker = 0;
  std::string emphasis = "none";
  double emphasis_scale = 1.0;
  bool no_ea = false;
  bool no_heatmap = false;
  std::string out;
};

/// "3 5 7 | 2 9": words separated by '|', phonemes by spaces or commas.
PhonemeSequence parse_phonemes(const std::string& text) {
  PhonemeSequence seq;
  std::stringstream words(text);
  std::string word;
  while (std::getline(words, word, '|')) {
    std::replace(word.begin(), word.end(), ',', ' ');
    std::istringstream is(word);
    const int start = seq.length();
    std::string tok;
    while (is >> tok) {
      std::size_t used = 0;
      int id = 0;
      try {
        id = std::stoi(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) input_error("phonemes: '" + tok + "' is not an integer id");
      seq.ids.push_back(id);
    }
    if (seq.length() == start) input_error("phonemes: empty word in '" + text + "'");
    seq.words.push_back({start, seq.length() - 1});
  }
  if (seq.ids.empty()) input_error("phonemes: empty sequence");
  return seq;
}

/// Longest word by phoneme count, earliest on ties.
EmphasisSpan auto_span(const PhonemeSequence& seq) {
  int best = 0;
  for (int w = 1; w < static_cast<int>(seq.words.size()); ++w) {
    if (seq.words[static_cast<std::size_t>(w)].length() > seq.words[static_cast<std::size_t>(best)].length()) best = w;
  }
  return span_for_word(seq, best);
}

std::optional<EmphasisSpan> parse_emphasis(const std::string& spec, const PhonemeSequence& seq) {
  if (spec == "none") return std::nullopt;
  if (spec == "auto") return auto_span(seq);
  const auto colon = spec.find(':');
  if (colon == std::string::npos) config_error("--emphasis: expected start:end, auto or none, got '" + spec + "'");
  int start = 0, end = 0;
  try {
    std::size_t u1 = 0, u2 = 0;
    start = std::stoi(spec.substr(0, colon), &u1);
    end = std::stoi(spec.substr(colon + 1), &u2);
    if (u1 != colon || u2 != spec.size() - colon - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    config_error("--emphasis: cannot parse '" + spec + "'");
  }
  if (start < 0 || end >= seq.length() || start > end) {
    input_error("--emphasis " + spec + " lies outside the " + std::to_string(seq.length()) + "-phoneme sequence");
  }
  for (std::size_t w = 0; w < seq.words.size(); ++w) {
    if (seq.words[w].start == start && seq.words[w].end == end) return EmphasisSpan{static_cast<int>(w), start, end};
  }
  input_error("--emphasis " + spec + " does not match a word boundary");
}

/// Plain (P2) graymap: time left to right, low mel bins at the bottom.
std::string mel_pgm(const TensorF& mel) {
  float lo = mel[0], hi = mel[0];
  for (float v : mel.storage()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float range = hi > lo ? hi - lo : 1.0f;
  std::ostringstream os;
  os << "P2\n" << mel.rows() << " " << mel.cols() << "\n255\n";
  for (std::size_t b = mel.cols(); b-- > 0;) {
    for (std::size_t t = 0; t < mel.rows(); ++t) {
      os << (t ? " " : "") << static_cast<int>(std::lround(255.0f * (mel.at(t, b) - lo) / range));
    }
    os << "\n";
  }
  return os.str();
}

int cmd_synth(const SynthArgs& a) {
  const auto seq = parse_phonemes(a.phonemes);
  const auto span = parse_emphasis(a.emphasis, seq);
  const Emotion emotion = classify(kExitConfig, "--emotion", [&] { return parse_emotion(a.emotion); });
  const auto model = load_model(a.ckpt);
  const auto& mc = model.config();
  for (int id : seq.ids) {
    if (id < 0 || id >= mc.vocab_size) {
      input_error("phoneme id " + std::to_string(id) + " outside vocabulary of " + std::to_string(mc.vocab_size));
    }
  }
  if (a.speaker < 0 || a.speaker >= mc.n_speakers) {
    input_error("--speaker " + std::to_string(a.speaker) + " outside [0, " + std::to_string(mc.n_speakers) + ")");
  }
  ensure_dir(a.out);
  const SynthesisOptions opts{a.emphasis_scale, !a.no_ea};
  const auto r = classify(kExitInput, "synthesis",
                          [&] { return synthesize(model, seq, static_cast<int>(emotion), a.speaker, span, opts); });

  const fs::path out(a.out);
  classify(kExitConfig, "write", [&] {
    save_tensor(out / "mel.tensor", r.mel);
    return 0;
  });
  json words = json::array();
  for (const auto& w : seq.words) words.push_back({w.start, w.end});
  json prosody = {{"phonemes", seq.ids},
                  {"words", words},
                  {"emotion", emotion_name(emotion)},
                  {"speaker", a.speaker},
                  {"span", span ? json{{"word", span->word_index}, {"start", span->start}, {"end", span->end}}
                                : json(nullptr)},
                  {"pitch", r.pitch},
                  {"energy", r.energy},
                  {"durations", r.durations},
                  {"pitch_var", r.pitch_var},
                  {"dur_var", r.dur_var},
                  {"frames", r.mel.rows()}};
  write_json(out / "prosody.json", prosody);
  if (!a.no_heatmap) write_text(out / "mel.pgm", mel_pgm(r.mel));
  write_json(out / "effective-config.json",
             {{"ckpt", a.ckpt},
              {"phonemes", a.phonemes},
              {"emotion", emotion_name(emotion)},
              {"speaker", a.speaker},
              {"emphasis", a.emphasis},
              {"emphasis_scale", a.emphasis_scale},
              {"ea_enabled", !a.no_ea},
              {"model", mc}});

  std::cout << "frames " << r.mel.rows() << ", span "
            << (span ? std::to_string(span->start) + ":" + std::to_string(span->end) : std::string("none")) << "\n";
  std::cout << std::setw(6) << "phon" << std::setw(6) << "id" << std::setw(10) << "pitch" << std::setw(10) << "energy"
            << std::setw(6) << "dur" << "\n"
            << std::fixed << std::setprecision(3);
  for (int i = 0; i < seq.length(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    std::cout << std::setw(6) << i << std::setw(6) << seq.ids[k] << std::setw(10) << r.pitch[k] << std::setw(10)
              << r.energy[k] << std::setw(6) << r.durations[k] << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// grad-check

struct GradCheckArgs {
  int seeds = 1;
  std::uint64_t first_seed = 0;
  double epsilon = kBlockGradEpsilon;
  double tolerance = 1e-4;
  std::string model_config;
  std::string out;
};

int cmd_grad_check(const GradCheckArgs& a) {
  ModelConfig config = gradient_check_config();
  if (!a.model_config.empty()) {
    const auto j = read_json_file(a.model_config, kExitConfig);
    config = classify(kExitConfig, a.model_config, [&] { return j.get<ModelConfig>(); });
  }
  classify(kExitConfig, "model config", [&] {
    config.validate();
    return 0;
  });
  if (a.seeds <= 0) config_error("--seeds must be > 0");
  if (!(a.epsilon >= 1e-6 && a.epsilon <= 1e-4)) config_error("--epsilon must lie in [1e-6, 1e-4]");

  std::map<std::string, double> worst;
  std::vector<std::string> order;
  json runs = json::array();
  bool pass = true;
  for (int s = 0; s < a.seeds; ++s) {
    const std::uint64_t seed = a.first_seed + static_cast<std::uint64_t>(s);
    const auto reports = check_block_gradients(config, seed, a.epsilon, a.tolerance);
    json blocks = json::object();
    for (const auto& r : reports) {
      if (!worst.count(r.block)) order.push_back(r.block);
      worst[r.block] = std::max(worst[r.block], r.report.max_rel_error);
      pass = pass && r.report.pass;
      blocks[r.block] = {{"max_rel_error", r.report.max_rel_error}, {"pass", r.report.pass}};
      if (!r.report.failure.empty()) blocks[r.block]["failure"] = r.report.failure;
    }
    runs.push_back({{"seed", seed}, {"blocks", blocks}});
  }
  double overall = 0.0;
  std::cout << std::left << std::setw(24) << "block" << std::right << std::setw(14) << "max rel err" << "\n";
  for (const auto& b : order) {
    overall = std::max(overall, worst[b]);
    std::cout << std::left << std::setw(24) << b << std::right << std::setw(14) << std::scientific
              << std::setprecision(3) << worst[b] << "\n";
  }
  std::cout << "seeds " << a.seeds << ", epsilon " << a.epsilon << ", tolerance " << a.tolerance << ": "
            << (pass ? "PASS" : "FAIL") << " (max " << overall << ")\n";
  if (!a.out.empty()) {
    ensure_dir(a.out);
    write_json(fs::path(a.out) / "grad-check.json", {{"epsilon", a.epsilon},
                                                     {"tolerance", a.tolerance},
                                                     {"max_rel_error", overall},
                                                     {"pass", pass},
                                                     {"model", config},
                                                     {"runs", runs}});
  }
  return pass ? kExitOk : kExitThreshold;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string corpus;
  std::string model_config;
  std::string train_config;
  std::string out;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  int log_every = 100;
};

int cmd_train(const TrainArgs& a) {
  ModelConfig mc;
  TrainConfig tc;
  if (!a.model_config.empty()) {
    const auto j = read_json_file(a.model_config, kExitConfig);
    mc = classify(kExitConfig, a.model_config, [&] { return j.get<ModelConfig>(); });
  }
  if (!a.train_config.empty()) {
    const auto j = read_json_file(a.train_config, kExitConfig);
    tc = classify(kExitConfig, a.train_config, [&] { return j.get<TrainConfig>(); });
  }
  if (a.steps) tc.steps = *a.steps;
  if (a.seed) tc.seed = *a.seed;
  classify(kExitConfig, "config", [&] {
    mc.validate();
    tc.validate();
    return 0;
  });
  const auto corpus = load_corpus_dir(a.corpus);
  classify(kExitConfig, "model/corpus", [&] {
    check_model_corpus_compatibility(mc, corpus.manifest.config);
    return 0;
  });
  ensure_dir(a.out);
  write_json(fs::path(a.out) / "effective-config.json", {{"corpus", a.corpus}, {"model", mc}, {"train", tc}});

  TrainHooks hooks;
  hooks.on_step = [&](std::int64_t step, const LossBreakdown& l) {
    if (a.log_every > 0 && (step % a.log_every == 0 || step == tc.steps)) {
      std::cout << "step " << step << "  total " << l.total << "  mel " << l.mel << "  pitch " << l.pitch << "  dur "
                << l.dur << "\n"
                << std::flush;
    }
  };
  hooks.on_validation = [](std::int64_t step, double v) {
    std::cout << "validation step " << step << "  mel mse " << v << "\n" << std::flush;
  };
  TrainResult r;
  try {
    r = train(corpus, mc, tc, a.out, a.resume, hooks);
  } catch (const TrainingError& e) {
    throw CliError(kExitThreshold, e.what());
  } catch (const std::invalid_argument& e) {
    throw CliError(kExitConfig, e.what());
  } catch (const FormatError& e) {
    throw CliError(kExitInput, e.what());
  }
  std::cout << "trained " << r.steps_run << " steps (now at " << r.final_step << "); validation mel mse "
            << r.initial_val_mel << " -> " << r.final_val_mel << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval-emphasis

struct EvalArgs {
  std::string ckpt;
  std::string corpus;
  std::string split = "val";
  bool no_ea = false;
  double emphasis_scale = 1.0;
  double min_mean = 0.85;
  double min_per_emotion = 0.70;
  std::string out;
};

int cmd_eval_emphasis(const EvalArgs& a) {
  if (a.split != "val" && a.split != "train") config_error("--split must be val or train");
  const auto model = load_model(a.ckpt);
  const auto corpus = load_corpus_dir(a.corpus);
  classify(kExitInput, "checkpoint/corpus mismatch", [&] {
    check_checkpoint_corpus(model, corpus.manifest);
    return 0;
  });
  const auto& utts = a.split == "val" ? corpus.val : corpus.train;
  const auto report =
      classify(kExitInput, "evaluation", [&] { return evaluate_emphasis(model, utts, !a.no_ea, a.emphasis_scale); });
  double worst = 1.0;
  for (const auto& c : report.per_emotion) {
    if (c.n > 0) worst = std::min(worst, c.accuracy());
  }
  const bool pass = report.mean_accuracy() >= a.min_mean && worst >= a.min_per_emotion;
  json j = report;
  j["split"] = a.split;
  j["thresholds"] = {{"mean", a.min_mean}, {"per_emotion", a.min_per_emotion}};
  j["pass"] = pass;
  std::cout << format_emphasis_table({{a.no_ea ? "emetts (EA off)" : "emetts", report}});
  std::cout << "n " << report.total() << ", thresholds mean >= " << a.min_mean << ", per emotion >= "
            << a.min_per_emotion << ": " << (pass ? "PASS" : "FAIL") << "\n";
  std::cout << j.dump() << "\n";
  if (!a.out.empty()) {
    ensure_dir(a.out);
    write_json(fs::path(a.out) / "eval-emphasis.json", j);
  }
  return pass ? kExitOk : kExitThreshold;
}

// ---------------------------------------------------------------------------
// eval-separation

struct SeparationArgs {
  std::string ckpt;
  std::string corpus;
  int texts = 40;
  int speaker = 0;
  std::string out;
};

int cmd_eval_separation(const SeparationArgs& a) {
  const auto model = load_model(a.ckpt);
  const auto corpus = load_corpus_dir(a.corpus);
  classify(kExitInput, "checkpoint/corpus mismatch", [&] {
    check_checkpoint_corpus(model, corpus.manifest);
    return 0;
  });
  if (a.speaker < 0 || a.speaker >= model.config().n_speakers) config_error("--speaker outside the model's range");
  const auto texts = classify(kExitConfig, "--texts", [&] { return separation_texts(corpus.val, a.texts); });
  const auto r = classify(kExitConfig, "separation", [&] { return evaluate_emotion_separation(model, texts, a.speaker); });
  std::cout << std::left << std::setw(10) << "" << std::right;
  for (Emotion e : kAllEmotions) std::cout << std::setw(10) << emotion_name(e);
  std::cout << "\n" << std::fixed << std::setprecision(4);
  for (Emotion e : kAllEmotions) {
    std::cout << std::left << std::setw(10) << emotion_name(e) << std::right;
    for (double d : r.distance[static_cast<std::size_t>(e)]) std::cout << std::setw(10) << d;
    std::cout << "\n";
  }
  std::cout << std::left << std::setw(10) << "pitch" << std::right;
  for (double p : r.mean_pitch) std::cout << std::setw(10) << p;
  std::cout << "\nrepeat distance " << r.repeat_distance << ", pitch order angry > happy > neutral > sad: "
            << (r.pitch_order_matches_rules() ? "yes" : "no") << "\n";
  const bool pass = r.pitch_order_matches_rules() && r.repeat_distance == 0.0;
  if (!a.out.empty()) {
    ensure_dir(a.out);
    json j = r;
    j["pass"] = pass;
    write_json(fs::path(a.out) / "eval-separation.json", j);
  }
  return pass ? kExitOk : kExitThreshold;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Emphasis- and emotion-conditioned acoustic model toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  GenCorpusArgs gen;
  auto* g = app.add_subcommand("gen-corpus", "Generate a synthetic corpus");
  g->add_option("--config", gen.config, "Generator config JSON (missing keys use defaults)");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Override the generator seed");
  g->add_flag("--force", gen.force, "Overwrite a non-empty output directory");

  SynthArgs syn;
  auto* s = app.add_subcommand("synth", "Synthesize mel and prosody for one phoneme sequence");
  s->add_option("--ckpt", syn.ckpt, "Model, checkpoint or training output directory")->required();
  s->add_option("--phonemes", syn.phonemes, "Phoneme ids; words separated by '|', e.g. \"3 5|7 1 2\"")->required();
  s->add_option("--emotion", syn.emotion, "neutral, angry, happy, sad, surprise, or 0-4");
  s->add_option("--speaker", syn.speaker, "Speaker index");
  s->add_option("--emphasis", syn.emphasis, "start:end (inclusive phoneme range of one word), auto, or none");
  s->add_option("--emphasis-scale", syn.emphasis_scale, "Multiplier on the variance-predictor contributions");
  s->add_flag("--no-ea", syn.no_ea, "Disable the emphasis adapter in attention");
  s->add_flag("--no-heatmap", syn.no_heatmap, "Skip the mel.pgm heatmap");
  s->add_option("--out", syn.out, "Output directory")->required();

  GradCheckArgs gc;
  auto* c = app.add_subcommand("grad-check", "Finite-difference check of every block in 64-bit arithmetic");
  c->add_option("--seeds", gc.seeds, "Number of random seeds");
  c->add_option("--first-seed", gc.first_seed, "First seed");
  c->add_option("--epsilon", gc.epsilon, "Central-difference step, within [1e-6, 1e-4]");
  c->add_option("--tolerance", gc.tolerance, "Maximum relative error");
  c->add_option("--model-config", gc.model_config, "Model config JSON (default: narrow check layout)");
  c->add_option("--out", gc.out, "Directory for grad-check.json");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a corpus");
  t->add_option("--corpus", tr.corpus, "Corpus directory")->required();
  t->add_option("--model-config", tr.model_config, "Model config JSON (missing keys use defaults)");
  t->add_option("--train-config", tr.train_config, "Train config JSON (missing keys use defaults)");
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--steps", tr.steps, "Override the number of steps");
  t->add_option("--seed", tr.seed, "Override the training seed");
  t->add_flag("--resume", tr.resume, "Continue from <out>/checkpoint if present");
  t->add_option("--log-every", tr.log_every, "Print losses every N steps (0: never)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval-emphasis", "Emphasis-recognition accuracy with the prominence oracle");
  e->add_option("--ckpt", ev.ckpt, "Model, checkpoint or training output directory")->required();
  e->add_option("--corpus", ev.corpus, "Corpus directory")->required();
  e->add_option("--split", ev.split, "val or train");
  e->add_flag("--no-ea", ev.no_ea, "Disable the emphasis adapter at inference");
  e->add_option("--emphasis-scale", ev.emphasis_scale, "Multiplier on the variance-predictor contributions");
  e->add_option("--min-mean", ev.min_mean, "Required mean accuracy");
  e->add_option("--min-per-emotion", ev.min_per_emotion, "Required accuracy for every emotion");
  e->add_option("--out", ev.out, "Directory for eval-emphasis.json");

  SeparationArgs sp;
  auto* p = app.add_subcommand("eval-separation", "Pairwise emotion distances and per-emotion pitch");
  p->add_option("--ckpt", sp.ckpt, "Model, checkpoint or training output directory")->required();
  p->add_option("--corpus", sp.corpus, "Corpus directory (validation texts are used)")->required();
  p->add_option("--texts", sp.texts, "Number of validation texts (at least 20)");
  p->add_option("--speaker", sp.speaker, "Speaker index");
  p->add_option("--out", sp.out, "Directory for eval-separation.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitConfig;
  }

  try {
    if (g->parsed()) return cmd_gen_corpus(gen);
    if (s->parsed()) return cmd_synth(syn);
    if (c->parsed()) return cmd_grad_check(gc);
    if (t->parsed()) return cmd_train(tr);
    if (e->parsed()) return cmd_eval_emphasis(ev);
    if (p->parsed()) return cmd_eval_separation(sp);
  } catch (const CliError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return err.code;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace emetts::cli

int main(int argc, char** argv) { return emetts::cli::run(argc, argv); }
