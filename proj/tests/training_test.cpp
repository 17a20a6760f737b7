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

#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "emetts/numerics/ops.hpp"
#include "emetts/training/training.hpp"
#include "test_util.hpp"

namespace emetts {
namespace {

using testing::TempDir;

TensorD col(std::initializer_list<double> v) { return TensorD({v.size(), 1}, std::vector<double>(v)); }

struct Fixture {
  Tape<double> tape{true};
  LossInputs<double> pred;
  ProsodyTargets targets;
  VarianceFeatures features;
  TensorF mel_target;
  EmphasisMask mask;
  NormalizationStats stats{0.0, 1.0, 0.0, 2.0};  // dur_unit = 1

  /// T = 2, span on position 1.
  Fixture() {
    pred.pitch = tape.variable(col({1.0, 1.0}));
    pred.pitch_var = tape.variable(col({0.0, 0.0}));
    pred.dur = tape.variable(col({2.0, 3.0}));
    pred.dur_var = tape.variable(col({0.0, 0.5}));
    pred.energy = tape.variable(col({0.5, -0.5}));
    pred.mel = tape.variable(TensorD({3, 2}, {1, 2, 3, 4, 5, 6}));
    targets.pitch = {1.0, 3.0};
    targets.energy = {0.5, 0.5};
    targets.duration = {2, 4};
    features.pitch_track = {0.0, 1.0};
    features.dur_track = {0.0, 0.5};
    features.has_span = true;
    mel_target = TensorF({3, 2}, {1, 2, 3, 4, 5, 8});
    mask = make_phoneme_mask(2, EmphasisSpan{1, 1, 1});
  }

  LossTerms<double> losses(const LossWeights& w = {}, double reg = 1e-4) {
    return compute_losses(tape, pred, targets, features, mel_target, mask, stats, w, reg);
  }
};

TEST_CASE("losses: hand oracles") {
  Fixture f;
  const auto l = f.losses().values();
  CHECK(l.pitch == doctest::Approx(2.0).epsilon(1e-9));        // (0^2 + 2^2) / 2
  CHECK(l.pitch_var == doctest::Approx(0.5).epsilon(1e-9));    // (0 + 1) / 2
  CHECK(l.dur == doctest::Approx(0.125).epsilon(1e-9));        // eff [2, 3.5] vs [2, 4]
  CHECK(l.dur_var == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(l.energy == doctest::Approx(0.5).epsilon(1e-9));       // (0 + 1) / 2
  CHECK(l.mel == doctest::Approx(4.0 / 6.0).epsilon(1e-9));
  CHECK(l.reg == doctest::Approx(1e-4 * 0.25).epsilon(1e-9));  // one span position, 0^2 + 0.5^2
  CHECK(l.total == doctest::Approx(2.0 + 0.5 + 0.125 + 0.5 + 4.0 / 6.0 + 0.25e-4).epsilon(1e-9));
}

TEST_CASE("losses: zero when predictions equal targets") {
  Fixture f;
  f.pred.pitch = f.tape.variable(col({1.0, 2.0}));
  f.pred.pitch_var = f.tape.variable(col({0.0, 1.0}));
  CHECK(f.losses().values().pitch == 0.0);
  CHECK(f.losses().values().pitch_var == 0.0);
}

TEST_CASE("losses: weighted decomposition") {
  Fixture f;
  const LossWeights w{0.3, 1.7, 0.2, 2.5, 0.9, 0.1};
  const auto l = f.losses(w, 0.01).values();
  CHECK(std::abs(l.total - l.weighted_sum(w)) <= 1e-12);
  for (double v : {l.mel, l.pitch, l.pitch_var, l.dur, l.dur_var, l.energy, l.reg}) CHECK(v >= 0.0);
}

TEST_CASE("losses: perturbing P or PV inside the span is symmetric in L_P") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    const double delta = g(rng);
    Fixture a, b;
    a.pred.pitch = a.tape.variable(col({1.0, 1.0 + delta}));
    b.pred.pitch_var = b.tape.variable(col({0.0, delta}));
    CHECK(a.losses().values().pitch == doctest::Approx(b.losses().values().pitch).epsilon(1e-12));
  }
}

TEST_CASE("losses: no span with masked predictions gives zero variance losses") {
  Fixture f;
  f.mask = make_phoneme_mask(2, std::nullopt);
  f.features = VarianceFeatures{};
  f.features.pitch_track = {0.0, 0.0};
  f.features.dur_track = {0.0, 0.0};
  f.pred.pitch_var = f.tape.variable(col({0.0, 0.0}));
  f.pred.dur_var = f.tape.variable(col({0.0, 0.0}));
  const auto l = f.losses().values();
  CHECK(l.pitch_var == 0.0);
  CHECK(l.dur_var == 0.0);
  CHECK(l.reg == 0.0);
}

TEST_CASE("losses: non-finite term is named") {
  Fixture f;
  f.targets.energy[1] = std::numeric_limits<double>::quiet_NaN();
  try {
    f.losses();
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("'energy'") != std::string::npos);
  }
  Fixture g;
  g.targets.duration = {2};
  CHECK_THROWS_AS(g.losses(), ShapeError);
}

TEST_CASE("adam: first step, zero gradients, non-finite gradients") {
  ParameterRegistry<float> params;
  params.add("a", TensorF({1}, {0.5f}));
  params.add("b", TensorF({2}, {1.0f, -1.0f}));
  auto state = OptimizerState::zeros_like(params);
  params.get("a").grad[0] = 1.0f;
  adam_step(params, state, AdamConfig{});
  CHECK(0.5 - params.get("a").value[0] == doctest::Approx(1e-4).epsilon(1e-3));
  CHECK(params.get("b").value == TensorF({2}, {1.0f, -1.0f}));
  CHECK(state.step == 1);

  // Gradient of -3 on the first step still moves by lr (m_hat / sqrt(v_hat) = -1).
  ParameterRegistry<float> q;
  q.add("x", TensorF({1}, {0.0f}));
  auto qs = OptimizerState::zeros_like(q);
  q.get("x").grad[0] = -3.0f;
  adam_step(q, qs, AdamConfig{});
  CHECK(q.get("x").value[0] == doctest::Approx(1e-4).epsilon(1e-3));

  const auto before = params.get("b").value;
  params.zero_grad();
  params.get("b").grad[1] = std::numeric_limits<float>::infinity();
  try {
    adam_step(params, state, AdamConfig{});
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
  CHECK(params.get("b").value == before);
  CHECK(state.step == 1);
}

TEST_CASE("adam: zero gradient forever leaves parameters unchanged") {
  ParameterRegistry<float> params;
  params.add("w", TensorF({3}, {0.1f, 0.2f, 0.3f}));
  auto state = OptimizerState::zeros_like(params);
  for (int i = 0; i < 10; ++i) adam_step(params, state, AdamConfig{});
  CHECK(params.get("w").value == TensorF({3}, {0.1f, 0.2f, 0.3f}));
}

TEST_CASE("train config: validation and json") {
  TrainConfig c;
  c.validate();
  CHECK(c.steps == 20000);
  CHECK(c.batch_size == 16);
  CHECK(c.adam.lr == 1e-4);
  CHECK(c.adam.beta1 == 0.5);
  CHECK(c.adam.beta2 == 0.9);
  c.steps = 7;
  c.weights.dur = 0.25;
  const nlohmann::json j = c;
  const auto d = j.get<TrainConfig>();
  CHECK(nlohmann::json(d) == j);
  CHECK(nlohmann::json::parse("{}").get<TrainConfig>().steps == 20000);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = TrainConfig{};
  bad.steps = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("batching: every epoch visits each sample once") {
  const int n = 37, b = 5;
  std::multiset<int> seen;
  for (int step = 0; step * b < 2 * n; ++step) {
    for (int s = 0; s < b; ++s) {
      const auto k = step * b + s;
      if (k >= 2 * n) break;
      seen.insert(batch_sample(9, step, s, b, n));
    }
  }
  for (int i = 0; i < n; ++i) CHECK(seen.count(i) == 2);
  CHECK(epoch_permutation(9, 0, n) != epoch_permutation(9, 1, n));
  CHECK(epoch_permutation(9, 3, n) == epoch_permutation(9, 3, n));
}

GeneratorConfig small_corpus_config() {
  GeneratorConfig g;
  g.n_train = 60;
  g.n_val = 10;
  return g;
}

ModelConfig small_model() {
  ModelConfig m;
  m.d_model = 16;
  m.conv_hidden = 32;
  m.predictor_hidden = 16;
  return m;
}

const Corpus& small_corpus() {
  static const Corpus c = generate_corpus(small_corpus_config());
  return c;
}

bool any_nonzero(const TensorF& t) {
  for (float v : t.storage()) {
    if (v != 0.0f) return true;
  }
  return false;
}

TEST_CASE("gradient flow into the variance predictors") {
  const auto& corpus = small_corpus();
  const Utterance* with_span = nullptr;
  for (const auto& u : corpus.train) {
    if (u.span) with_span = &u;
  }
  REQUIRE(with_span != nullptr);
  TrainConfig tc;
  std::mt19937_64 rng(1);

  AcousticModel model(small_model(), corpus.manifest.stats, 3);
  model.params().zero_grad();
  accumulate_utterance(model, *with_span, tc, 1.0, rng);
  for (const char* name : {"pitch_var", "dur_var"}) {
    const std::string prefix = std::string("predictor.") + name + ".";
    CHECK(any_nonzero(model.params().get(prefix + "out.w").grad));
    CHECK(any_nonzero(model.params().get(prefix + "conv1.w").grad));
  }

  // Without a span, L_PV and L_DV alone send nothing back.
  Utterance plain = *with_span;
  plain.span.reset();
  TrainConfig only_var;
  only_var.weights = LossWeights{0, 0, 1, 0, 1, 0};
  model.params().zero_grad();
  const auto l = accumulate_utterance(model, plain, only_var, 1.0, rng);
  CHECK(l.pitch_var == 0.0);
  CHECK(l.dur_var == 0.0);
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    CHECK_MESSAGE(!any_nonzero(model.params()[i].grad), model.params()[i].name);
  }
}

TEST_CASE("per-utterance total equals the weighted parts") {
  const auto& corpus = small_corpus();
  AcousticModel model(small_model(), corpus.manifest.stats, 4);
  TrainConfig tc;
  tc.weights = LossWeights{0.5, 2.0, 1.5, 0.7, 1.1, 0.9};
  tc.reg_weight = 0.05;
  std::mt19937_64 rng(2);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto l = accumulate_utterance(model, corpus.train[i], tc, 1.0, rng);
    CHECK(std::abs(l.total - l.weighted_sum(tc.weights)) <= 1e-6 * std::max(1.0, l.total));
  }
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::vector<nlohmann::json> read_lines(const std::filesystem::path& p) {
  std::vector<nlohmann::json> out;
  std::ifstream is(p);
  std::string line;
  while (std::getline(is, line)) out.push_back(nlohmann::json::parse(line));
  return out;
}

TEST_CASE("train: log format, determinism, and resume") {
  const auto& corpus = small_corpus();
  TrainConfig tc;
  tc.steps = 6;
  tc.batch_size = 4;
  tc.checkpoint_interval = 3;
  TempDir a("train_a"), b("train_b"), c("train_c");
  const auto ra = train(corpus, small_model(), tc, a.path());
  train(corpus, small_model(), tc, b.path());
  CHECK(ra.final_step == 6);
  CHECK(slurp(a.path() / "metrics.jsonl") == slurp(b.path() / "metrics.jsonl"));
  CHECK(slurp(a.path() / "validation.jsonl") == slurp(b.path() / "validation.jsonl"));

  const auto lines = read_lines(a.path() / "metrics.jsonl");
  REQUIRE(lines.size() == 6);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    CHECK(lines[i].at("step") == i + 1);
    for (const char* k : {"mel", "pitch", "pitch_var", "dur", "dur_var", "energy", "reg", "total"}) {
      CHECK(lines[i].contains(k));
    }
    LossBreakdown l;
    l.mel = lines[i]["mel"], l.pitch = lines[i]["pitch"], l.pitch_var = lines[i]["pitch_var"];
    l.dur = lines[i]["dur"], l.dur_var = lines[i]["dur_var"], l.energy = lines[i]["energy"], l.reg = lines[i]["reg"];
    CHECK(std::abs(lines[i]["total"].get<double>() - l.weighted_sum(tc.weights)) <= 1e-6);
  }

  // Stop at step 3, resume to 6: identical logs and parameters.
  TrainConfig first = tc;
  first.steps = 3;
  train(corpus, small_model(), first, c.path());
  const auto rc = train(corpus, small_model(), tc, c.path(), /*resume=*/true);
  CHECK(rc.steps_run == 3);
  CHECK(rc.initial_val_mel == ra.initial_val_mel);
  CHECK(slurp(a.path() / "metrics.jsonl") == slurp(c.path() / "metrics.jsonl"));
  const auto ma = AcousticModel::load(a.path() / "checkpoint" / "model");
  const auto mc = AcousticModel::load(c.path() / "checkpoint" / "model");
  for (std::size_t i = 0; i < ma.params().size(); ++i) CHECK(ma.params()[i].value == mc.params()[i].value);
  const auto ca = load_training_checkpoint(a.path() / "checkpoint");
  const auto cc = load_training_checkpoint(c.path() / "checkpoint");
  CHECK(ca.state.step == 6);
  CHECK(ca.state.m == cc.state.m);
  CHECK(ca.state.v == cc.state.v);
}

TEST_CASE("train: divergence aborts and keeps the last checkpoint") {
  const auto& corpus = small_corpus();
  TrainConfig tc;
  tc.steps = 2;
  tc.batch_size = 2;
  TempDir dir("train_div");
  train(corpus, small_model(), tc, dir.path());
  TrainConfig more = tc;
  more.steps = 4;
  more.divergence_threshold = 1e-9;
  CHECK_THROWS_AS(train(corpus, small_model(), more, dir.path(), true), TrainingError);
  CHECK(load_training_checkpoint(dir.path() / "checkpoint").state.step == 2);
}

TEST_CASE("train: rejects a model that cannot read the corpus") {
  const auto& corpus = small_corpus();
  TempDir dir("train_bad");
  auto m = small_model();
  m.n_mel = 7;
  CHECK_THROWS_AS(train(corpus, m, TrainConfig{}, dir.path()), std::invalid_argument);
  m = small_model();
  m.vocab_size = 4;
  CHECK_THROWS_AS(train(corpus, m, TrainConfig{}, dir.path()), std::invalid_argument);
}

TEST_CASE("train: 100 steps on the default corpus lower the loss") {
  const auto corpus = generate_corpus(GeneratorConfig{});
  REQUIRE(corpus.train.size() == 2000);
  TrainConfig tc;
  tc.steps = 100;
  tc.checkpoint_interval = 0;
  TempDir dir("train_100");
  train(corpus, ModelConfig{}, tc, dir.path());
  const auto lines = read_lines(dir.path() / "metrics.jsonl");
  REQUIRE(lines.size() == 100);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 20; ++i) {
    first += lines[static_cast<std::size_t>(i)]["total"].get<double>();
    last += lines[lines.size() - 20 + static_cast<std::size_t>(i)]["total"].get<double>();
  }
  INFO("first 20 mean " << first / 20 << ", last 20 mean " << last / 20);
  CHECK(last < first);
}

}  // namespace
}  // namespace emetts
