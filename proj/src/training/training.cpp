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

#include "emetts/training/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "emetts/numerics/ops.hpp"
#include "emetts/numerics/tensor_io.hpp"

namespace emetts {

namespace {

template <typename T>
Tensor<T> column(std::span<const double> values) {
  Tensor<T> t({values.size(), 1});
  for (std::size_t i = 0; i < values.size(); ++i) t[i] = static_cast<T>(values[i]);
  return t;
}

template <typename T>
Tensor<T> column(std::span<const int> values) {
  Tensor<T> t({values.size(), 1});
  for (std::size_t i = 0; i < values.size(); ++i) t[i] = static_cast<T>(values[i]);
  return t;
}

void require_rows(const char* what, std::size_t got, std::size_t want) {
  if (got != want) {
    throw ShapeError(std::string("compute_losses: ") + what + " has " + std::to_string(got) + " rows, expected " +
                     std::to_string(want));
  }
}

/// Runs `build` for one named term; a non-finite value becomes a TrainingError naming it.
template <typename T, typename F>
Var<T> loss_term(const char* name, F&& build) {
  Var<T> v;
  try {
    v = build();
  } catch (const NumericError& e) {
    throw TrainingError(std::string("non-finite loss term '") + name + "': " + e.what());
  }
  if (!v.value().all_finite()) throw TrainingError(std::string("non-finite loss term '") + name + "'");
  return v;
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index, std::uint32_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), salt};
  return std::mt19937_64(seq);
}

constexpr std::uint32_t kShuffleSalt = 0x5f1e;
constexpr std::uint32_t kDropoutSalt = 0xd7a0;
constexpr int kTrainStateSchemaVersion = 1;

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error(path.string() + ": cannot open for reading");
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": corrupt header (" + e.what() + ")");
  }
}

/// Keeps the first lines of a JSON-lines log whose "step" is <= max_step.
void truncate_log(const std::filesystem::path& path, std::int64_t max_step) {
  if (!std::filesystem::exists(path)) return;
  std::vector<std::string> kept;
  {
    std::ifstream is(path);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      if (nlohmann::json::parse(line).at("step").get<std::int64_t>() > max_step) break;
      kept.push_back(line);
    }
  }
  std::ofstream os(path, std::ios::trunc);
  for (const auto& l : kept) os << l << '\n';
}

std::string model_config_key(const ModelConfig& c) { return nlohmann::json(c).dump(); }

}  // namespace

double LossBreakdown::weighted_sum(const LossWeights& w) const {
  return w.mel * mel + w.pitch * pitch + w.pitch_var * pitch_var + w.dur * dur + w.dur_var * dur_var +
         w.energy * energy + reg;
}

void to_json(nlohmann::json& j, const LossBreakdown& l) {
  j = {{"mel", l.mel},   {"pitch", l.pitch},   {"pitch_var", l.pitch_var}, {"dur", l.dur},
       {"dur_var", l.dur_var}, {"energy", l.energy}, {"reg", l.reg},             {"total", l.total}};
}

template <typename T>
LossInputs<T> loss_inputs(const ModelOutput<T>& out) {
  return {out.adapter.pitch_pred, out.adapter.pitch_var_pred, out.adapter.dur_pred,
          out.adapter.dur_var_pred, out.adapter.energy_pred,  out.mel};
}

template <typename T>
LossBreakdown LossTerms<T>::values() const {
  auto v = [](const Var<T>& x) { return static_cast<double>(x.value()[0]); };
  return {v(mel), v(pitch), v(pitch_var), v(dur), v(dur_var), v(energy), v(reg), v(total)};
}

template <typename T>
LossTerms<T> compute_losses(Tape<T>& tape, const LossInputs<T>& pred, const ProsodyTargets& targets,
                            const VarianceFeatures& features, const TensorF& mel_target, const EmphasisMask& mask,
                            const NormalizationStats& stats, const LossWeights& weights, double reg_weight) {
  const std::size_t len = targets.size();
  require_rows("pitch", pred.pitch.rows(), len);
  require_rows("pitch_var", pred.pitch_var.rows(), len);
  require_rows("dur", pred.dur.rows(), len);
  require_rows("dur_var", pred.dur_var.rows(), len);
  require_rows("energy", pred.energy.rows(), len);
  require_rows("pitch track", features.pitch_track.size(), len);
  require_rows("duration track", features.dur_track.size(), len);
  require_rows("mask", mask.size(), len);
  if (pred.mel.shape() != mel_target.shape()) {
    throw ShapeError("compute_losses: mel " + shape_str(pred.mel.shape()) + " vs target " +
                     shape_str(mel_target.shape()));
  }

  LossTerms<T> t;
  t.pitch = loss_term<T>("pitch", [&] {
    return ops::mse(ops::add(pred.pitch, pred.pitch_var), tape.constant(column<T>(targets.pitch)));
  });
  t.pitch_var = loss_term<T>("pitch_var", [&] {
    return ops::mse(pred.pitch_var, tape.constant(column<T>(features.pitch_track)));
  });
  t.dur = loss_term<T>("dur", [&] {
    auto eff = ops::add(pred.dur, ops::scale(pred.dur_var, static_cast<T>(stats.dur_unit())));
    return ops::mse(eff, tape.constant(column<T>(std::span<const int>(targets.duration))));
  });
  t.dur_var = loss_term<T>("dur_var", [&] {
    return ops::mse(pred.dur_var, tape.constant(column<T>(features.dur_track)));
  });
  t.energy = loss_term<T>("energy", [&] {
    return ops::mse(pred.energy, tape.constant(column<T>(targets.energy)));
  });
  t.mel = loss_term<T>("mel", [&] { return ops::mse(pred.mel, tape.constant(mel_target.template cast<T>())); });
  t.reg = loss_term<T>("reg", [&] {
    const auto n_span = std::count(mask.values.begin(), mask.values.end(), std::uint8_t{1});
    if (n_span == 0 || reg_weight == 0.0) return tape.constant(Tensor<T>({1}));
    auto sq = ops::add(ops::mul(pred.pitch_var, pred.pitch_var), ops::mul(pred.dur_var, pred.dur_var));
    sq = ops::mask_rows(sq, std::span<const std::uint8_t>(mask.values));
    return ops::scale(ops::sum(sq), static_cast<T>(reg_weight / static_cast<double>(n_span)));
  });
  t.total = loss_term<T>("total", [&] {
    auto w = [](Var<T> v, double weight) { return ops::scale(v, static_cast<T>(weight)); };
    auto sum = w(t.mel, weights.mel);
    sum = ops::add(sum, w(t.pitch, weights.pitch));
    sum = ops::add(sum, w(t.pitch_var, weights.pitch_var));
    sum = ops::add(sum, w(t.dur, weights.dur));
    sum = ops::add(sum, w(t.dur_var, weights.dur_var));
    sum = ops::add(sum, w(t.energy, weights.energy));
    return ops::add(sum, t.reg);
  });
  return t;
}

OptimizerState OptimizerState::zeros_like(const ParameterRegistry<float>& params) {
  OptimizerState s;
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m.emplace_back(params[i].value.shape());
    s.v.emplace_back(params[i].value.shape());
  }
  return s;
}

void adam_step(ParameterRegistry<float>& params, OptimizerState& state, const AdamConfig& config) {
  if (state.step < 0) throw std::invalid_argument("adam_step: negative step counter");
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state has " + std::to_string(state.m.size()) + " moments for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (state.m[i].shape() != p.value.shape() || state.v[i].shape() != p.value.shape()) {
      throw ShapeError("adam_step: moment shape mismatch for " + p.name);
    }
    if (!p.grad.all_finite()) throw TrainingError("non-finite gradient in parameter '" + p.name + "'");
  }
  const auto t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  const auto b1 = static_cast<float>(config.beta1);
  const auto b2 = static_cast<float>(config.beta2);
  const auto step_size = static_cast<float>(config.lr / c1);
  const auto inv_sqrt_c2 = static_cast<float>(1.0 / std::sqrt(c2));
  const auto eps = static_cast<float>(config.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i].storage();
    auto& v = state.v[i].storage();
    auto& w = p.value.storage();
    const auto& g = p.grad.storage();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1.0f - b1) * g[k];
      v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
      w[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_c2 + eps);
    }
  }
  state.step += 1;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (steps <= 0) fail("steps must be > 0");
  if (batch_size <= 0) fail("batch_size must be > 0");
  if (checkpoint_interval < 0) fail("checkpoint_interval must be >= 0");
  if (reg_weight < 0) fail("reg_weight must be >= 0");
  for (double w : {weights.mel, weights.pitch, weights.pitch_var, weights.dur, weights.dur_var, weights.energy}) {
    if (!(w >= 0)) fail("loss weights must be >= 0");
  }
  if (!(adam.lr > 0)) fail("lr must be > 0");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1)) fail("betas must be in [0, 1)");
  if (!(adam.eps > 0)) fail("adam eps must be > 0");
  if (!(divergence_threshold > 0)) fail("divergence_threshold must be > 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"weights",
        {{"mel", c.weights.mel},
         {"pitch", c.weights.pitch},
         {"pitch_var", c.weights.pitch_var},
         {"dur", c.weights.dur},
         {"dur_var", c.weights.dur_var},
         {"energy", c.weights.energy}}},
       {"reg_weight", c.reg_weight},
       {"adam", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
       {"checkpoint_interval", c.checkpoint_interval},
       {"deterministic", c.deterministic},
       {"divergence_threshold", c.divergence_threshold}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    c.weights.mel = w.value("mel", c.weights.mel);
    c.weights.pitch = w.value("pitch", c.weights.pitch);
    c.weights.pitch_var = w.value("pitch_var", c.weights.pitch_var);
    c.weights.dur = w.value("dur", c.weights.dur);
    c.weights.dur_var = w.value("dur_var", c.weights.dur_var);
    c.weights.energy = w.value("energy", c.weights.energy);
  }
  c.reg_weight = j.value("reg_weight", c.reg_weight);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    c.adam.lr = a.value("lr", c.adam.lr);
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.eps = a.value("eps", c.adam.eps);
  }
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
  c.deterministic = j.value("deterministic", c.deterministic);
  c.divergence_threshold = j.value("divergence_threshold", c.divergence_threshold);
}

std::vector<int> epoch_permutation(std::uint64_t seed, std::uint64_t epoch, int n_train) {
  if (n_train <= 0) throw std::invalid_argument("epoch_permutation: empty training set");
  std::vector<int> perm(static_cast<std::size_t>(n_train));
  std::iota(perm.begin(), perm.end(), 0);
  auto rng = stream(seed, epoch, kShuffleSalt);
  // Explicit Fisher-Yates: std::shuffle's draw pattern is library-specific.
  for (std::size_t i = perm.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

int batch_sample(std::uint64_t seed, std::int64_t step, int slot, int batch_size, int n_train) {
  const auto k = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(batch_size) +
                 static_cast<std::uint64_t>(slot);
  const auto n = static_cast<std::uint64_t>(n_train);
  return epoch_permutation(seed, k / n, n_train)[static_cast<std::size_t>(k % n)];
}

double validation_mel_mse(const AcousticModel& model, const std::vector<Utterance>& utts) {
  if (utts.empty()) throw std::invalid_argument("validation_mel_mse: no utterances");
  double acc = 0.0;
  for (const auto& u : utts) {
    Tape<float> tape(false);
    ModelInput in{u.phonemes.ids, static_cast<int>(u.emotion), u.speaker, u.span, &u.targets};
    auto out = model_forward(tape, model.params(), model.config(), model.stats(), in, ForwardOptions{});
    acc += static_cast<double>(ops::mse(out.mel, tape.constant(u.mel)).value()[0]);
  }
  return acc / static_cast<double>(utts.size());
}

LossBreakdown accumulate_utterance(AcousticModel& model, const Utterance& utt, const TrainConfig& config,
                                   double scale, std::mt19937_64& rng) {
  Tape<float> tape(true);
  ModelInput in{utt.phonemes.ids, static_cast<int>(utt.emotion), utt.speaker, utt.span, &utt.targets};
  ForwardOptions fo;
  fo.mode = ForwardMode{true, model.config().dropout, &rng};
  auto out = model_forward(tape, model.params(), model.config(), model.stats(), in, fo);
  const auto mask = make_phoneme_mask(utt.phonemes.length(), utt.span);
  const auto features = compute_variance_features(utt.targets, utt.span, model.stats());
  auto terms = compute_losses(tape, loss_inputs(out), utt.targets, features, utt.mel, mask, model.stats(),
                              config.weights, config.reg_weight);
  try {
    tape.backward(terms.total, static_cast<float>(scale));
  } catch (const NumericError& e) {
    throw TrainingError(std::string("non-finite gradient during backward: ") + e.what());
  }
  return terms.values();
}

void check_model_corpus_compatibility(const ModelConfig& model, const GeneratorConfig& corpus) {
  if (model.vocab_size < corpus.vocab_size) {
    throw std::invalid_argument("model vocab_size " + std::to_string(model.vocab_size) + " < corpus vocab_size " +
                                std::to_string(corpus.vocab_size));
  }
  if (model.n_speakers < corpus.n_speakers) {
    throw std::invalid_argument("model n_speakers " + std::to_string(model.n_speakers) + " < corpus n_speakers " +
                                std::to_string(corpus.n_speakers));
  }
  if (model.n_mel != corpus.n_mel) {
    throw std::invalid_argument("model n_mel " + std::to_string(model.n_mel) + " != corpus n_mel " +
                                std::to_string(corpus.n_mel));
  }
  if (model.n_emotions != kNumEmotions) {
    throw std::invalid_argument("model n_emotions must be " + std::to_string(kNumEmotions));
  }
}

void save_training_checkpoint(const std::filesystem::path& dir, const AcousticModel& model,
                              const OptimizerState& state, const TrainConfig& config) {
  namespace fs = std::filesystem;
  // Build next to the target and swap in, so an interrupted write never
  // replaces a good checkpoint.
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  model.save(tmp / "model");
  fs::create_directories(tmp / "optimizer" / "m");
  fs::create_directories(tmp / "optimizer" / "v");
  const auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    save_tensor(tmp / "optimizer" / "m" / (params[i].name + ".tensor"), state.m[i]);
    save_tensor(tmp / "optimizer" / "v" / (params[i].name + ".tensor"), state.v[i]);
  }
  write_json(tmp / "train_state.json",
             {{"schema_version", kTrainStateSchemaVersion}, {"step", state.step}, {"train_config", config}});
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

TrainingCheckpoint load_training_checkpoint(const std::filesystem::path& dir) {
  const auto state_path = dir / "train_state.json";
  const auto j = read_json(state_path);
  OptimizerState state;
  TrainConfig config;
  try {
    const int version = j.value("schema_version", -1);
    if (version != kTrainStateSchemaVersion) {
      throw FormatError(state_path.string() + ": unsupported schema version " + std::to_string(version));
    }
    state.step = j.at("step").get<std::int64_t>();
    config = j.at("train_config").get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(state_path.string() + ": corrupt header (" + e.what() + ")");
  }
  auto model = AcousticModel::load(dir / "model");
  const auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (auto [sub, vec] : {std::pair{"m", &state.m}, std::pair{"v", &state.v}}) {
      const auto path = dir / "optimizer" / sub / (params[i].name + ".tensor");
      auto t = load_tensor(path);
      if (t.shape() != params[i].value.shape()) {
        throw FormatError(path.string() + ": corrupt header (shape " + shape_str(t.shape()) + ", expected " +
                          shape_str(params[i].value.shape()) + ")");
      }
      vec->push_back(std::move(t));
    }
  }
  return {std::move(model), std::move(state), config};
}

TrainResult train(const Corpus& corpus, const ModelConfig& model_config, const TrainConfig& config,
                  const std::filesystem::path& out_dir, bool resume, const TrainHooks& hooks) {
  namespace fs = std::filesystem;
  config.validate();
  model_config.validate();
  check_model_corpus_compatibility(model_config, corpus.manifest.config);
  if (corpus.train.empty() || corpus.val.empty()) throw std::invalid_argument("train: corpus needs train and val");

  fs::create_directories(out_dir);
  const auto ckpt_dir = out_dir / "checkpoint";
  const auto metrics_path = out_dir / "metrics.jsonl";
  const auto val_path = out_dir / "validation.jsonl";

  std::optional<AcousticModel> model;
  OptimizerState state;
  TrainResult result;
  if (resume && fs::exists(ckpt_dir / "train_state.json")) {
    auto ck = load_training_checkpoint(ckpt_dir);
    if (model_config_key(ck.model.config()) != model_config_key(model_config)) {
      throw std::invalid_argument("train: checkpoint model config differs from the requested one");
    }
    if (!(ck.model.stats() == corpus.manifest.stats)) {
      throw std::invalid_argument("train: checkpoint normalization stats differ from the corpus");
    }
    if (ck.config.seed != config.seed || ck.config.batch_size != config.batch_size) {
      throw std::invalid_argument("train: resume needs the checkpoint's seed and batch size");
    }
    if (ck.state.step > config.steps) throw std::invalid_argument("train: checkpoint is past the requested steps");
    model.emplace(std::move(ck.model));
    state = std::move(ck.state);
    truncate_log(metrics_path, state.step);
    truncate_log(val_path, state.step);
    std::ifstream is(val_path);
    std::string first;
    if (std::getline(is, first) && !first.empty()) {
      result.initial_val_mel = nlohmann::json::parse(first).at("val_mel").get<double>();
    }
  } else {
    model.emplace(model_config, corpus.manifest.stats, config.seed);
    state = OptimizerState::zeros_like(model->params());
    fs::remove(metrics_path);
    fs::remove(val_path);
  }

  std::ofstream metrics(metrics_path, std::ios::app);
  std::ofstream val_log(val_path, std::ios::app);
  if (!metrics || !val_log) throw std::runtime_error(out_dir.string() + ": cannot open logs for writing");

  auto validate_now = [&](std::int64_t step) {
    const double v = validation_mel_mse(*model, corpus.val);
    val_log << nlohmann::json{{"step", step}, {"val_mel", v}}.dump() << '\n';
    val_log.flush();
    if (hooks.on_validation) hooks.on_validation(step, v);
    return v;
  };
  if (state.step == 0) {
    result.initial_val_mel = validate_now(0);
  } else if (state.step == config.steps) {
    // Already complete: report without touching the logs or checkpoint.
    result.final_step = state.step;
    result.final_val_mel = validation_mel_mse(*model, corpus.val);
    return result;
  }

  const int n_train = static_cast<int>(corpus.train.size());
  const auto n = static_cast<std::uint64_t>(n_train);
  const double inv_batch = 1.0 / config.batch_size;
  const std::int64_t first_step = state.step;
  std::uint64_t cached_epoch = UINT64_MAX;
  std::vector<int> perm;
  while (state.step < config.steps) {
    const std::int64_t step = state.step;
    model->params().zero_grad();
    auto rng = stream(config.seed, static_cast<std::uint64_t>(step), kDropoutSalt);
    LossBreakdown mean;
    for (int slot = 0; slot < config.batch_size; ++slot) {
      const auto k = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(config.batch_size) +
                     static_cast<std::uint64_t>(slot);
      if (k / n != cached_epoch) {
        cached_epoch = k / n;
        perm = epoch_permutation(config.seed, cached_epoch, n_train);
      }
      const auto& utt = corpus.train[static_cast<std::size_t>(perm[static_cast<std::size_t>(k % n)])];
      const auto l = accumulate_utterance(*model, utt, config, inv_batch, rng);
      mean.mel += l.mel * inv_batch;
      mean.pitch += l.pitch * inv_batch;
      mean.pitch_var += l.pitch_var * inv_batch;
      mean.dur += l.dur * inv_batch;
      mean.dur_var += l.dur_var * inv_batch;
      mean.energy += l.energy * inv_batch;
      mean.reg += l.reg * inv_batch;
      mean.total += l.total * inv_batch;
    }
    nlohmann::json line = mean;
    line["step"] = step + 1;
    metrics << line.dump() << '\n';
    if (!(mean.total <= config.divergence_threshold)) {
      metrics.flush();
      throw TrainingError("training diverged at step " + std::to_string(step + 1) + ": total loss " +
                          std::to_string(mean.total) + " exceeds " + std::to_string(config.divergence_threshold) +
                          "; last checkpoint kept in " + ckpt_dir.string());
    }
    adam_step(model->params(), state, config.adam);
    result.last_loss = mean;
    if (hooks.on_step) hooks.on_step(state.step, mean);
    const bool at_interval = config.checkpoint_interval > 0 && state.step % config.checkpoint_interval == 0;
    if (at_interval && state.step < config.steps) {
      metrics.flush();
      validate_now(state.step);
      save_training_checkpoint(ckpt_dir, *model, state, config);
    }
  }
  metrics.flush();
  result.final_val_mel = validate_now(state.step);
  save_training_checkpoint(ckpt_dir, *model, state, config);
  result.steps_run = state.step - first_step;
  result.final_step = state.step;
  return result;
}

#define EMETTS_INSTANTIATE_TRAINING(T)                                                                               \
  template LossInputs<T> loss_inputs(const ModelOutput<T>&);                                                        \
  template struct LossTerms<T>;                                                                                      \
  template LossTerms<T> compute_losses(Tape<T>&, const LossInputs<T>&, const ProsodyTargets&,                       \
                                       const VarianceFeatures&, const TensorF&, const EmphasisMask&,                 \
                                       const NormalizationStats&, const LossWeights&, double);

EMETTS_INSTANTIATE_TRAINING(float)
EMETTS_INSTANTIATE_TRAINING(double)

#undef EMETTS_INSTANTIATE_TRAINING

}  // namespace emetts
