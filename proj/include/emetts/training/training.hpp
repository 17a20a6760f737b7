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

// Loss assembly, Adam, and the deterministic training loop with resumable
// checkpoints and a JSON-lines metrics log.

#ifndef EMETTS_TRAINING_TRAINING_HPP_
#define EMETTS_TRAINING_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "emetts/corpus/corpus.hpp"
#include "emetts/model/model.hpp"
#include "json.hpp"

namespace emetts {

/// Abort raised by the training loop (non-finite loss or gradient, divergence).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossWeights {
  double mel = 1.0;
  double pitch = 1.0;
  double pitch_var = 1.0;
  double dur = 1.0;
  double dur_var = 1.0;
  double energy = 1.0;
};

struct LossBreakdown {
  double mel = 0.0;
  double pitch = 0.0;
  double pitch_var = 0.0;
  double dur = 0.0;
  double dur_var = 0.0;
  double energy = 0.0;
  /// Already multiplied by the regularization weight.
  double reg = 0.0;
  double total = 0.0;

  /// Weighted sum of the parts plus reg.
  double weighted_sum(const LossWeights& w) const;
};

void to_json(nlohmann::json& j, const LossBreakdown& l);

/// Phoneme-level predictions ([T, 1] each) and the frame-level mel.
template <typename T>
struct LossInputs {
  Var<T> pitch;
  Var<T> pitch_var;
  Var<T> dur;
  Var<T> dur_var;
  Var<T> energy;
  Var<T> mel;
};

template <typename T>
LossInputs<T> loss_inputs(const ModelOutput<T>& out);

template <typename T>
struct LossTerms {
  Var<T> mel, pitch, pitch_var, dur, dur_var, energy, reg, total;
  LossBreakdown values() const;
};

/// L_P = MSE(P + PV, pitch), L_PV = MSE(PV, pitch track), L_D = MSE(D + DV dur_unit, duration),
/// L_DV = MSE(DV, dur track), L_E, L_mel, reg = reg_weight * mean over span positions of PV^2 + DV^2.
/// Throws TrainingError naming the first non-finite term.
template <typename T>
LossTerms<T> compute_losses(Tape<T>& tape, const LossInputs<T>& pred, const ProsodyTargets& targets,
                            const VarianceFeatures& features, const TensorF& mel_target, const EmphasisMask& mask,
                            const NormalizationStats& stats, const LossWeights& weights, double reg_weight);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

/// Moments in registration order; `step` counts completed updates.
struct OptimizerState {
  std::vector<TensorF> m;
  std::vector<TensorF> v;
  std::int64_t step = 0;

  static OptimizerState zeros_like(const ParameterRegistry<float>& params);
};

/// One bias-corrected Adam update from the registry's accumulated gradients.
/// Throws TrainingError naming a parameter with a non-finite gradient, before
/// anything is modified.
void adam_step(ParameterRegistry<float>& params, OptimizerState& state, const AdamConfig& config);

struct TrainConfig {
  int steps = 20000;
  int batch_size = 16;
  std::uint64_t seed = 42;
  LossWeights weights;
  double reg_weight = 1e-4;
  AdamConfig adam;
  /// Checkpoint (and validation) every this many steps; 0 writes only the final one.
  int checkpoint_interval = 2000;
  /// Every random draw comes from (seed, step) streams; kept for the record.
  bool deterministic = true;
  double divergence_threshold = 1e4;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Seeded Fisher-Yates permutation of 0..n_train-1 for one epoch.
std::vector<int> epoch_permutation(std::uint64_t seed, std::uint64_t epoch, int n_train);

/// Sample index of position `slot` in the batch of step `step`: consecutive
/// epochs walk seeded permutations of the training set.
int batch_sample(std::uint64_t seed, std::int64_t step, int slot, int batch_size, int n_train);

/// Mean mel MSE over `utts` with teacher-forced durations and no dropout.
double validation_mel_mse(const AcousticModel& model, const std::vector<Utterance>& utts);

/// Forward + backward of one utterance at loss scale `scale`, accumulating
/// into the registry's gradients. Returns the unscaled breakdown.
LossBreakdown accumulate_utterance(AcousticModel& model, const Utterance& utt, const TrainConfig& config,
                                   double scale, std::mt19937_64& rng);

struct TrainResult {
  std::int64_t steps_run = 0;
  std::int64_t final_step = 0;
  double initial_val_mel = 0.0;
  double final_val_mel = 0.0;
  LossBreakdown last_loss;
};

struct TrainHooks {
  /// Called after every step with the batch-mean breakdown.
  std::function<void(std::int64_t step, const LossBreakdown&)> on_step;
  /// Called after each validation pass.
  std::function<void(std::int64_t step, double val_mel)> on_validation;
};

/// Trains a model on `corpus`, writing into `out_dir`:
///   metrics.jsonl      one LossBreakdown object per step
///   validation.jsonl   validation mel MSE at step 0, each checkpoint, and the end
///   checkpoint/        model plus optimizer and loop state (latest)
/// With `resume` and an existing checkpoint, continues from its step and
/// reproduces an unbroken run exactly. Divergence aborts with the last
/// checkpoint left in place.
TrainResult train(const Corpus& corpus, const ModelConfig& model_config, const TrainConfig& config,
                  const std::filesystem::path& out_dir, bool resume = false, const TrainHooks& hooks = {});

/// Model plus optimizer state. Layout: <dir>/model (AcousticModel::save),
/// <dir>/optimizer/{m,v}/<name>.tensor, <dir>/train_state.json.
void save_training_checkpoint(const std::filesystem::path& dir, const AcousticModel& model,
                              const OptimizerState& state, const TrainConfig& config);

struct TrainingCheckpoint {
  AcousticModel model;
  OptimizerState state;
  TrainConfig config;
};
TrainingCheckpoint load_training_checkpoint(const std::filesystem::path& dir);

/// Checks that a model layout can consume a corpus (vocabulary, speakers, mel bins).
void check_model_corpus_compatibility(const ModelConfig& model, const GeneratorConfig& corpus);

}  // namespace emetts

#endif  // EMETTS_TRAINING_TRAINING_HPP_
