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

// Acoustic model: phoneme encoder and frame decoder built from EPE blocks
// (self-attention, conditional cross attention with the emphasis adapter,
// conditional layer norm, convolutional feed-forward), with a variance
// adapter in between. All graph builders are templated on the scalar type so
// the same code trains in float and is gradient-checked in double.

#ifndef EMETTS_MODEL_MODEL_HPP_
#define EMETTS_MODEL_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "emetts/numerics/grad_check.hpp"
#include "emetts/numerics/params.hpp"
#include "emetts/numerics/tape.hpp"
#include "emetts/prosody/prosody.hpp"
#include "json.hpp"

namespace emetts {

struct ModelConfig {
  int d_model = 64;
  int n_heads = 2;
  int n_encoder_blocks = 2;
  int n_decoder_blocks = 2;
  int conv_kernel = 9;
  int conv_hidden = 128;
  /// Kernel of the second feed-forward convolution.
  int conv_out_kernel = 1;
  int n_mel = 20;
  int vocab_size = 32;
  int n_emotions = 5;
  int n_speakers = 4;
  double ea_strength = 0.2;
  double dropout = 0.1;
  int predictor_kernel = 3;
  int predictor_hidden = 64;
  /// Cross-attention keys are {emotion, speaker}; false keeps only the emotion token.
  bool speaker_token = true;
  /// Also add the emphasis offset to self-attention weights. Off by default.
  bool ea_on_self_attention = false;
  /// Initial duration prediction in frames (sets the output bias).
  double duration_init = 4.0;

  int n_condition_tokens() const { return speaker_token ? 2 : 1; }
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Deterministic parameter initialization; registration order is fixed.
template <typename T>
ParameterRegistry<T> init_parameters(const ModelConfig& config, std::uint64_t seed);

/// Copy of a registry converted to another scalar type; with `prefix`, only
/// parameters whose name starts with it.
template <typename U, typename T>
ParameterRegistry<U> convert_parameters(const ParameterRegistry<T>& params, std::string_view prefix = "");

/// Dropout state for one forward pass. Inactive unless training.
struct ForwardMode {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

/// Sinusoidal positional encoding [length, d].
template <typename T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d);

/// Phoneme embedding times sqrt(d_model), plus positional encoding.
template <typename T>
Var<T> embed_phonemes(Tape<T>& tape, const ParameterRegistry<T>& params, const ModelConfig& config,
                      std::span<const int> ids);

/// Condition tokens c: emotion row first, then speaker row (if enabled).
template <typename T>
Var<T> condition_tokens(Tape<T>& tape, const ParameterRegistry<T>& params, const ModelConfig& config, int emotion,
                        int speaker);

/// Emphasis adapter on plain weights: rows with mask 1 get +strength in every
/// column, other rows are copied. No renormalization.
template <typename T>
Tensor<T> emphasis_adapter_apply(const Tensor<T>& weights, const EmphasisMask& mask, T strength);

/// Intermediate values recorded by one EPE block.
template <typename T>
struct BlockCapture {
  /// Self-attention weights per head, [T, T].
  std::vector<Tensor<T>> mha_weights;
  /// Cross-attention weights before and after the emphasis adapter, [T, n_keys].
  Tensor<T> cca_weights;
  Tensor<T> cca_adjusted;
  /// Cross-attention value rows V = c W_v, [n_keys, d].
  Tensor<T> cca_values;
  /// Output of the cross-attention sublayer (residual added, pre-norm).
  Tensor<T> cca_out;
};

/// Self-attention sublayer with residual: h + MHA(h).
template <typename T>
Var<T> mha_forward(Tape<T>& tape, const ParameterRegistry<T>& params, const std::string& prefix,
                   const ModelConfig& config, Var<T> h, const EmphasisMask& mask, T strength,
                   const ForwardMode& mode, BlockCapture<T>* capture = nullptr);

/// Cross attention from h to the condition tokens with the emphasis adapter,
/// projected and added to h.
template <typename T>
Var<T> cca_forward(Tape<T>& tape, const ParameterRegistry<T>& params, const std::string& prefix,
                   const ModelConfig& config, Var<T> h, Var<T> c, const EmphasisMask& mask, T strength,
                   const ForwardMode& mode, BlockCapture<T>* capture = nullptr);

/// gamma(c) * layer_norm(x) + beta(c), gamma and beta linear in the summed tokens.
template <typename T>
Var<T> cln_forward(Tape<T>& tape, const ParameterRegistry<T>& params, const std::string& prefix, Var<T> x, Var<T> c);

/// conv -> SiLU -> conv, without residual.
template <typename T>
Var<T> ffn_forward(Tape<T>& tape, const ParameterRegistry<T>& params, const std::string& prefix, Var<T> x);

template <typename T>
Var<T> epe_block_forward(Tape<T>& tape, const ParameterRegistry<T>& params, const std::string& prefix,
                         const ModelConfig& config, Var<T> h, Var<T> c, const EmphasisMask& mask, T strength,
                         const ForwardMode& mode, BlockCapture<T>* capture = nullptr);

/// Two conv -> SiLU -> layer norm -> dropout stages, then a linear map to [T, 1].
template <typename T>
Var<T> predictor_forward(Tape<T>& tape, const ParameterRegistry<T>& params, const std::string& prefix, Var<T> x,
                         const ForwardMode& mode);

/// Row i repeated durations[i] times. Rejects durations < 1.
template <typename T>
Var<T> length_regulate(Var<T> h, std::span<const int> durations);

inline constexpr const char* kPredictorNames[] = {"pitch", "energy", "duration", "pitch_var", "dur_var"};

template <typename T>
struct VarianceAdapterOutput {
  /// Phoneme-level predictions, each [T, 1].
  Var<T> pitch_pred;
  Var<T> energy_pred;
  Var<T> dur_pred;
  Var<T> pitch_var_pred;
  Var<T> dur_var_pred;
  Var<T> effective_pitch;
  Var<T> effective_dur;
  /// Durations used for length regulation.
  std::vector<int> durations;
  Var<T> frame_hidden;
  EmphasisMask frame_mask;
};

/// With `teacher`, pitch and energy re-enter from the targets and the teacher
/// durations drive length regulation; otherwise the predictions do.
template <typename T>
VarianceAdapterOutput<T> variance_adapter_forward(Tape<T>& tape, const ParameterRegistry<T>& params,
                                                  const ModelConfig& config, Var<T> h, const EmphasisMask& mask,
                                                  const NormalizationStats& stats, const ProsodyTargets* teacher,
                                                  double emphasis_scale, const ForwardMode& mode);

struct ModelInput {
  std::vector<int> phonemes;
  int emotion = 0;
  int speaker = 0;
  std::optional<EmphasisSpan> span;
  const ProsodyTargets* teacher = nullptr;
};

struct ForwardOptions {
  double emphasis_scale = 1.0;
  /// False runs with emphasis adapter strength 0.
  bool ea_enabled = true;
  ForwardMode mode;
};

template <typename T>
struct ModelCapture {
  std::vector<BlockCapture<T>> encoder;
  std::vector<BlockCapture<T>> decoder;
};

template <typename T>
struct ModelOutput {
  Var<T> encoder_out;
  VarianceAdapterOutput<T> adapter;
  /// [frames, n_mel]
  Var<T> mel;
};

template <typename T>
ModelOutput<T> model_forward(Tape<T>& tape, const ParameterRegistry<T>& params, const ModelConfig& config,
                             const NormalizationStats& stats, const ModelInput& input, const ForwardOptions& options,
                             ModelCapture<T>* capture = nullptr);

/// Trainable float model plus the corpus statistics it was built against.
class AcousticModel {
 public:
  AcousticModel(ModelConfig config, NormalizationStats stats, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const NormalizationStats& stats() const { return stats_; }
  ParameterRegistry<float>& params() { return params_; }
  const ParameterRegistry<float>& params() const { return params_; }

  /// <dir>/model.json plus <dir>/params/<name>.tensor.
  void save(const std::filesystem::path& dir) const;
  static AcousticModel load(const std::filesystem::path& dir);

 private:
  AcousticModel(ModelConfig config, NormalizationStats stats, ParameterRegistry<float> params);

  ModelConfig config_;
  NormalizationStats stats_;
  ParameterRegistry<float> params_;
};

inline constexpr int kCheckpointSchemaVersion = 1;

struct SynthesisOptions {
  double emphasis_scale = 1.0;
  bool ea_enabled = true;
};

struct SynthesisResult {
  TensorF mel;
  /// Effective (post-sum) phoneme-level tracks.
  std::vector<double> pitch;
  std::vector<double> energy;
  std::vector<int> durations;
  std::vector<double> pitch_var;
  std::vector<double> dur_var;
  EmphasisMask frame_mask;
};

/// Inference: predicted durations are rounded and clamped to >= 1.
SynthesisResult synthesize(const AcousticModel& model, const PhonemeSequence& phonemes, int emotion, int speaker,
                           const std::optional<EmphasisSpan>& span, const SynthesisOptions& options = {});

struct BlockGradReport {
  std::string block;
  GradCheckReport report;
};

/// Narrow layout used for finite-difference checks. The default width puts
/// too many near-zero gradient elements under the roundoff floor of a
/// central difference; block structure and kernel sizes are unchanged.
ModelConfig gradient_check_config();
inline constexpr double kBlockGradEpsilon = 3e-5;

/// Central-difference checks of every block type and predictor in double
/// precision, with random parameters and inputs drawn from `seed`.
std::vector<BlockGradReport> check_block_gradients(const ModelConfig& config, std::uint64_t seed,
                                                   double epsilon = kBlockGradEpsilon, double tolerance = 1e-4);

}  // namespace emetts

#endif  // EMETTS_MODEL_MODEL_HPP_
