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

#include "emetts/model/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "emetts/numerics/ops.hpp"

namespace emetts {

namespace {

template <typename T>
Var<T> param(Tape<T>& tape, const ParameterRegistry<T>& params, const std::string& name) {
  // Inference tapes never write to parameters; training passes a mutable registry.
  return tape.param(const_cast<Parameter<T>&>(params.get(name)));
}

template <typename T>
Var<T> dropout(Var<T> x, const ForwardMode& mode) {
  if (!mode.training || mode.dropout <= 0.0) return x;
  if (mode.rng == nullptr) throw std::invalid_argument("dropout: training mode needs an rng");
  const double p = mode.dropout;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  Tensor<T> m(x.shape());
  for (auto& v : m.storage()) {
    const double u = static_cast<double>((*mode.rng)() >> 11) * 0x1.0p-53;
    v = u < p ? T(0) : keep_scale;
  }
  return ops::mul_const(x, m);
}

template <typename T>
Tensor<T> emphasis_delta(std::size_t rows, std::size_t cols, const EmphasisMask& mask, T strength) {
  Tensor<T> d({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask.values[r]) continue;
    for (std::size_t c = 0; c < cols; ++c) d.at(r, c) = strength;
  }
  return d;
}

template <typename T>
Tensor<T> column(std::span<const double> values) {
  Tensor<T> t({values.size(), 1});
  for (std::size_t i = 0; i < values.size(); ++i) t[i] = static_cast<T>(values[i]);
  return t;
}

template <typename T>
std::vector<double> to_doubles(const Tensor<T>& t) {
  return std::vector<double>(t.storage().begin(), t.storage().end());
}

void check_mask(const EmphasisMask& mask, std::size_t rows, const char* where) {
  if (mask.size() != rows) {
    throw ShapeError(std::string(where) + ": mask length " + std::to_string(mask.size()) + " != sequence length " +
                     std::to_string(rows));
  }
}

}  // namespace

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("model config: " + what);
  };
  require(d_model > 0 && n_heads > 0, "d_model and n_heads must be positive");
  require(d_model % n_heads == 0, "d_model must be divisible by n_heads");
  require(n_encoder_blocks >= 1 && n_decoder_blocks >= 1, "need at least one encoder and one decoder block");
  require(conv_kernel > 0 && conv_kernel % 2 == 1, "conv_kernel must be odd");
  require(conv_out_kernel > 0 && conv_out_kernel % 2 == 1, "conv_out_kernel must be odd");
  require(predictor_kernel > 0 && predictor_kernel % 2 == 1, "predictor_kernel must be odd");
  require(conv_hidden > 0 && predictor_hidden > 0, "hidden sizes must be positive");
  require(n_mel > 0 && vocab_size > 0 && n_emotions > 0 && n_speakers > 0, "table sizes must be positive");
  require(ea_strength >= 0.0, "ea_strength must be >= 0");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(duration_init > 0.0, "duration_init must be > 0");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d_model", c.d_model},
                     {"n_heads", c.n_heads},
                     {"n_encoder_blocks", c.n_encoder_blocks},
                     {"n_decoder_blocks", c.n_decoder_blocks},
                     {"conv_kernel", c.conv_kernel},
                     {"conv_hidden", c.conv_hidden},
                     {"conv_out_kernel", c.conv_out_kernel},
                     {"n_mel", c.n_mel},
                     {"vocab_size", c.vocab_size},
                     {"n_emotions", c.n_emotions},
                     {"n_speakers", c.n_speakers},
                     {"ea_strength", c.ea_strength},
                     {"dropout", c.dropout},
                     {"predictor_kernel", c.predictor_kernel},
                     {"predictor_hidden", c.predictor_hidden},
                     {"speaker_token", c.speaker_token},
                     {"ea_on_self_attention", c.ea_on_self_attention},
                     {"duration_init", c.duration_init}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  const ModelConfig d;
  c.d_model = j.value("d_model", d.d_model);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.n_encoder_blocks = j.value("n_encoder_blocks", d.n_encoder_blocks);
  c.n_decoder_blocks = j.value("n_decoder_blocks", d.n_decoder_blocks);
  c.conv_kernel = j.value("conv_kernel", d.conv_kernel);
  c.conv_hidden = j.value("conv_hidden", d.conv_hidden);
  c.conv_out_kernel = j.value("conv_out_kernel", d.conv_out_kernel);
  c.n_mel = j.value("n_mel", d.n_mel);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.n_emotions = j.value("n_emotions", d.n_emotions);
  c.n_speakers = j.value("n_speakers", d.n_speakers);
  c.ea_strength = j.value("ea_strength", d.ea_strength);
  c.dropout = j.value("dropout", d.dropout);
  c.predictor_kernel = j.value("predictor_kernel", d.predictor_kernel);
  c.predictor_hidden = j.value("predictor_hidden", d.predictor_hidden);
  c.speaker_token = j.value("speaker_token", d.speaker_token);
  c.ea_on_self_attention = j.value("ea_on_self_attention", d.ea_on_self_attention);
  c.duration_init = j.value("duration_init", d.duration_init);
}

template <typename T>
ParameterRegistry<T> init_parameters(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ParameterRegistry<T> reg;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto d = static_cast<std::size_t>(config.d_model);

  auto random = [&](const std::string& name, Shape shape, double stddev) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.storage()) v = static_cast<T>(stddev * gauss(rng));
    reg.add(name, std::move(t));
  };
  auto filled = [&](const std::string& name, Shape shape, double value) {
    reg.add(name, Tensor<T>(std::move(shape), static_cast<T>(value)));
  };
  auto dense = [&](const std::string& name, std::size_t in, std::size_t out) {
    random(name, {in, out}, 1.0 / std::sqrt(static_cast<double>(in)));
  };
  auto conv = [&](const std::string& name, std::size_t k, std::size_t in, std::size_t out) {
    random(name, {k, in, out}, 1.0 / std::sqrt(static_cast<double>(k * in)));
  };
  auto cln = [&](const std::string& p) {
    filled(p + "wg", {d, d}, 0.0);
    filled(p + "bg", {d}, 1.0);
    filled(p + "wb", {d, d}, 0.0);
    filled(p + "bb", {d}, 0.0);
  };

  const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
  random("embed.phoneme", {static_cast<std::size_t>(config.vocab_size), d}, emb_std);
  random("embed.emotion", {static_cast<std::size_t>(config.n_emotions), d}, emb_std);
  if (config.speaker_token) random("embed.speaker", {static_cast<std::size_t>(config.n_speakers), d}, emb_std);

  const auto hidden = static_cast<std::size_t>(config.conv_hidden);
  auto block = [&](const std::string& p) {
    dense(p + "mha.wq", d, d);
    filled(p + "mha.bq", {d}, 0.0);
    dense(p + "mha.wk", d, d);
    dense(p + "mha.wv", d, d);
    filled(p + "mha.bv", {d}, 0.0);
    dense(p + "mha.wo", d, d);
    filled(p + "mha.bo", {d}, 0.0);
    cln(p + "cln1.");
    dense(p + "cca.wq", d, d);
    dense(p + "cca.wk", d, d);
    dense(p + "cca.wv", d, d);
    dense(p + "cca.wo", d, d);
    filled(p + "cca.bo", {d}, 0.0);
    cln(p + "cln2.");
    conv(p + "ffn.conv1.w", static_cast<std::size_t>(config.conv_kernel), d, hidden);
    filled(p + "ffn.conv1.b", {hidden}, 0.0);
    conv(p + "ffn.conv2.w", static_cast<std::size_t>(config.conv_out_kernel), hidden, d);
    filled(p + "ffn.conv2.b", {d}, 0.0);
    cln(p + "cln3.");
  };
  for (int i = 0; i < config.n_encoder_blocks; ++i) block("encoder." + std::to_string(i) + ".");

  const auto ph = static_cast<std::size_t>(config.predictor_hidden);
  const auto pk = static_cast<std::size_t>(config.predictor_kernel);
  for (std::string name : kPredictorNames) {
    const std::string p = "predictor." + name + ".";
    const std::size_t in = (name == "pitch_var" || name == "dur_var") ? d + 1 : d;
    conv(p + "conv1.w", pk, in, ph);
    filled(p + "conv1.b", {ph}, 0.0);
    filled(p + "ln1.g", {ph}, 1.0);
    filled(p + "ln1.b", {ph}, 0.0);
    conv(p + "conv2.w", pk, ph, ph);
    filled(p + "conv2.b", {ph}, 0.0);
    filled(p + "ln2.g", {ph}, 1.0);
    filled(p + "ln2.b", {ph}, 0.0);
    dense(p + "out.w", ph, 1);
    // softplus^-1 so the untrained duration predictor starts near duration_init.
    filled(p + "out.b", {1}, name == "duration" ? std::log(std::expm1(config.duration_init)) : 0.0);
  }
  random("adapter.pitch_proj.w", {1, d}, 1.0);
  filled("adapter.pitch_proj.b", {d}, 0.0);
  random("adapter.energy_proj.w", {1, d}, 1.0);
  filled("adapter.energy_proj.b", {d}, 0.0);

  for (int i = 0; i < config.n_decoder_blocks; ++i) block("decoder." + std::to_string(i) + ".");
  dense("mel_head.w", d, static_cast<std::size_t>(config.n_mel));
  filled("mel_head.b", {static_cast<std::size_t>(config.n_mel)}, 0.0);
  return reg;
}

template <typename U, typename T>
ParameterRegistry<U> convert_parameters(const ParameterRegistry<T>& params, std::string_view prefix) {
  ParameterRegistry<U> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.name.compare(0, prefix.size(), prefix) == 0) out.add(p.name, p.value.template cast<U>());
  }
  return out;
}

template <typename T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d) {
  Tensor<T> pe({length, d});
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * rate;
      pe.at(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
Var<T> embed_phonemes(Tape<T>& tape, const ParameterRegistry<T>& params, const ModelConfig& config,
                      std::span<const int> ids) {
  if (ids.empty()) throw std::invalid_argument("embed_phonemes: empty phoneme sequence");
  for (int id : ids) {
    if (id < 0 || id >= config.vocab_size) {
      throw std::invalid_argument("embed_phonemes: phoneme id " + std::to_string(id) + " outside vocabulary of " +
                                  std::to_string(config.vocab_size));
    }
  }
  const auto d = static_cast<std::size_t>(config.d_model);
  auto x = ops::gather_rows(param(tape, params, "embed.phoneme"), ids);
  x = ops::scale(x, static_cast<T>(std::sqrt(static_cast<double>(d))));
  return ops::add_const(x, positional_encoding<T>(ids.size(), d));
}

template <typename T>
Var<T> condition_tokens(Tape<T>& tape, const ParameterRegistry<T>& params, const ModelConfig& config, int emotion,
                        int speaker) {
  if (emotion < 0 || emotion >= config.n_emotions) {
    throw std::invalid_argument("emotion " + std::to_string(emotion) + " out of range");
  }
  if (speaker < 0 || speaker >= config.n_speakers) {
    throw std::invalid_argument("speaker " + std::to_string(speaker) + " out of range");
  }
  const int e[] = {emotion};
  auto tokens = ops::gather_rows(param(tape, params, "embed.emotion"), std::span<const int>(e));
  if (!config.speaker_token) return tokens;
  const int s[] = {speaker};
  auto spk = ops::gather_rows(param(tape, params, "embed.speaker"), std::span<const int>(s));
  return ops::concat_rows<T>({tokens, spk});
}

template <typename T>
Tensor<T> emphasis_adapter_apply(const Tensor<T>& weights, const EmphasisMask& mask, T strength) {
  if (!(strength >= T(0))) throw std::invalid_argument("emphasis adapter: strength must be >= 0");
  check_mask(mask, weights.rows(), "emphasis adapter");
  Tensor<T> out = weights;
  const std::size_t cols = weights.cols();
  for (std::size_t r = 0; r < mask.size(); ++r) {
    if (!mask.values[r]) continue;
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) += strength;
  }
  return out;
}

template <typename T>
Var<T> mha_forward(Tape<T>& tape, const ParameterRegistry<T>& params, const std::string& prefix,
                   const ModelConfig& config, Var<T> h, const EmphasisMask& mask, T strength,
                   const ForwardMode& mode, BlockCapture<T>* capture) {
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto n_heads = static_cast<std::size_t>(config.n_heads);
  const std::size_t hd = d / n_heads;
  const std::size_t len = h.rows();
  auto q = ops::linear(h, param(tape, params, prefix + "wq"), param(tape, params, prefix + "bq"));
  auto k = ops::linear(h, param(tape, params, prefix + "wk"));
  auto v = ops::linear(h, param(tape, params, prefix + "wv"), param(tape, params, prefix + "bv"));
  const bool adapt = config.ea_on_self_attention && strength > T(0) && mask.any();
  if (adapt) check_mask(mask, len, "self attention");
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));

  std::vector<Var<T>> heads;
  for (std::size_t i = 0; i < n_heads; ++i) {
    auto qh = n_heads == 1 ? q : ops::slice_cols(q, i * hd, hd);
    auto kh = n_heads == 1 ? k : ops::slice_cols(k, i * hd, hd);
    auto vh = n_heads == 1 ? v : ops::slice_cols(v, i * hd, hd);
    auto w = ops::softmax(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt), 1);
    if (capture) capture->mha_weights.push_back(w.value());
    if (adapt) w = ops::add_const(w, emphasis_delta<T>(len, len, mask, strength));
    heads.push_back(ops::matmul(w, vh));
  }
  auto ctx = n_heads == 1 ? heads[0] : ops::concat_cols(heads);
  auto out = ops::linear(ctx, param(tape, params, prefix + "wo"), param(tape, params, prefix + "bo"));
  return ops::add(h, dropout(out, mode));
}

template <typename T>
Var<T> cca_forward(Tape<T>& tape, const ParameterRegistry<T>& params, const std::string& prefix,
                   const ModelConfig& config, Var<T> h, Var<T> c, const EmphasisMask& mask, T strength,
                   const ForwardMode& mode, BlockCapture<T>* capture) {
  check_mask(mask, h.rows(), "cross attention");
  if (!(strength >= T(0))) throw std::invalid_argument("cross attention: strength must be >= 0");
  auto q = ops::linear(h, param(tape, params, prefix + "wq"));
  auto k = ops::linear(c, param(tape, params, prefix + "wk"));
  auto v = ops::linear(c, param(tape, params, prefix + "wv"));
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(config.d_model)));
  auto w = ops::softmax(ops::scale(ops::matmul_nt(q, k), inv_sqrt), 1);
  if (capture) {
    capture->cca_weights = w.value();
    capture->cca_values = v.value();
  }
  if (strength > T(0) && mask.any()) w = ops::add_const(w, emphasis_delta<T>(w.rows(), w.cols(), mask, strength));
  if (capture) capture->cca_adjusted = w.value();
  auto out = ops::linear(ops::matmul(w, v), param(tape, params, prefix + "wo"), param(tape, params, prefix + "bo"));
  auto result = ops::add(h, dropout(out, mode));
  if (capture) capture->cca_out = result.value();
  return result;
}

template <typename T>
Var<T> cln_forward(Tape<T>& tape, const ParameterRegistry<T>& params, const std::string& prefix, Var<T> x,
                   Var<T> c) {
  auto s = ops::sum_rows(c);
  auto gamma = ops::linear(s, param(tape, params, prefix + "wg"), param(tape, params, prefix + "bg"));
  auto beta = ops::linear(s, param(tape, params, prefix + "wb"), param(tape, params, prefix + "bb"));
  return ops::add_row(ops::mul_row(ops::layer_norm(x), gamma), beta);
}

template <typename T>
Var<T> ffn_forward(Tape<T>& tape, const ParameterRegistry<T>& params, const std::string& prefix, Var<T> x) {
  auto y = ops::conv1d(x, param(tape, params, prefix + "conv1.w"), param(tape, params, prefix + "conv1.b"));
  return ops::conv1d(ops::silu(y), param(tape, params, prefix + "conv2.w"), param(tape, params, prefix + "conv2.b"));
}

template <typename T>
Var<T> epe_block_forward(Tape<T>& tape, const ParameterRegistry<T>& params, const std::string& prefix,
                         const ModelConfig& config, Var<T> h, Var<T> c, const EmphasisMask& mask, T strength,
                         const ForwardMode& mode, BlockCapture<T>* capture) {
  check_mask(mask, h.rows(), "EPE block");
  auto x = mha_forward(tape, params, prefix + "mha.", config, h, mask, strength, mode, capture);
  x = cln_forward(tape, params, prefix + "cln1.", x, c);
  x = cca_forward(tape, params, prefix + "cca.", config, x, c, mask, strength, mode, capture);
  x = cln_forward(tape, params, prefix + "cln2.", x, c);
  x = ops::add(x, dropout(ffn_forward(tape, params, prefix + "ffn.", x), mode));
  return cln_forward(tape, params, prefix + "cln3.", x, c);
}

template <typename T>
Var<T> predictor_forward(Tape<T>& tape, const ParameterRegistry<T>& params, const std::string& prefix, Var<T> x,
                         const ForwardMode& mode) {
  for (const char* stage : {"1", "2"}) {
    const std::string s(stage);
    x = ops::conv1d(x, param(tape, params, prefix + "conv" + s + ".w"), param(tape, params, prefix + "conv" + s + ".b"));
    x = ops::layer_norm(ops::silu(x));
    x = ops::add_row(ops::mul_row(x, param(tape, params, prefix + "ln" + s + ".g")),
                     param(tape, params, prefix + "ln" + s + ".b"));
    x = dropout(x, mode);
  }
  return ops::linear(x, param(tape, params, prefix + "out.w"), param(tape, params, prefix + "out.b"));
}

template <typename T>
Var<T> length_regulate(Var<T> h, std::span<const int> durations) {
  if (durations.size() != h.rows()) {
    throw ShapeError("length_regulate: " + std::to_string(durations.size()) + " durations for " +
                     std::to_string(h.rows()) + " positions");
  }
  for (int dur : durations) {
    if (dur < 1) throw std::invalid_argument("length_regulate: duration " + std::to_string(dur) + " < 1");
  }
  return ops::repeat_rows(h, durations);
}

template <typename T>
VarianceAdapterOutput<T> variance_adapter_forward(Tape<T>& tape, const ParameterRegistry<T>& params,
                                                  const ModelConfig& /*config*/, Var<T> h, const EmphasisMask& mask,
                                                  const NormalizationStats& stats, const ProsodyTargets* teacher,
                                                  double emphasis_scale, const ForwardMode& mode) {
  const std::size_t len = h.rows();
  check_mask(mask, len, "variance adapter");
  if (teacher) {
    teacher->validate();
    if (teacher->size() != len) {
      throw ShapeError("variance adapter: teacher has " + std::to_string(teacher->size()) + " positions, input " +
                       std::to_string(len));
    }
  }
  VarianceAdapterOutput<T> out;
  out.pitch_pred = predictor_forward(tape, params, "predictor.pitch.", h, mode);
  out.energy_pred = predictor_forward(tape, params, "predictor.energy.", h, mode);
  out.dur_pred = ops::softplus(predictor_forward(tape, params, "predictor.duration.", h, mode));

  Tensor<T> mask_col({len, 1});
  for (std::size_t i = 0; i < len; ++i) mask_col[i] = mask.values[i] ? T(1) : T(0);
  auto hm = ops::concat_cols<T>({h, tape.constant(mask_col)});
  const std::span<const std::uint8_t> keep(mask.values);
  out.pitch_var_pred = ops::mask_rows(predictor_forward(tape, params, "predictor.pitch_var.", hm, mode), keep);
  out.dur_var_pred = ops::mask_rows(predictor_forward(tape, params, "predictor.dur_var.", hm, mode), keep);

  out.effective_pitch = ops::add(out.pitch_pred, ops::scale(out.pitch_var_pred, static_cast<T>(emphasis_scale)));
  out.effective_dur =
      ops::add(out.dur_pred, ops::scale(out.dur_var_pred, static_cast<T>(emphasis_scale * stats.dur_unit())));

  Var<T> pitch_in, energy_in;
  if (teacher) {
    pitch_in = tape.constant(column<T>(teacher->pitch));
    energy_in = tape.constant(column<T>(teacher->energy));
    out.durations = teacher->duration;
  } else {
    pitch_in = tape.constant(out.effective_pitch.value());
    energy_in = tape.constant(out.energy_pred.value());
    const auto& dur = out.effective_dur.value();
    for (std::size_t i = 0; i < len; ++i) {
      out.durations.push_back(std::max(1, static_cast<int>(std::lround(static_cast<double>(dur[i])))));
    }
  }
  auto pitch_emb = ops::linear(pitch_in, param(tape, params, "adapter.pitch_proj.w"),
                               param(tape, params, "adapter.pitch_proj.b"));
  auto energy_emb = ops::linear(energy_in, param(tape, params, "adapter.energy_proj.w"),
                                param(tape, params, "adapter.energy_proj.b"));
  auto hv = ops::add(h, ops::add(pitch_emb, energy_emb));
  out.frame_hidden = length_regulate(hv, out.durations);
  out.frame_mask = expand_mask_to_frames(mask, out.durations);
  return out;
}

template <typename T>
ModelOutput<T> model_forward(Tape<T>& tape, const ParameterRegistry<T>& params, const ModelConfig& config,
                             const NormalizationStats& stats, const ModelInput& input, const ForwardOptions& options,
                             ModelCapture<T>* capture) {
  if (input.phonemes.empty()) throw std::invalid_argument("model: empty phoneme sequence");
  const int len = static_cast<int>(input.phonemes.size());
  if (input.span && (input.span->start < 0 || input.span->end >= len || input.span->start > input.span->end)) {
    throw std::invalid_argument("model: emphasis span [" + std::to_string(input.span->start) + ", " +
                                std::to_string(input.span->end) + "] outside sequence of length " +
                                std::to_string(len));
  }
  const auto mask = make_phoneme_mask(len, input.span);
  const T strength = static_cast<T>(options.ea_enabled ? config.ea_strength : 0.0);
  if (capture) {
    capture->encoder.assign(static_cast<std::size_t>(config.n_encoder_blocks), {});
    capture->decoder.assign(static_cast<std::size_t>(config.n_decoder_blocks), {});
  }

  ModelOutput<T> out;
  auto c = condition_tokens(tape, params, config, input.emotion, input.speaker);
  auto h = embed_phonemes(tape, params, config, std::span<const int>(input.phonemes));
  for (int i = 0; i < config.n_encoder_blocks; ++i) {
    h = epe_block_forward(tape, params, "encoder." + std::to_string(i) + ".", config, h, c, mask, strength,
                          options.mode, capture ? &capture->encoder[static_cast<std::size_t>(i)] : nullptr);
  }
  out.encoder_out = h;
  out.adapter = variance_adapter_forward(tape, params, config, h, mask, stats, input.teacher, options.emphasis_scale,
                                         options.mode);
  auto x = out.adapter.frame_hidden;
  x = ops::add_const(x, positional_encoding<T>(x.rows(), static_cast<std::size_t>(config.d_model)));
  for (int i = 0; i < config.n_decoder_blocks; ++i) {
    x = epe_block_forward(tape, params, "decoder." + std::to_string(i) + ".", config, x, c, out.adapter.frame_mask,
                          strength, options.mode, capture ? &capture->decoder[static_cast<std::size_t>(i)] : nullptr);
  }
  out.mel = ops::linear(x, param(tape, params, "mel_head.w"), param(tape, params, "mel_head.b"));
  return out;
}

AcousticModel::AcousticModel(ModelConfig config, NormalizationStats stats, std::uint64_t seed)
    : config_(config), stats_(stats), params_(init_parameters<float>(config, seed)) {}

AcousticModel::AcousticModel(ModelConfig config, NormalizationStats stats, ParameterRegistry<float> params)
    : config_(config), stats_(stats), params_(std::move(params)) {}

SynthesisResult synthesize(const AcousticModel& model, const PhonemeSequence& phonemes, int emotion, int speaker,
                           const std::optional<EmphasisSpan>& span, const SynthesisOptions& options) {
  phonemes.validate(std::numeric_limits<int>::max());
  if (span) validate_span(*span, phonemes);
  ModelInput input;
  input.phonemes = phonemes.ids;
  input.emotion = emotion;
  input.speaker = speaker;
  input.span = span;
  ForwardOptions fo;
  fo.emphasis_scale = options.emphasis_scale;
  fo.ea_enabled = options.ea_enabled;
  Tape<float> tape(false);
  auto out = model_forward(tape, model.params(), model.config(), model.stats(), input, fo);
  SynthesisResult r;
  r.mel = out.mel.value();
  r.pitch = to_doubles(out.adapter.effective_pitch.value());
  r.energy = to_doubles(out.adapter.energy_pred.value());
  r.pitch_var = to_doubles(out.adapter.pitch_var_pred.value());
  r.dur_var = to_doubles(out.adapter.dur_var_pred.value());
  r.durations = out.adapter.durations;
  r.frame_mask = out.adapter.frame_mask;
  return r;
}

#define EMETTS_INSTANTIATE_MODEL(T)                                                                                  \
  template ParameterRegistry<T> init_parameters<T>(const ModelConfig&, std::uint64_t);                              \
  template Tensor<T> positional_encoding<T>(std::size_t, std::size_t);                                             \
  template Var<T> embed_phonemes(Tape<T>&, const ParameterRegistry<T>&, const ModelConfig&, std::span<const int>);   \
  template Var<T> condition_tokens(Tape<T>&, const ParameterRegistry<T>&, const ModelConfig&, int, int);             \
  template Tensor<T> emphasis_adapter_apply(const Tensor<T>&, const EmphasisMask&, T);                               \
  template Var<T> mha_forward(Tape<T>&, const ParameterRegistry<T>&, const std::string&, const ModelConfig&, Var<T>, \
                              const EmphasisMask&, T, const ForwardMode&, BlockCapture<T>*);                         \
  template Var<T> cca_forward(Tape<T>&, const ParameterRegistry<T>&, const std::string&, const ModelConfig&, Var<T>, \
                              Var<T>, const EmphasisMask&, T, const ForwardMode&, BlockCapture<T>*);                 \
  template Var<T> cln_forward(Tape<T>&, const ParameterRegistry<T>&, const std::string&, Var<T>, Var<T>);            \
  template Var<T> ffn_forward(Tape<T>&, const ParameterRegistry<T>&, const std::string&, Var<T>);                    \
  template Var<T> epe_block_forward(Tape<T>&, const ParameterRegistry<T>&, const std::string&, const ModelConfig&,   \
                                    Var<T>, Var<T>, const EmphasisMask&, T, const ForwardMode&, BlockCapture<T>*);   \
  template Var<T> predictor_forward(Tape<T>&, const ParameterRegistry<T>&, const std::string&, Var<T>,               \
                                    const ForwardMode&);                                                             \
  template Var<T> length_regulate(Var<T>, std::span<const int>);                                                     \
  template VarianceAdapterOutput<T> variance_adapter_forward(Tape<T>&, const ParameterRegistry<T>&,                  \
                                                             const ModelConfig&, Var<T>, const EmphasisMask&,        \
                                                             const NormalizationStats&, const ProsodyTargets*,       \
                                                             double, const ForwardMode&);                            \
  template ModelOutput<T> model_forward(Tape<T>&, const ParameterRegistry<T>&, const ModelConfig&,                   \
                                        const NormalizationStats&, const ModelInput&, const ForwardOptions&,         \
                                        ModelCapture<T>*);

EMETTS_INSTANTIATE_MODEL(float)
EMETTS_INSTANTIATE_MODEL(double)

#undef EMETTS_INSTANTIATE_MODEL

template ParameterRegistry<double> convert_parameters<double, float>(const ParameterRegistry<float>&,
                                                                     std::string_view);
template ParameterRegistry<float> convert_parameters<float, double>(const ParameterRegistry<double>&,
                                                                    std::string_view);
template ParameterRegistry<double> convert_parameters<double, double>(const ParameterRegistry<double>&,
                                                                      std::string_view);
template ParameterRegistry<float> convert_parameters<float, float>(const ParameterRegistry<float>&, std::string_view);

}  // namespace emetts
