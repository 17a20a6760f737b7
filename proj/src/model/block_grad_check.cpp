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

#include <functional>

#include "emetts/model/model.hpp"
#include "emetts/numerics/ops.hpp"

namespace emetts {

namespace {

using V = Var<double>;

TensorD gaussian(Shape shape, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> g(0.0, stddev);
  TensorD t(std::move(shape));
  for (auto& v : t.storage()) v = g(rng);
  return t;
}

/// Parameters under any of `prefixes`, plus the block inputs as extra
/// parameters so gradients into upstream layers are checked too.
ParameterRegistry<double> subset(const ParameterRegistry<double>& full, std::initializer_list<std::string_view> prefixes,
                                 const std::vector<std::pair<std::string, TensorD>>& inputs) {
  ParameterRegistry<double> out;
  for (std::size_t i = 0; i < full.size(); ++i) {
    for (auto prefix : prefixes) {
      if (full[i].name.compare(0, prefix.size(), prefix) == 0) {
        out.add(full[i].name, full[i].value);
        break;
      }
    }
  }
  for (const auto& [name, value] : inputs) out.add(name, value);
  return out;
}

/// sum(out * R) for a fixed random R, so every output element contributes.
V project(Tape<double>& tape, V out, const TensorD& weights) {
  return ops::sum(ops::mul(out, tape.constant(weights)));
}

}  // namespace

ModelConfig gradient_check_config() {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.conv_hidden = 16;
  c.predictor_hidden = 8;
  c.n_mel = 6;
  c.vocab_size = 10;
  c.n_speakers = 3;
  return c;
}

std::vector<BlockGradReport> check_block_gradients(const ModelConfig& config, std::uint64_t seed, double epsilon,
                                                   double tolerance) {
  auto full = init_parameters<double>(config, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  // Move away from the structured initialization (zero CLN weights, unit gains).
  std::normal_distribution<double> jitter(0.0, 0.2);
  for (std::size_t i = 0; i < full.size(); ++i) {
    for (auto& v : full[i].value.storage()) v += jitter(rng);
  }

  const std::size_t len = 12;
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto n_tok = static_cast<std::size_t>(config.n_condition_tokens());
  const auto h0 = gaussian({len, d}, rng, 1.0);
  const auto c0 = gaussian({n_tok, d}, rng, 1.0);
  const EmphasisMask mask{{0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0, 0}, Resolution::kPhoneme};
  const double strength = config.ea_strength;
  const ForwardMode eval;
  auto proj = [&](std::size_t cols) { return gaussian({len, cols}, rng, 1.0); };

  struct Case {
    std::string name;
    ParameterRegistry<double> params;
    std::function<V(Tape<double>&, const ParameterRegistry<double>&)> loss;
  };
  std::vector<Case> cases;
  auto in = [](Tape<double>& t, const ParameterRegistry<double>& p, const char* name) {
    return t.param(const_cast<Parameter<double>&>(p.get(name)));
  };
  const std::vector<std::pair<std::string, TensorD>> hc{{"input.h", h0}, {"input.c", c0}};
  const std::vector<std::pair<std::string, TensorD>> h_only{{"input.h", h0}};

  {
    auto r = proj(d);
    cases.push_back({"mha", subset(full, {"encoder.0.mha."}, h_only), [=, &config](auto& t, const auto& p) {
                       return project(t,
                                      mha_forward(t, p, "encoder.0.mha.", config, in(t, p, "input.h"), mask, strength,
                                                  eval),
                                      r);
                     }});
  }
  {
    auto r = proj(d);
    cases.push_back({"cca_ea", subset(full, {"encoder.0.cca."}, hc), [=, &config](auto& t, const auto& p) {
                       return project(t,
                                      cca_forward(t, p, "encoder.0.cca.", config, in(t, p, "input.h"),
                                                  in(t, p, "input.c"), mask, strength, eval),
                                      r);
                     }});
  }
  {
    auto r = proj(d);
    cases.push_back({"cln", subset(full, {"encoder.0.cln1."}, hc), [=](auto& t, const auto& p) {
                       return project(t, cln_forward(t, p, "encoder.0.cln1.", in(t, p, "input.h"), in(t, p, "input.c")),
                                      r);
                     }});
  }
  {
    auto r = proj(d);
    cases.push_back({"conv_ffn", subset(full, {"encoder.0.ffn."}, h_only), [=](auto& t, const auto& p) {
                       return project(t, ffn_forward(t, p, "encoder.0.ffn.", in(t, p, "input.h")), r);
                     }});
  }
  {
    auto r = proj(d);
    cases.push_back({"epe_block", subset(full, {"encoder.0."}, hc), [=, &config](auto& t, const auto& p) {
                       return project(t,
                                      epe_block_forward(t, p, "encoder.0.", config, in(t, p, "input.h"),
                                                        in(t, p, "input.c"), mask, strength, eval),
                                      r);
                     }});
  }
  for (std::string name : kPredictorNames) {
    const std::string prefix = "predictor." + name + ".";
    const bool masked = name == "pitch_var" || name == "dur_var";
    const bool positive = name == "duration";
    auto r = proj(1);
    cases.push_back({"predictor." + name, subset(full, {prefix}, h_only), [=](auto& t, const auto& p) {
                       V x = in(t, p, "input.h");
                       if (masked) {
                         TensorD col({len, 1});
                         for (std::size_t i = 0; i < len; ++i) col[i] = mask.values[i];
                         x = ops::concat_cols<double>({x, t.constant(col)});
                       }
                       V y = predictor_forward(t, p, prefix, x, eval);
                       if (positive) y = ops::softplus(y);
                       if (masked) y = ops::mask_rows(y, std::span<const std::uint8_t>(mask.values));
                       return project(t, y, r);
                     }});
  }
  {
    ProsodyTargets teacher;
    std::normal_distribution<double> g;
    for (std::size_t i = 0; i < len; ++i) {
      teacher.pitch.push_back(g(rng));
      teacher.energy.push_back(g(rng));
      teacher.duration.push_back(1 + static_cast<int>(i % 3));
    }
    const NormalizationStats stats{-0.5, 1.5, -1.0, 3.0};
    const int frames = teacher.total_frames();
    auto r_frames = gaussian({static_cast<std::size_t>(frames), d}, rng, 1.0);
    auto r_pitch = proj(1), r_dur = proj(1), r_energy = proj(1);
    cases.push_back({"variance_adapter", subset(full, {"predictor.", "adapter."}, h_only),
                     [=, &config](auto& t, const auto& p) {
                       auto out = variance_adapter_forward(t, p, config, in(t, p, "input.h"), mask, stats, &teacher,
                                                           1.0, eval);
                       auto l = ops::add(project(t, out.frame_hidden, r_frames),
                                         project(t, out.effective_pitch, r_pitch));
                       l = ops::add(l, project(t, out.effective_dur, r_dur));
                       return ops::add(l, project(t, out.energy_pred, r_energy));
                     }});
  }
  {
    auto r = proj(static_cast<std::size_t>(config.n_mel));
    cases.push_back({"mel_head", subset(full, {"mel_head."}, h_only), [=](auto& t, const auto& p) {
                       return project(t, ops::linear(in(t, p, "input.h"), in(t, p, "mel_head.w"), in(t, p, "mel_head.b")),
                                      r);
                     }});
  }
  {
    std::vector<int> ids;
    std::uniform_int_distribution<int> pick(0, config.vocab_size - 1);
    for (std::size_t i = 0; i < len; ++i) ids.push_back(pick(rng));
    auto r = proj(d);
    cases.push_back({"embedding", subset(full, {"embed."}, {}), [=, &config](auto& t, const auto& p) {
                       auto h = embed_phonemes(t, p, config, std::span<const int>(ids));
                       auto c = condition_tokens(t, p, config, 1 % config.n_emotions, 0);
                       // A bilinear term gives the condition tables a nonconstant gradient.
                       return ops::add(project(t, h, r), ops::sum(ops::mul(ops::sum_rows(c), ops::sum_rows(h))));
                     }});
  }

  std::vector<BlockGradReport> reports;
  for (auto& c : cases) {
    const auto& params = c.params;
    auto& loss = c.loss;
    auto report = grad_check(c.params, [&](Tape<double>& t) { return loss(t, params); }, epsilon, tolerance);
    reports.push_back({c.name, std::move(report)});
  }
  return reports;
}

}  // namespace emetts
