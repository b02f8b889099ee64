/*
 * Copyright 2026 The afusion Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "afusion/config_json.hpp"
#include "afusion/model.hpp"
#include "afusion/training.hpp"
#include "test_support.hpp"

namespace afusion {
namespace {

using testing::bitwise_equal;
using testing::max_abs_diff;
using testing::random_tensor;
using testing::ScratchDir;

constexpr Architecture kAllArchitectures[] = {Architecture::kAttendFusion,
                                              Architecture::kFcLateFusion,
                                              Architecture::kVisualOnly,
                                              Architecture::kAudioOnly};

ModelConfig small_config(Architecture arch) {
  ModelConfig c;
  c.arch = arch;
  c.visual_dim = 5;
  c.audio_dim = 3;
  c.vocab_size = 4;
  c.seq_len = 3;
  c.visual_hidden = {4};
  c.audio_hidden = {2};
  c.fusion_hidden = {6};
  return c;
}

struct Inputs {
  Tensor visual, audio;
};

Inputs random_inputs(const ModelConfig& c, std::size_t batch, Rng& rng) {
  return {random_tensor({batch, c.seq_len, c.visual_dim}, rng),
          random_tensor({batch, c.seq_len, c.audio_dim}, rng)};
}

std::map<std::string, Tensor> named_values(const Model& m) {
  std::map<std::string, Tensor> out;
  for (const auto& p : m.parameters()) out.emplace(p.name, *p.value);
  return out;
}

TEST(ModelConfig, InvalidConfigsRejected) {
  ModelConfig c = small_config(Architecture::kAttendFusion);
  c.vocab_size = 0;
  EXPECT_THROW(Model::build(c, 1), InvalidConfig);
  EXPECT_THROW(param_count(c), InvalidConfig);
  c = small_config(Architecture::kAttendFusion);
  c.seq_len = 0;
  EXPECT_THROW(Model::build(c, 1), InvalidConfig);
  c = small_config(Architecture::kAttendFusion);
  c.visual_hidden = {3, 0};
  EXPECT_THROW(Model::build(c, 1), InvalidConfig);
  EXPECT_THROW(parse_architecture("early_fusion"), InvalidConfig);
}

TEST(ModelConfig, ArchitectureNamesRoundTrip) {
  for (Architecture a : kAllArchitectures) EXPECT_EQ(parse_architecture(to_string(a)), a);
}

TEST(Model, SameSeedGivesIdenticalParameterBytes) {
  for (Architecture a : kAllArchitectures) {
    const Model m1 = Model::build(small_config(a), 9);
    const Model m2 = Model::build(small_config(a), 9);
    EXPECT_EQ(encode_weights(m1), encode_weights(m2));
    EXPECT_NE(encode_weights(m1), encode_weights(Model::build(small_config(a), 10)));
  }
}

TEST(Model, ParameterNamesAreUniqueAndOrdered) {
  const Model m = Model::build(small_config(Architecture::kAttendFusion), 1);
  std::vector<std::string> names;
  for (const auto& p : m.parameters()) names.push_back(p.name);
  const std::vector<std::string> expected = {
      "visual.fc0.weight", "visual.fc0.bias", "visual.attn.wq", "visual.attn.wk",
      "visual.attn.wv",    "audio.fc0.weight", "audio.fc0.bias", "audio.attn.wq",
      "audio.attn.wk",     "audio.attn.wv",   "head.fc0.weight", "head.fc0.bias",
      "head.out.weight",   "head.out.bias"};
  EXPECT_EQ(names, expected);
}

TEST(Model, SingleFrameAttentionFusionBuildsAndRuns) {
  ModelConfig c = small_config(Architecture::kAttendFusion);
  c.seq_len = 1;
  Model m = Model::build(c, 2);
  Rng rng(2);
  const auto in = random_inputs(c, 3, rng);
  const Tensor p = m.forward(in.visual, in.audio);
  EXPECT_EQ(p.shape(), (Tensor::Shape{3, 4}));
}

TEST(Model, OutputsAreProbabilities) {
  Rng rng(3);
  for (Architecture a : kAllArchitectures) {
    Model m = Model::build(small_config(a), 3);
    const auto in = random_inputs(m.config(), 6, rng);
    const Tensor p = m.forward(in.visual, in.audio);
    EXPECT_EQ(p.shape(), (Tensor::Shape{6, 4}));
    for (double v : p.values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Model, PredictMatchesForwardBitwise) {
  Rng rng(4);
  for (Architecture a : kAllArchitectures) {
    Model m = Model::build(small_config(a), 4);
    const auto in = random_inputs(m.config(), 3, rng);
    EXPECT_TRUE(bitwise_equal(m.predict(in.visual, in.audio), m.forward(in.visual, in.audio)));
  }
}

TEST(Model, BatchIndependenceBitwise) {
  Rng rng(5);
  for (Architecture a : kAllArchitectures) {
    const Model m = Model::build(small_config(a), 5);
    const auto in = random_inputs(m.config(), 3, rng);
    const Tensor full = m.predict(in.visual, in.audio);
    for (std::size_t b = 0; b < 3; ++b) {
      const Tensor v = stack({slice_batch(in.visual, b)});
      const Tensor au = stack({slice_batch(in.audio, b)});
      const Tensor single = m.predict(v, au);
      for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(single(0, c), full(b, c));
    }
  }
}

TEST(Model, ShufflingTheBatchPermutesRows) {
  Rng rng(6);
  const Model m = Model::build(small_config(Architecture::kAttendFusion), 6);
  const auto in = random_inputs(m.config(), 5, rng);
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  std::vector<Tensor> vs, as;
  for (std::size_t i : perm) {
    vs.push_back(slice_batch(in.visual, i));
    as.push_back(slice_batch(in.audio, i));
  }
  const Tensor base = m.predict(in.visual, in.audio);
  const Tensor shuffled = m.predict(stack(vs), stack(as));
  for (std::size_t r = 0; r < perm.size(); ++r) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(shuffled(r, c), base(perm[r], c));
  }
}

TEST(Model, ZeroInputsDependOnlyOnBiases) {
  for (Architecture a : kAllArchitectures) {
    Model m = Model::build(small_config(a), 7);
    const auto& c = m.config();
    const Tensor p = m.predict(Tensor({2, c.seq_len, c.visual_dim}), Tensor({2, c.seq_len, c.audio_dim}));
    for (std::size_t j = 0; j < c.vocab_size; ++j) EXPECT_EQ(p(0, j), p(1, j));
    // Perturbing any weight matrix of the first layer of each branch leaves
    // zero-input outputs unchanged.
    for (auto& ref : m.parameters()) {
      if (ref.name.ends_with("fc0.weight") && !ref.name.starts_with("head")) ref.value->fill(0.37);
    }
    EXPECT_TRUE(bitwise_equal(
        m.predict(Tensor({2, c.seq_len, c.visual_dim}), Tensor({2, c.seq_len, c.audio_dim})), p));
  }
}

TEST(Model, InputShapeErrors) {
  Model m = Model::build(small_config(Architecture::kAttendFusion), 1);
  const auto& c = m.config();
  EXPECT_THROW(m.forward(Tensor({2, c.seq_len, c.visual_dim + 1}), Tensor({2, c.seq_len, c.audio_dim})),
               ShapeMismatch);
  EXPECT_THROW(m.forward(Tensor({2, c.seq_len, c.visual_dim}), Tensor({3, c.seq_len, c.audio_dim})),
               ShapeMismatch);
  EXPECT_THROW(m.forward(Tensor({2, c.seq_len + 1, c.visual_dim}), Tensor({2, c.seq_len + 1, c.audio_dim})),
               ShapeMismatch);
}

// Recomputes a tiny attention-fusion model one tensor operation at a time.
TEST(Model, TinyAttentionFusionMatchesStepByStepRecomputation) {
  ModelConfig c;
  c.arch = Architecture::kAttendFusion;
  c.visual_dim = 4;
  c.audio_dim = 2;
  c.vocab_size = 3;
  c.seq_len = 2;
  c.visual_hidden = {3};
  c.audio_hidden = {2};
  c.fusion_hidden = {};
  const Model m = Model::build(c, 21);
  auto w = named_values(m);
  Rng rng(21);
  const auto in = random_inputs(c, 2, rng);
  const Tensor probs = m.predict(in.visual, in.audio);

  const auto linear = [](const Tensor& x, const Tensor& weight, const Tensor& bias) {
    Tensor y = matmul(x, transpose(weight));
    for (std::size_t i = 0; i < y.dim(0); ++i) {
      for (std::size_t j = 0; j < y.dim(1); ++j) y(i, j) += bias[j];
    }
    return y;
  };
  const auto relu = [](Tensor x) {
    for (double& v : x.data()) v = std::max(v, 0.0);
    return x;
  };
  const auto branch = [&](const Tensor& x, const std::string& p) {
    const Tensor h = relu(linear(x, w[p + ".fc0.weight"], w[p + ".fc0.bias"]));
    const Tensor q = matmul(h, w[p + ".attn.wq"]);
    const Tensor k = matmul(h, w[p + ".attn.wk"]);
    const Tensor v = matmul(h, w[p + ".attn.wv"]);
    const double s = 1.0 / std::sqrt(static_cast<double>(h.dim(1)));
    const Tensor att = matmul(softmax_rows(scale(matmul(q, transpose(k)), s)), v);
    return mean(att, 0).reshaped({1, att.dim(1)});
  };
  for (std::size_t b = 0; b < 2; ++b) {
    const Tensor fused = concat_columns(branch(slice_batch(in.visual, b), "visual"),
                                        branch(slice_batch(in.audio, b), "audio"));
    const Tensor logits = linear(fused, w["head.out.weight"], w["head.out.bias"]);
    for (std::size_t j = 0; j < 3; ++j) {
      const double expected = 1.0 / (1.0 + std::exp(-logits(0, j)));
      EXPECT_NEAR(probs(b, j), expected, 1e-14);
    }
  }
}

TEST(Model, TinyLateFusionMatchesStepByStepRecomputation) {
  ModelConfig c;
  c.arch = Architecture::kFcLateFusion;
  c.visual_dim = 4;
  c.audio_dim = 2;
  c.vocab_size = 3;
  c.seq_len = 2;
  c.visual_hidden = {3};
  c.audio_hidden = {2};
  c.fusion_hidden = {2};
  const Model m = Model::build(c, 22);
  auto w = named_values(m);
  Rng rng(22);
  const auto in = random_inputs(c, 2, rng);
  const Tensor probs = m.predict(in.visual, in.audio);
  for (std::size_t b = 0; b < 2; ++b) {
    const auto mlp = [&](const Tensor& x, const std::string& p) {
      Tensor pooled = mean(x, 0).reshaped({1, x.dim(1)});
      Tensor y = matmul(pooled, transpose(w[p + ".fc0.weight"]));
      for (std::size_t j = 0; j < y.dim(1); ++j) y(0, j) = std::max(y(0, j) + w[p + ".fc0.bias"][j], 0.0);
      return y;
    };
    Tensor h = concat_columns(mlp(slice_batch(in.visual, b), "visual"),
                              mlp(slice_batch(in.audio, b), "audio"));
    Tensor h2 = matmul(h, transpose(w["head.fc0.weight"]));
    for (std::size_t j = 0; j < 2; ++j) h2(0, j) = std::max(h2(0, j) + w["head.fc0.bias"][j], 0.0);
    Tensor logits = matmul(h2, transpose(w["head.out.weight"]));
    for (std::size_t j = 0; j < 3; ++j) {
      const double expected = 1.0 / (1.0 + std::exp(-(logits(0, j) + w["head.out.bias"][j])));
      EXPECT_NEAR(probs(b, j), expected, 1e-14);
    }
  }
}

TEST(Model, ZeroUpstreamGivesZeroGradients) {
  Rng rng(8);
  for (Architecture a : kAllArchitectures) {
    Model m = Model::build(small_config(a), 8);
    const auto in = random_inputs(m.config(), 2, rng);
    m.zero_grads();
    m.forward(in.visual, in.audio);
    m.backward(Tensor({2, 4}));
    for (const auto& p : m.parameters()) {
      for (double v : p.grad->values()) EXPECT_EQ(v, 0.0) << p.name;
    }
  }
}

TEST(Model, BackwardWithoutForwardThrows) {
  Model m = Model::build(small_config(Architecture::kAttendFusion), 1);
  EXPECT_THROW(m.backward(Tensor({1, 4})), BackwardBeforeForward);
}

TEST(Model, EndToEndGradientCheck) {
  for (Architecture a : {Architecture::kAttendFusion, Architecture::kFcLateFusion,
                         Architecture::kVisualOnly, Architecture::kAudioOnly}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Model m = Model::build(gradcheck_model_config(a), seed);
      GradCheckOptions opt;
      opt.seed = seed;
      const auto report = gradcheck_model(m, 2, opt);
      EXPECT_TRUE(report.pass) << to_string(a) << " seed " << seed << " " << report.max_rel_error();
    }
  }
}

TEST(Model, ZeroLearningRateStepLeavesParametersUnchanged) {
  Rng rng(9);
  for (Architecture a : kAllArchitectures) {
    Model m = Model::build(small_config(a), 9);
    const auto before = encode_weights(m);
    const auto in = random_inputs(m.config(), 3, rng);
    std::vector<LabelSet> labels = {LabelSet({0}), LabelSet({1, 3}), LabelSet({2})};
    m.backward(bce_loss(m.forward(in.visual, in.audio), labels).grad);
    AdamState adam;
    adam.lr = 0.0;
    adam_step(adam, m);
    EXPECT_EQ(encode_weights(m), before) << to_string(a);
  }
}

TEST(Model, UnimodalModelsIgnoreTheOtherModality) {
  Rng rng(10);
  for (Architecture a : {Architecture::kVisualOnly, Architecture::kAudioOnly}) {
    const Model m = Model::build(small_config(a), 10);
    const auto in = random_inputs(m.config(), 3, rng);
    const auto other = random_inputs(m.config(), 3, rng);
    const Tensor base = m.predict(in.visual, in.audio);
    const Tensor changed = a == Architecture::kVisualOnly ? m.predict(in.visual, other.audio)
                                                          : m.predict(other.visual, in.audio);
    EXPECT_TRUE(bitwise_equal(base, changed)) << to_string(a);
  }
}

// --- Parameter accounting --------------------------------------------------

TEST(ParamCount, SingleLinearLayer) { EXPECT_EQ(LinearLayer::param_count(3, 2), 8u); }

TEST(ParamCount, TinyAttentionFusionHandLedger) {
  ModelConfig c;
  c.arch = Architecture::kAttendFusion;
  c.visual_dim = 4;
  c.audio_dim = 2;
  c.vocab_size = 3;
  c.visual_hidden = {3};
  c.audio_hidden = {3};
  c.fusion_hidden = {};
  // visual fc 4*3+3, visual attention 3*3*3, audio fc 2*3+3, audio attention
  // 3*3*3, output (3+3)*3+3
  const std::size_t ledger = 15 + 27 + 9 + 27 + 21;
  EXPECT_EQ(ledger, 99u);
  EXPECT_EQ(param_count(c), ledger);
  EXPECT_EQ(Model::build(c, 1).parameter_total(), ledger);
}

TEST(ParamCount, ClosedFormMatchesRegistryForManyConfigs) {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    ModelConfig c;
    c.arch = kAllArchitectures[rng.below(4)];
    c.visual_dim = rng.below(6) + 1;
    c.audio_dim = rng.below(6) + 1;
    c.vocab_size = rng.below(6) + 1;
    c.seq_len = rng.below(3) + 1;
    for (auto* hidden : {&c.visual_hidden, &c.audio_hidden, &c.fusion_hidden}) {
      hidden->resize(rng.below(3));
      for (auto& h : *hidden) h = rng.below(5) + 1;
    }
    EXPECT_EQ(param_count(c), Model::build(c, 1).parameter_total());
  }
}

ModelConfig load_reference(const std::string& file) {
  const json j = read_json_file(std::filesystem::path(AFUSION_CONFIG_DIR) / file);
  return model_config_from_json(j.at("model"));
}

TEST(ParamCount, ReferenceConfigsMatchTable) {
  const std::size_t fc = param_count(load_reference("ref_fc.json"));
  const std::size_t att = param_count(load_reference("ref_att.json"));
  EXPECT_NEAR(static_cast<double>(fc), 341e6, 0.05 * 341e6);
  EXPECT_NEAR(static_cast<double>(att), 72e6, 0.05 * 72e6);
  EXPECT_GE(static_cast<double>(fc) / static_cast<double>(att), 4.0);
}

// --- Weight files -----------------------------------------------------------

TEST(Weights, SaveLoadRoundTripIsBitwise) {
  ScratchDir dir("weights");
  Rng rng(12);
  for (Architecture a : kAllArchitectures) {
    const Model m = Model::build(small_config(a), 12);
    save_weights(m, dir / "m.afw1");
    const Model loaded = load_weights(dir / "m.afw1", m.config());
    EXPECT_EQ(encode_weights(loaded), encode_weights(m));
    const auto in = random_inputs(m.config(), 3, rng);
    EXPECT_TRUE(bitwise_equal(loaded.predict(in.visual, in.audio), m.predict(in.visual, in.audio)));
  }
}

TEST(Weights, TruncatedFileIsCorrupt) {
  ScratchDir dir("weights");
  const Model m = Model::build(small_config(Architecture::kAttendFusion), 1);
  auto bytes = encode_weights(m);
  for (std::size_t keep : {std::size_t{0}, std::size_t{3}, bytes.size() / 2, bytes.size() - 1}) {
    io::write_file(dir / "t.afw1", std::span(bytes).first(keep));
    EXPECT_THROW(load_weights(dir / "t.afw1", m.config()), CorruptFile) << keep;
  }
}

TEST(Weights, FlippedByteIsCorrupt) {
  const Model m = Model::build(small_config(Architecture::kAttendFusion), 1);
  auto bytes = encode_weights(m);
  bytes[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW(decode_weights(bytes), CorruptFile);
}

std::vector<std::uint8_t> resealed(std::vector<std::uint8_t> payload) {
  const std::uint32_t crc = io::crc32(payload);
  for (int i = 0; i < 4; ++i) payload.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
  return payload;
}

TEST(Weights, WrongMagicIsCorruptAndWrongVersionIsRejected) {
  const Model m = Model::build(small_config(Architecture::kAttendFusion), 1);
  const auto bytes = encode_weights(m);
  std::vector<std::uint8_t> payload(bytes.begin(), bytes.end() - 4);
  EXPECT_EQ(resealed(payload), bytes);
  payload[0] = 'X';
  EXPECT_THROW(decode_weights(resealed(payload)), CorruptFile);
  payload[0] = 'A';
  payload[4] = 9;  // version, low byte
  EXPECT_THROW(decode_weights(resealed(payload)), VersionMismatch);
}

TEST(Weights, OtherConfigIsShapeMismatch) {
  ScratchDir dir("weights");
  const ModelConfig c = small_config(Architecture::kAttendFusion);
  save_weights(Model::build(c, 1), dir / "m.afw1");
  ModelConfig wider = c;
  wider.visual_hidden = {5};
  EXPECT_THROW(load_weights(dir / "m.afw1", wider), ShapeMismatch);
  EXPECT_THROW(load_weights(dir / "m.afw1", small_config(Architecture::kFcLateFusion)),
               ShapeMismatch);
}

TEST(Weights, MissingFileIsIoError) {
  EXPECT_THROW(load_weights("/nonexistent/dir/m.afw1", small_config(Architecture::kAttendFusion)),
               IoError);
}

}  // namespace
}  // namespace afusion
