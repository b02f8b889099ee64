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

#ifndef AFUSION_MODEL_HPP_
#define AFUSION_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "afusion/binary_io.hpp"
#include "afusion/layers.hpp"
#include "afusion/rng.hpp"
#include "afusion/tensor.hpp"

namespace afusion {

enum class Architecture { kAttendFusion, kFcLateFusion, kVisualOnly, kAudioOnly };

inline constexpr std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::kAttendFusion: return "attend_fusion";
    case Architecture::kFcLateFusion: return "fc_late_fusion";
    case Architecture::kVisualOnly: return "visual_only";
    case Architecture::kAudioOnly: return "audio_only";
  }
  return "unknown";
}

inline Architecture parse_architecture(std::string_view name) {
  for (auto arch : {Architecture::kAttendFusion, Architecture::kFcLateFusion,
                    Architecture::kVisualOnly, Architecture::kAudioOnly}) {
    if (name == to_string(arch)) return arch;
  }
  throw InvalidConfig("unknown architecture '" + std::string(name) + "'");
}

struct ModelConfig {
  Architecture arch = Architecture::kAttendFusion;
  std::size_t visual_dim = 1024;
  std::size_t audio_dim = 128;
  std::size_t vocab_size = 4716;
  std::size_t seq_len = 8;
  std::vector<std::size_t> visual_hidden;
  std::vector<std::size_t> audio_hidden;
  std::vector<std::size_t> fusion_hidden;

  bool uses_visual() const { return arch != Architecture::kAudioOnly; }
  bool uses_audio() const { return arch != Architecture::kVisualOnly; }
  // The unimodal ablations keep the attention branch.
  bool uses_attention() const { return arch != Architecture::kFcLateFusion; }

  void validate() const {
    const auto positive = [](std::size_t v, const char* field) {
      if (v == 0) throw InvalidConfig(std::string(field) + " must be positive");
    };
    positive(visual_dim, "visual_dim");
    positive(audio_dim, "audio_dim");
    positive(vocab_size, "vocab_size");
    positive(seq_len, "seq_len");
    for (auto h : visual_hidden) positive(h, "visual_hidden entry");
    for (auto h : audio_hidden) positive(h, "audio_hidden entry");
    for (auto h : fusion_hidden) positive(h, "fusion_hidden entry");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// One modality's path from a [B x T x dim] feature sequence to a [B x h]
/// video-level representation.
///
/// Attention kind: per-frame (linear -> ReLU)* then self-attention over the
/// T frames, then mean over T. Pooled kind: mean over T first, then
/// (linear -> ReLU)*.
class Branch {
 public:
  enum class Kind { kAttention, kPooledMlp };

  Branch(Kind kind, std::size_t input_dim, const std::vector<std::size_t>& hidden,
         Rng& rng)
      : kind_(kind), input_dim_(input_dim) {
    std::size_t width = input_dim;
    for (std::size_t h : hidden) {
      linears_.emplace_back(width, h, rng);
      relus_.emplace_back();
      width = h;
    }
    output_dim_ = width;
    if (kind_ == Kind::kAttention) attention_.emplace(width, rng);
  }

  static std::size_t param_count(Kind kind, std::size_t input_dim,
                                 const std::vector<std::size_t>& hidden) {
    std::size_t count = 0, width = input_dim;
    for (std::size_t h : hidden) {
      count += LinearLayer::param_count(width, h);
      width = h;
    }
    if (kind == Kind::kAttention) count += SelfAttentionBlock::param_count(width);
    return count;
  }

  std::size_t output_dim() const { return output_dim_; }

  Tensor infer(const Tensor& x) const {
    check_input(x);
    const std::size_t batch = x.dim(0), frames = x.dim(1);
    if (kind_ == Kind::kPooledMlp) return mlp_infer(mean(x, 1));
    Tensor h = mlp_infer(x.reshaped({batch * frames, input_dim_}));
    return mean(attention_->infer(h.reshaped({batch, frames, output_dim_})), 1);
  }

  Tensor forward(const Tensor& x) {
    check_input(x);
    const std::size_t batch = x.dim(0), frames = x.dim(1);
    cached_shape_ = std::pair{batch, frames};
    if (kind_ == Kind::kPooledMlp) return mlp_forward(mean(x, 1));
    Tensor h = mlp_forward(x.reshaped({batch * frames, input_dim_}));
    return mean(attention_->forward(h.reshaped({batch, frames, output_dim_})), 1);
  }

  void backward(const Tensor& upstream) {
    if (!cached_shape_) throw BackwardBeforeForward("branch");
    const auto [batch, frames] = *cached_shape_;
    cached_shape_.reset();
    if (kind_ == Kind::kAttention) {
      // Undo the mean over T.
      const double inv_t = 1.0 / static_cast<double>(frames);
      Tensor g({batch, frames, output_dim_});
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < frames; ++t)
          for (std::size_t j = 0; j < output_dim_; ++j)
            g(b, t, j) = upstream(b, j) * inv_t;
      Tensor flat = attention_->backward(g).reshaped({batch * frames, output_dim_});
      mlp_backward(std::move(flat));
    } else {
      mlp_backward(upstream);
    }
  }

  void zero_grads() {
    for (auto& l : linears_) l.zero_grads();
    if (attention_) attention_->zero_grads();
  }

  template <typename Ref, typename Self>
  static std::vector<Ref> collect(Self& self, std::string_view prefix) {
    std::vector<Ref> out;
    for (std::size_t i = 0; i < self.linears_.size(); ++i) {
      for (auto& p : self.linears_[i].parameters(detail::join_name(prefix, "fc" + std::to_string(i)))) {
        out.push_back(p);
      }
    }
    if (self.attention_) {
      for (auto& p : self.attention_->parameters(detail::join_name(prefix, "attn"))) {
        out.push_back(p);
      }
    }
    return out;
  }

  std::vector<ParamRef> parameters(std::string_view prefix) {
    return collect<ParamRef>(*this, prefix);
  }
  std::vector<ConstParamRef> parameters(std::string_view prefix) const {
    return collect<ConstParamRef>(*this, prefix);
  }

 private:
  void check_input(const Tensor& x) const {
    detail::require_rank(x, 3, "branch input");
    if (x.dim(2) != input_dim_) {
      throw ShapeMismatch("branch expects feature width " +
                          std::to_string(input_dim_) + ", got " +
                          Tensor::describe(x.shape()));
    }
  }

  Tensor mlp_infer(Tensor h) const {
    for (std::size_t i = 0; i < linears_.size(); ++i) {
      h = relus_[i].infer(linears_[i].infer(h));
    }
    return h;
  }

  Tensor mlp_forward(Tensor h) {
    for (std::size_t i = 0; i < linears_.size(); ++i) {
      h = relus_[i].forward(linears_[i].forward(h));
    }
    return h;
  }

  void mlp_backward(Tensor g) {
    for (std::size_t i = linears_.size(); i-- > 0;) {
      g = linears_[i].backward(relus_[i].backward(g));
    }
  }

  Kind kind_;
  std::size_t input_dim_;
  std::size_t output_dim_ = 0;
  std::vector<LinearLayer> linears_;
  std::vector<Relu> relus_;
  std::optional<SelfAttentionBlock> attention_;
  std::optional<std::pair<std::size_t, std::size_t>> cached_shape_;
};

/// The four architectures behind one interface.
///
///   attend_fusion:  visual attention branch ++ audio attention branch -> head
///   fc_late_fusion: visual pooled MLP ++ audio pooled MLP -> head
///   visual_only / audio_only: a single attention branch -> head
///
/// The head is (linear -> ReLU)* over fusion_hidden, then linear(vocab) and
/// sigmoid. Parameter names are "<visual|audio|head>.<layer>.<tensor>" and are
/// enumerated in construction order.
class Model {
 public:
  static Model build(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    return Model(config, seed);
  }

  const ModelConfig& config() const { return config_; }

  /// Probabilities [B x vocab]; caches intermediates for backward().
  Tensor forward(const Tensor& visual, const Tensor& audio) {
    check_inputs(visual, audio);
    Tensor fused = fuse(visual_ ? visual_->forward(visual) : Tensor(),
                        audio_ ? audio_->forward(audio) : Tensor());
    for (std::size_t i = 0; i < head_.size(); ++i) {
      fused = head_relus_[i].forward(head_[i].forward(fused));
    }
    return output_activation_.forward(output_.forward(fused));
  }

  /// Same as forward() but touches no layer state; safe to call concurrently
  /// on a model that is not being trained.
  Tensor predict(const Tensor& visual, const Tensor& audio) const {
    check_inputs(visual, audio);
    Tensor fused = fuse(visual_ ? visual_->infer(visual) : Tensor(),
                        audio_ ? audio_->infer(audio) : Tensor());
    for (std::size_t i = 0; i < head_.size(); ++i) {
      fused = head_relus_[i].infer(head_[i].infer(fused));
    }
    return output_activation_.infer(output_.infer(fused));
  }

  /// Accumulates parameter gradients given dLoss/dProbabilities.
  void backward(const Tensor& grad_probs) {
    Tensor g = output_.backward(output_activation_.backward(grad_probs));
    for (std::size_t i = head_.size(); i-- > 0;) {
      g = head_[i].backward(head_relus_[i].backward(g));
    }
    if (visual_ && audio_) {
      const std::size_t vw = visual_->output_dim(), aw = audio_->output_dim();
      visual_->backward(column_block(g, 0, vw));
      audio_->backward(column_block(g, vw, aw));
    } else if (visual_) {
      visual_->backward(g);
    } else {
      audio_->backward(g);
    }
  }

  void zero_grads() {
    for (auto& p : parameters()) p.grad->fill(0.0);
  }

  std::vector<ParamRef> parameters() { return collect<ParamRef>(*this); }
  std::vector<ConstParamRef> parameters() const {
    return collect<ConstParamRef>(*this);
  }

  std::size_t parameter_total() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.value->size();
    return n;
  }

  std::vector<Tensor> snapshot() const {
    std::vector<Tensor> out;
    for (const auto& p : parameters()) out.push_back(*p.value);
    return out;
  }

  void restore(const std::vector<Tensor>& values) {
    auto params = parameters();
    if (values.size() != params.size()) throw ShapeMismatch("snapshot size");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (values[i].shape() != params[i].value->shape()) {
        throw ShapeMismatch("snapshot entry " + params[i].name);
      }
      *params[i].value = values[i];
    }
  }

 private:
  Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    Rng rng(seed, streams::kWeightInit);
    const auto kind = config.uses_attention() ? Branch::Kind::kAttention
                                              : Branch::Kind::kPooledMlp;
    std::size_t fused_width = 0;
    if (config.uses_visual()) {
      visual_.emplace(kind, config.visual_dim, config.visual_hidden, rng);
      fused_width += visual_->output_dim();
    }
    if (config.uses_audio()) {
      audio_.emplace(kind, config.audio_dim, config.audio_hidden, rng);
      fused_width += audio_->output_dim();
    }
    std::size_t width = fused_width;
    for (std::size_t h : config.fusion_hidden) {
      head_.emplace_back(width, h, rng);
      head_relus_.emplace_back();
      width = h;
    }
    output_ = LinearLayer(width, config.vocab_size, rng);
  }

  std::size_t check_inputs(const Tensor& visual, const Tensor& audio) const {
    std::optional<std::size_t> batch;
    const auto check = [&](const Tensor& x, std::size_t dim, const char* what) {
      if (x.rank() != 3 || x.dim(1) != config_.seq_len || x.dim(2) != dim) {
        throw ShapeMismatch(std::string(what) + " input " +
                            Tensor::describe(x.shape()) + " does not match [B x " +
                            std::to_string(config_.seq_len) + " x " +
                            std::to_string(dim) + "]");
      }
      if (batch && *batch != x.dim(0)) throw ShapeMismatch("batch size differs between modalities");
      batch = x.dim(0);
    };
    if (visual_) check(visual, config_.visual_dim, "visual");
    if (audio_) check(audio, config_.audio_dim, "audio");
    return *batch;
  }

  static Tensor fuse(Tensor visual, Tensor audio) {
    if (visual.empty()) return audio;
    if (audio.empty()) return visual;
    return concat_columns(visual, audio);
  }

  template <typename Ref, typename Self>
  static std::vector<Ref> collect(Self& self) {
    std::vector<Ref> out;
    const auto append = [&out](auto&& refs) {
      for (auto& r : refs) out.push_back(r);
    };
    if (self.visual_) append(self.visual_->parameters("visual"));
    if (self.audio_) append(self.audio_->parameters("audio"));
    for (std::size_t i = 0; i < self.head_.size(); ++i) {
      append(self.head_[i].parameters("head.fc" + std::to_string(i)));
    }
    append(self.output_.parameters("head.out"));
    return out;
  }

  ModelConfig config_;
  std::optional<Branch> visual_;
  std::optional<Branch> audio_;
  std::vector<LinearLayer> head_;
  std::vector<Relu> head_relus_;
  LinearLayer output_{1, 1};
  Sigmoid output_activation_;
};

/// Exact parameter count of the model a config would build, without
/// allocating it.
inline std::size_t param_count(const ModelConfig& config) {
  config.validate();
  const auto kind = config.uses_attention() ? Branch::Kind::kAttention
                                            : Branch::Kind::kPooledMlp;
  std::size_t count = 0, fused = 0;
  const auto branch_out = [](std::size_t in, const std::vector<std::size_t>& hidden) {
    return hidden.empty() ? in : hidden.back();
  };
  if (config.uses_visual()) {
    count += Branch::param_count(kind, config.visual_dim, config.visual_hidden);
    fused += branch_out(config.visual_dim, config.visual_hidden);
  }
  if (config.uses_audio()) {
    count += Branch::param_count(kind, config.audio_dim, config.audio_hidden);
    fused += branch_out(config.audio_dim, config.audio_hidden);
  }
  std::size_t width = fused;
  for (std::size_t h : config.fusion_hidden) {
    count += LinearLayer::param_count(width, h);
    width = h;
  }
  return count + LinearLayer::param_count(width, config.vocab_size);
}

// ---------------------------------------------------------------------------
// AFW1 weight files. Little-endian:
//   "AFW1" | version u16 | entries... | CRC32 of all preceding bytes
// with each entry
//   name_len u16 | name bytes | rank u8 | dims u32[rank] | f64[prod(dims)]

inline constexpr std::string_view kWeightMagic = "AFW1";
inline constexpr std::uint16_t kWeightVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

inline std::vector<std::uint8_t> encode_weights(const Model& model) {
  io::ByteWriter w;
  w.put_bytes(kWeightMagic);
  w.put<std::uint16_t>(kWeightVersion);
  for (const auto& p : model.parameters()) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(p.name.size()));
    w.put_bytes(p.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.value->rank()));
    for (std::size_t d : p.value->shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : p.value->data()) w.put<double>(v);
  }
  w.seal();
  return w.bytes();
}

inline std::vector<NamedTensor> decode_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kWeightMagic.size() ||
      std::string_view(reinterpret_cast<const char*>(bytes.data()),
                       kWeightMagic.size()) != kWeightMagic) {
    throw CorruptFile("not an AFW1 weight file");
  }
  const auto payload = io::verify_sealed(bytes, kWeightMagic.size() + 2, "weight file");
  io::ByteReader r(payload);
  r.get_string(kWeightMagic.size());
  const auto version = r.get<std::uint16_t>();
  if (version != kWeightVersion) {
    throw VersionMismatch("weight file version " + std::to_string(version) +
                          ", expected " + std::to_string(kWeightVersion));
  }
  std::vector<NamedTensor> out;
  while (r.remaining() > 0) {
    NamedTensor entry;
    entry.name = r.get_string(r.get<std::uint16_t>());
    const auto rank = r.get<std::uint8_t>();
    if (rank < 1 || rank > 3) throw CorruptFile("bad rank for " + entry.name);
    Tensor::Shape shape;
    for (std::uint8_t i = 0; i < rank; ++i) {
      const auto d = r.get<std::uint32_t>();
      if (d == 0) throw CorruptFile("zero dimension for " + entry.name);
      shape.push_back(d);
    }
    const std::size_t n = Tensor::element_count(shape);
    if (n > r.remaining() / 8) throw CorruptFile("payload too short for " + entry.name);
    std::vector<double> values(n);
    for (auto& v : values) v = r.get<double>();
    entry.value = Tensor(std::move(shape), std::move(values));
    out.push_back(std::move(entry));
  }
  return out;
}

inline void save_weights(const Model& model, const std::filesystem::path& path) {
  io::write_file(path, encode_weights(model));
}

/// Reads an AFW1 file into a model of the given configuration. Every stored
/// name and shape must match the configuration's registry exactly.
inline Model load_weights(const std::filesystem::path& path, const ModelConfig& config) {
  const auto entries = decode_weights(io::read_file(path));
  Model model = Model::build(config, 0);
  auto params = model.parameters();
  if (entries.size() != params.size()) {
    throw ShapeMismatch("weight file has " + std::to_string(entries.size()) +
                        " tensors, configuration expects " +
                        std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (entries[i].name != params[i].name) {
      throw ShapeMismatch("weight file tensor '" + entries[i].name +
                          "' where '" + params[i].name + "' was expected");
    }
    if (entries[i].value.shape() != params[i].value->shape()) {
      throw ShapeMismatch("shape of '" + params[i].name + "' is " +
                          Tensor::describe(entries[i].value.shape()) +
                          ", configuration expects " +
                          Tensor::describe(params[i].value->shape()));
    }
    *params[i].value = entries[i].value;
  }
  return model;
}

/// CRC32 of the serialized weights; a cheap identity for "did anything
/// change".
inline std::uint32_t weights_checksum(const Model& model) {
  const auto bytes = encode_weights(model);
  return io::crc32(bytes);
}

}  // namespace afusion

#endif  // AFUSION_MODEL_HPP_
