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

#ifndef AFUSION_DATASET_HPP_
#define AFUSION_DATASET_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "afusion/binary_io.hpp"
#include "afusion/metrics.hpp"
#include "afusion/rng.hpp"
#include "afusion/tensor.hpp"

namespace afusion {

/// Parameters of the synthetic benchmark. Classes are laid out by affinity in
/// index order: visual-only first, then audio-only, then both, and whatever is
/// left is a noise class with no planted signal. Each affinity count is
/// floor(fraction * vocab_size).
struct SyntheticSpec {
  std::size_t num_videos = 250;
  std::size_t vocab_size = 24;
  std::size_t visual_dim = 16;
  std::size_t audio_dim = 8;
  std::size_t seq_len = 4;
  double labels_per_video_mean = 3.0;
  double visual_only_fraction = 0.375;
  double audio_only_fraction = 0.375;
  double both_fraction = 0.25;
  double signal_strength = 1.0;
  double noise_sigma = 0.5;
  std::uint64_t seed = 7;

  void validate() const {
    const auto positive = [](std::size_t v, const char* field) {
      if (v == 0) throw InvalidSpec(std::string(field) + " must be positive");
    };
    positive(num_videos, "num_videos");
    positive(vocab_size, "vocab_size");
    positive(visual_dim, "visual_dim");
    positive(audio_dim, "audio_dim");
    positive(seq_len, "seq_len");
    const auto fraction = [](double f, const char* field) {
      if (!(f >= 0.0 && f <= 1.0)) throw InvalidSpec(std::string(field) + " must lie in [0, 1]");
    };
    fraction(visual_only_fraction, "visual_only_fraction");
    fraction(audio_only_fraction, "audio_only_fraction");
    fraction(both_fraction, "both_fraction");
    if (visual_only_fraction + audio_only_fraction + both_fraction > 1.0 + 1e-12) {
      throw InvalidSpec("affinity fractions sum to more than 1");
    }
    if (!(labels_per_video_mean > 0.0) || labels_per_video_mean > 700.0) {
      throw InvalidSpec("labels_per_video_mean must lie in (0, 700]");
    }
    if (!std::isfinite(signal_strength) || signal_strength < 0.0) {
      throw InvalidSpec("signal_strength must be finite and non-negative");
    }
    if (!std::isfinite(noise_sigma) || noise_sigma < 0.0) {
      throw InvalidSpec("noise_sigma must be finite and non-negative");
    }
    if (vocab_size > UINT32_MAX || visual_dim > UINT32_MAX ||
        audio_dim > UINT32_MAX || seq_len > UINT32_MAX) {
      throw InvalidSpec("dimension does not fit the file format");
    }
  }
};

enum class ClassAffinity { kVisual, kAudio, kBoth, kNoise };

struct DatasetHeader {
  std::uint32_t vocab_size = 0;
  std::uint32_t visual_dim = 0;
  std::uint32_t audio_dim = 0;
  std::uint32_t seq_len = 0;

  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

/// One video. Features are stored row-major [T x dim] in single precision.
struct VideoRecord {
  std::uint64_t id = 0;
  LabelSet labels;
  std::vector<float> visual;
  std::vector<float> audio;

  friend bool operator==(const VideoRecord&, const VideoRecord&) = default;
};

struct Dataset {
  DatasetHeader header;
  std::vector<VideoRecord> videos;

  std::size_t size() const { return videos.size(); }

  std::vector<LabelSet> labels() const {
    std::vector<LabelSet> out;
    out.reserve(videos.size());
    for (const auto& v : videos) out.push_back(v.labels);
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// What the generator planted, for tests and probes.
struct PlantedTruth {
  std::vector<ClassAffinity> affinity;
  // Unit-norm prototypes indexed by class; empty when the class has none in
  // that modality.
  std::vector<std::vector<double>> visual_prototypes;
  std::vector<std::vector<double>> audio_prototypes;
};

struct GeneratedDataset {
  Dataset dataset;
  PlantedTruth truth;
};

inline constexpr double kMaxPrototypeCosine = 0.5;
inline constexpr int kMaxPrototypeAttempts = 100;

namespace detail {

inline std::vector<ClassAffinity> assign_affinity(const SyntheticSpec& spec) {
  const auto count = [&](double f) {
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(spec.vocab_size) + 1e-9));
  };
  const std::size_t nv = count(spec.visual_only_fraction);
  const std::size_t na = count(spec.audio_only_fraction);
  const std::size_t nb = count(spec.both_fraction);
  std::vector<ClassAffinity> out(spec.vocab_size, ClassAffinity::kNoise);
  std::size_t c = 0;
  for (std::size_t i = 0; i < nv && c < out.size(); ++i) out[c++] = ClassAffinity::kVisual;
  for (std::size_t i = 0; i < na && c < out.size(); ++i) out[c++] = ClassAffinity::kAudio;
  for (std::size_t i = 0; i < nb && c < out.size(); ++i) out[c++] = ClassAffinity::kBoth;
  return out;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot;  // both unit norm
}

// Gaussian direction, normalized; re-drawn while it is too close to an
// already accepted prototype of the same feature space.
inline std::vector<double> draw_prototype(std::size_t dim,
                                          const std::vector<std::vector<double>>& accepted,
                                          Rng& rng) {
  for (int attempt = 0; attempt < kMaxPrototypeAttempts; ++attempt) {
    std::vector<double> p(dim);
    double norm = 0.0;
    for (double& v : p) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (double& v : p) v /= norm;
    const bool separated = std::all_of(
        accepted.begin(), accepted.end(), [&](const std::vector<double>& q) {
          return q.empty() || std::abs(cosine(p, q)) < kMaxPrototypeCosine;
        });
    if (separated) return p;
  }
  throw InvalidSpec("could not draw a separated prototype in " +
                    std::to_string(dim) + " dimensions; too many classes for the feature width");
}

}  // namespace detail

/// Builds the synthetic dataset in memory.
///
/// Per class, a unit-norm prototype is drawn in its affinity's feature space
/// ("both" classes get one in each). Per video, the label count is
/// Poisson(labels_per_video_mean) clamped to [1, vocab] and the labels are a
/// uniform draw without replacement. Each frame of a modality is
///   signal_strength * sum of that modality's prototypes over the labels
///   + N(0, noise_sigma^2) per coordinate,
/// where "both" classes contribute at half strength to each modality.
/// Prototypes, labels and frame noise draw from separate streams of the seed.
inline GeneratedDataset generate_with_truth(const SyntheticSpec& spec) {
  spec.validate();
  PlantedTruth truth;
  truth.affinity = detail::assign_affinity(spec);
  truth.visual_prototypes.resize(spec.vocab_size);
  truth.audio_prototypes.resize(spec.vocab_size);

  Rng proto_rng(spec.seed, streams::kPrototypes);
  for (std::size_t c = 0; c < spec.vocab_size; ++c) {
    const auto a = truth.affinity[c];
    if (a == ClassAffinity::kVisual || a == ClassAffinity::kBoth) {
      truth.visual_prototypes[c] =
          detail::draw_prototype(spec.visual_dim, truth.visual_prototypes, proto_rng);
    }
    if (a == ClassAffinity::kAudio || a == ClassAffinity::kBoth) {
      truth.audio_prototypes[c] =
          detail::draw_prototype(spec.audio_dim, truth.audio_prototypes, proto_rng);
    }
  }

  Dataset ds;
  ds.header = {static_cast<std::uint32_t>(spec.vocab_size),
               static_cast<std::uint32_t>(spec.visual_dim),
               static_cast<std::uint32_t>(spec.audio_dim),
               static_cast<std::uint32_t>(spec.seq_len)};
  ds.videos.reserve(spec.num_videos);

  Rng label_rng(spec.seed, streams::kLabels);
  Rng noise_rng(spec.seed, streams::kFrameNoise);
  std::vector<std::uint32_t> pool(spec.vocab_size);

  const auto render = [&](const std::vector<std::uint32_t>& labels, bool visual) {
    const std::size_t dim = visual ? spec.visual_dim : spec.audio_dim;
    const auto& protos = visual ? truth.visual_prototypes : truth.audio_prototypes;
    std::vector<double> signal(dim, 0.0);
    for (std::uint32_t c : labels) {
      if (protos[c].empty()) continue;
      const double strength = truth.affinity[c] == ClassAffinity::kBoth
                                  ? spec.signal_strength / 2.0
                                  : spec.signal_strength;
      for (std::size_t j = 0; j < dim; ++j) signal[j] += strength * protos[c][j];
    }
    std::vector<float> frames(spec.seq_len * dim);
    for (std::size_t t = 0; t < spec.seq_len; ++t) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double noise = spec.noise_sigma * noise_rng.normal();
        frames[t * dim + j] = static_cast<float>(signal[j] + noise);
      }
    }
    return frames;
  };

  for (std::size_t v = 0; v < spec.num_videos; ++v) {
    const std::uint64_t drawn = label_rng.poisson(spec.labels_per_video_mean);
    const std::size_t count = static_cast<std::size_t>(
        std::clamp<std::uint64_t>(drawn, 1, spec.vocab_size));
    std::iota(pool.begin(), pool.end(), 0u);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(label_rng.below(spec.vocab_size - i));
      std::swap(pool[i], pool[j]);
    }
    std::vector<std::uint32_t> labels(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(labels.begin(), labels.end());

    VideoRecord rec;
    rec.id = v;
    rec.visual = render(labels, true);
    rec.audio = render(labels, false);
    rec.labels = LabelSet(std::move(labels));
    ds.videos.push_back(std::move(rec));
  }
  return {std::move(ds), std::move(truth)};
}

inline Dataset generate(const SyntheticSpec& spec) {
  return generate_with_truth(spec).dataset;
}

// ---------------------------------------------------------------------------
// AVF1 files. Little-endian:
//   "AVF1" | version u16 | num_videos u64 | vocab u32 | visual_dim u32 |
//   audio_dim u32 | T u32 | records... | CRC32 of all preceding bytes
// with each record
//   id u64 | label_count u32 | labels u32[label_count] |
//   visual f32[T * visual_dim] | audio f32[T * audio_dim]

inline constexpr std::string_view kDatasetMagic = "AVF1";
inline constexpr std::uint16_t kDatasetVersion = 1;

inline std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  const auto& h = ds.header;
  io::ByteWriter w;
  w.put_bytes(kDatasetMagic);
  w.put<std::uint16_t>(kDatasetVersion);
  w.put<std::uint64_t>(ds.videos.size());
  w.put<std::uint32_t>(h.vocab_size);
  w.put<std::uint32_t>(h.visual_dim);
  w.put<std::uint32_t>(h.audio_dim);
  w.put<std::uint32_t>(h.seq_len);
  for (const auto& rec : ds.videos) {
    if (rec.visual.size() != std::size_t{h.seq_len} * h.visual_dim ||
        rec.audio.size() != std::size_t{h.seq_len} * h.audio_dim) {
      throw ShapeMismatch("record " + std::to_string(rec.id) + " feature size");
    }
    rec.labels.validate(h.vocab_size);
    w.put<std::uint64_t>(rec.id);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(rec.labels.size()));
    for (std::uint32_t c : rec.labels.classes()) w.put<std::uint32_t>(c);
    for (float f : rec.visual) w.put<float>(f);
    for (float f : rec.audio) w.put<float>(f);
  }
  w.seal();
  return w.bytes();
}

inline Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kDatasetMagic.size() ||
      std::string_view(reinterpret_cast<const char*>(bytes.data()),
                       kDatasetMagic.size()) != kDatasetMagic) {
    throw CorruptFile("not an AVF1 dataset file");
  }
  const auto payload = io::verify_sealed(bytes, kDatasetMagic.size() + 2, "dataset file");
  io::ByteReader r(payload);
  r.get_string(kDatasetMagic.size());
  const auto version = r.get<std::uint16_t>();
  if (version != kDatasetVersion) {
    throw VersionMismatch("dataset version " + std::to_string(version) +
                          ", expected " + std::to_string(kDatasetVersion));
  }
  Dataset ds;
  const auto count = r.get<std::uint64_t>();
  ds.header.vocab_size = r.get<std::uint32_t>();
  ds.header.visual_dim = r.get<std::uint32_t>();
  ds.header.audio_dim = r.get<std::uint32_t>();
  ds.header.seq_len = r.get<std::uint32_t>();
  const auto& h = ds.header;
  if (h.vocab_size == 0 || h.visual_dim == 0 || h.audio_dim == 0 || h.seq_len == 0) {
    throw CorruptFile("dataset header has a zero dimension");
  }
  const std::size_t vis_n = std::size_t{h.seq_len} * h.visual_dim;
  const std::size_t aud_n = std::size_t{h.seq_len} * h.audio_dim;
  // Smallest possible record: id, count, no labels, features.
  const std::size_t min_record = 8 + 4 + 4 * (vis_n + aud_n);
  if (count > r.remaining() / min_record) throw CorruptFile("video count exceeds file size");
  ds.videos.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    VideoRecord rec;
    rec.id = r.get<std::uint64_t>();
    const auto label_count = r.get<std::uint32_t>();
    if (label_count > r.remaining() / 4) throw CorruptFile("label count exceeds file size");
    std::vector<std::uint32_t> labels(label_count);
    for (auto& c : labels) c = r.get<std::uint32_t>();
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] >= h.vocab_size) {
        throw LabelOutOfRange("video " + std::to_string(rec.id) + " has class " +
                              std::to_string(labels[j]) + " outside vocabulary of " +
                              std::to_string(h.vocab_size));
      }
      if (j > 0 && labels[j] <= labels[j - 1]) {
        throw CorruptFile("labels of video " + std::to_string(rec.id) + " are not strictly increasing");
      }
    }
    rec.labels = LabelSet(std::move(labels));
    rec.visual.resize(vis_n);
    for (float& f : rec.visual) f = r.get<float>();
    rec.audio.resize(aud_n);
    for (float& f : rec.audio) f = r.get<float>();
    ds.videos.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw CorruptFile("trailing bytes after last record");
  return ds;
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  io::write_file(path, encode_dataset(ds));
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path));
}

/// Generates and writes a dataset; returns the CRC32 of the file contents.
inline std::uint32_t generate_file(const SyntheticSpec& spec,
                                   const std::filesystem::path& path) {
  const auto bytes = encode_dataset(generate(spec));
  io::write_file(path, bytes);
  return io::crc32(bytes);
}

// ---------------------------------------------------------------------------

struct Batch {
  Tensor visual;  // [B x T x visual_dim]
  Tensor audio;   // [B x T x audio_dim]
  std::vector<LabelSet> labels;
  std::vector<std::uint64_t> ids;

  std::size_t size() const { return labels.size(); }
};

/// Gathers the given videos into one batch, promoting features to double.
inline Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices) {
  const auto& h = ds.header;
  const std::size_t b = indices.size();
  Batch batch{Tensor({b, h.seq_len, h.visual_dim}), Tensor({b, h.seq_len, h.audio_dim}), {}, {}};
  const std::size_t vis_n = std::size_t{h.seq_len} * h.visual_dim;
  const std::size_t aud_n = std::size_t{h.seq_len} * h.audio_dim;
  auto vis = batch.visual.data();
  auto aud = batch.audio.data();
  for (std::size_t i = 0; i < b; ++i) {
    const auto& rec = ds.videos[indices[i]];
    std::copy(rec.visual.begin(), rec.visual.end(), vis.begin() + static_cast<std::ptrdiff_t>(i * vis_n));
    std::copy(rec.audio.begin(), rec.audio.end(), aud.begin() + static_cast<std::ptrdiff_t>(i * aud_n));
    batch.labels.push_back(rec.labels);
    batch.ids.push_back(rec.id);
  }
  return batch;
}

/// Deterministic mini-batches. Without a shuffle seed the dataset order is
/// kept; with one, the order is a Fisher-Yates permutation drawn from it. The
/// last batch may be short.
class Batcher {
 public:
  Batcher(const Dataset& ds, std::size_t batch_size,
          std::optional<std::uint64_t> shuffle_seed = std::nullopt)
      : ds_(&ds), batch_size_(batch_size), order_(ds.size()) {
    if (batch_size == 0) throw InvalidConfig("batch size must be positive");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (shuffle_seed) {
      Rng rng(*shuffle_seed, streams::kShuffleBase);
      rng.shuffle(order_);
    }
  }

  std::size_t num_batches() const {
    return (order_.size() + batch_size_ - 1) / batch_size_;
  }

  const std::vector<std::size_t>& order() const { return order_; }

  std::optional<Batch> next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t n = std::min(batch_size_, order_.size() - cursor_);
    Batch b = make_batch(*ds_, std::span(order_).subspan(cursor_, n));
    cursor_ += n;
    return b;
  }

 private:
  const Dataset* ds_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Seeded partition into (train, validation). Both sides keep the original
/// relative order. The train side receives round(fraction * N) videos and
/// each side must end up non-empty.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                         std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidFraction("train fraction must lie strictly between 0 and 1");
  }
  const std::size_t n = ds.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) {
    throw InvalidFraction("fraction " + std::to_string(train_fraction) + " of " +
                          std::to_string(n) + " videos leaves one side empty");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed, streams::kSplit);
  rng.shuffle(perm);
  std::vector<bool> in_train(n, false);
  for (std::size_t i = 0; i < n_train; ++i) in_train[perm[i]] = true;

  Dataset train{ds.header, {}}, val{ds.header, {}};
  for (std::size_t i = 0; i < n; ++i) {
    (in_train[i] ? train : val).videos.push_back(ds.videos[i]);
  }
  return {std::move(train), std::move(val)};
}

}  // namespace afusion

#endif  // AFUSION_DATASET_HPP_
