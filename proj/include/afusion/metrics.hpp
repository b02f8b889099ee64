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

#ifndef AFUSION_METRICS_HPP_
#define AFUSION_METRICS_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <utility>
#include <vector>

#include "afusion/tensor.hpp"

namespace afusion {

/// Positive class indices of one video, strictly increasing.
class LabelSet {
 public:
  LabelSet() = default;

  explicit LabelSet(std::vector<std::uint32_t> classes)
      : classes_(std::move(classes)) {
    for (std::size_t i = 1; i < classes_.size(); ++i) {
      if (classes_[i] <= classes_[i - 1]) {
        throw InvalidConfig("label set must be strictly increasing");
      }
    }
  }

  static LabelSet from_unsorted(std::vector<std::uint32_t> classes) {
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    return LabelSet(std::move(classes));
  }

  const std::vector<std::uint32_t>& classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return classes_.size(); }
  bool empty() const noexcept { return classes_.empty(); }

  bool contains(std::uint32_t c) const {
    return std::binary_search(classes_.begin(), classes_.end(), c);
  }

  void validate(std::size_t vocab) const {
    if (!classes_.empty() && classes_.back() >= vocab) {
      throw LabelOutOfRange("class " + std::to_string(classes_.back()) +
                            " outside vocabulary of " + std::to_string(vocab));
    }
  }

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::vector<std::uint32_t> classes_;
};

struct ScoredClass {
  std::uint32_t cls;
  double score;

  friend bool operator==(const ScoredClass&, const ScoredClass&) = default;
};

using VideoScores = std::vector<ScoredClass>;

struct MetricsReport {
  double gap = 0.0;
  double micro_f1 = 0.0;
  // Absent when only ranked predictions are available (no probabilities).
  std::optional<double> mean_loss;
  std::size_t num_videos = 0;
  std::size_t k = 20;
  double threshold = 0.5;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline constexpr double kBceClip = 1e-7;
inline constexpr std::size_t kDefaultGapK = 20;
inline constexpr double kDefaultF1Threshold = 0.5;

struct LossAndGrad {
  double loss;
  Tensor grad;
};

namespace detail {

inline void check_label_batch(const Tensor& pred,
                              const std::vector<LabelSet>& labels) {
  require_rank(pred, 2, "metric");
  if (pred.dim(0) != labels.size()) {
    throw ShapeMismatch(std::to_string(pred.dim(0)) + " prediction rows for " +
                        std::to_string(labels.size()) + " label sets");
  }
  for (const auto& l : labels) l.validate(pred.dim(1));
}

}  // namespace detail

/// Multi-label binary cross-entropy: summed over classes, averaged over the
/// batch, evaluated on predictions clipped to [eps, 1 - eps]. The gradient is
/// (1/B) (p - y) / (p (1 - p)) on the clipped values.
inline LossAndGrad bce_loss(const Tensor& pred,
                            const std::vector<LabelSet>& labels) {
  detail::check_label_batch(pred, labels);
  detail::require_finite_input(pred, "bce_loss");
  const std::size_t batch = pred.dim(0), classes = pred.dim(1);
  const double inv_batch = 1.0 / static_cast<double>(batch);
  Tensor grad({batch, classes});
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    double row = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::clamp(pred(i, c), kBceClip, 1.0 - kBceClip);
      const bool positive = labels[i].contains(static_cast<std::uint32_t>(c));
      row += positive ? std::log(p) : std::log1p(-p);
      grad(i, c) = inv_batch * ((positive ? p - 1.0 : p) / (p * (1.0 - p)));
    }
    loss -= row;
  }
  return {loss * inv_batch, std::move(grad)};
}

/// The k best classes of one row of scores, ordered by score descending and
/// class index ascending on ties.
inline VideoScores top_k(std::span<const double> scores, std::size_t k) {
  VideoScores out;
  out.reserve(scores.size());
  for (std::size_t c = 0; c < scores.size(); ++c) {
    out.push_back({static_cast<std::uint32_t>(c), scores[c]});
  }
  const auto by_rank = [](const ScoredClass& a, const ScoredClass& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.cls < b.cls;
  };
  const std::size_t keep = std::min(k, out.size());
  std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(keep),
                    out.end(), by_rank);
  out.resize(keep);
  return out;
}

inline std::vector<VideoScores> top_k_rows(const Tensor& scores, std::size_t k) {
  detail::require_rank(scores, 2, "top_k_rows");
  std::vector<VideoScores> out;
  out.reserve(scores.dim(0));
  const std::size_t width = scores.dim(1);
  for (std::size_t i = 0; i < scores.dim(0); ++i) {
    out.push_back(top_k(scores.data().subspan(i * width, width), k));
  }
  return out;
}

/// Global average precision over the pooled top-k predictions of every video.
///
/// Each video keeps its k best-scored classes; the survivors of all videos are
/// ranked together by score (ties: video index, then class index) and
///   GAP = sum_i rel(i) * precision@i / M
/// where M counts every ground-truth positive in the set, including those that
/// fell outside a video's top k. Pooling makes GAP non-decomposable: shard
/// results must be merged before calling this, never averaged.
inline double gap_at_k(const std::vector<VideoScores>& preds,
                       const std::vector<LabelSet>& labels,
                       std::size_t k = kDefaultGapK) {
  if (k == 0) throw InvalidConfig("GAP k must be at least 1");
  if (preds.empty()) throw EmptyEvaluationSet("no videos to evaluate");
  if (preds.size() != labels.size()) {
    throw ShapeMismatch(std::to_string(preds.size()) + " predictions for " +
                        std::to_string(labels.size()) + " label sets");
  }

  struct Entry {
    double score;
    std::size_t video;
    std::uint32_t cls;
    bool positive;
  };
  std::vector<Entry> pool;
  std::size_t positives = 0;
  for (std::size_t v = 0; v < preds.size(); ++v) {
    positives += labels[v].size();
    VideoScores video = preds[v];
    for (const auto& sc : video) {
      if (!std::isfinite(sc.score)) throw NonFiniteInput("GAP score");
    }
    std::sort(video.begin(), video.end(),
              [](const ScoredClass& a, const ScoredClass& b) {
                if (a.score != b.score) return a.score > b.score;
                return a.cls < b.cls;
              });
    if (video.size() > k) video.resize(k);
    for (const auto& sc : video) {
      pool.push_back({sc.score, v, sc.cls, labels[v].contains(sc.cls)});
    }
  }
  if (positives == 0) throw MIsZero("no positive labels in evaluation set");

  std::sort(pool.begin(), pool.end(), [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.video != b.video) return a.video < b.video;
    return a.cls < b.cls;
  });

  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!pool[i].positive) continue;
    ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return ap / static_cast<double>(positives);
}

inline double gap_at_k(const Tensor& scores, const std::vector<LabelSet>& labels,
                       std::size_t k = kDefaultGapK) {
  if (k == 0) throw InvalidConfig("GAP k must be at least 1");
  detail::check_label_batch(scores, labels);
  return gap_at_k(top_k_rows(scores, k), labels, k);
}

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

inline double f1_from_counts(const ConfusionCounts& c) {
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 0.0;
  return static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

namespace detail {
inline void check_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw InvalidConfig("F1 threshold must lie in (0, 1)");
  }
}
}  // namespace detail

/// Pooled (micro) F1 over every (video, class) decision p >= threshold.
inline double micro_f1(const Tensor& pred, const std::vector<LabelSet>& labels,
                       double threshold = kDefaultF1Threshold) {
  detail::check_threshold(threshold);
  detail::check_label_batch(pred, labels);
  ConfusionCounts counts;
  for (std::size_t i = 0; i < pred.dim(0); ++i) {
    for (std::size_t c = 0; c < pred.dim(1); ++c) {
      const bool predicted = pred(i, c) >= threshold;
      const bool positive = labels[i].contains(static_cast<std::uint32_t>(c));
      if (predicted && positive) ++counts.tp;
      else if (predicted) ++counts.fp;
      else if (positive) ++counts.fn;
    }
  }
  return f1_from_counts(counts);
}

/// Micro F1 from sparse predictions; classes absent from a video's list count
/// as predicted negative.
inline double micro_f1(const std::vector<VideoScores>& preds,
                       const std::vector<LabelSet>& labels,
                       double threshold = kDefaultF1Threshold) {
  detail::check_threshold(threshold);
  if (preds.size() != labels.size()) throw ShapeMismatch("micro_f1 video count");
  ConfusionCounts counts;
  for (std::size_t v = 0; v < preds.size(); ++v) {
    std::vector<std::uint32_t> predicted;
    for (const auto& sc : preds[v]) {
      if (sc.score >= threshold) predicted.push_back(sc.cls);
    }
    std::sort(predicted.begin(), predicted.end());
    predicted.erase(std::unique(predicted.begin(), predicted.end()),
                    predicted.end());
    for (std::uint32_t c : predicted) {
      if (labels[v].contains(c)) ++counts.tp;
      else ++counts.fp;
    }
    for (std::uint32_t c : labels[v].classes()) {
      if (!std::binary_search(predicted.begin(), predicted.end(), c)) ++counts.fn;
    }
  }
  return f1_from_counts(counts);
}

/// Dense 0/1 target matrix for a batch of label sets.
inline Tensor dense_targets(const std::vector<LabelSet>& labels,
                            std::size_t vocab) {
  Tensor out({labels.size(), vocab});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i].validate(vocab);
    for (std::uint32_t c : labels[i].classes()) out(i, c) = 1.0;
  }
  return out;
}

// Text formats shared with the command-line tool:
//   predictions: "<video id> <class>:<score> <class>:<score> ..."
//   labels:      "<video id> <class> <class> ..."
// Scores are written in shortest round-trip decimal form.

struct PredictionLine {
  std::uint64_t id;
  VideoScores scores;
};

struct LabelLine {
  std::uint64_t id;
  LabelSet labels;
};

namespace detail {

template <typename T>
T parse_number(std::string_view token, std::size_t line_no) {
  T value{};
  const auto [ptr, ec] =
      std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw CorruptFile("line " + std::to_string(line_no) + ": bad number '" +
                      std::string(token) + "'");
  }
  return value;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

inline std::string format_double(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

}  // namespace detail

inline std::vector<PredictionLine> parse_predictions(std::istream& in) {
  std::vector<PredictionLine> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = detail::split_ws(line);
    if (tokens.empty()) continue;
    PredictionLine entry{detail::parse_number<std::uint64_t>(tokens[0], line_no), {}};
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const auto colon = tokens[t].find(':');
      if (colon == std::string_view::npos) {
        throw CorruptFile("line " + std::to_string(line_no) +
                          ": expected class:score, got '" +
                          std::string(tokens[t]) + "'");
      }
      entry.scores.push_back(
          {detail::parse_number<std::uint32_t>(tokens[t].substr(0, colon), line_no),
           detail::parse_number<double>(tokens[t].substr(colon + 1), line_no)});
    }
    out.push_back(std::move(entry));
  }
  return out;
}

inline std::vector<LabelLine> parse_labels(std::istream& in) {
  std::vector<LabelLine> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = detail::split_ws(line);
    if (tokens.empty()) continue;
    std::vector<std::uint32_t> classes;
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      classes.push_back(detail::parse_number<std::uint32_t>(tokens[t], line_no));
    }
    out.push_back({detail::parse_number<std::uint64_t>(tokens[0], line_no),
                   LabelSet::from_unsorted(std::move(classes))});
  }
  return out;
}

inline void write_prediction_line(std::ostream& out, const PredictionLine& p) {
  out << p.id;
  for (const auto& sc : p.scores) {
    out << ' ' << sc.cls << ':' << detail::format_double(sc.score);
  }
  out << '\n';
}

inline void write_label_line(std::ostream& out, const LabelLine& l) {
  out << l.id;
  for (std::uint32_t c : l.labels.classes()) out << ' ' << c;
  out << '\n';
}

/// Pairs prediction lines with label lines by video id, keeping prediction
/// order (which defines the GAP tie-break order).
inline std::pair<std::vector<VideoScores>, std::vector<LabelSet>> align_by_id(
    const std::vector<PredictionLine>& preds, const std::vector<LabelLine>& labels) {
  std::unordered_map<std::uint64_t, const LabelSet*> by_id;
  for (const auto& l : labels) {
    if (!by_id.emplace(l.id, &l.labels).second) {
      throw CorruptFile("duplicate video id " + std::to_string(l.id) +
                        " in labels");
    }
  }
  std::vector<VideoScores> scores;
  std::vector<LabelSet> sets;
  for (const auto& p : preds) {
    const auto it = by_id.find(p.id);
    if (it == by_id.end()) {
      throw ShapeMismatch("no labels for video id " + std::to_string(p.id));
    }
    scores.push_back(p.scores);
    sets.push_back(*it->second);
  }
  return {std::move(scores), std::move(sets)};
}

}  // namespace afusion

#endif  // AFUSION_METRICS_HPP_
