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

#ifndef AFUSION_CONFIG_JSON_HPP_
#define AFUSION_CONFIG_JSON_HPP_

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "afusion/dataset.hpp"
#include "afusion/metrics.hpp"
#include "afusion/model.hpp"

namespace afusion {

using json = nlohmann::ordered_json;

namespace detail {

// Every key of `obj` must be one of `allowed`.
inline void reject_unknown_keys(const json& obj, std::string_view section,
                                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) {
    throw InvalidConfig("section '" + std::string(section) + "' must be an object");
  }
  for (const auto& item : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || item.key() == a;
    if (!known) {
      throw InvalidConfig("unknown key '" + std::string(section) + "." +
                          item.key() + "'");
    }
  }
}

template <typename T>
bool json_fits(const json& v) {
  if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
    return v.is_number_unsigned();
  } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    return v.is_array() &&
           std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_unsigned(); });
  } else {
    return true;
  }
}

template <typename T>
void read_field(const json& obj, std::string_view section, const char* key, T& out) {
  if (!obj.contains(key)) return;
  if (!json_fits<T>(obj.at(key))) {
    throw InvalidConfig("key '" + std::string(section) + "." + key +
                        "' must hold non-negative integers");
  }
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidConfig("key '" + std::string(section) + "." + key +
                        "' has the wrong type");
  }
}

}  // namespace detail

inline json to_json(const ModelConfig& c) {
  return json{{"arch", std::string(to_string(c.arch))},
              {"visual_dim", c.visual_dim},
              {"audio_dim", c.audio_dim},
              {"vocab_size", c.vocab_size},
              {"seq_len", c.seq_len},
              {"visual_hidden", c.visual_hidden},
              {"audio_hidden", c.audio_hidden},
              {"fusion_hidden", c.fusion_hidden}};
}

/// Overlays the keys present in `j` onto `base`.
inline ModelConfig model_config_from_json(const json& j, ModelConfig base = {}) {
  detail::reject_unknown_keys(j, "model",
                              {"arch", "visual_dim", "audio_dim", "vocab_size", "seq_len",
                               "visual_hidden", "audio_hidden", "fusion_hidden"});
  if (j.contains("arch")) {
    std::string arch;
    detail::read_field(j, "model", "arch", arch);
    base.arch = parse_architecture(arch);
  }
  detail::read_field(j, "model", "visual_dim", base.visual_dim);
  detail::read_field(j, "model", "audio_dim", base.audio_dim);
  detail::read_field(j, "model", "vocab_size", base.vocab_size);
  detail::read_field(j, "model", "seq_len", base.seq_len);
  detail::read_field(j, "model", "visual_hidden", base.visual_hidden);
  detail::read_field(j, "model", "audio_hidden", base.audio_hidden);
  detail::read_field(j, "model", "fusion_hidden", base.fusion_hidden);
  return base;
}

inline json to_json(const SyntheticSpec& s) {
  return json{{"videos", s.num_videos},
              {"vocab", s.vocab_size},
              {"visual_dim", s.visual_dim},
              {"audio_dim", s.audio_dim},
              {"seq_len", s.seq_len},
              {"labels_mean", s.labels_per_video_mean},
              {"visual_fraction", s.visual_only_fraction},
              {"audio_fraction", s.audio_only_fraction},
              {"both_fraction", s.both_fraction},
              {"signal", s.signal_strength},
              {"noise", s.noise_sigma},
              {"seed", s.seed}};
}

inline SyntheticSpec synthetic_spec_from_json(const json& j, SyntheticSpec base = {}) {
  detail::reject_unknown_keys(j, "data",
                              {"videos", "vocab", "visual_dim", "audio_dim", "seq_len",
                               "labels_mean", "visual_fraction", "audio_fraction",
                               "both_fraction", "signal", "noise", "seed"});
  detail::read_field(j, "data", "videos", base.num_videos);
  detail::read_field(j, "data", "vocab", base.vocab_size);
  detail::read_field(j, "data", "visual_dim", base.visual_dim);
  detail::read_field(j, "data", "audio_dim", base.audio_dim);
  detail::read_field(j, "data", "seq_len", base.seq_len);
  detail::read_field(j, "data", "labels_mean", base.labels_per_video_mean);
  detail::read_field(j, "data", "visual_fraction", base.visual_only_fraction);
  detail::read_field(j, "data", "audio_fraction", base.audio_only_fraction);
  detail::read_field(j, "data", "both_fraction", base.both_fraction);
  detail::read_field(j, "data", "signal", base.signal_strength);
  detail::read_field(j, "data", "noise", base.noise_sigma);
  detail::read_field(j, "data", "seed", base.seed);
  return base;
}

/// Fixed key order so that --json output is stable.
inline json to_json(const MetricsReport& r) {
  json j;
  j["gap"] = r.gap;
  j["f1"] = r.micro_f1;
  j["loss"] = r.mean_loss ? json(*r.mean_loss) : json(nullptr);
  j["num_videos"] = r.num_videos;
  j["k"] = r.k;
  j["threshold"] = r.threshold;
  return j;
}

inline MetricsReport metrics_from_json(const json& j) {
  MetricsReport r;
  try {
    r.gap = j.at("gap").get<double>();
    r.micro_f1 = j.at("f1").get<double>();
    if (!j.at("loss").is_null()) r.mean_loss = j.at("loss").get<double>();
    r.num_videos = j.at("num_videos").get<std::size_t>();
    r.k = j.at("k").get<std::size_t>();
    r.threshold = j.at("threshold").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile(std::string("malformed metrics record: ") + e.what());
  }
  return r;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidConfig(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace afusion

#endif  // AFUSION_CONFIG_JSON_HPP_
