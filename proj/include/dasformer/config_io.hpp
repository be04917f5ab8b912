// Copyright 2026 The dasformer Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>

#include "json.hpp"

#include "dasformer/model.hpp"
#include "dasformer/signal.hpp"

namespace dasformer {

inline const char* dw_kind_name(DwKind k) { return k == DwKind::k3x3 ? "3x3" : "pointwise"; }

inline DwKind dw_kind_from(const std::string& s) {
  if (s == "3x3") return DwKind::k3x3;
  if (s == "pointwise") return DwKind::kPointwise;
  throw std::invalid_argument("unknown dw_kind: " + s);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"embed_dim", c.embed_dim},
       {"num_heads", c.num_heads},
       {"num_blocks", c.num_blocks},
       {"num_mics", c.num_mics},
       {"num_speakers", c.num_speakers},
       {"expansion", c.expansion},
       {"se_shrink", c.se_shrink},
       {"dropout_rate", c.dropout_rate},
       {"use_se", c.use_se},
       {"dw_kind", dw_kind_name(c.dw_kind)}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.num_heads = j.value("num_heads", d.num_heads);
  c.num_blocks = j.value("num_blocks", d.num_blocks);
  c.num_mics = j.value("num_mics", d.num_mics);
  c.num_speakers = j.value("num_speakers", d.num_speakers);
  c.expansion = j.value("expansion", d.expansion);
  c.se_shrink = j.value("se_shrink", d.se_shrink);
  c.dropout_rate = j.value("dropout_rate", d.dropout_rate);
  c.use_se = j.value("use_se", d.use_se);
  c.dw_kind = dw_kind_from(j.value("dw_kind", std::string("3x3")));
}

/// StftConfig serializes as frame/hop plus a window kind; custom window
/// vectors are code-only.
template <typename T>
nlohmann::json stft_to_json(const StftConfig<T>& cfg) {
  if (cfg.kind == WindowKind::kCustom)
    throw std::invalid_argument("stft config: custom windows are not serializable");
  return {{"frame_len", cfg.frame_len},
          {"hop_len", cfg.hop_len},
          {"window", window_kind_name(cfg.kind)}};
}

template <typename T>
StftConfig<T> stft_from_json(const nlohmann::json& j) {
  const auto frame = j.value("frame_len", std::size_t(256));
  const auto hop = j.value("hop_len", std::size_t(128));
  const std::string window = j.value("window", std::string("hann"));
  if (window == "hann") return StftConfig<T>::hann(frame, hop);
  if (window == "rect") return StftConfig<T>::rectangular(frame, hop);
  throw std::invalid_argument("stft config: unknown window kind " + window);
}

}  // namespace dasformer
