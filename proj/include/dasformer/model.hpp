// Copyright 2026 The dasformer Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dasformer/layers.hpp"
#include "dasformer/signal.hpp"

namespace dasformer {

enum class DwKind { k3x3, kPointwise };

/// Architecture hyperparameters, including the ablation toggles.
struct ModelConfig {
  std::size_t embed_dim = 64;    // D
  std::size_t num_heads = 4;     // H
  std::size_t num_blocks = 12;   // L
  std::size_t num_mics = 4;      // M
  std::size_t num_speakers = 2;  // I
  std::size_t expansion = 4;
  double se_shrink = 0.25;
  double dropout_rate = 0.1;
  bool use_se = true;
  DwKind dw_kind = DwKind::k3x3;

  void validate() const {
    if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0)
      throw std::invalid_argument("model config: embed_dim must be a positive multiple of num_heads");
    if (num_blocks < 1) throw std::invalid_argument("model config: num_blocks must be >= 1");
    if (num_mics < 1) throw std::invalid_argument("model config: num_mics must be >= 1");
    if (num_speakers < 2) throw std::invalid_argument("model config: num_speakers must be >= 2");
    if (expansion < 1) throw std::invalid_argument("model config: expansion must be >= 1");
    if (se_shrink <= 0.0) throw std::invalid_argument("model config: se_shrink must be > 0");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw std::invalid_argument("model config: dropout_rate must be in [0, 1)");
  }

  std::size_t expanded_dim() const { return embed_dim * expansion; }
  std::size_t se_hidden() const {
    return std::max<std::size_t>(1, std::size_t(std::llround(double(expanded_dim()) * se_shrink)));
  }

  /// Named presets used by the CLI.
  static ModelConfig preset(const std::string& name) {
    ModelConfig cfg;
    if (name == "dasformer-base") {
      // defaults
    } else if (name == "dasformer-plus") {
      cfg.embed_dim = 96;
      cfg.num_blocks = 16;
      cfg.num_mics = 1;
    } else if (name == "micro") {
      cfg.embed_dim = 16;
      cfg.num_heads = 2;
      cfg.num_blocks = 2;
      cfg.num_mics = 2;
    } else if (name == "micro-m1") {
      cfg.embed_dim = 16;
      cfg.num_heads = 2;
      cfg.num_blocks = 2;
      cfg.num_mics = 1;
    } else {
      throw std::invalid_argument("unknown model preset: " + name);
    }
    cfg.validate();
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// Attention capture

enum class AttnModule { kFsa, kBta };

inline const char* attn_module_name(AttnModule m) { return m == AttnModule::kFsa ? "fsa" : "bta"; }

template <typename T>
struct AttentionRecord {
  std::size_t layer = 0;
  AttnModule module = AttnModule::kFsa;
  std::size_t head = 0;
  std::size_t slice = 0;  // frame index for FSA, band index for BTA
  Tensor<T> matrix;       // [S, S], rows sum to 1
};

/// Which (layer, module, head, slice) tuples to record. Empty sets mean "all".
struct CaptureRequest {
  std::set<std::size_t> layers, heads, slices;
  bool fsa = true;
  bool bta = true;

  bool wants_layer(std::size_t l) const { return layers.empty() || layers.count(l); }
  bool wants_module(AttnModule m) const { return m == AttnModule::kFsa ? fsa : bta; }
  bool wants_head(std::size_t h) const { return heads.empty() || heads.count(h); }
  bool wants_slice(std::size_t s) const { return slices.empty() || slices.count(s); }
};

template <typename T>
using CaptureSink = std::vector<AttentionRecord<T>>;

/// Per-forward options; `rng` is only consulted for train-mode dropout.
template <typename T>
struct ForwardOptions {
  Mode mode = Mode::kEval;
  RngState* rng = nullptr;
  const CaptureRequest* capture = nullptr;
  CaptureSink<T>* sink = nullptr;
};

// ---------------------------------------------------------------------------
// MBConv: x + Pw2(SE(Dw(Pw1(BN(x))))), inner SiLU after Pw1 and Dw.

template <typename T>
class MbConvBlock {
 public:
  MbConvBlock() = default;
  explicit MbConvBlock(const ModelConfig& cfg)
      : channels_(cfg.embed_dim),
        bn_(cfg.embed_dim),
        pw1_(ConvKind::kPointwise, cfg.embed_dim, cfg.expanded_dim()),
        dw_(cfg.dw_kind == DwKind::k3x3 ? ConvKind::kDepthwise3x3 : ConvKind::kDepthwise1x1,
            cfg.expanded_dim(), cfg.expanded_dim()),
        pw2_(ConvKind::kPointwise, cfg.expanded_dim(), cfg.embed_dim) {
    if (cfg.use_se) se_.emplace(cfg.expanded_dim(), cfg.se_hidden());
  }

  void register_params(ParamStore<T>& store, const std::string& prefix, RngState& rng) {
    bn_.register_params(store, prefix + ".bn", rng);
    pw1_.register_params(store, prefix + ".pw1", rng);
    dw_.register_params(store, prefix + ".dw", rng);
    if (se_) se_->register_params(store, prefix + ".se", rng);
    pw2_.register_params(store, prefix + ".pw2", rng);
  }

  struct State {
    typename BatchNorm<T>::State bn;
    typename Conv2d<T>::State pw1, dw, pw2;
    typename SqueezeExcitation<T>::State se;
    Tensor<T> pw1_pre, dw_pre;  // pre-SiLU activations
  };

  Tensor<T> forward(ParamStore<T>& store, const Tensor<T>& x, Mode mode, State* st) const {
    Tensor<T> h = bn_.forward(store, x, mode, st ? &st->bn : nullptr);
    h = pw1_.forward(store, h, st ? &st->pw1 : nullptr);
    if (st) st->pw1_pre = h;
    h = silu(h);
    h = dw_.forward(store, h, st ? &st->dw : nullptr);
    if (st) st->dw_pre = h;
    h = silu(h);
    if (se_) h = se_->forward(store, h, st ? &st->se : nullptr);
    h = pw2_.forward(store, h, st ? &st->pw2 : nullptr);
    axpy(h.size(), T(1), x.data(), h.data());  // residual
    return h;
  }

  Tensor<T> backward(ParamStore<T>& store, const State& st, const Tensor<T>& dy) const {
    Tensor<T> d = pw2_.backward(store, st.pw2, dy);
    if (se_) d = se_->backward(store, st.se, d);
    d = silu_backward(d, st.dw_pre);
    d = dw_.backward(store, st.dw, d);
    d = silu_backward(d, st.pw1_pre);
    d = pw1_.backward(store, st.pw1, d);
    d = bn_.backward(store, st.bn, d);
    axpy(d.size(), T(1), dy.data(), d.data());  // residual
    return d;
  }

  std::size_t channels() const { return channels_; }

 private:
  std::size_t channels_ = 0;
  BatchNorm<T> bn_;
  Conv2d<T> pw1_, dw_, pw2_;
  std::optional<SqueezeExcitation<T>> se_;
};

// ---------------------------------------------------------------------------
// FSA / BTA: one shared LN + MHSA applied per frame (sequence over bands) or
// per band (sequence over frames), with residual and dropout.

enum class AttnAxis { kSpectral, kTemporal };  // FSA, BTA

template <typename T>
class AttentionStage {
 public:
  AttentionStage() = default;
  AttentionStage(AttnAxis axis, std::size_t dim, std::size_t heads, double dropout_rate)
      : axis_(axis), dim_(dim), dropout_(dropout_rate), ln_(dim), attn_(dim, heads) {}

  void register_params(ParamStore<T>& store, const std::string& prefix, RngState& rng) {
    ln_.register_params(store, prefix + ".ln", rng);
    attn_.register_params(store, prefix + ".attn", rng);
  }

  struct State {
    Tensor<T> rows;                                   // gathered [slices*S, D]
    typename LayerNorm<T>::State ln;
    std::vector<typename MultiHeadAttention<T>::State> slices;
    DropoutState<T> drop;
    std::size_t num_slices = 0, seq_len = 0;
  };

  /// `capture` receives (slice, head, matrix) for every processed slice.
  Tensor<T> forward(ParamStore<T>& store, const Tensor<T>& x, Mode mode, RngState* rng, State* st,
                    const std::function<void(std::size_t, std::size_t, const Tensor<T>&)>& capture =
                        nullptr) const {
    const std::size_t frames = x.dim(1), bins = x.dim(2);
    const std::size_t slices = axis_ == AttnAxis::kSpectral ? frames : bins;
    const std::size_t seq = axis_ == AttnAxis::kSpectral ? bins : frames;

    Tensor<T> rows = gather(x);
    typename LayerNorm<T>::State ln_state;
    Tensor<T> normed = ln_.forward(store, rows, st ? &ln_state : nullptr);

    Tensor<T> attended({slices * seq, dim_});
    std::vector<typename MultiHeadAttention<T>::State> slice_states;
    if (st) slice_states.resize(slices);
    for (std::size_t s = 0; s < slices; ++s) {
      typename MultiHeadAttention<T>::CaptureFn fn = nullptr;
      if (capture) fn = [&, s](std::size_t head, const Tensor<T>& m) { capture(s, head, m); };
      attn_.forward_rows(store, normed.data() + s * seq * dim_, seq,
                         attended.data() + s * seq * dim_, st ? &slice_states[s] : nullptr, fn);
    }

    DropoutState<T> drop_state;
    Tensor<T> dropped =
        rng ? dropout(attended, dropout_, mode, *rng, st ? &drop_state : nullptr) : attended;

    Tensor<T> y = x;
    scatter_add(dropped, y);

    if (st) {
      st->rows = std::move(normed);
      st->ln = std::move(ln_state);
      st->slices = std::move(slice_states);
      st->drop = std::move(drop_state);
      st->num_slices = slices;
      st->seq_len = seq;
    }
    return y;
  }

  Tensor<T> backward(ParamStore<T>& store, const State& st, const Tensor<T>& dy) const {
    Tensor<T> drows({st.num_slices * st.seq_len, dim_});
    gather_into(dy, drows);
    Tensor<T> dattended = dropout_backward(drows, st.drop);

    Tensor<T> dnormed({st.num_slices * st.seq_len, dim_});
    for (std::size_t s = 0; s < st.num_slices; ++s)
      attn_.backward_rows(store, st.rows.data() + s * st.seq_len * dim_, st.slices[s],
                          dattended.data() + s * st.seq_len * dim_, st.seq_len,
                          dnormed.data() + s * st.seq_len * dim_);

    Tensor<T> dgathered = ln_.backward(store, st.ln, dnormed);

    Tensor<T> dx = dy;  // residual path
    scatter_add(dgathered, dx);
    return dx;
  }

  AttnAxis axis() const { return axis_; }
  const MultiHeadAttention<T>& attention() const { return attn_; }
  const LayerNorm<T>& norm() const { return ln_; }

 private:
  // [D, T, F] -> slice-major rows. FSA: row (t*F + f); BTA: row (f*T + t).
  Tensor<T> gather(const Tensor<T>& x) const {
    const std::size_t frames = x.dim(1), bins = x.dim(2);
    Tensor<T> rows({frames * bins, dim_});
    gather_into(x, rows);
    return rows;
  }

  void gather_into(const Tensor<T>& x, Tensor<T>& rows) const {
    const std::size_t frames = x.dim(1), bins = x.dim(2), plane = frames * bins;
    const T* src = x.data();
    T* dst = rows.data();
    if (axis_ == AttnAxis::kSpectral) {
      for (std::size_t d = 0; d < dim_; ++d)
        for (std::size_t p = 0; p < plane; ++p) dst[p * dim_ + d] = src[d * plane + p];
    } else {
      for (std::size_t d = 0; d < dim_; ++d)
        for (std::size_t t = 0; t < frames; ++t)
          for (std::size_t f = 0; f < bins; ++f)
            dst[(f * frames + t) * dim_ + d] = src[(d * frames + t) * bins + f];
    }
  }

  // adjoint of gather (a permutation), accumulated into the grid.
  void scatter_add(const Tensor<T>& rows, Tensor<T>& grid) const {
    const std::size_t frames = grid.dim(1), bins = grid.dim(2), plane = frames * bins;
    const T* src = rows.data();
    T* dst = grid.data();
    if (axis_ == AttnAxis::kSpectral) {
      for (std::size_t d = 0; d < dim_; ++d)
        for (std::size_t p = 0; p < plane; ++p) dst[d * plane + p] += src[p * dim_ + d];
    } else {
      for (std::size_t d = 0; d < dim_; ++d)
        for (std::size_t t = 0; t < frames; ++t)
          for (std::size_t f = 0; f < bins; ++f)
            dst[(d * frames + t) * bins + f] += src[(f * frames + t) * dim_ + d];
    }
  }

  AttnAxis axis_ = AttnAxis::kSpectral;
  std::size_t dim_ = 0;
  double dropout_ = 0.0;
  LayerNorm<T> ln_;
  MultiHeadAttention<T> attn_;
};

// ---------------------------------------------------------------------------
// AS Block: MBConv -> FSA -> MBConv -> BTA, shapes preserved throughout.

template <typename T>
class AsBlock {
 public:
  AsBlock() = default;
  explicit AsBlock(const ModelConfig& cfg)
      : mbconv1_(cfg),
        fsa_(AttnAxis::kSpectral, cfg.embed_dim, cfg.num_heads, cfg.dropout_rate),
        mbconv2_(cfg),
        bta_(AttnAxis::kTemporal, cfg.embed_dim, cfg.num_heads, cfg.dropout_rate) {}

  void register_params(ParamStore<T>& store, const std::string& prefix, RngState& rng) {
    mbconv1_.register_params(store, prefix + ".mbconv1", rng);
    fsa_.register_params(store, prefix + ".fsa", rng);
    mbconv2_.register_params(store, prefix + ".mbconv2", rng);
    bta_.register_params(store, prefix + ".bta", rng);
  }

  struct State {
    typename MbConvBlock<T>::State mb1, mb2;
    typename AttentionStage<T>::State fsa, bta;
  };

  Tensor<T> forward(ParamStore<T>& store, const Tensor<T>& x, std::size_t layer,
                    const ForwardOptions<T>& opts, State* st) const {
    auto capture_fn = [&](AttnModule module) {
      std::function<void(std::size_t, std::size_t, const Tensor<T>&)> fn = nullptr;
      if (opts.capture && opts.sink && opts.capture->wants_layer(layer) &&
          opts.capture->wants_module(module)) {
        fn = [&, module, layer](std::size_t slice, std::size_t head, const Tensor<T>& m) {
          if (opts.capture->wants_head(head) && opts.capture->wants_slice(slice))
            opts.sink->push_back({layer, module, head, slice, m});
        };
      }
      return fn;
    };

    Tensor<T> h = mbconv1_.forward(store, x, opts.mode, st ? &st->mb1 : nullptr);
    h = fsa_.forward(store, h, opts.mode, opts.rng, st ? &st->fsa : nullptr,
                     capture_fn(AttnModule::kFsa));
    h = mbconv2_.forward(store, h, opts.mode, st ? &st->mb2 : nullptr);
    h = bta_.forward(store, h, opts.mode, opts.rng, st ? &st->bta : nullptr,
                     capture_fn(AttnModule::kBta));
    return h;
  }

  Tensor<T> backward(ParamStore<T>& store, const State& st, const Tensor<T>& dy) const {
    Tensor<T> d = bta_.backward(store, st.bta, dy);
    d = mbconv2_.backward(store, st.mb2, d);
    d = fsa_.backward(store, st.fsa, d);
    d = mbconv1_.backward(store, st.mb1, d);
    return d;
  }

  const AttentionStage<T>& fsa() const { return fsa_; }
  const AttentionStage<T>& bta() const { return bta_; }

 private:
  MbConvBlock<T> mbconv1_;
  AttentionStage<T> fsa_;
  MbConvBlock<T> mbconv2_;
  AttentionStage<T> bta_;
};

// ---------------------------------------------------------------------------
// Full model: 3x3 encoder (2M -> D), L AS Blocks, 3x3 decoder (D -> 2I).

template <typename T>
class DasFormer {
 public:
  DasFormer() = default;
  explicit DasFormer(const ModelConfig& cfg)
      : cfg_(cfg),
        encoder_(ConvKind::kFull3x3, 2 * cfg.num_mics, cfg.embed_dim),
        decoder_(ConvKind::kFull3x3, cfg.embed_dim, 2 * cfg.num_speakers) {
    cfg.validate();
    blocks_.reserve(cfg.num_blocks);
    for (std::size_t i = 0; i < cfg.num_blocks; ++i) blocks_.emplace_back(cfg);
  }

  const ModelConfig& config() const { return cfg_; }

  /// Parameter names follow encoder.*, block{i}.mbconv{1,2}.*,
  /// block{i}.{fsa,bta}.*, decoder.*; registration order is forward order.
  void register_params(ParamStore<T>& store, RngState& rng) {
    encoder_.register_params(store, "encoder", rng);
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].register_params(store, "block" + std::to_string(i), rng);
    decoder_.register_params(store, "decoder", rng);
  }

  struct State {
    typename Conv2d<T>::State encoder, decoder;
    std::vector<typename AsBlock<T>::State> blocks;
  };

  Tensor<T> forward(ParamStore<T>& store, const Tensor<T>& x, const ForwardOptions<T>& opts,
                    State* st) const {
    if (x.rank() != 3 || x.dim(0) != 2 * cfg_.num_mics)
      throw std::invalid_argument("encoder: expected [" + std::to_string(2 * cfg_.num_mics) +
                                  " x T x F] input grid, got " + x.shape_str());
    if (st) st->blocks.resize(blocks_.size());
    Tensor<T> h = encoder_.forward(store, x, st ? &st->encoder : nullptr);
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      h = blocks_[i].forward(store, h, i, opts, st ? &st->blocks[i] : nullptr);
    return decoder_.forward(store, h, st ? &st->decoder : nullptr);
  }

  Tensor<T> backward(ParamStore<T>& store, const State& st, const Tensor<T>& dy) const {
    Tensor<T> d = decoder_.backward(store, st.decoder, dy);
    for (std::size_t i = blocks_.size(); i-- > 0;)
      d = blocks_[i].backward(store, st.blocks[i], d);
    return encoder_.backward(store, st.encoder, d);
  }

  const std::vector<AsBlock<T>>& blocks() const { return blocks_; }

 private:
  ModelConfig cfg_;
  Conv2d<T> encoder_;
  std::vector<AsBlock<T>> blocks_;
  Conv2d<T> decoder_;
};

/// Creates and initializes a model plus its parameter store.
template <typename T>
struct BuiltModel {
  ParamStore<T> store;
  DasFormer<T> model;
};

template <typename T>
BuiltModel<T> build_model(const ModelConfig& cfg, RngState rng) {
  cfg.validate();
  BuiltModel<T> built{ParamStore<T>(), DasFormer<T>(cfg)};
  built.model.register_params(built.store, rng);
  return built;
}

// ---------------------------------------------------------------------------
// Parameter accounting

template <typename T>
std::size_t count_params(const ParamStore<T>& store) {
  return store.trainable_elements();
}

/// Trainable elements grouped by the first path segment of the name.
template <typename T>
std::vector<std::pair<std::string, std::size_t>> param_breakdown(const ParamStore<T>& store) {
  std::vector<std::pair<std::string, std::size_t>> out;
  std::map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < store.count(); ++i) {
    if (!store.trainable(i)) continue;
    const std::string& name = store.name(i);
    const std::string head = name.substr(0, name.find('.'));
    auto it = seen.find(head);
    if (it == seen.end()) {
      seen.emplace(head, out.size());
      out.emplace_back(head, store.value(i).size());
    } else {
      out[it->second].second += store.value(i).size();
    }
  }
  return out;
}

/// Closed-form trainable-parameter count; matches count_params(store) exactly.
/// With E = expansion*D and S = round(0.25*E):
///   encoder 9*2M*D + D, decoder 9*D*2I + 2I
///   MBConv  2D (BN) + D*E + E (Pw1) + dw (9E + E or E + E) + SE + E*D + D (Pw2)
///   SE      E*S + S + S*E + E
///   attn    2D (LN) + 4*(D*D + D)
///   total   encoder + decoder + L * (2*MBConv + 2*attn)
inline std::size_t expected_param_count(const ModelConfig& cfg) {
  const std::size_t d = cfg.embed_dim, e = cfg.expanded_dim(), s = cfg.se_hidden();
  const std::size_t encoder = 9 * 2 * cfg.num_mics * d + d;
  const std::size_t decoder = 9 * d * 2 * cfg.num_speakers + 2 * cfg.num_speakers;
  const std::size_t dw = cfg.dw_kind == DwKind::k3x3 ? 9 * e + e : e + e;
  const std::size_t se = cfg.use_se ? e * s + s + s * e + e : 0;
  const std::size_t mbconv = 2 * d + (d * e + e) + dw + se + (e * d + d);
  const std::size_t attn = 2 * d + 4 * (d * d + d);
  return encoder + decoder + cfg.num_blocks * (2 * mbconv + 2 * attn);
}

// ---------------------------------------------------------------------------
// Inference composition: STFT -> pack -> forward -> unpack -> iSTFT.

/// Separates an M-channel mixture into I single-channel waveforms
/// (returned as an I x N grid), trimmed/padded to the input length.
/// Eval mode, deterministic, leaves the store unmodified.
template <typename T>
MultichannelWaveform<T> separate(const DasFormer<T>& model, ParamStore<T>& store,
                                 const MultichannelWaveform<T>& mixture,
                                 const StftConfig<T>& stft_cfg,
                                 const CaptureRequest* capture = nullptr,
                                 CaptureSink<T>* sink = nullptr) {
  if (mixture.num_channels != model.config().num_mics)
    throw std::invalid_argument("separate: mixture has " + std::to_string(mixture.num_channels) +
                                " channels, model expects " +
                                std::to_string(model.config().num_mics));
  ComplexSpectrogram<T> spec = stft(mixture, stft_cfg);
  Tensor<T> grid = pack_input(spec);
  ForwardOptions<T> opts;
  opts.mode = Mode::kEval;
  opts.capture = capture;
  opts.sink = sink;
  Tensor<T> out = model.forward(store, grid, opts, nullptr);
  ComplexSpectrogram<T> est_spec = unpack_output(out, spec);
  MultichannelWaveform<T> est = istft(est_spec);

  MultichannelWaveform<T> trimmed(est.num_channels, mixture.num_samples, mixture.sample_rate);
  const std::size_t n = std::min(est.num_samples, mixture.num_samples);
  for (std::size_t c = 0; c < est.num_channels; ++c)
    std::copy(est.channel(c), est.channel(c) + n, trimmed.channel(c));
  return trimmed;
}

}  // namespace dasformer
