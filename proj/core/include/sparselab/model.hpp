// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sparselab/attention.hpp"
#include "sparselab/graph.hpp"
#include "sparselab/io.hpp"
#include "sparselab/tensor.hpp"

namespace sparselab {

struct ModelConfig {
  std::size_t vocab_size = 16;
  std::size_t d_model = 64;
  std::size_t num_heads = 4;
  std::size_t num_layers = 2;
  std::size_t ffn_width = 128;
  std::size_t max_len = 32;
  /// Variant, k and sparsify phase. Width, head count and causality are
  /// filled in per attention site by attention_for().
  AttentionConfig attention;
  std::uint64_t seed = 1;

  void validate() const;
  AttentionConfig attention_for(bool causal) const;

  /// Flat key=value view (keys prefixed "model."), and its inverse.
  KeyValues to_key_values() const;
  static ModelConfig from_key_values(const KeyValues& kv);
};

template <std::floating_point T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

/// Ordered parameter list; order is fixed by construction and defines both
/// the optimizer state layout and the serialized layout.
template <std::floating_point T>
class ParameterSet {
 public:
  void add(std::string name, Tensor<T> value);
  std::size_t size() const noexcept { return items_.size(); }
  NamedTensor<T>& operator[](std::size_t i) { return items_[i]; }
  const NamedTensor<T>& operator[](std::size_t i) const { return items_[i]; }
  /// Throws std::out_of_range for unknown names.
  std::size_t index_of(std::string_view name) const;
  const Tensor<T>& get(std::string_view name) const { return items_[index_of(name)].value; }
  Tensor<T>& get(std::string_view name) { return items_[index_of(name)].value; }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  bool operator==(const ParameterSet& other) const;

 private:
  std::vector<NamedTensor<T>> items_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// `count` equal-length token sequences stored back to back.
struct TokenBatch {
  std::size_t count = 0;
  std::size_t length = 0;
  std::vector<int> tokens;
};

enum class AttentionSite { encoder_self, decoder_self, context };
std::string_view to_string(AttentionSite site);

/// Attention weights collected during a forward pass for visualization.
template <std::floating_point T>
struct AttentionTrace {
  struct Entry {
    AttentionSite site;
    std::size_t layer;
    std::size_t head;
    std::size_t sequence;
    Tensor<T> weights;
  };
  std::vector<Entry> entries;
};

/// Sinusoidal position table [length x d].
template <std::floating_point T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d);

/// Encoder-decoder transformer with post-residual layer norm.
///
/// encoder: [self-attention -> FFN] x L
/// decoder: [causal self-attention -> context attention -> FFN] x L
/// Each sublayer is x = LayerNorm(x + sublayer(x)). Token embeddings are
/// scaled by sqrt(d) and summed with sinusoidal positions.
template <std::floating_point T>
class Transformer {
 public:
  /// Fresh model, uniform +-sqrt(6/(fan_in+fan_out)) weights from the
  /// "params" substream of config.seed; zero biases, unit layer-norm gains.
  explicit Transformer(ModelConfig config);
  Transformer(ModelConfig config, ParameterSet<T> params);

  const ModelConfig& config() const noexcept { return config_; }
  const ParameterSet<T>& parameters() const noexcept { return params_; }
  ParameterSet<T>& parameters() noexcept { return params_; }

  /// Puts every parameter on `g`, as leaves or as constants.
  std::vector<Var<T>> bind(Graph<T>& g, bool trainable) const;

  /// Encoder output [count*len x d].
  Var<T> encode(std::span<const Var<T>> bound, const TokenBatch& source, Phase phase,
                SparsifyPhase mode, AttentionTrace<T>* trace = nullptr) const;

  /// Decoder logits [count*len x vocab] given encoder output for the same
  /// number of sequences.
  Var<T> decode(std::span<const Var<T>> bound, Var<T> memory, std::size_t source_len,
                const TokenBatch& target_in, Phase phase, SparsifyPhase mode,
                AttentionTrace<T>* trace = nullptr) const;

  /// Single-sequence logits [tgt_len x vocab] using the configured sparsify
  /// phase. Throws DimensionError if a length exceeds max_len or a token id
  /// is out of range.
  Tensor<T> logits(std::span<const int> source, std::span<const int> target_in,
                   Phase phase = Phase::eval) const;

 private:
  Var<T> attention_block(std::span<const Var<T>> bound, const std::string& prefix,
                         Var<T> x_q, Var<T> x_kv, std::size_t count, bool causal,
                         Phase phase, SparsifyPhase mode, AttentionSite site,
                         std::size_t layer, AttentionTrace<T>* trace) const;
  Var<T> feed_forward(std::span<const Var<T>> bound, const std::string& prefix,
                      Var<T> x) const;
  Var<T> norm(std::span<const Var<T>> bound, const std::string& prefix, Var<T> x) const;
  Var<T> embed(std::span<const Var<T>> bound, std::string_view table,
               const TokenBatch& batch) const;
  Var<T> param(std::span<const Var<T>> bound, std::string_view name) const {
    return bound[params_.index_of(name)];
  }
  void check_batch(const TokenBatch& b) const;

  ModelConfig config_;
  ParameterSet<T> params_;
};

/// Text serialization: header line, config key=values, then one parameter
/// per line with its shape and hexfloat values (exact round trip).
template <std::floating_point T>
std::string serialize_model(const Transformer<T>& model);

/// Throws std::runtime_error on malformed input.
template <std::floating_point T>
Transformer<T> deserialize_model(std::string_view text);

}  // namespace sparselab
