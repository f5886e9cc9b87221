// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparselab/model.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "sparselab/ops.hpp"
#include "sparselab/rng.hpp"

namespace sparselab {

namespace {

std::size_t parse_size(const KeyValues& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError("missing config key '" + key + "'");
  std::size_t v = 0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("config key '" + key + "' is not an unsigned integer: '" + s + "'");
  }
  return v;
}

const std::string& require(const KeyValues& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 4) throw ConfigError("vocab_size must be >= 4");
  if (num_layers == 0) throw ConfigError("num_layers must be >= 1");
  if (ffn_width == 0) throw ConfigError("ffn_width must be >= 1");
  if (max_len == 0) throw ConfigError("max_len must be >= 1");
  attention_for(false).validate();
}

AttentionConfig ModelConfig::attention_for(bool causal) const {
  AttentionConfig c = attention;
  c.d_model = d_model;
  c.num_heads = num_heads;
  c.causal = causal;
  return c;
}

KeyValues ModelConfig::to_key_values() const {
  return {
      {"model.vocab_size", std::to_string(vocab_size)},
      {"model.d_model", std::to_string(d_model)},
      {"model.num_heads", std::to_string(num_heads)},
      {"model.num_layers", std::to_string(num_layers)},
      {"model.ffn_width", std::to_string(ffn_width)},
      {"model.max_len", std::to_string(max_len)},
      {"model.variant", std::string(to_string(attention.variant))},
      {"model.k", k_to_string(attention.k)},
      {"model.sparsify_phase", std::string(to_string(attention.sparsify_phase))},
      {"model.seed", std::to_string(seed)},
  };
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  ModelConfig c;
  c.vocab_size = parse_size(kv, "model.vocab_size");
  c.d_model = parse_size(kv, "model.d_model");
  c.num_heads = parse_size(kv, "model.num_heads");
  c.num_layers = parse_size(kv, "model.num_layers");
  c.ffn_width = parse_size(kv, "model.ffn_width");
  c.max_len = parse_size(kv, "model.max_len");
  c.attention.variant = parse_variant(require(kv, "model.variant"));
  c.attention.k = parse_k(require(kv, "model.k"));
  c.attention.sparsify_phase = parse_sparsify_phase(require(kv, "model.sparsify_phase"));
  c.seed = parse_size(kv, "model.seed");
  c.validate();
  return c;
}

template <std::floating_point T>
void ParameterSet<T>::add(std::string name, Tensor<T> value) {
  if (index_.contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  index_.emplace(name, items_.size());
  items_.push_back({std::move(name), std::move(value)});
}

template <std::floating_point T>
std::size_t ParameterSet<T>::index_of(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter '" + std::string(name) + "'");
  return it->second;
}

template <std::floating_point T>
bool ParameterSet<T>::operator==(const ParameterSet& other) const {
  if (items_.size() != other.items_.size()) return false;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].name != other.items_[i].name || !(items_[i].value == other.items_[i].value)) {
      return false;
    }
  }
  return true;
}

std::string_view to_string(AttentionSite site) {
  switch (site) {
    case AttentionSite::encoder_self: return "enc-self";
    case AttentionSite::decoder_self: return "dec-self";
    case AttentionSite::context: return "context";
  }
  return "?";
}

template <std::floating_point T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d) {
  Tensor<T> pe({length, d});
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * freq;
      pe(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

template <std::floating_point T>
Transformer<T>::Transformer(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng = Rng::substream(config_.seed, "params");
  const std::size_t d = config_.d_model, v = config_.vocab_size, f = config_.ffn_width;
  auto weight = [&](const std::string& name, std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    params_.add(name, random_uniform<T>({fan_in, fan_out}, -bound, bound, rng));
  };
  auto zeros = [&](const std::string& name, std::size_t n) { params_.add(name, Tensor<T>({n})); };
  auto ones = [&](const std::string& name, std::size_t n) {
    params_.add(name, Tensor<T>({n}, T(1)));
  };
  auto attention = [&](const std::string& p) {
    for (const char* w : {"w_q", "w_k", "w_v", "w_c"}) weight(p + "." + w, d, d);
  };
  auto layer_norm = [&](const std::string& p) {
    ones(p + ".gain", d);
    zeros(p + ".offset", d);
  };
  auto ffn = [&](const std::string& p) {
    weight(p + ".w1", d, f);
    zeros(p + ".b1", f);
    weight(p + ".w2", f, d);
    zeros(p + ".b2", d);
  };

  weight("src_embed", v, d);
  weight("tgt_embed", v, d);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    attention(p + ".self");
    layer_norm(p + ".ln1");
    ffn(p + ".ffn");
    layer_norm(p + ".ln2");
  }
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    attention(p + ".self");
    layer_norm(p + ".ln1");
    attention(p + ".ctx");
    layer_norm(p + ".ln2");
    ffn(p + ".ffn");
    layer_norm(p + ".ln3");
  }
  weight("out.w", d, v);
  zeros("out.b", v);
}

template <std::floating_point T>
Transformer<T>::Transformer(ModelConfig config, ParameterSet<T> params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const Transformer reference(config_);
  if (reference.params_.size() != params_.size()) {
    throw ContractError("parameter count does not match the configuration");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (reference.params_[i].name != params_[i].name ||
        !reference.params_[i].value.same_shape(params_[i].value)) {
      throw ContractError("parameter '" + params_[i].name + "' does not match the configuration");
    }
  }
}

template <std::floating_point T>
std::vector<Var<T>> Transformer<T>::bind(Graph<T>& g, bool trainable) const {
  std::vector<Var<T>> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(trainable ? g.leaf(p.value) : g.constant(p.value));
  return vars;
}

template <std::floating_point T>
void Transformer<T>::check_batch(const TokenBatch& b) const {
  if (b.count == 0 || b.length == 0 || b.tokens.size() != b.count * b.length) {
    throw DimensionError("token batch shape does not match its contents");
  }
  if (b.length > config_.max_len) {
    throw DimensionError("sequence length " + std::to_string(b.length) + " exceeds max_len " +
                         std::to_string(config_.max_len));
  }
  for (int t : b.tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size) {
      throw DimensionError("token id " + std::to_string(t) + " outside vocabulary");
    }
  }
}

template <std::floating_point T>
Var<T> Transformer<T>::embed(std::span<const Var<T>> bound, std::string_view table,
                             const TokenBatch& batch) const {
  Graph<T>& g = *bound.front().graph;
  const std::size_t d = config_.d_model;
  const Tensor<T> pe = positional_encoding<T>(batch.length, d);
  Tensor<T> tiled({batch.count * batch.length, d});
  for (std::size_t s = 0; s < batch.count; ++s) {
    std::copy_n(pe.data(), pe.size(), tiled.data() + s * pe.size());
  }
  const Var<T> tokens = ops::gather_rows(param(bound, table), std::span<const int>(batch.tokens));
  const T scale = std::sqrt(static_cast<T>(d));
  return ops::add(ops::scale(tokens, scale), g.constant(std::move(tiled)));
}

template <std::floating_point T>
Var<T> Transformer<T>::attention_block(std::span<const Var<T>> bound, const std::string& prefix,
                                       Var<T> x_q, Var<T> x_kv, std::size_t count, bool causal,
                                       Phase phase, SparsifyPhase mode, AttentionSite site,
                                       std::size_t layer, AttentionTrace<T>* trace) const {
  AttentionConfig cfg = config_.attention_for(causal);
  cfg.sparsify_phase = mode;
  const AttentionParams<T> p{param(bound, prefix + ".w_q"), param(bound, prefix + ".w_k"),
                             param(bound, prefix + ".w_v"), param(bound, prefix + ".w_c")};
  AttentionResult<T> r =
      multi_head_attention(x_q, x_kv, p, cfg, phase, count, trace != nullptr);
  if (trace) {
    const std::size_t g = cfg.num_heads;
    for (std::size_t i = 0; i < r.weights.size(); ++i) {
      trace->entries.push_back({site, layer, i % g, i / g, std::move(r.weights[i])});
    }
  }
  return r.output;
}

template <std::floating_point T>
Var<T> Transformer<T>::feed_forward(std::span<const Var<T>> bound, const std::string& prefix,
                                    Var<T> x) const {
  const Var<T> h = ops::relu(
      ops::add_bias(ops::matmul(x, param(bound, prefix + ".w1")), param(bound, prefix + ".b1")));
  return ops::add_bias(ops::matmul(h, param(bound, prefix + ".w2")), param(bound, prefix + ".b2"));
}

template <std::floating_point T>
Var<T> Transformer<T>::norm(std::span<const Var<T>> bound, const std::string& prefix,
                            Var<T> x) const {
  return ops::layer_norm(x, param(bound, prefix + ".gain"), param(bound, prefix + ".offset"));
}

template <std::floating_point T>
Var<T> Transformer<T>::encode(std::span<const Var<T>> bound, const TokenBatch& source,
                              Phase phase, SparsifyPhase mode, AttentionTrace<T>* trace) const {
  check_batch(source);
  Var<T> x = embed(bound, "src_embed", source);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    const Var<T> a = attention_block(bound, p + ".self", x, x, source.count, false, phase, mode,
                                     AttentionSite::encoder_self, l, trace);
    x = norm(bound, p + ".ln1", ops::add(x, a));
    x = norm(bound, p + ".ln2", ops::add(x, feed_forward(bound, p + ".ffn", x)));
  }
  return x;
}

template <std::floating_point T>
Var<T> Transformer<T>::decode(std::span<const Var<T>> bound, Var<T> memory,
                              std::size_t source_len, const TokenBatch& target_in, Phase phase,
                              SparsifyPhase mode, AttentionTrace<T>* trace) const {
  check_batch(target_in);
  if (memory.value().rows() != target_in.count * source_len) {
    throw DimensionError("decode: encoder output rows do not match the batch");
  }
  Var<T> y = embed(bound, "tgt_embed", target_in);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    const Var<T> a = attention_block(bound, p + ".self", y, y, target_in.count, true, phase, mode,
                                     AttentionSite::decoder_self, l, trace);
    y = norm(bound, p + ".ln1", ops::add(y, a));
    const Var<T> c = attention_block(bound, p + ".ctx", y, memory, target_in.count, false, phase,
                                     mode, AttentionSite::context, l, trace);
    y = norm(bound, p + ".ln2", ops::add(y, c));
    y = norm(bound, p + ".ln3", ops::add(y, feed_forward(bound, p + ".ffn", y)));
  }
  return ops::add_bias(ops::matmul(y, param(bound, "out.w")), param(bound, "out.b"));
}

template <std::floating_point T>
Tensor<T> Transformer<T>::logits(std::span<const int> source, std::span<const int> target_in,
                                 Phase phase) const {
  Graph<T> g;
  const auto bound = bind(g, false);
  const TokenBatch src{1, source.size(), {source.begin(), source.end()}};
  const TokenBatch tgt{1, target_in.size(), {target_in.begin(), target_in.end()}};
  const SparsifyPhase mode = config_.attention.sparsify_phase;
  const Var<T> memory = encode(bound, src, phase, mode);
  return decode(bound, memory, src.length, tgt, phase, mode).value();
}

namespace {

constexpr std::string_view kModelHeader = "sparselab-model 1";

template <class T>
std::string hex(T v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                       std::chars_format::hex);
  if (ec != std::errc()) throw std::runtime_error("hexfloat conversion failed");
  return std::string(buf.data(), ptr);
}

template <class T>
T parse_hex(std::string_view s) {
  T v{};
  bool negative = !s.empty() && s.front() == '-';
  if (negative) s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v,
                                         std::chars_format::hex);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("malformed hexfloat '" + std::string(s) + "'");
  }
  return negative ? -v : v;
}

}  // namespace

template <std::floating_point T>
std::string serialize_model(const Transformer<T>& model) {
  std::ostringstream os;
  os << kModelHeader << '\n';
  KeyValues kv = model.config().to_key_values();
  kv["model.dtype"] = std::string(dtype_name(dtype_of<T>()));
  os << format_key_values(kv) << "---\n";
  for (const auto& p : model.parameters()) {
    os << p.name;
    os << ' ' << p.value.rank();
    for (std::size_t e : p.value.shape()) os << ' ' << e;
    for (T v : p.value.values()) os << ' ' << hex(v);
    os << '\n';
  }
  return os.str();
}

template <std::floating_point T>
Transformer<T> deserialize_model(std::string_view text) {
  const std::size_t sep = text.find("\n---\n");
  if (!text.starts_with(kModelHeader) || sep == std::string_view::npos) {
    throw std::runtime_error("not a sparselab model file");
  }
  const std::size_t config_start = kModelHeader.size() + 1;
  const KeyValues kv = parse_key_values(text.substr(config_start, sep + 1 - config_start));
  const auto dtype = kv.find("model.dtype");
  if (dtype == kv.end() || dtype->second != dtype_name(dtype_of<T>())) {
    throw std::runtime_error("model file dtype does not match the requested precision");
  }
  ModelConfig config = ModelConfig::from_key_values(kv);
  ParameterSet<T> params;
  std::istringstream body{std::string(text.substr(sep + 5))};
  std::string line;
  while (std::getline(body, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name;
    std::size_t rank = 0;
    if (!(ls >> name >> rank) || rank == 0 || rank > 3) {
      throw std::runtime_error("malformed parameter line");
    }
    Shape shape(rank);
    for (auto& e : shape) {
      if (!(ls >> e)) throw std::runtime_error("malformed shape for '" + name + "'");
    }
    std::vector<T> values;
    values.reserve(shape_product(shape));
    std::string tok;
    while (ls >> tok) values.push_back(parse_hex<T>(tok));
    params.add(name, Tensor<T>(std::move(shape), std::move(values)));
  }
  return Transformer<T>(std::move(config), std::move(params));
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Transformer<float>;
template class Transformer<double>;
template Tensor<float> positional_encoding<float>(std::size_t, std::size_t);
template Tensor<double> positional_encoding<double>(std::size_t, std::size_t);
template std::string serialize_model(const Transformer<float>&);
template std::string serialize_model(const Transformer<double>&);
template Transformer<float> deserialize_model<float>(std::string_view);
template Transformer<double> deserialize_model<double>(std::string_view);

}  // namespace sparselab
