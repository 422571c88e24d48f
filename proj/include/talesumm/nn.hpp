#pragma once

#include <string>

#include "talesumm/autograd.hpp"

namespace talesumm::nn {

using ag::ParameterStore;
using ag::Var;

/// Fourier position table: entry (p, 2i) = sin(p / 10000^(2i/dim)),
/// entry (p, 2i+1) = cos(p / 10000^(2i/dim)). Throws on odd dim.
template <typename T>
Tensor<T> sinusoidal_encoding(std::size_t num_positions, std::size_t dim);

template <typename T>
struct Linear {
  Var<T> weight;  // out x in
  Var<T> bias;    // out

  Var<T> operator()(const Var<T>& x) const { return ag::linear(x, weight, bias); }
};

/// Registers `<name>.weight` and `<name>.bias`, both uniform in
/// +-1/sqrt(in).
template <typename T>
Linear<T> make_linear(ParameterStore<T>& store, const std::string& name, std::size_t in,
                      std::size_t out, Rng& rng);

template <typename T>
struct LayerNorm {
  Var<T> gain;
  Var<T> bias;
  T eps = T(1e-5);

  Var<T> operator()(const Var<T>& x) const { return ag::layer_norm(x, gain, bias, eps); }
};

template <typename T>
LayerNorm<T> make_layer_norm(ParameterStore<T>& store, const std::string& name, std::size_t dim);

template <typename T>
struct AttentionParams {
  Linear<T> query;
  Linear<T> key;
  Linear<T> value;
  Linear<T> output;
};

template <typename T>
AttentionParams<T> make_attention(ParameterStore<T>& store, const std::string& name,
                                  std::size_t dim, Rng& rng);

/// Multi-head self-attention restricted by `mask`: project x to queries,
/// keys and values, attend per head over allowed positions, concatenate
/// heads and apply the output projection.
template <typename T>
Var<T> masked_multi_head_attention(const Var<T>& x, const AttentionMask& mask,
                                   const AttentionParams<T>& params, std::size_t heads,
                                   bool train, double attn_dropout, Rng& rng);

/// Post-norm encoder layer:
///   h = LN(x + drop(attn(x)));  out = LN(h + drop(W2 gelu(W1 h))).
template <typename T>
struct EncoderLayer {
  AttentionParams<T> attention;
  LayerNorm<T> attention_norm;
  Linear<T> ff_in;
  Linear<T> ff_out;
  LayerNorm<T> ff_norm;
};

template <typename T>
EncoderLayer<T> make_encoder_layer(ParameterStore<T>& store, const std::string& name,
                                   std::size_t dim, std::size_t ff_dim, Rng& rng);

template <typename T>
Var<T> encoder_layer(const Var<T>& x, const AttentionMask& mask, const EncoderLayer<T>& layer,
                     std::size_t heads, bool train, double dropout, Rng& rng);

}  // namespace talesumm::nn
