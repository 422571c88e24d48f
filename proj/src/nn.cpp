#include "talesumm/nn.hpp"

#include <cmath>

#include "talesumm/error.hpp"

namespace talesumm::nn {

template <typename T>
Tensor<T> sinusoidal_encoding(std::size_t num_positions, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) {
    throw invalid_input("sinusoidal_encoding: dimension must be even, got " + std::to_string(dim));
  }
  Tensor<T> table = Tensor<T>::matrix(num_positions, dim);
  for (std::size_t p = 0; p < num_positions; ++p) {
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
      const double angle = static_cast<double>(p) / freq;
      table(p, 2 * i) = static_cast<T>(std::sin(angle));
      table(p, 2 * i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return table;
}

namespace {

template <typename T>
Tensor<T> uniform_tensor(Dims dims, double bound, Rng& rng) {
  Tensor<T> t(std::move(dims));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace

template <typename T>
Linear<T> make_linear(ParameterStore<T>& store, const std::string& name, std::size_t in,
                      std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear<T> layer;
  layer.weight = store.add(name + ".weight", uniform_tensor<T>({out, in}, bound, rng));
  layer.bias = store.add(name + ".bias", uniform_tensor<T>({out}, bound, rng));
  return layer;
}

template <typename T>
LayerNorm<T> make_layer_norm(ParameterStore<T>& store, const std::string& name, std::size_t dim) {
  LayerNorm<T> norm;
  norm.gain = store.add(name + ".gain", Tensor<T>(Dims{dim}, T(1)));
  norm.bias = store.add(name + ".bias", Tensor<T>(Dims{dim}, T(0)));
  return norm;
}

template <typename T>
AttentionParams<T> make_attention(ParameterStore<T>& store, const std::string& name,
                                  std::size_t dim, Rng& rng) {
  AttentionParams<T> p;
  p.query = make_linear(store, name + ".query", dim, dim, rng);
  p.key = make_linear(store, name + ".key", dim, dim, rng);
  p.value = make_linear(store, name + ".value", dim, dim, rng);
  p.output = make_linear(store, name + ".output", dim, dim, rng);
  return p;
}

template <typename T>
Var<T> masked_multi_head_attention(const Var<T>& x, const AttentionMask& mask,
                                   const AttentionParams<T>& params, std::size_t heads,
                                   bool train, double attn_dropout, Rng& rng) {
  const auto q = params.query(x);
  const auto k = params.key(x);
  const auto v = params.value(x);
  const auto mixed = ag::masked_attention(q, k, v, mask, heads, attn_dropout, train, rng);
  return params.output(mixed);
}

template <typename T>
EncoderLayer<T> make_encoder_layer(ParameterStore<T>& store, const std::string& name,
                                   std::size_t dim, std::size_t ff_dim, Rng& rng) {
  EncoderLayer<T> layer;
  layer.attention = make_attention(store, name + ".attention", dim, rng);
  layer.attention_norm = make_layer_norm(store, name + ".attention_norm", dim);
  layer.ff_in = make_linear(store, name + ".ff_in", dim, ff_dim, rng);
  layer.ff_out = make_linear(store, name + ".ff_out", ff_dim, dim, rng);
  layer.ff_norm = make_layer_norm(store, name + ".ff_norm", dim);
  return layer;
}

template <typename T>
Var<T> encoder_layer(const Var<T>& x, const AttentionMask& mask, const EncoderLayer<T>& layer,
                     std::size_t heads, bool train, double dropout, Rng& rng) {
  auto attended = masked_multi_head_attention(x, mask, layer.attention, heads, train, dropout, rng);
  attended = ag::dropout(attended, dropout, train, rng);
  const auto h = layer.attention_norm(ag::add(x, attended));
  auto ff = layer.ff_out(ag::gelu(layer.ff_in(h)));
  ff = ag::dropout(ff, dropout, train, rng);
  return layer.ff_norm(ag::add(h, ff));
}

#define TALESUMM_INSTANTIATE_NN(T)                                                            \
  template Tensor<T> sinusoidal_encoding<T>(std::size_t, std::size_t);                         \
  template Linear<T> make_linear<T>(ParameterStore<T>&, const std::string&, std::size_t,       \
                                    std::size_t, Rng&);                                        \
  template LayerNorm<T> make_layer_norm<T>(ParameterStore<T>&, const std::string&,             \
                                           std::size_t);                                       \
  template AttentionParams<T> make_attention<T>(ParameterStore<T>&, const std::string&,        \
                                                std::size_t, Rng&);                            \
  template Var<T> masked_multi_head_attention<T>(const Var<T>&, const AttentionMask&,          \
                                                 const AttentionParams<T>&, std::size_t, bool, \
                                                 double, Rng&);                                \
  template EncoderLayer<T> make_encoder_layer<T>(ParameterStore<T>&, const std::string&,       \
                                                 std::size_t, std::size_t, Rng&);              \
  template Var<T> encoder_layer<T>(const Var<T>&, const AttentionMask&, const EncoderLayer<T>&, \
                                   std::size_t, bool, double, Rng&);

TALESUMM_INSTANTIATE_NN(float)
TALESUMM_INSTANTIATE_NN(double)

}  // namespace talesumm::nn
