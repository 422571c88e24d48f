#include "talesumm/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

#include "talesumm/error.hpp"

namespace talesumm::ag {
namespace {

template <typename T>
using BackwardFn = std::function<void(Node<T>&)>;

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, BackwardFn<T> fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = std::any_of(parents.begin(), parents.end(),
                                    [](const Var<T>& p) { return p && p->requires_grad; });
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return node;
}

template <typename T>
bool wants_grad(const Var<T>& v) {
  return v && v->requires_grad;
}

void require(bool condition, const std::string& what) {
  if (!condition) throw invalid_input(what);
}

}  // namespace

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return node;
}

template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss) throw invalid_input("backward: null loss");
  if (loss->value.size() != 1) {
    throw invalid_input("backward: loss must be a scalar, got dims " +
                        dims_to_string(loss->value.dims()));
  }
  if (!loss->requires_grad) return;

  // Iterative post-order DFS; a node met again while still on the stack
  // closes a cycle.
  enum class Mark : std::uint8_t { kActive, kDone };
  std::unordered_map<Node<T>*, Mark> marks;
  std::vector<Node<T>*> order;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  marks[loss.get()] = Mark::kActive;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (!parent || !parent->requires_grad) continue;
      auto it = marks.find(parent);
      if (it == marks.end()) {
        marks[parent] = Mark::kActive;
        stack.emplace_back(parent, 0);
      } else if (it->second == Mark::kActive) {
        throw Error(ErrorKind::kInternal, "backward: computation graph contains a cycle");
      }
    } else {
      marks[node] = Mark::kDone;
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && node->grad.size() == node->value.size()) node->backward_fn(*node);
  }
}

// ---- ParameterStore --------------------------------------------------------

template <typename T>
Var<T> ParameterStore<T>::add(std::string name, Tensor<T> value, bool trainable) {
  if (contains(name)) throw Error(ErrorKind::kInternal, "duplicate parameter name: " + name);
  auto node = leaf(std::move(value), trainable);
  params_.push_back(Parameter<T>{std::move(name), node, trainable});
  return node;
}

template <typename T>
Parameter<T>& ParameterStore<T>::get(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw invalid_input("unknown parameter: " + name);
}

template <typename T>
const Parameter<T>& ParameterStore<T>::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw invalid_input("unknown parameter: " + name);
}

template <typename T>
bool ParameterStore<T>::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Parameter<T>& p) { return p.name == name; });
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p.node->grad = Tensor<T>();
}

template <typename T>
std::size_t ParameterStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value().size();
  return n;
}

// ---- elementwise -----------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a->value.size() == b->value.size(), "add: size mismatch " +
                                                  dims_to_string(a->value.dims()) + " vs " +
                                                  dims_to_string(b->value.dims()));
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!wants_grad(p)) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require(a->value.size() == b->value.size(), "mul: size mismatch");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(pa)) {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (wants_grad(pb)) {
      auto& g = pb->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a->value;
  for (auto& x : out.data()) x *= factor;
  return make_result<T>(std::move(out), {a}, [factor](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T total = 0;
  for (const auto x : a->value.data()) total += x;
  return make_result<T>(Tensor<T>(Dims{1}, std::vector<T>{total}), {a}, [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    const T up = self.grad[0];
    for (auto& x : g.data()) x += up;
  });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  Tensor<T> out = x->value;
  for (auto& v : out.data()) v = std::tanh(v);
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T y = self.value[i];
      g[i] += self.grad[i] * (T(1) - y * y);
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out = x->value;
  for (auto& v : out.data()) v = T(1) / (T(1) + std::exp(-v));
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T y = self.value[i];
      g[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  Tensor<T> out = x->value;
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (auto& v : out.data()) v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  return make_result<T>(std::move(out), {x}, [inv_sqrt2](Node<T>& self) {
    const auto& in = self.parents[0]->value;
    auto& g = self.parents[0]->ensure_grad();
    const T inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = in[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  Tensor<T> out = x->value;
  const std::size_t rows = out.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = out.row(r);
    const T mx = *std::max_element(row.begin(), row.end());
    T denom = 0;
    for (auto& v : row) {
      v = std::exp(v - mx);
      denom += v;
    }
    for (auto& v : row) v /= denom;
  }
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < self.value.rows(); ++r) {
      const auto y = self.value.row(r);
      const auto dy = self.grad.row(r);
      T dot = 0;
      for (std::size_t c = 0; c < y.size(); ++c) dot += y[c] * dy[c];
      auto gr = g.row(r);
      for (std::size_t c = 0; c < y.size(); ++c) gr[c] += y[c] * (dy[c] - dot);
    }
  });
}

// ---- structural ------------------------------------------------------------

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const auto& X = x->value;
  const auto& W = weight->value;
  const std::size_t L = X.rows(), in = X.cols(), out = W.rows();
  require(W.cols() == in, "linear: input width " + std::to_string(in) +
                              " does not match weight " + dims_to_string(W.dims()));
  require(!bias || bias->value.size() == out, "linear: bias size mismatch");
  Tensor<T> Y = Tensor<T>::matrix(L, out);
  for (std::size_t i = 0; i < L; ++i) {
    const T* xr = X.data().data() + i * in;
    T* yr = Y.data().data() + i * out;
    for (std::size_t o = 0; o < out; ++o) {
      const T* wr = W.data().data() + o * in;
      T acc = bias ? bias->value[o] : T(0);
      for (std::size_t k = 0; k < in; ++k) acc += xr[k] * wr[k];
      yr[o] = acc;
    }
  }
  std::vector<Var<T>> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_result<T>(std::move(Y), std::move(parents), [L, in, out](Node<T>& self) {
    const auto& px = self.parents[0];
    const auto& pw = self.parents[1];
    const T* dy = self.grad.data().data();
    if (wants_grad(px)) {
      T* dx = px->ensure_grad().data().data();
      const T* w = pw->value.data().data();
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t o = 0; o < out; ++o) {
          const T d = dy[i * out + o];
          if (d == T(0)) continue;
          const T* wr = w + o * in;
          T* dxr = dx + i * in;
          for (std::size_t k = 0; k < in; ++k) dxr[k] += d * wr[k];
        }
    }
    if (wants_grad(pw)) {
      T* dw = pw->ensure_grad().data().data();
      const T* xv = px->value.data().data();
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t o = 0; o < out; ++o) {
          const T d = dy[i * out + o];
          if (d == T(0)) continue;
          const T* xr = xv + i * in;
          T* dwr = dw + o * in;
          for (std::size_t k = 0; k < in; ++k) dwr[k] += d * xr[k];
        }
    }
    if (self.parents.size() > 2 && wants_grad(self.parents[2])) {
      auto& db = self.parents[2]->ensure_grad();
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t o = 0; o < out; ++o) db[o] += dy[i * out + o];
    }
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = parts[0]->value.rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p->value.rows() == rows, "concat_cols: row count mismatch");
    widths.push_back(p->value.cols());
    total += p->value.cols();
  }
  Tensor<T> out = Tensor<T>::matrix(rows, total);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto src = parts[k]->value.row(r);
      std::copy(src.begin(), src.end(), out.row(r).begin() + offset);
      offset += widths[k];
    }
  }
  return make_result<T>(std::move(out), parts, [widths, rows](Node<T>& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = self.parents[k];
      if (wants_grad(p)) {
        auto& g = p->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const auto up = self.grad.row(r);
          auto gr = g.row(r);
          for (std::size_t c = 0; c < widths[k]; ++c) gr[c] += up[offset + c];
        }
      }
      offset += widths[k];
    }
  });
}

template <typename T>
Var<T> gather_rows(const std::vector<Var<T>>& sources, const std::vector<RowRef>& picks,
                   std::size_t cols) {
  for (const auto& s : sources) {
    require(s->value.cols() == cols, "gather_rows: source width " +
                                         std::to_string(s->value.cols()) + " != " +
                                         std::to_string(cols));
  }
  Tensor<T> out = Tensor<T>::matrix(picks.size(), cols);
  for (std::size_t r = 0; r < picks.size(); ++r) {
    const auto& ref = picks[r];
    if (ref.source < 0) continue;
    require(static_cast<std::size_t>(ref.source) < sources.size() &&
                ref.row < sources[ref.source]->value.rows(),
            "gather_rows: row reference out of range");
    const auto src = sources[ref.source]->value.row(ref.row);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return make_result<T>(std::move(out), sources, [picks](Node<T>& self) {
    for (std::size_t r = 0; r < picks.size(); ++r) {
      const auto& ref = picks[r];
      if (ref.source < 0) continue;
      auto& p = self.parents[ref.source];
      if (!wants_grad(p)) continue;
      auto dst = p->ensure_grad().row(ref.row);
      const auto up = self.grad.row(r);
      for (std::size_t c = 0; c < up.size(); ++c) dst[c] += up[c];
    }
  });
}

template <typename T>
Var<T> segment_mean(const Var<T>& x, const std::vector<std::size_t>& offsets) {
  require(!offsets.empty() && offsets.back() == x->value.rows(),
          "segment_mean: offsets must end at the row count");
  const std::size_t segments = offsets.size() - 1;
  const std::size_t cols = x->value.cols();
  Tensor<T> out = Tensor<T>::matrix(segments, cols);
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t begin = offsets[s], end = offsets[s + 1];
    require(end > begin, "segment_mean: empty segment " + std::to_string(s));
    auto dst = out.row(s);
    for (std::size_t r = begin; r < end; ++r) {
      const auto src = x->value.row(r);
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
    const T inv = T(1) / static_cast<T>(end - begin);
    for (auto& v : dst) v *= inv;
  }
  return make_result<T>(std::move(out), {x}, [offsets](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      const T inv = T(1) / static_cast<T>(offsets[s + 1] - offsets[s]);
      const auto up = self.grad.row(s);
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
        auto gr = g.row(r);
        for (std::size_t c = 0; c < up.size(); ++c) gr[c] += up[c] * inv;
      }
    }
  });
}

template <typename T>
Var<T> weighted_block_sum(const Var<T>& x, const Var<T>& weights) {
  const std::size_t L = x->value.rows();
  const std::size_t K = weights->value.cols();
  require(weights->value.rows() == L, "weighted_block_sum: row mismatch");
  require(K > 0 && x->value.cols() % K == 0, "weighted_block_sum: width not divisible by blocks");
  const std::size_t D = x->value.cols() / K;
  Tensor<T> out = Tensor<T>::matrix(L, D);
  for (std::size_t i = 0; i < L; ++i) {
    const auto xr = x->value.row(i);
    const auto wr = weights->value.row(i);
    auto o = out.row(i);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t d = 0; d < D; ++d) o[d] += wr[k] * xr[k * D + d];
  }
  return make_result<T>(std::move(out), {x, weights}, [L, K, D](Node<T>& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    for (std::size_t i = 0; i < L; ++i) {
      const auto up = self.grad.row(i);
      if (wants_grad(px)) {
        auto gx = px->ensure_grad().row(i);
        const auto wr = pw->value.row(i);
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t d = 0; d < D; ++d) gx[k * D + d] += wr[k] * up[d];
      }
      if (wants_grad(pw)) {
        auto gw = pw->ensure_grad().row(i);
        const auto xr = px->value.row(i);
        for (std::size_t k = 0; k < K; ++k) {
          T acc = 0;
          for (std::size_t d = 0; d < D; ++d) acc += xr[k * D + d] * up[d];
          gw[k] += acc;
        }
      }
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps) {
  const std::size_t L = x->value.rows(), D = x->value.cols();
  require(D >= 2, "layer_norm: width must be >= 2");
  require(gain->value.size() == D && bias->value.size() == D, "layer_norm: affine size mismatch");
  Tensor<T> out = Tensor<T>::matrix(L, D);
  Tensor<T> xhat = Tensor<T>::matrix(L, D);
  std::vector<T> inv_std(L);
  for (std::size_t i = 0; i < L; ++i) {
    const auto xr = x->value.row(i);
    T mean = 0;
    for (const auto v : xr) mean += v;
    mean /= static_cast<T>(D);
    T var = 0;
    for (const auto v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<T>(D);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    auto hr = xhat.row(i);
    auto o = out.row(i);
    for (std::size_t d = 0; d < D; ++d) {
      hr[d] = (xr[d] - mean) * inv_std[i];
      o[d] = hr[d] * gain->value[d] + bias->value[d];
    }
  }
  return make_result<T>(
      std::move(out), {x, gain, bias},
      [L, D, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        for (std::size_t i = 0; i < L; ++i) {
          const auto up = self.grad.row(i);
          const auto hr = xhat.row(i);
          if (wants_grad(pg)) {
            auto& g = pg->ensure_grad();
            for (std::size_t d = 0; d < D; ++d) g[d] += up[d] * hr[d];
          }
          if (wants_grad(pb)) {
            auto& g = pb->ensure_grad();
            for (std::size_t d = 0; d < D; ++d) g[d] += up[d];
          }
          if (wants_grad(px)) {
            T sum_dh = 0, sum_dh_h = 0;
            for (std::size_t d = 0; d < D; ++d) {
              const T dh = up[d] * pg->value[d];
              sum_dh += dh;
              sum_dh_h += dh * hr[d];
            }
            auto gx = px->ensure_grad().row(i);
            const T n = static_cast<T>(D);
            for (std::size_t d = 0; d < D; ++d) {
              const T dh = up[d] * pg->value[d];
              gx[d] += inv_std[i] / n * (n * dh - sum_dh - hr[d] * sum_dh_h);
            }
          }
        }
      });
}

template <typename T>
Var<T> dropout(const Var<T>& x, double rate, bool train, Rng& rng) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw invalid_input("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x->value.size());
  for (auto& m : mask) m = rng.uniform() >= rate ? keep_scale : T(0);
  Tensor<T> out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return make_result<T>(std::move(out), {x}, [mask = std::move(mask)](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

template <typename T>
Var<T> masked_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                        const AttentionMask& mask, std::size_t heads, double attn_dropout,
                        bool train, Rng& rng) {
  const std::size_t L = q->value.rows(), D = q->value.cols();
  require(k->value.rows() == L && v->value.rows() == L && k->value.cols() == D &&
              v->value.cols() == D,
          "masked_attention: q/k/v shape mismatch");
  require(mask.size() == L, "masked_attention: mask size " + std::to_string(mask.size()) +
                                " != sequence length " + std::to_string(L));
  require(heads > 0 && D % heads == 0, "masked_attention: width not divisible by heads");
  if (!(attn_dropout >= 0.0) || attn_dropout >= 1.0) {
    throw invalid_input("masked_attention: dropout rate must lie in [0, 1)");
  }
  const std::size_t dh = D / heads;
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));
  const bool drop = train && attn_dropout > 0.0;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - attn_dropout));

  // probs[h][offset_i + n] for the n-th allowed column of row i.
  std::vector<std::size_t> row_offset(L + 1, 0);
  for (std::size_t i = 0; i < L; ++i) row_offset[i + 1] = row_offset[i] + mask.allowed_columns(i).size();
  const std::size_t per_head = row_offset[L];
  std::vector<T> probs(heads * per_head);
  std::vector<T> drop_mult(drop ? heads * per_head : 0);

  const T* Q = q->value.data().data();
  const T* K = k->value.data().data();
  const T* V = v->value.data().data();
  Tensor<T> out = Tensor<T>::matrix(L, D);
  T* O = out.data().data();
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dh;
    for (std::size_t i = 0; i < L; ++i) {
      const auto& cols = mask.allowed_columns(i);
      T* p = probs.data() + h * per_head + row_offset[i];
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t n = 0; n < cols.size(); ++n) {
        const std::size_t j = cols[n];
        T s = 0;
        for (std::size_t c = 0; c < dh; ++c) s += Q[i * D + c0 + c] * K[j * D + c0 + c];
        p[n] = s * inv_scale;
        mx = std::max(mx, p[n]);
      }
      T denom = 0;
      for (std::size_t n = 0; n < cols.size(); ++n) {
        p[n] = std::exp(p[n] - mx);
        denom += p[n];
      }
      for (std::size_t n = 0; n < cols.size(); ++n) p[n] /= denom;
      T* dm = drop ? drop_mult.data() + h * per_head + row_offset[i] : nullptr;
      for (std::size_t n = 0; n < cols.size(); ++n) {
        T weight = p[n];
        if (dm) {
          dm[n] = rng.uniform() >= attn_dropout ? keep_scale : T(0);
          weight *= dm[n];
        }
        if (weight == T(0)) continue;
        const std::size_t j = cols[n];
        for (std::size_t c = 0; c < dh; ++c) O[i * D + c0 + c] += weight * V[j * D + c0 + c];
      }
    }
  }

  return make_result<T>(
      std::move(out), {q, k, v},
      [mask, heads, dh, D, L, inv_scale, per_head, row_offset = std::move(row_offset),
       probs = std::move(probs), drop_mult = std::move(drop_mult)](Node<T>& self) {
        auto& pq = self.parents[0];
        auto& pk = self.parents[1];
        auto& pv = self.parents[2];
        const T* Qv = pq->value.data().data();
        const T* Kv = pk->value.data().data();
        const T* Vv = pv->value.data().data();
        T* dQ = wants_grad(pq) ? pq->ensure_grad().data().data() : nullptr;
        T* dK = wants_grad(pk) ? pk->ensure_grad().data().data() : nullptr;
        T* dV = wants_grad(pv) ? pv->ensure_grad().data().data() : nullptr;
        const T* dO = self.grad.data().data();
        std::vector<T> dp;
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t c0 = h * dh;
          for (std::size_t i = 0; i < L; ++i) {
            const auto& cols = mask.allowed_columns(i);
            const T* p = probs.data() + h * per_head + row_offset[i];
            const T* dm = drop_mult.empty() ? nullptr : drop_mult.data() + h * per_head + row_offset[i];
            dp.assign(cols.size(), T(0));
            T dot = 0;
            for (std::size_t n = 0; n < cols.size(); ++n) {
              const std::size_t j = cols[n];
              const T m = dm ? dm[n] : T(1);
              T g = 0;
              for (std::size_t c = 0; c < dh; ++c) g += dO[i * D + c0 + c] * Vv[j * D + c0 + c];
              dp[n] = g * m;
              dot += p[n] * dp[n];
              if (dV && m != T(0)) {
                const T w = p[n] * m;
                for (std::size_t c = 0; c < dh; ++c) dV[j * D + c0 + c] += w * dO[i * D + c0 + c];
              }
            }
            for (std::size_t n = 0; n < cols.size(); ++n) {
              const T ds = p[n] * (dp[n] - dot) * inv_scale;
              if (ds == T(0)) continue;
              const std::size_t j = cols[n];
              if (dQ)
                for (std::size_t c = 0; c < dh; ++c) dQ[i * D + c0 + c] += ds * Kv[j * D + c0 + c];
              if (dK)
                for (std::size_t c = 0; c < dh; ++c) dK[j * D + c0 + c] += ds * Qv[i * D + c0 + c];
            }
          }
        }
      });
}

template <typename T>
Var<T> weighted_bce(const Var<T>& probs, const Tensor<T>& targets, T pos_weight) {
  const std::size_t n = probs->value.size();
  require(targets.size() == n, "weighted_bce: target length " + std::to_string(targets.size()) +
                                   " != prediction length " + std::to_string(n));
  const T lo = T(1e-7), hi = T(1) - T(1e-7);
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T p = probs->value[i];
    if (!(p >= T(0) && p <= T(1))) {
      throw numerical_error("weighted_bce: prediction " + std::to_string(p) + " at index " +
                            std::to_string(i) + " outside [0, 1]");
    }
    const T pc = std::clamp(p, lo, hi);
    const T y = targets[i];
    total -= pos_weight * y * std::log(pc) + (T(1) - y) * std::log(T(1) - pc);
  }
  const T value = n ? total / static_cast<T>(n) : T(0);
  return make_result<T>(Tensor<T>(Dims{1}, std::vector<T>{value}), {probs},
                        [targets, pos_weight, lo, hi, n](Node<T>& self) {
                          auto& g = self.parents[0]->ensure_grad();
                          const T up = self.grad[0] / static_cast<T>(n);
                          for (std::size_t i = 0; i < n; ++i) {
                            const T p = self.parents[0]->value[i];
                            if (p < lo || p > hi) continue;
                            const T y = targets[i];
                            g[i] += up * (-pos_weight * y / p + (T(1) - y) / (T(1) - p));
                          }
                        });
}

#define TALESUMM_INSTANTIATE_AG(T)                                                            \
  template Var<T> constant<T>(Tensor<T>);                                                      \
  template Var<T> leaf<T>(Tensor<T>, bool);                                                    \
  template void backward<T>(const Var<T>&);                                                    \
  template class ParameterStore<T>;                                                            \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> scale<T>(const Var<T>&, T);                                                  \
  template Var<T> sum<T>(const Var<T>&);                                                       \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                      \
  template Var<T> tanh<T>(const Var<T>&);                                                      \
  template Var<T> sigmoid<T>(const Var<T>&);                                                   \
  template Var<T> gelu<T>(const Var<T>&);                                                      \
  template Var<T> softmax_rows<T>(const Var<T>&);                                              \
  template Var<T> concat_cols<T>(const std::vector<Var<T>>&);                                  \
  template Var<T> gather_rows<T>(const std::vector<Var<T>>&, const std::vector<RowRef>&,       \
                                 std::size_t);                                                 \
  template Var<T> segment_mean<T>(const Var<T>&, const std::vector<std::size_t>&);             \
  template Var<T> weighted_block_sum<T>(const Var<T>&, const Var<T>&);                         \
  template Var<T> layer_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);               \
  template Var<T> dropout<T>(const Var<T>&, double, bool, Rng&);                               \
  template Var<T> masked_attention<T>(const Var<T>&, const Var<T>&, const Var<T>&,             \
                                      const AttentionMask&, std::size_t, double, bool, Rng&);  \
  template Var<T> weighted_bce<T>(const Var<T>&, const Tensor<T>&, T);

TALESUMM_INSTANTIATE_AG(float)
TALESUMM_INSTANTIATE_AG(double)

}  // namespace talesumm::ag
