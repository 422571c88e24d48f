#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "talesumm/attention_mask.hpp"
#include "talesumm/rng.hpp"
#include "talesumm/tensor.hpp"

namespace talesumm::ag {

/// One vertex of the computation graph. `value` is fixed once the node is
/// built; `grad` is allocated on first accumulation.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  /// Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.dims());
    return grad;
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> constant(Tensor<T> value);

/// Leaf that accumulates gradients.
template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad = true);

/// Reverse-mode sweep from a scalar node. Gradients accumulate into every
/// reachable node that requires them; call zero_grad between passes.
/// Throws on a non-scalar loss or a cyclic graph.
template <typename T>
void backward(const Var<T>& loss);

/// Named learnable (or frozen) tensor. The node persists across forward
/// passes so gradients land in one place.
template <typename T>
struct Parameter {
  std::string name;
  Var<T> node;
  bool trainable = true;

  Tensor<T>& value() { return node->value; }
  const Tensor<T>& value() const { return node->value; }
  Tensor<T>& grad() { return node->ensure_grad(); }
};

/// Ordered collection of parameters with unique names.
template <typename T>
class ParameterStore {
 public:
  Var<T> add(std::string name, Tensor<T> value, bool trainable = true);

  std::vector<Parameter<T>>& all() { return params_; }
  const std::vector<Parameter<T>>& all() const { return params_; }

  Parameter<T>& get(const std::string& name);
  const Parameter<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<Parameter<T>> params_;
};

// ---- differentiable operations ---------------------------------------------
// Shapes use the matrix view of Tensor (rows x cols).

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& a, T factor);

template <typename T>
Var<T> sum(const Var<T>& a);

/// y = x W^T + b, with x: L x in, W: out x in, b: out (may be null).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <typename T>
Var<T> tanh(const Var<T>& x);

template <typename T>
Var<T> sigmoid(const Var<T>& x);

/// Exact (erf-based) GELU.
template <typename T>
Var<T> gelu(const Var<T>& x);

/// Row-wise softmax over the last dimension.
template <typename T>
Var<T> softmax_rows(const Var<T>& x);

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts);

/// Reference to a row of one of the gather sources; source < 0 yields a
/// zero row.
struct RowRef {
  int source = 0;
  std::size_t row = 0;
};

/// Output row r copies row picks[r] of the selected source. All sources must
/// share the column count.
template <typename T>
Var<T> gather_rows(const std::vector<Var<T>>& sources, const std::vector<RowRef>& picks,
                   std::size_t cols);

/// Mean over consecutive row segments; offsets has one entry per segment
/// plus a trailing end offset.
template <typename T>
Var<T> segment_mean(const Var<T>& x, const std::vector<std::size_t>& offsets);

/// x: L x (K*D) holding K blocks of width D; weights: L x K.
/// Output row i = sum_k weights[i][k] * block_k(x)[i].
template <typename T>
Var<T> weighted_block_sum(const Var<T>& x, const Var<T>& weights);

/// Per-row layer normalization with population variance.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5));

/// Inverted dropout. Identity when !train or rate == 0.
template <typename T>
Var<T> dropout(const Var<T>& x, double rate, bool train, Rng& rng);

/// Scaled dot-product attention over already-projected q, k, v (each L x D),
/// split into `heads` column blocks. Position i attends only to positions j
/// with mask.allowed(i, j). Attention-probability dropout is applied when
/// train is set.
template <typename T>
Var<T> masked_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                        const AttentionMask& mask, std::size_t heads, double attn_dropout,
                        bool train, Rng& rng);

/// Mean over elements of -[w*y*log(p) + (1-y)*log(1-p)] with p clamped to
/// [1e-7, 1-1e-7]. Returns a scalar; an empty input yields 0.
template <typename T>
Var<T> weighted_bce(const Var<T>& probs, const Tensor<T>& targets, T pos_weight);

}  // namespace talesumm::ag
