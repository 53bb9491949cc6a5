#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace arcvq {

// One vertex of a dynamically built computation graph. Values are computed
// eagerly; each op records a closure that routes the upstream gradient to its
// parents. Graphs are acyclic by construction (children hold owning pointers
// to parents, never the reverse).
struct Node {
    Tensor value;
    Tensor grad;  // allocated during backward; same dims as value
    bool has_grad = false;
    bool requires_grad = false;
    std::string op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
};

// Cheap copyable handle to a graph node.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    const Tensor& value() const { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool has_grad() const { return node_->has_grad; }
    bool requires_grad() const { return node_->requires_grad; }
    const std::shared_ptr<Node>& node() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<Node> node_;
};

// Leaves.
Var constant(Tensor value);              // requires_grad = false
Var parameter(Tensor value);             // requires_grad = true

// Elementwise; dims must match exactly.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);

Var matmul(const Var& a, const Var& b);            // 2-D only
Var bias_add(const Var& m, const Var& bias);       // [RxC] + [C], broadcast over rows

Var relu(const Var& a);    // subgradient at 0 is 0
Var tanh_op(const Var& a);
Var square(const Var& a);
Var sqrt_op(const Var& a);
Var clamp(const Var& a, double lo, double hi);     // zero gradient outside [lo, hi]

Var reshape(const Var& a, std::vector<std::size_t> dims);
Var transpose(const Var& a);                       // 2-D only

Var reduce_sum(const Var& a);    // full reduction to [1]
Var reduce_mean(const Var& a);   // full reduction to [1]

// Log-sum-exp over the last axis. [RxC] -> [R]; 1-D [n] -> [1].
Var logsumexp(const Var& a);

// Value passes through unchanged; gradient never reaches the parents.
Var detach(const Var& a);

// Rows of a [Kxd] matrix gathered by index; backward scatter-adds.
Var gather_rows(const Var& m, const std::vector<int>& indices);

// output[i] = input[src_index[i]]; src_index must be a bijection on the
// flat element range. Used to reorder patch matrices into images.
Var permute(const Var& a, std::vector<std::size_t> dims, std::vector<std::size_t> src_index);

// Straight-through estimator: forward value is q_values, backward passes the
// upstream gradient to z unchanged. q_values enters as a constant.
Var quantize_ste(const Var& z, const Tensor& q_values);

// Reverse-mode sweep from a scalar root. Accumulates grad on every reachable
// node that requires it; additive across fan-out; detach cuts propagation.
void backward(const Var& root);

}  // namespace arcvq
