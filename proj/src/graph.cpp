#include "graph.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "parallel.hpp"

namespace arcvq {

namespace {

std::shared_ptr<Node> make_node(Tensor value, std::string op, std::vector<std::shared_ptr<Node>> parents) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = std::move(op);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

void ensure_grad(Node& n) {
    if (!n.has_grad) {
        n.grad = Tensor(n.value.dims());
        n.has_grad = true;
    }
}

// Accumulates g into parent's grad if the parent participates in the sweep.
void accumulate(Node& parent, const Tensor& g) {
    if (!parent.requires_grad) return;
    ensure_grad(parent);
    double* dst = parent.grad.data();
    const double* src = g.data();
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

void check_same_dims(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_dims(b.value()))
        throw ShapeError(std::string(op) + ": dims mismatch (" + a.value().dims_string() +
                         ") vs (" + b.value().dims_string() + ")");
}

// Elementwise op with value map f and local derivative df (as a function of
// the input element).
template <typename F, typename DF>
Var unary_elementwise(const Var& a, const char* op, F f, DF df) {
    Tensor out(a.value().dims());
    const double* x = a.value().data();
    double* y = out.data();
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) y[i] = f(x[i]);
    auto node = make_node(std::move(out), op, {a.node()});
    if (node->requires_grad) {
        auto pa = a.node();
        node->backward_fn = [pa, df](Node& self) {
            if (!pa->requires_grad) return;
            ensure_grad(*pa);
            const double* x = pa->value.data();
            const double* g = self.grad.data();
            double* dst = pa->grad.data();
            const std::size_t n = self.grad.size();
            for (std::size_t i = 0; i < n; ++i) dst[i] += g[i] * df(x[i]);
        };
    }
    return Var(node);
}

}  // namespace

Var constant(Tensor value) {
    auto n = make_node(std::move(value), "const", {});
    return Var(n);
}

Var parameter(Tensor value) {
    auto n = make_node(std::move(value), "param", {});
    n->requires_grad = true;
    return Var(n);
}

Var add(const Var& a, const Var& b) {
    check_same_dims(a, b, "add");
    Tensor out(a.value().dims());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] + b.value()[i];
    auto node = make_node(std::move(out), "add", {a.node(), b.node()});
    if (node->requires_grad) {
        auto pa = a.node(), pb = b.node();
        node->backward_fn = [pa, pb](Node& self) {
            accumulate(*pa, self.grad);
            accumulate(*pb, self.grad);
        };
    }
    return Var(node);
}

Var sub(const Var& a, const Var& b) {
    check_same_dims(a, b, "sub");
    Tensor out(a.value().dims());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] - b.value()[i];
    auto node = make_node(std::move(out), "sub", {a.node(), b.node()});
    if (node->requires_grad) {
        auto pa = a.node(), pb = b.node();
        node->backward_fn = [pa, pb](Node& self) {
            accumulate(*pa, self.grad);
            if (pb->requires_grad) {
                ensure_grad(*pb);
                const double* g = self.grad.data();
                double* dst = pb->grad.data();
                for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] -= g[i];
            }
        };
    }
    return Var(node);
}

Var mul(const Var& a, const Var& b) {
    check_same_dims(a, b, "mul");
    Tensor out(a.value().dims());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] * b.value()[i];
    auto node = make_node(std::move(out), "mul", {a.node(), b.node()});
    if (node->requires_grad) {
        auto pa = a.node(), pb = b.node();
        node->backward_fn = [pa, pb](Node& self) {
            const double* g = self.grad.data();
            const std::size_t n = self.grad.size();
            if (pa->requires_grad) {
                ensure_grad(*pa);
                double* dst = pa->grad.data();
                const double* bv = pb->value.data();
                for (std::size_t i = 0; i < n; ++i) dst[i] += g[i] * bv[i];
            }
            if (pb->requires_grad) {
                ensure_grad(*pb);
                double* dst = pb->grad.data();
                const double* av = pa->value.data();
                for (std::size_t i = 0; i < n; ++i) dst[i] += g[i] * av[i];
            }
        };
    }
    return Var(node);
}

Var scale(const Var& a, double c) {
    return unary_elementwise(
        a, "scale", [c](double x) { return c * x; }, [c](double) { return c; });
}

Var matmul(const Var& a, const Var& b) {
    Tensor out = arcvq::matmul(a.value(), b.value());
    auto node = make_node(std::move(out), "matmul", {a.node(), b.node()});
    if (node->requires_grad) {
        auto pa = a.node(), pb = b.node();
        node->backward_fn = [pa, pb](Node& self) {
            if (pa->requires_grad) accumulate(*pa, matmul_nt(self.grad, pb->value));
            if (pb->requires_grad) accumulate(*pb, matmul_tn(pa->value, self.grad));
        };
    }
    return Var(node);
}

Var bias_add(const Var& m, const Var& bias) {
    if (m.value().rank() != 2 || bias.value().rank() != 1 || bias.value().size() != m.value().cols())
        throw ShapeError("bias_add: dims mismatch (" + m.value().dims_string() + ") + (" +
                         bias.value().dims_string() + ")");
    const std::size_t rows = m.value().rows(), cols = m.value().cols();
    Tensor out({rows, cols});
    const double* mv = m.value().data();
    const double* bv = bias.value().data();
    double* y = out.data();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) y[i * cols + j] = mv[i * cols + j] + bv[j];
    auto node = make_node(std::move(out), "bias_add", {m.node(), bias.node()});
    if (node->requires_grad) {
        auto pm = m.node(), pb = bias.node();
        node->backward_fn = [pm, pb, rows, cols](Node& self) {
            accumulate(*pm, self.grad);
            if (pb->requires_grad) {
                ensure_grad(*pb);
                const double* g = self.grad.data();
                double* dst = pb->grad.data();
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) dst[j] += g[i * cols + j];
            }
        };
    }
    return Var(node);
}

Var relu(const Var& a) {
    return unary_elementwise(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh_op(const Var& a) {
    Tensor out(a.value().dims());
    const double* x = a.value().data();
    double* y = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) y[i] = std::tanh(x[i]);
    auto node = make_node(std::move(out), "tanh", {a.node()});
    if (node->requires_grad) {
        auto pa = a.node();
        node->backward_fn = [pa](Node& self) {
            if (!pa->requires_grad) return;
            ensure_grad(*pa);
            const double* y = self.value.data();
            const double* g = self.grad.data();
            double* dst = pa->grad.data();
            for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += g[i] * (1.0 - y[i] * y[i]);
        };
    }
    return Var(node);
}

Var square(const Var& a) {
    return unary_elementwise(
        a, "square", [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var sqrt_op(const Var& a) {
    return unary_elementwise(
        a, "sqrt", [](double x) { return std::sqrt(x); },
        [](double x) { return 0.5 / std::sqrt(x); });
}

Var clamp(const Var& a, double lo, double hi) {
    if (lo > hi) throw ContractError("clamp: lo > hi");
    return unary_elementwise(
        a, "clamp", [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
        [lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var reshape(const Var& a, std::vector<std::size_t> dims) {
    Tensor out(std::move(dims), std::vector<double>(a.value().values().begin(), a.value().values().end()));
    if (out.size() != a.value().size())
        throw ShapeError("reshape: element count mismatch (" + a.value().dims_string() + ") -> (" +
                         out.dims_string() + ")");
    auto node = make_node(std::move(out), "reshape", {a.node()});
    if (node->requires_grad) {
        auto pa = a.node();
        node->backward_fn = [pa](Node& self) {
            if (!pa->requires_grad) return;
            ensure_grad(*pa);
            double* dst = pa->grad.data();
            const double* g = self.grad.data();
            for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += g[i];
        };
    }
    return Var(node);
}

Var transpose(const Var& a) {
    Tensor out = transpose2d(a.value());
    auto node = make_node(std::move(out), "transpose", {a.node()});
    if (node->requires_grad) {
        auto pa = a.node();
        node->backward_fn = [pa](Node& self) {
            if (!pa->requires_grad) return;
            accumulate(*pa, transpose2d(self.grad));
        };
    }
    return Var(node);
}

Var reduce_sum(const Var& a) {
    double acc = 0.0;
    for (double v : a.value().values()) acc += v;
    auto node = make_node(Tensor::scalar(acc), "reduce_sum", {a.node()});
    if (node->requires_grad) {
        auto pa = a.node();
        node->backward_fn = [pa](Node& self) {
            if (!pa->requires_grad) return;
            ensure_grad(*pa);
            const double g = self.grad[0];
            double* dst = pa->grad.data();
            for (std::size_t i = 0; i < pa->grad.size(); ++i) dst[i] += g;
        };
    }
    return Var(node);
}

Var reduce_mean(const Var& a) {
    double acc = 0.0;
    for (double v : a.value().values()) acc += v;
    const double inv = 1.0 / static_cast<double>(a.value().size());
    auto node = make_node(Tensor::scalar(acc * inv), "reduce_mean", {a.node()});
    if (node->requires_grad) {
        auto pa = a.node();
        node->backward_fn = [pa, inv](Node& self) {
            if (!pa->requires_grad) return;
            ensure_grad(*pa);
            const double g = self.grad[0] * inv;
            double* dst = pa->grad.data();
            for (std::size_t i = 0; i < pa->grad.size(); ++i) dst[i] += g;
        };
    }
    return Var(node);
}

Var logsumexp(const Var& a) {
    const Tensor& x = a.value();
    if (x.rank() > 2) throw ShapeError("logsumexp: expected 1-D or 2-D input, got (" + x.dims_string() + ")");
    const std::size_t rows = x.rank() == 2 ? x.rows() : 1;
    const std::size_t cols = x.rank() == 2 ? x.cols() : x.size();
    Tensor out({rows});
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = x.data() + i * cols;
        double mx = row[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j) acc += std::exp(row[j] - mx);
        out[i] = mx + std::log(acc);
    }
    auto node = make_node(std::move(out), "logsumexp", {a.node()});
    if (node->requires_grad) {
        auto pa = a.node();
        node->backward_fn = [pa, rows, cols](Node& self) {
            if (!pa->requires_grad) return;
            ensure_grad(*pa);
            const double* x = pa->value.data();
            const double* lse = self.value.data();
            const double* g = self.grad.data();
            double* dst = pa->grad.data();
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j)
                    dst[i * cols + j] += g[i] * std::exp(x[i * cols + j] - lse[i]);
        };
    }
    return Var(node);
}

Var detach(const Var& a) {
    auto node = make_node(a.value(), "detach", {a.node()});
    node->requires_grad = false;  // never propagates to parents
    return Var(node);
}

Var gather_rows(const Var& m, const std::vector<int>& indices) {
    const Tensor& src = m.value();
    if (src.rank() != 2) throw ShapeError("gather_rows: expected 2-D input, got (" + src.dims_string() + ")");
    const std::size_t k = src.rows(), d = src.cols(), n = indices.size();
    if (n == 0) throw ContractError("gather_rows: empty index list");
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const int idx = indices[i];
        if (idx < 0 || static_cast<std::size_t>(idx) >= k)
            throw ContractError("gather_rows: index " + std::to_string(idx) + " out of range [0," +
                                std::to_string(k) + ")");
        const double* row = src.data() + static_cast<std::size_t>(idx) * d;
        std::copy(row, row + d, out.data() + i * d);
    }
    auto node = make_node(std::move(out), "gather_rows", {m.node()});
    if (node->requires_grad) {
        auto pm = m.node();
        auto idx = indices;
        node->backward_fn = [pm, idx, d](Node& self) {
            if (!pm->requires_grad) return;
            ensure_grad(*pm);
            const double* g = self.grad.data();
            double* dst = pm->grad.data();
            for (std::size_t i = 0; i < idx.size(); ++i) {
                double* drow = dst + static_cast<std::size_t>(idx[i]) * d;
                const double* grow = g + i * d;
                for (std::size_t j = 0; j < d; ++j) drow[j] += grow[j];
            }
        };
    }
    return Var(node);
}

Var permute(const Var& a, std::vector<std::size_t> dims, std::vector<std::size_t> src_index) {
    const Tensor& src = a.value();
    if (src_index.size() != src.size())
        throw ShapeError("permute: index map size " + std::to_string(src_index.size()) +
                         " does not match input size " + std::to_string(src.size()));
    Tensor out(std::move(dims));
    if (out.size() != src.size())
        throw ShapeError("permute: output dims (" + out.dims_string() + ") do not match input size");
    for (std::size_t i = 0; i < src_index.size(); ++i) out[i] = src[src_index[i]];
    auto node = make_node(std::move(out), "permute", {a.node()});
    if (node->requires_grad) {
        auto pa = a.node();
        auto map = std::move(src_index);
        node->backward_fn = [pa, map](Node& self) {
            if (!pa->requires_grad) return;
            ensure_grad(*pa);
            const double* g = self.grad.data();
            double* dst = pa->grad.data();
            for (std::size_t i = 0; i < map.size(); ++i) dst[map[i]] += g[i];
        };
    }
    return Var(node);
}

Var quantize_ste(const Var& z, const Tensor& q_values) {
    if (!z.value().same_dims(q_values))
        throw ShapeError("quantize_ste: dims mismatch (" + z.value().dims_string() + ") vs (" +
                         q_values.dims_string() + ")");
    auto node = make_node(q_values, "quantize_ste", {z.node()});
    if (node->requires_grad) {
        auto pz = z.node();
        node->backward_fn = [pz](Node& self) { accumulate(*pz, self.grad); };
    }
    return Var(node);
}

void backward(const Var& root) {
    if (!root) throw ContractError("backward: empty root");
    if (root.value().size() != 1 || root.value().rank() != 1)
        throw ContractError("backward: root must be scalar, got (" + root.value().dims_string() + ")");

    // Iterative post-order DFS; children are visited before parents in the
    // reversed order list.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (!visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (Node* n : order) {
        if (n->requires_grad && !n->has_grad) {
            n->grad = Tensor(n->value.dims());
            n->has_grad = true;
        }
    }
    Node* r = root.node().get();
    ensure_grad(*r);
    r->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->requires_grad && n->backward_fn) n->backward_fn(*n);
    }
}

}  // namespace arcvq
