#include "tensor.hpp"

#include <cmath>

#include "parallel.hpp"

namespace arcvq {

std::size_t Tensor::checked_size(const std::vector<std::size_t>& dims) {
    if (dims.empty()) throw ContractError("tensor: dims must be non-empty");
    std::size_t n = 1;
    for (std::size_t d : dims) {
        if (d == 0) throw ContractError("tensor: every dim must be >= 1");
        n *= d;
    }
    return n;
}

std::string Tensor::dims_string() const {
    std::string s;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(dims_[i]);
    }
    return s;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

static void check2d(const Tensor& t, const char* op) {
    if (t.rank() != 2)
        throw ShapeError(std::string(op) + ": expected 2-D tensor, got (" + t.dims_string() + ")");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check2d(a, "matmul");
    check2d(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw ShapeError("matmul: inner dims mismatch (" + a.dims_string() + ") * (" +
                         b.dims_string() + ")");
    Tensor c({m, n});
    const double* ap = a.data();
    const double* bp = b.data();
    double* cp = c.data();
    parallel_for(m, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            double* crow = cp + i * n;
            const double* arow = ap + i * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double av = arow[kk];
                const double* brow = bp + kk * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check2d(a, "matmul_nt");
    check2d(b, "matmul_nt");
    if (b.cols() != a.cols())
        throw ShapeError("matmul_nt: inner dims mismatch (" + a.dims_string() + ") * (" +
                         b.dims_string() + ")^T");
    // The axpy-style kernel in matmul vectorizes far better than per-element
    // dot products; the transpose is cheap next to the product itself, and
    // the k-ascending accumulation order per output element is unchanged.
    return matmul(a, transpose2d(b));
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    check2d(a, "matmul_tn");
    check2d(b, "matmul_tn");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != m)
        throw ShapeError("matmul_tn: inner dims mismatch (" + a.dims_string() + ")^T * (" +
                         b.dims_string() + ")");
    Tensor c({k, n});
    const double* ap = a.data();
    const double* bp = b.data();
    double* cp = c.data();
    // Row i of A contributes the rank-1 update a_i^T b_i; keep the i-loop
    // outermost and serial so each C element accumulates in a fixed order.
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = ap + i * k;
        const double* brow = bp + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            double* crow = cp + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Tensor transpose2d(const Tensor& a) {
    check2d(a, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    Tensor t({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) t(j, i) = a(i, j);
    return t;
}

double l2_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

}  // namespace arcvq
