#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace arcvq {

// Dense row-major array of doubles. The universal value type: images, latent
// token matrices, codebooks, parameters and gradients all live here.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
        data_.assign(checked_size(dims_), 0.0);
    }

    Tensor(std::vector<std::size_t> dims, std::vector<double> data)
        : dims_(std::move(dims)), data_(std::move(data)) {
        if (data_.size() != checked_size(dims_))
            throw ContractError("tensor: data length " + std::to_string(data_.size()) +
                                " does not match dims (" + dims_string() + ")");
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor full(std::vector<std::size_t> dims, double v) {
        Tensor t(std::move(dims));
        for (auto& x : t.data_) x = v;
        return t;
    }

    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t rank() const { return dims_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return dims_.at(i); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-D accessors (row-major).
    double& operator()(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }
    std::size_t rows() const { return dims_[0]; }
    std::size_t cols() const { return dims_.size() > 1 ? dims_[1] : 1; }

    bool same_dims(const Tensor& o) const { return dims_ == o.dims_; }
    std::string dims_string() const;

    bool all_finite() const;

private:
    static std::size_t checked_size(const std::vector<std::size_t>& dims);

    std::vector<std::size_t> dims_;
    std::vector<double> data_;
};

// C[MxN] = A[MxK] * B[KxN]. Accumulation order over K is fixed per output
// element, so results are identical at any thread count.
Tensor matmul(const Tensor& a, const Tensor& b);
// C[MxN] = A[MxK] * B[NxK]^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// C[KxN] = A[MxK]^T * B[MxN].
Tensor matmul_tn(const Tensor& a, const Tensor& b);

Tensor transpose2d(const Tensor& a);

double l2_norm(std::span<const double> v);

}  // namespace arcvq
