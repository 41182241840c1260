#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "evocollapse/error.hpp"

namespace evocollapse {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<Index>;

inline std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

inline Index shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

/// Dense row-major tensor of rank 1 or 2. Rank-1 tensors are stored as a
/// single row so they broadcast naturally against [rows x n] activations.
template <typename Scalar>
class Tensor {
public:
    using Matrix = RowMatrix<Scalar>;

    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        if (shape_.empty() || shape_.size() > 2)
            fail(ErrorClass::ShapeMismatch, "tensor rank must be 1 or 2, got " + shape_string(shape_));
        for (Index d : shape_)
            if (d <= 0) fail(ErrorClass::ShapeMismatch, "non-positive dimension in " + shape_string(shape_));
        values_ = Matrix::Zero(rows_for(shape_), cols_for(shape_));
    }

    Tensor(Shape shape, Matrix values) : Tensor(std::move(shape)) {
        if (values.rows() != values_.rows() || values.cols() != values_.cols())
            fail(ErrorClass::ShapeMismatch, "values do not match shape " + shape_string(shape_));
        values_ = std::move(values);
    }

    static Tensor matrix(Index rows, Index cols) { return Tensor(Shape{rows, cols}); }
    static Tensor vector(Index n) { return Tensor(Shape{n}); }

    const Shape& shape() const noexcept { return shape_; }
    Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
    Index size() const noexcept { return values_.size(); }

    Matrix& values() noexcept { return values_; }
    const Matrix& values() const noexcept { return values_; }

    std::span<Scalar> data() noexcept { return {values_.data(), static_cast<std::size_t>(values_.size())}; }
    std::span<const Scalar> data() const noexcept {
        return {values_.data(), static_cast<std::size_t>(values_.size())};
    }

    bool all_finite() const { return values_.allFinite(); }

    template <typename Other>
    Tensor<Other> cast() const {
        return Tensor<Other>(shape_, values_.template cast<Other>());
    }

private:
    static Index rows_for(const Shape& s) { return s.size() == 1 ? 1 : s[0]; }
    static Index cols_for(const Shape& s) { return s.size() == 1 ? s[0] : s[1]; }

    Shape shape_;
    Matrix values_;
};

/// Bitwise equality: same shape and identical bytes (distinguishes -0.0 and NaN payloads).
template <typename Scalar>
bool bit_equal(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.data().data(), b.data().data(), a.data().size_bytes()) == 0;
}

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const std::string& what) {
    if (a.shape() != b.shape())
        fail(ErrorClass::ShapeMismatch,
             what + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace evocollapse
