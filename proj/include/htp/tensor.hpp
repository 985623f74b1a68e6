#pragma once

#include <Eigen/Dense>

#include <concepts>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace htp {

using Index = Eigen::Index;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using MatMap = Eigen::Map<Mat<Scalar>>;

template <typename Scalar>
using ConstMatMap = Eigen::Map<const Mat<Scalar>>;

using Matd = Mat<double>;
using RowVecd = RowVec<double>;

/// Shape disagreement between operands. The message names both shapes.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Domain error raised by numeric operations (empty softmax support, guard failures).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string shape_str(Index rows, Index cols) {
    std::ostringstream os;
    os << "(" << rows << "x" << cols << ")";
    return os.str();
}

template <typename Derived>
std::string shape_str(const Eigen::EigenBase<Derived>& m) {
    return shape_str(m.rows(), m.cols());
}

template <typename A, typename B>
void require_same_shape(const Eigen::EigenBase<A>& a, const Eigen::EigenBase<B>& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
}

/// Rank-3 dense array, row-major. Slices along the leading axis are contiguous
/// d1 x d2 matrices and are exposed as Eigen maps.
template <typename Scalar>
class Ten3 {
public:
    Ten3() = default;

    Ten3(Index d0, Index d1, Index d2, Scalar fill = Scalar(0))
        : d0_(d0), d1_(d1), d2_(d2) {
        if (d0 < 0 || d1 < 0 || d2 < 0) {
            throw DimensionError("Ten3: negative extent");
        }
        data_.assign(static_cast<std::size_t>(d0 * d1 * d2), fill);
    }

    Ten3(Index d0, Index d1, Index d2, std::vector<Scalar> values)
        : d0_(d0), d1_(d1), d2_(d2), data_(std::move(values)) {
        if (static_cast<Index>(data_.size()) != d0 * d1 * d2) {
            throw DimensionError("Ten3: data length " + std::to_string(data_.size()) + " does not match " +
                                 std::to_string(d0) + "x" + std::to_string(d1) + "x" + std::to_string(d2));
        }
    }

    Index d0() const { return d0_; }
    Index d1() const { return d1_; }
    Index d2() const { return d2_; }
    Index size() const { return static_cast<Index>(data_.size()); }
    bool empty() const { return data_.empty(); }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }
    const std::vector<Scalar>& values() const { return data_; }

    Scalar& operator()(Index i, Index j, Index k) { return data_[offset(i, j, k)]; }
    Scalar operator()(Index i, Index j, Index k) const { return data_[offset(i, j, k)]; }

    MatMap<Scalar> slice(Index i) { return MatMap<Scalar>(data_.data() + i * d1_ * d2_, d1_, d2_); }
    ConstMatMap<Scalar> slice(Index i) const {
        return ConstMatMap<Scalar>(data_.data() + i * d1_ * d2_, d1_, d2_);
    }

    /// Whole tensor viewed as (d0*d1) x d2; every token is one row.
    MatMap<Scalar> rows_view() { return MatMap<Scalar>(data_.data(), d0_ * d1_, d2_); }
    ConstMatMap<Scalar> rows_view() const { return ConstMatMap<Scalar>(data_.data(), d0_ * d1_, d2_); }

    bool same_shape(const Ten3& o) const { return d0_ == o.d0_ && d1_ == o.d1_ && d2_ == o.d2_; }

    std::string shape() const {
        return "(" + std::to_string(d0_) + "x" + std::to_string(d1_) + "x" + std::to_string(d2_) + ")";
    }

    friend bool operator==(const Ten3& a, const Ten3& b) { return a.same_shape(b) && a.data_ == b.data_; }

private:
    std::size_t offset(Index i, Index j, Index k) const {
        return static_cast<std::size_t>((i * d1_ + j) * d2_ + k);
    }

    Index d0_ = 0;
    Index d1_ = 0;
    Index d2_ = 0;
    std::vector<Scalar> data_;
};

using Ten3d = Ten3<double>;

template <typename Scalar>
void require_same_shape(const Ten3<Scalar>& a, const Ten3<Scalar>& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": shape mismatch " + a.shape() + " vs " + b.shape());
    }
}

/// Swaps the two leading axes: (d0 x d1 x d2) -> (d1 x d0 x d2).
template <typename Scalar>
Ten3<Scalar> swap_leading(const Ten3<Scalar>& x) {
    Ten3<Scalar> out(x.d1(), x.d0(), x.d2());
    for (Index i = 0; i < x.d0(); ++i) {
        for (Index j = 0; j < x.d1(); ++j) {
            out.slice(j).row(i) = x.slice(i).row(j);
        }
    }
    return out;
}

/// Gathers frames `index` along axis 1 for every leading slice.
template <typename Scalar>
Ten3<Scalar> gather_axis1(const Ten3<Scalar>& x, const std::vector<Index>& index) {
    Ten3<Scalar> out(x.d0(), static_cast<Index>(index.size()), x.d2());
    for (Index i = 0; i < x.d0(); ++i) {
        for (std::size_t r = 0; r < index.size(); ++r) {
            out.slice(i).row(static_cast<Index>(r)) = x.slice(i).row(index[r]);
        }
    }
    return out;
}

/// Concatenates along the last axis.
template <typename Scalar>
Ten3<Scalar> concat_features(const Ten3<Scalar>& a, const Ten3<Scalar>& b) {
    if (a.d0() != b.d0() || a.d1() != b.d1()) {
        throw DimensionError("concat_features: leading dims differ " + a.shape() + " vs " + b.shape());
    }
    Ten3<Scalar> out(a.d0(), a.d1(), a.d2() + b.d2());
    auto o = out.rows_view();
    o.leftCols(a.d2()) = a.rows_view();
    o.rightCols(b.d2()) = b.rows_view();
    return out;
}

template <typename Scalar>
Scalar max_abs_diff(const Ten3<Scalar>& a, const Ten3<Scalar>& b) {
    require_same_shape(a, b, "max_abs_diff");
    Scalar m = 0;
    for (Index i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    }
    return m;
}

template <typename Scalar>
bool all_finite(const Ten3<Scalar>& x) {
    for (Index i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x.data()[i])) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Elementwise and row-wise primitives
// ---------------------------------------------------------------------------

template <typename Scalar>
constexpr Scalar neg_inf() {
    return -std::numeric_limits<Scalar>::infinity();
}

/// Softmax over one row. Entries equal to -inf map to exactly zero; the
/// maximum is taken over the finite support before exponentiation.
template <typename Derived>
RowVec<typename Derived::Scalar> softmax_row(const Eigen::MatrixBase<Derived>& v) {
    using Scalar = typename Derived::Scalar;
    if (v.size() == 0) {
        throw DimensionError("softmax_row: empty input");
    }
    Scalar peak = neg_inf<Scalar>();
    for (Index i = 0; i < v.size(); ++i) {
        if (v(i) != neg_inf<Scalar>() && v(i) > peak) peak = v(i);
    }
    if (peak == neg_inf<Scalar>()) {
        throw NumericError("softmax_row: empty support");
    }
    RowVec<Scalar> out(v.size());
    Scalar total = 0;
    for (Index i = 0; i < v.size(); ++i) {
        out(i) = v(i) == neg_inf<Scalar>() ? Scalar(0) : std::exp(v(i) - peak);
        total += out(i);
    }
    out /= total;
    return out;
}

template <typename Derived>
Mat<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& m) {
    Mat<typename Derived::Scalar> out(m.rows(), m.cols());
    for (Index r = 0; r < m.rows(); ++r) {
        out.row(r) = softmax_row(m.row(r));
    }
    return out;
}

/// Exact (erf) GELU.
template <std::floating_point Scalar>
Scalar gelu(Scalar x) {
    return Scalar(0.5) * x * (Scalar(1) + std::erf(x / std::sqrt(Scalar(2))));
}

template <typename Derived>
Mat<typename Derived::Scalar> gelu(const Eigen::MatrixBase<Derived>& m) {
    using Scalar = typename Derived::Scalar;
    return m.unaryExpr([](Scalar x) { return gelu(x); });
}

inline constexpr double kLayerNormEps = 1e-5;

/// Normalises every row of `x` to zero mean and unit (biased) variance, then
/// applies the per-feature affine pair.
template <typename Derived, typename G, typename B>
Mat<typename Derived::Scalar> layer_norm(const Eigen::MatrixBase<Derived>& x, const Eigen::MatrixBase<G>& gamma,
                                         const Eigen::MatrixBase<B>& beta,
                                         typename Derived::Scalar eps = kLayerNormEps) {
    using Scalar = typename Derived::Scalar;
    if (gamma.size() != x.cols() || beta.size() != x.cols()) {
        throw DimensionError("layer_norm: input " + shape_str(x) + " vs gamma " + shape_str(gamma) + " / beta " +
                             shape_str(beta));
    }
    Mat<Scalar> out(x.rows(), x.cols());
    const Scalar n = static_cast<Scalar>(x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
        const Scalar mean = x.row(r).sum() / n;
        const Scalar var = (x.row(r).array() - mean).square().sum() / n;
        const Scalar inv = Scalar(1) / std::sqrt(var + eps);
        for (Index c = 0; c < x.cols(); ++c) {
            out(r, c) = (x(r, c) - mean) * inv * gamma(c) + beta(c);
        }
    }
    return out;
}

/// Layer norm without the affine pair (gamma = 1, beta = 0).
template <typename Derived>
Mat<typename Derived::Scalar> layer_norm(const Eigen::MatrixBase<Derived>& x,
                                         typename Derived::Scalar eps = kLayerNormEps) {
    using Scalar = typename Derived::Scalar;
    const RowVec<Scalar> ones = RowVec<Scalar>::Ones(x.cols());
    const RowVec<Scalar> zeros = RowVec<Scalar>::Zero(x.cols());
    return layer_norm(x, ones, zeros, eps);
}

/// Affine map X W + b, with W laid out (d_in x d_out) and b broadcast over rows.
template <typename DX, typename DW, typename DB>
Mat<typename DX::Scalar> linear(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DW>& w,
                                const Eigen::MatrixBase<DB>& b) {
    if (x.cols() != w.rows()) {
        throw DimensionError("linear: input " + shape_str(x) + " does not conform to weight " + shape_str(w));
    }
    if (b.size() != w.cols()) {
        throw DimensionError("linear: weight " + shape_str(w) + " does not conform to bias " + shape_str(b));
    }
    Mat<typename DX::Scalar> out = x * w;
    out.rowwise() += b.derived().reshaped().transpose();
    return out;
}

template <typename DX, typename DW>
Mat<typename DX::Scalar> linear(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DW>& w) {
    if (x.cols() != w.rows()) {
        throw DimensionError("linear: input " + shape_str(x) + " does not conform to weight " + shape_str(w));
    }
    return x * w;
}

}  // namespace htp
