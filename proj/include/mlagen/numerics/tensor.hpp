#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

#include "mlagen/core/errors.hpp"

namespace mlagen {

// Row-major dynamic matrix. Every array in the library is rank 2; higher-rank
// quantities (L x J x D) are stored with their trailing axes flattened.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic, Eigen::RowMajor>;

using MatF = Mat<float>;
using MatD = Mat<double>;

template <typename Scalar>
constexpr Scalar neg_inf() {
    return -std::numeric_limits<Scalar>::infinity();
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const std::string& where) {
    if (!m.allFinite()) throw NumericError("non-finite values produced by " + where);
}

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

template <typename A, typename B>
void require_same_shape(const A& a, const B& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                         " vs " + shape_str(b.rows(), b.cols()));
}

}  // namespace mlagen
