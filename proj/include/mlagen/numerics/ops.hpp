#pragma once

#include <string>
#include <vector>

#include "mlagen/numerics/tape.hpp"

// Differentiable ops over rank-2 arrays. Every op checks shapes, records an
// analytic backward closure on the tape, and fails on non-finite output.
namespace mlagen::ops {

namespace detail {

template <typename S>
Tape<S>& tape_of(const Var<S>& a) {
    if (a.tape == nullptr) throw GraphError("unbound variable");
    return *a.tape;
}

template <typename S>
void same_tape(const Var<S>& a, const Var<S>& b) {
    if (a.tape != b.tape) throw GraphError("operands live on different tapes");
}

}  // namespace detail

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
    detail::same_tape(a, b);
    auto& t = detail::tape_of(a);
    const int ia = t.check(a), ib = t.check(b);
    const auto& A = t.value(ia);
    const auto& B = t.value(ib);
    if (A.cols() != B.rows())
        throw ShapeError("matmul: " + shape_str(A.rows(), A.cols()) + " * " +
                         shape_str(B.rows(), B.cols()));
    return t.push(A * B, t.any_needs_grad({a, b}), [ia, ib](Tape<S>& tp, const Mat<S>& g) {
        if (tp.needs_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
        if (tp.needs_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
    });
}

// a * b^T
template <typename S>
Var<S> matmul_nt(const Var<S>& a, const Var<S>& b) {
    detail::same_tape(a, b);
    auto& t = detail::tape_of(a);
    const int ia = t.check(a), ib = t.check(b);
    const auto& A = t.value(ia);
    const auto& B = t.value(ib);
    if (A.cols() != B.cols())
        throw ShapeError("matmul_nt: " + shape_str(A.rows(), A.cols()) + " * T" +
                         shape_str(B.rows(), B.cols()));
    return t.push(A * B.transpose(), t.any_needs_grad({a, b}),
                  [ia, ib](Tape<S>& tp, const Mat<S>& g) {
                      if (tp.needs_grad(ia)) tp.accumulate(ia, g * tp.value(ib));
                      if (tp.needs_grad(ib)) tp.accumulate(ib, g.transpose() * tp.value(ia));
                  });
}

// x W + b, with b a 1 x out row broadcast over rows.
template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
    detail::same_tape(x, w);
    detail::same_tape(x, b);
    auto& t = detail::tape_of(x);
    const int ix = t.check(x), iw = t.check(w), ib = t.check(b);
    const auto& X = t.value(ix);
    const auto& W = t.value(iw);
    const auto& B = t.value(ib);
    if (X.cols() != W.rows() || B.rows() != 1 || B.cols() != W.cols())
        throw ShapeError("linear: x" + shape_str(X.rows(), X.cols()) + " W" +
                         shape_str(W.rows(), W.cols()) + " b" + shape_str(B.rows(), B.cols()));
    Mat<S> out = X * W;
    out.rowwise() += B.row(0);
    return t.push(std::move(out), t.any_needs_grad({x, w, b}),
                  [ix, iw, ib](Tape<S>& tp, const Mat<S>& g) {
                      if (tp.needs_grad(ix)) tp.accumulate(ix, g * tp.value(iw).transpose());
                      if (tp.needs_grad(iw)) tp.accumulate(iw, tp.value(ix).transpose() * g);
                      if (tp.needs_grad(ib)) tp.accumulate(ib, g.colwise().sum());
                  });
}

template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w) {
    return matmul(x, w);
}

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
    detail::same_tape(a, b);
    auto& t = detail::tape_of(a);
    const int ia = t.check(a), ib = t.check(b);
    require_same_shape(t.value(ia), t.value(ib), "add");
    return t.push(t.value(ia) + t.value(ib), t.any_needs_grad({a, b}),
                  [ia, ib](Tape<S>& tp, const Mat<S>& g) {
                      tp.accumulate(ia, g);
                      tp.accumulate(ib, g);
                  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
    detail::same_tape(a, b);
    auto& t = detail::tape_of(a);
    const int ia = t.check(a), ib = t.check(b);
    require_same_shape(t.value(ia), t.value(ib), "sub");
    return t.push(t.value(ia) - t.value(ib), t.any_needs_grad({a, b}),
                  [ia, ib](Tape<S>& tp, const Mat<S>& g) {
                      tp.accumulate(ia, g);
                      if (tp.needs_grad(ib)) tp.accumulate(ib, -g);
                  });
}

// Elementwise product.
template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
    detail::same_tape(a, b);
    auto& t = detail::tape_of(a);
    const int ia = t.check(a), ib = t.check(b);
    require_same_shape(t.value(ia), t.value(ib), "mul");
    return t.push(t.value(ia).cwiseProduct(t.value(ib)), t.any_needs_grad({a, b}),
                  [ia, ib](Tape<S>& tp, const Mat<S>& g) {
                      if (tp.needs_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
                      if (tp.needs_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
                  });
}

template <typename S>
Var<S> scale(const Var<S>& a, S s) {
    auto& t = detail::tape_of(a);
    const int ia = t.check(a);
    return t.push(t.value(ia) * s, t.any_needs_grad({a}),
                  [ia, s](Tape<S>& tp, const Mat<S>& g) { tp.accumulate(ia, g * s); });
}

template <typename S>
Var<S> add_scalar(const Var<S>& a, S s) {
    auto& t = detail::tape_of(a);
    const int ia = t.check(a);
    return t.push((t.value(ia).array() + s).matrix(), t.any_needs_grad({a}),
                  [ia](Tape<S>& tp, const Mat<S>& g) { tp.accumulate(ia, g); });
}

// a + 1 r, r a 1 x cols row.
template <typename S>
Var<S> add_row(const Var<S>& a, const Var<S>& r) {
    detail::same_tape(a, r);
    auto& t = detail::tape_of(a);
    const int ia = t.check(a), ir = t.check(r);
    const auto& A = t.value(ia);
    const auto& R = t.value(ir);
    if (R.rows() != 1 || R.cols() != A.cols()) throw ShapeError("add_row: row shape mismatch");
    Mat<S> out = A;
    out.rowwise() += R.row(0);
    return t.push(std::move(out), t.any_needs_grad({a, r}),
                  [ia, ir](Tape<S>& tp, const Mat<S>& g) {
                      tp.accumulate(ia, g);
                      if (tp.needs_grad(ir)) tp.accumulate(ir, g.colwise().sum());
                  });
}

// a * (1 r) elementwise, r a 1 x cols row.
template <typename S>
Var<S> mul_row(const Var<S>& a, const Var<S>& r) {
    detail::same_tape(a, r);
    auto& t = detail::tape_of(a);
    const int ia = t.check(a), ir = t.check(r);
    const auto& A = t.value(ia);
    const auto& R = t.value(ir);
    if (R.rows() != 1 || R.cols() != A.cols()) throw ShapeError("mul_row: row shape mismatch");
    Mat<S> out = A.array().rowwise() * R.row(0).array();
    return t.push(std::move(out), t.any_needs_grad({a, r}),
                  [ia, ir](Tape<S>& tp, const Mat<S>& g) {
                      const auto& Rv = tp.value(ir);
                      if (tp.needs_grad(ia))
                          tp.accumulate(ia, (g.array().rowwise() * Rv.row(0).array()).matrix());
                      if (tp.needs_grad(ir))
                          tp.accumulate(ir, g.cwiseProduct(tp.value(ia)).colwise().sum());
                  });
}

template <typename S>
Var<S> silu(const Var<S>& a) {
    auto& t = detail::tape_of(a);
    const int ia = t.check(a);
    const auto& A = t.value(ia);
    Mat<S> sig = (S(1) / (S(1) + (-A.array()).exp())).matrix();
    Mat<S> out = A.cwiseProduct(sig);
    return t.push(std::move(out), t.any_needs_grad({a}),
                  [ia, sig = std::move(sig)](Tape<S>& tp, const Mat<S>& g) {
                      const auto& x = tp.value(ia).array();
                      auto d = sig.array() * (S(1) + x * (S(1) - sig.array()));
                      tp.accumulate(ia, (g.array() * d).matrix());
                  });
}

// tanh-approximated GELU.
template <typename S>
Var<S> gelu(const Var<S>& a) {
    auto& t = detail::tape_of(a);
    const int ia = t.check(a);
    const auto& A = t.value(ia);
    const S c = S(0.7978845608028654);
    const S k = S(0.044715);
    Mat<S> th = (c * (A.array() + k * A.array().cube())).tanh().matrix();
    Mat<S> out = (S(0.5) * A.array() * (S(1) + th.array())).matrix();
    return t.push(std::move(out), t.any_needs_grad({a}),
                  [ia, th = std::move(th), c, k](Tape<S>& tp, const Mat<S>& g) {
                      const auto& x = tp.value(ia).array();
                      auto d = S(0.5) * (S(1) + th.array()) +
                               S(0.5) * x * (S(1) - th.array().square()) * c *
                                   (S(1) + S(3) * k * x.square());
                      tp.accumulate(ia, (g.array() * d).matrix());
                  });
}

template <typename S>
Var<S> tanh(const Var<S>& a) {
    auto& t = detail::tape_of(a);
    const int ia = t.check(a);
    Mat<S> out = t.value(ia).array().tanh().matrix();
    return t.push(out, t.any_needs_grad({a}), [ia, out](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(ia, (g.array() * (S(1) - out.array().square())).matrix());
    });
}

namespace detail {

// Row-wise normalization; returns xhat and 1/sigma per row.
template <typename S>
void normalize_rows(const Mat<S>& x, S eps, Mat<S>& xhat, Eigen::Matrix<S, Eigen::Dynamic, 1>& inv) {
    const auto n = static_cast<S>(x.cols());
    xhat.resize(x.rows(), x.cols());
    inv.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const S mu = x.row(i).sum() / n;
        auto centered = x.row(i).array() - mu;
        const S var = centered.square().sum() / n;
        inv(i) = S(1) / std::sqrt(var + eps);
        xhat.row(i) = (centered * inv(i)).matrix();
    }
}

template <typename S>
Mat<S> normalize_rows_backward(const Mat<S>& g, const Mat<S>& xhat,
                               const Eigen::Matrix<S, Eigen::Dynamic, 1>& inv) {
    const auto n = static_cast<S>(g.cols());
    Mat<S> dx(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        const S mg = g.row(i).sum() / n;
        const S mgx = g.row(i).dot(xhat.row(i)) / n;
        dx.row(i) = inv(i) * (g.row(i).array() - mg - xhat.row(i).array() * mgx).matrix();
    }
    return dx;
}

}  // namespace detail

// Layer normalization over each row, no affine part.
template <typename S>
Var<S> layernorm(const Var<S>& x, S eps = S(1e-5)) {
    auto& t = detail::tape_of(x);
    const int ix = t.check(x);
    Mat<S> xhat;
    Eigen::Matrix<S, Eigen::Dynamic, 1> inv;
    detail::normalize_rows(t.value(ix), eps, xhat, inv);
    Mat<S> out = xhat;
    return t.push(std::move(out), t.any_needs_grad({x}),
                  [ix, xhat = std::move(xhat), inv = std::move(inv)](Tape<S>& tp, const Mat<S>& g) {
                      tp.accumulate(ix, detail::normalize_rows_backward(g, xhat, inv));
                  });
}

// Layer normalization with per-channel gain and bias (1 x cols rows).
template <typename S>
Var<S> layernorm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, S eps = S(1e-5)) {
    detail::same_tape(x, gamma);
    detail::same_tape(x, beta);
    auto& t = detail::tape_of(x);
    const int ix = t.check(x), ig = t.check(gamma), ib = t.check(beta);
    const auto& G = t.value(ig);
    const auto& B = t.value(ib);
    const auto& X = t.value(ix);
    if (G.rows() != 1 || B.rows() != 1 || G.cols() != X.cols() || B.cols() != X.cols())
        throw ShapeError("layernorm: affine shape mismatch");
    Mat<S> xhat;
    Eigen::Matrix<S, Eigen::Dynamic, 1> inv;
    detail::normalize_rows(X, eps, xhat, inv);
    Mat<S> out = xhat.array().rowwise() * G.row(0).array();
    out.rowwise() += B.row(0);
    return t.push(std::move(out), t.any_needs_grad({x, gamma, beta}),
                  [ix, ig, ib, xhat = std::move(xhat), inv = std::move(inv)](Tape<S>& tp,
                                                                             const Mat<S>& g) {
                      const auto& Gv = tp.value(ig);
                      if (tp.needs_grad(ig)) tp.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                      if (tp.needs_grad(ib)) tp.accumulate(ib, g.colwise().sum());
                      if (tp.needs_grad(ix)) {
                          Mat<S> gx = g.array().rowwise() * Gv.row(0).array();
                          tp.accumulate(ix, detail::normalize_rows_backward(gx, xhat, inv));
                      }
                  });
}

namespace detail {

template <typename S>
Mat<S> softmax_rows_value(const Mat<S>& x) {
    Mat<S> y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const S mx = x.row(i).maxCoeff();
        y.row(i) = (x.row(i).array() - mx).exp().matrix();
        y.row(i) /= y.row(i).sum();
    }
    return y;
}

}  // namespace detail

template <typename S>
Var<S> transpose(const Var<S>& a) {
    auto& t = detail::tape_of(a);
    const int ia = t.check(a);
    Mat<S> out = t.value(ia).transpose();
    return t.push(std::move(out), t.any_needs_grad({a}), [ia](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(ia, g.transpose());
    });
}

// Softmax along `axis` (1 = within each row, 0 = within each column).
template <typename S>
Var<S> softmax(const Var<S>& x, int axis = 1) {
    if (axis == 0) return transpose(softmax(transpose(x), 1));
    if (axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
    auto& t = detail::tape_of(x);
    const int ix = t.check(x);
    Mat<S> y = detail::softmax_rows_value(t.value(ix));
    return t.push(y, t.any_needs_grad({x}), [ix, y](Tape<S>& tp, const Mat<S>& g) {
        Mat<S> dx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const S dot = g.row(i).dot(y.row(i));
            dx.row(i) = y.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
        }
        tp.accumulate(ix, dx);
    });
}

// Mean of squared differences over all elements; returns a 1x1 node.
template <typename S>
Var<S> mse(const Var<S>& x, const Var<S>& y) {
    detail::same_tape(x, y);
    auto& t = detail::tape_of(x);
    const int ix = t.check(x), iy = t.check(y);
    require_same_shape(t.value(ix), t.value(iy), "mse");
    Mat<S> diff = t.value(ix) - t.value(iy);
    const auto n = static_cast<S>(diff.size());
    if (diff.size() == 0) throw ShapeError("mse: empty input");
    Mat<S> out(1, 1);
    out(0, 0) = diff.squaredNorm() / n;
    return t.push(std::move(out), t.any_needs_grad({x, y}),
                  [ix, iy, diff = std::move(diff), n](Tape<S>& tp, const Mat<S>& g) {
                      const S k = S(2) * g(0, 0) / n;
                      if (tp.needs_grad(ix)) tp.accumulate(ix, diff * k);
                      if (tp.needs_grad(iy)) tp.accumulate(iy, diff * (-k));
                  });
}

template <typename S>
Var<S> sum_all(const Var<S>& a) {
    auto& t = detail::tape_of(a);
    const int ia = t.check(a);
    const auto r = t.value(ia).rows(), c = t.value(ia).cols();
    Mat<S> out(1, 1);
    out(0, 0) = t.value(ia).sum();
    return t.push(std::move(out), t.any_needs_grad({a}), [ia, r, c](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(ia, Mat<S>::Constant(r, c, g(0, 0)));
    });
}

template <typename S>
Var<S> mean_all(const Var<S>& a) {
    return scale(sum_all(a), S(1) / static_cast<S>(a.value().size()));
}

// out.row(i) = x.row(index[i]); the backward pass scatter-adds.
template <typename S>
Var<S> gather_rows(const Var<S>& x, std::vector<int> index) {
    auto& t = detail::tape_of(x);
    const int ix = t.check(x);
    const auto& X = t.value(ix);
    Mat<S> out(static_cast<Eigen::Index>(index.size()), X.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= X.rows()) throw ShapeError("gather_rows: index out of range");
        out.row(static_cast<Eigen::Index>(i)) = X.row(index[i]);
    }
    const auto rows = X.rows(), cols = X.cols();
    return t.push(std::move(out), t.any_needs_grad({x}),
                  [ix, index = std::move(index), rows, cols](Tape<S>& tp, const Mat<S>& g) {
                      Mat<S> dx = Mat<S>::Zero(rows, cols);
                      for (std::size_t i = 0; i < index.size(); ++i)
                          dx.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
                      tp.accumulate(ix, dx);
                  });
}

// Mean over consecutive groups of `group` rows: (R*group) x C -> R x C.
template <typename S>
Var<S> group_mean_rows(const Var<S>& x, int group) {
    auto& t = detail::tape_of(x);
    const int ix = t.check(x);
    const auto& X = t.value(ix);
    if (group <= 0 || X.rows() % group != 0) throw ShapeError("group_mean_rows: bad group size");
    const Eigen::Index r = X.rows() / group;
    Mat<S> out = Mat<S>::Zero(r, X.cols());
    for (Eigen::Index i = 0; i < r; ++i)
        for (int j = 0; j < group; ++j) out.row(i) += X.row(i * group + j);
    out /= static_cast<S>(group);
    return t.push(std::move(out), t.any_needs_grad({x}), [ix, group, r](Tape<S>& tp, const Mat<S>& g) {
        Mat<S> dx(r * group, g.cols());
        const S inv = S(1) / static_cast<S>(group);
        for (Eigen::Index i = 0; i < r; ++i)
            for (int j = 0; j < group; ++j) dx.row(i * group + j) = g.row(i) * inv;
        tp.accumulate(ix, dx);
    });
}

// Mean over each [begin, begin+len) row segment: one output row per segment.
template <typename S>
Var<S> segment_mean_rows(const Var<S>& x, std::vector<std::pair<int, int>> segments) {
    auto& t = detail::tape_of(x);
    const int ix = t.check(x);
    const auto& X = t.value(ix);
    Mat<S> out = Mat<S>::Zero(static_cast<Eigen::Index>(segments.size()), X.cols());
    for (std::size_t s = 0; s < segments.size(); ++s) {
        const auto [b, n] = segments[s];
        if (n <= 0 || b < 0 || b + n > X.rows()) throw ShapeError("segment_mean_rows: bad segment");
        out.row(static_cast<Eigen::Index>(s)) = X.middleRows(b, n).colwise().sum() / static_cast<S>(n);
    }
    const auto rows = X.rows();
    return t.push(std::move(out), t.any_needs_grad({x}),
                  [ix, segments = std::move(segments), rows](Tape<S>& tp, const Mat<S>& g) {
                      Mat<S> dx = Mat<S>::Zero(rows, g.cols());
                      for (std::size_t s = 0; s < segments.size(); ++s) {
                          const auto [b, n] = segments[s];
                          dx.middleRows(b, n).rowwise() +=
                              g.row(static_cast<Eigen::Index>(s)) / static_cast<S>(n);
                      }
                      tp.accumulate(ix, dx);
                  });
}

// Row-major reshape (element order preserved).
template <typename S>
Var<S> reshape(const Var<S>& x, Eigen::Index rows, Eigen::Index cols) {
    auto& t = detail::tape_of(x);
    const int ix = t.check(x);
    const auto& X = t.value(ix);
    if (rows * cols != X.size())
        throw ShapeError("reshape: " + shape_str(X.rows(), X.cols()) + " -> " + shape_str(rows, cols));
    Mat<S> out = Eigen::Map<const Mat<S>>(X.data(), rows, cols);
    const auto r0 = X.rows(), c0 = X.cols();
    return t.push(std::move(out), t.any_needs_grad({x}), [ix, r0, c0](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(ix, Eigen::Map<const Mat<S>>(g.data(), r0, c0));
    });
}

template <typename S>
Var<S> slice_cols(const Var<S>& x, Eigen::Index begin, Eigen::Index count) {
    auto& t = detail::tape_of(x);
    const int ix = t.check(x);
    const auto& X = t.value(ix);
    if (begin < 0 || count <= 0 || begin + count > X.cols()) throw ShapeError("slice_cols: out of range");
    Mat<S> out = X.middleCols(begin, count);
    const auto r = X.rows(), c = X.cols();
    return t.push(std::move(out), t.any_needs_grad({x}),
                  [ix, begin, count, r, c](Tape<S>& tp, const Mat<S>& g) {
                      Mat<S> dx = Mat<S>::Zero(r, c);
                      dx.middleCols(begin, count) = g;
                      tp.accumulate(ix, dx);
                  });
}

template <typename S>
Var<S> slice_rows(const Var<S>& x, Eigen::Index begin, Eigen::Index count) {
    auto& t = detail::tape_of(x);
    const int ix = t.check(x);
    const auto& X = t.value(ix);
    if (begin < 0 || count <= 0 || begin + count > X.rows()) throw ShapeError("slice_rows: out of range");
    Mat<S> out = X.middleRows(begin, count);
    const auto r = X.rows(), c = X.cols();
    return t.push(std::move(out), t.any_needs_grad({x}),
                  [ix, begin, count, r, c](Tape<S>& tp, const Mat<S>& g) {
                      Mat<S> dx = Mat<S>::Zero(r, c);
                      dx.middleRows(begin, count) = g;
                      tp.accumulate(ix, dx);
                  });
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    auto& t = detail::tape_of(parts[0]);
    std::vector<int> ids;
    Eigen::Index rows = 0;
    const auto cols = parts[0].value().cols();
    bool ng = false;
    for (const auto& p : parts) {
        detail::same_tape(parts[0], p);
        ids.push_back(t.check(p));
        if (p.value().cols() != cols) throw ShapeError("concat_rows: column mismatch");
        rows += p.value().rows();
        ng = ng || t.any_needs_grad({p});
    }
    Mat<S> out(rows, cols);
    Eigen::Index at = 0;
    for (int id : ids) {
        out.middleRows(at, t.value(id).rows()) = t.value(id);
        at += t.value(id).rows();
    }
    return t.push(std::move(out), ng, [ids](Tape<S>& tp, const Mat<S>& g) {
        Eigen::Index at = 0;
        for (int id : ids) {
            const auto n = tp.value(id).rows();
            if (tp.needs_grad(id)) tp.accumulate(id, g.middleRows(at, n));
            at += n;
        }
    });
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    auto& t = detail::tape_of(parts[0]);
    std::vector<int> ids;
    Eigen::Index cols = 0;
    const auto rows = parts[0].value().rows();
    bool ng = false;
    for (const auto& p : parts) {
        detail::same_tape(parts[0], p);
        ids.push_back(t.check(p));
        if (p.value().rows() != rows) throw ShapeError("concat_cols: row mismatch");
        cols += p.value().cols();
        ng = ng || t.any_needs_grad({p});
    }
    Mat<S> out(rows, cols);
    Eigen::Index at = 0;
    for (int id : ids) {
        out.middleCols(at, t.value(id).cols()) = t.value(id);
        at += t.value(id).cols();
    }
    return t.push(std::move(out), ng, [ids](Tape<S>& tp, const Mat<S>& g) {
        Eigen::Index at = 0;
        for (int id : ids) {
            const auto n = tp.value(id).cols();
            if (tp.needs_grad(id)) tp.accumulate(id, g.middleCols(at, n));
            at += n;
        }
    });
}

template <typename S>
Var<S> l2_normalize_rows(const Var<S>& x, S eps = S(1e-8)) {
    auto& t = detail::tape_of(x);
    const int ix = t.check(x);
    const auto& X = t.value(ix);
    Eigen::Matrix<S, Eigen::Dynamic, 1> norm = (X.rowwise().squaredNorm().array() + eps).sqrt();
    Mat<S> y = X.array().colwise() / norm.array();
    return t.push(y, t.any_needs_grad({x}), [ix, y, norm](Tape<S>& tp, const Mat<S>& g) {
        Mat<S> dx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i)
            dx.row(i) = (g.row(i) - y.row(i) * g.row(i).dot(y.row(i))) / norm(i);
        tp.accumulate(ix, dx);
    });
}

// Mean over rows of -log softmax(logits)[target].
template <typename S>
Var<S> cross_entropy_rows(const Var<S>& logits, std::vector<int> targets) {
    auto& t = detail::tape_of(logits);
    const int il = t.check(logits);
    const auto& X = t.value(il);
    if (static_cast<Eigen::Index>(targets.size()) != X.rows())
        throw ShapeError("cross_entropy_rows: target count mismatch");
    Mat<S> p = detail::softmax_rows_value(X);
    S loss = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const int k = targets[static_cast<std::size_t>(i)];
        if (k < 0 || k >= X.cols()) throw ShapeError("cross_entropy_rows: target out of range");
        loss -= std::log(std::max(p(i, k), std::numeric_limits<S>::min()));
    }
    const auto n = static_cast<S>(X.rows());
    Mat<S> out(1, 1);
    out(0, 0) = loss / n;
    return t.push(std::move(out), t.any_needs_grad({logits}),
                  [il, p = std::move(p), targets = std::move(targets), n](Tape<S>& tp, const Mat<S>& g) {
                      Mat<S> d = p;
                      for (std::size_t i = 0; i < targets.size(); ++i)
                          d(static_cast<Eigen::Index>(i), targets[i]) -= S(1);
                      tp.accumulate(il, d * (g(0, 0) / n));
                  });
}

}  // namespace mlagen::ops
