#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "mlagen/core/rng.hpp"
#include "mlagen/numerics/tape.hpp"

namespace mlagen {

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    int coords_checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double eps = 1e-5;

    double max_rel_error() const {
        double m = 0.0;
        for (const auto& e : entries) m = std::max(m, e.max_rel_error);
        return m;
    }
    bool passed(double tol) const { return max_rel_error() < tol; }
};

// |a - n| / max(|a|, |n|, floor); the floor keeps near-zero coordinates from
// amplifying round-off in the central difference.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

namespace detail {

inline std::vector<Eigen::Index> pick_coords(Eigen::Index n, int max_coords, Rng& rng) {
    std::vector<Eigen::Index> idx;
    if (max_coords <= 0 || n <= max_coords) {
        for (Eigen::Index i = 0; i < n; ++i) idx.push_back(i);
        return idx;
    }
    for (int c = 0; c < max_coords; ++c)
        idx.push_back(static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n)));
    return idx;
}

}  // namespace detail

using LeafFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

// Central finite differences against reverse-mode gradients for a function of
// free input arrays.
inline GradCheckReport gradcheck_inputs(const LeafFn& f, std::vector<MatD> inputs,
                                        double eps = 1e-5, int max_coords = 0,
                                        std::uint64_t seed = 0) {
    auto eval = [&](const std::vector<MatD>& xs) {
        Tape<double> tape(false);
        std::vector<Var<double>> leaves;
        for (const auto& x : xs) leaves.push_back(tape.constant(x));
        return f(tape, leaves).value()(0, 0);
    };
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (const auto& x : inputs) leaves.push_back(tape.leaf(x));
    auto loss = f(tape, leaves);
    tape.backward(loss);

    GradCheckReport report;
    report.eps = eps;
    Rng rng(seed);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        GradCheckEntry e;
        e.name = "input" + std::to_string(i);
        MatD g = tape.grad(leaves[i]);
        if (g.size() == 0) g = MatD::Zero(inputs[i].rows(), inputs[i].cols());
        for (auto c : detail::pick_coords(inputs[i].size(), max_coords, rng)) {
            auto xs = inputs;
            xs[i].data()[c] += eps;
            const double fp = eval(xs);
            xs[i].data()[c] -= 2 * eps;
            const double fm = eval(xs);
            const double num = (fp - fm) / (2 * eps);
            const double ana = g.data()[c];
            e.max_abs_error = std::max(e.max_abs_error, std::abs(ana - num));
            e.max_rel_error = std::max(e.max_rel_error, relative_error(ana, num));
            ++e.coords_checked;
        }
        report.entries.push_back(e);
    }
    return report;
}

using StoreFn = std::function<Var<double>(Tape<double>&, ParamStore<double>&)>;

// Same check against every parameter of a store (a random subset of
// coordinates per parameter when max_coords > 0). `f` must be deterministic.
inline GradCheckReport gradcheck_params(const StoreFn& f, ParamStore<double>& store,
                                        double eps = 1e-5, int max_coords = 0,
                                        std::uint64_t seed = 0) {
    store.zero_grad();
    {
        Tape<double> tape;
        auto loss = f(tape, store);
        tape.backward(loss);
    }
    auto eval = [&]() {
        Tape<double> tape(false);
        return f(tape, store).value()(0, 0);
    };
    GradCheckReport report;
    report.eps = eps;
    Rng rng(seed);
    for (auto& p : store.params()) {
        GradCheckEntry e;
        e.name = p.name;
        for (auto c : detail::pick_coords(p.value.size(), max_coords, rng)) {
            const double orig = p.value.data()[c];
            p.value.data()[c] = orig + eps;
            const double fp = eval();
            p.value.data()[c] = orig - eps;
            const double fm = eval();
            p.value.data()[c] = orig;
            const double num = (fp - fm) / (2 * eps);
            const double ana = p.grad.data()[c];
            e.max_abs_error = std::max(e.max_abs_error, std::abs(ana - num));
            e.max_rel_error = std::max(e.max_rel_error, relative_error(ana, num));
            ++e.coords_checked;
        }
        report.entries.push_back(e);
    }
    return report;
}

}  // namespace mlagen
