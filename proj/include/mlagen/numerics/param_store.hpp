#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mlagen/core/rng.hpp"
#include "mlagen/numerics/tensor.hpp"

namespace mlagen {

template <typename Scalar>
struct Parameter {
    std::string name;
    Mat<Scalar> value;
    Mat<Scalar> grad;
    Mat<Scalar> m;  // AdamW first moment
    Mat<Scalar> v;  // AdamW second moment
    bool decay = true;
    bool has_grad = false;
    bool frozen = false;  // enters tapes as a constant
};

// Named trainable parameters with gradient and AdamW moment buffers.
template <typename Scalar>
class ParamStore {
public:
    using Index = std::size_t;

    Index add(const std::string& name, Mat<Scalar> value, bool decay = true) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        Parameter<Scalar> p;
        p.name = name;
        p.grad = Mat<Scalar>::Zero(value.rows(), value.cols());
        p.m = Mat<Scalar>::Zero(value.rows(), value.cols());
        p.v = Mat<Scalar>::Zero(value.rows(), value.cols());
        p.value = std::move(value);
        p.decay = decay;
        index_[name] = params_.size();
        params_.push_back(std::move(p));
        return params_.size() - 1;
    }

    // Gaussian init scaled by 1/sqrt(fan_in).
    Index add_dense(const std::string& name, int in, int out, Rng& rng, double gain = 1.0) {
        Mat<Scalar> w(in, out);
        const double sd = gain / std::sqrt(static_cast<double>(in));
        for (Eigen::Index i = 0; i < w.size(); ++i)
            w.data()[i] = static_cast<Scalar>(sd * standard_normal(rng));
        return add(name, std::move(w), true);
    }

    Index add_zeros(const std::string& name, int rows, int cols, bool decay = false) {
        return add(name, Mat<Scalar>::Zero(rows, cols), decay);
    }

    Index add_constant(const std::string& name, int rows, int cols, Scalar c, bool decay = false) {
        return add(name, Mat<Scalar>::Constant(rows, cols, c), decay);
    }

    Index add_normal(const std::string& name, int rows, int cols, double sd, Rng& rng,
                     bool decay = false) {
        Mat<Scalar> w(rows, cols);
        for (Eigen::Index i = 0; i < w.size(); ++i)
            w.data()[i] = static_cast<Scalar>(sd * standard_normal(rng));
        return add(name, std::move(w), decay);
    }

    Parameter<Scalar>& operator[](Index i) { return params_.at(i); }
    const Parameter<Scalar>& operator[](Index i) const { return params_.at(i); }

    Index index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    // Freezes every parameter whose name starts with `prefix`; returns the count.
    int freeze_prefix(const std::string& prefix, bool frozen = true) {
        int n = 0;
        for (auto& p : params_)
            if (p.name.rfind(prefix, 0) == 0) {
                p.frozen = frozen;
                ++n;
            }
        return n;
    }

    std::size_t size() const { return params_.size(); }
    std::vector<Parameter<Scalar>>& params() { return params_; }
    const std::vector<Parameter<Scalar>>& params() const { return params_; }

    std::int64_t step() const { return step_; }
    void set_step(std::int64_t s) { step_ = s; }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) {
            p.grad.setZero();
            p.has_grad = false;
        }
    }

    void scale_grad(Scalar s) {
        for (auto& p : params_) p.grad *= s;
    }

    double grad_norm() const {
        double n = 0.0;
        for (const auto& p : params_) n += static_cast<double>(p.grad.squaredNorm());
        return std::sqrt(n);
    }

    // Rescales gradients so their global L2 norm is at most max_norm.
    double clip_grad_norm(double max_norm) {
        const double n = grad_norm();
        if (max_norm > 0 && n > max_norm) scale_grad(static_cast<Scalar>(max_norm / n));
        return n;
    }

    // Copy of values in another precision (moments and step are not carried).
    template <typename Other>
    ParamStore<Other> cast() const {
        ParamStore<Other> out;
        for (const auto& p : params_) out.add(p.name, p.value.template cast<Other>(), p.decay);
        return out;
    }

    // Overwrite values by name from another store with the same layout.
    template <typename Other>
    void load_values(const ParamStore<Other>& src) {
        for (const auto& p : src.params()) {
            auto& dst = params_.at(index_of(p.name));
            require_same_shape(dst.value, p.value, "load_values");
            dst.value = p.value.template cast<Scalar>();
        }
    }

private:
    std::vector<Parameter<Scalar>> params_;
    std::map<std::string, Index> index_;
    std::int64_t step_ = 0;
};

struct AdamWConfig {
    double lr = 2e-4;
    double weight_decay = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Decoupled weight decay: w <- w - lr * (mhat / (sqrt(vhat) + eps) + wd * w).
// Parameters that received no gradient since the last zero_grad are skipped.
template <typename Scalar>
void adamw_step(ParamStore<Scalar>& store, const AdamWConfig& cfg) {
    bool any = false;
    for (const auto& p : store.params()) any = any || p.has_grad;
    if (!any) throw OptimizerError("adamw_step called without populated gradients");

    const std::int64_t t = store.step() + 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    const auto b1 = static_cast<Scalar>(cfg.beta1);
    const auto b2 = static_cast<Scalar>(cfg.beta2);
    for (auto& p : store.params()) {
        if (!p.has_grad) continue;
        require_finite(p.grad, "gradient of " + p.name);
        p.m = b1 * p.m + (Scalar(1) - b1) * p.grad;
        p.v = b2 * p.v + (Scalar(1) - b2) * p.grad.cwiseProduct(p.grad);
        const auto step_size = static_cast<Scalar>(cfg.lr / bc1);
        const auto denom_scale = static_cast<Scalar>(1.0 / std::sqrt(bc2));
        const Scalar eps = static_cast<Scalar>(cfg.eps);
        if (p.decay && cfg.weight_decay != 0.0)
            p.value *= static_cast<Scalar>(1.0 - cfg.lr * cfg.weight_decay);
        p.value.array() -=
            step_size * p.m.array() / ((p.v.array().sqrt() * denom_scale) + eps);
    }
    store.set_step(t);
}

}  // namespace mlagen
