#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "mlagen/numerics/param_store.hpp"
#include "mlagen/numerics/tensor.hpp"

namespace mlagen {

template <typename Scalar>
class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives
// and before the tape has been consumed by backward().
template <typename Scalar>
struct Var {
    Tape<Scalar>* tape = nullptr;
    int id = -1;

    const Mat<Scalar>& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    bool valid() const { return tape != nullptr && id >= 0; }
};

// Append-only reverse-mode tape. Ops are free functions in ops.hpp that push
// nodes here; backward() walks the nodes in reverse insertion order, which is
// a topological order by construction.
template <typename Scalar>
class Tape {
public:
    using M = Mat<Scalar>;
    using Backward = std::function<void(Tape&, const M& grad)>;

    explicit Tape(bool record_grad = true) : record_(record_grad) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return record_; }

    Var<Scalar> constant(M value) { return push(std::move(value), false, {}); }

    // A free leaf whose gradient can be read back with grad() after backward.
    Var<Scalar> leaf(M value) {
        auto v = push(std::move(value), record_, {});
        return v;
    }

    // Binds a parameter of `store`; repeated binds of one parameter share a node.
    Var<Scalar> param(ParamStore<Scalar>& store, std::size_t index) {
        check_live();
        if (bound_store_ != nullptr && bound_store_ != &store)
            throw GraphError("a tape can bind parameters from one store only");
        bound_store_ = &store;
        auto it = param_nodes_.find(index);
        if (it != param_nodes_.end()) return Var<Scalar>{this, it->second};
        auto v = push(store[index].value, record_ && !store[index].frozen, {});
        param_nodes_[index] = v.id;
        return v;
    }
    Var<Scalar> param(ParamStore<Scalar>& store, const std::string& name) {
        return param(store, store.index_of(name));
    }

    // Used by ops: records a node with its backward closure.
    Var<Scalar> push(M value, bool needs_grad, Backward backward) {
        check_live();
        require_finite(value, "tape op");
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad && record_;
        if (n.needs_grad) n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
    }

    const M& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    bool any_needs_grad(std::initializer_list<Var<Scalar>> vs) const {
        if (!record_) return false;
        for (const auto& v : vs)
            if (needs_grad(check(v))) return true;
        return false;
    }

    // Adjoint of a node; zero-shaped if nothing flowed into it.
    const M& grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).grad; }
    const M& grad(const Var<Scalar>& v) const { return grad(v.id); }

    template <typename Expr>
    void accumulate(int id, const Expr& g) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad) return;
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }

    int check(const Var<Scalar>& v) const {
        if (v.tape != this) throw GraphError("variable belongs to a different tape");
        if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw GraphError("dangling variable");
        return v.id;
    }

    // Reverse sweep from a scalar node. Parameter gradients are added into the
    // bound ParamStore. A tape can be swept once.
    void backward(const Var<Scalar>& loss) {
        check_live();
        const int root = check(loss);
        if (!record_) throw GraphError("backward on a non-recording tape");
        if (value(root).size() != 1) throw GraphError("backward requires a scalar loss");
        consumed_ = true;
        auto& r = nodes_[static_cast<std::size_t>(root)];
        if (!r.needs_grad) return;
        r.grad = M::Ones(1, 1);
        for (int i = root; i >= 0; --i) {
            auto& n = nodes_[static_cast<std::size_t>(i)];
            if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
            n.backward(*this, n.grad);
        }
        if (bound_store_ != nullptr) {
            for (const auto& [index, node] : param_nodes_) {
                const auto& g = nodes_[static_cast<std::size_t>(node)].grad;
                if (g.size() == 0) continue;
                require_finite(g, "backward");
                auto& p = (*bound_store_)[index];
                p.grad += g;
                p.has_grad = true;
            }
        }
    }

    bool consumed() const { return consumed_; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        M value;
        M grad;
        Backward backward;
        bool needs_grad = false;
    };

    void check_live() const {
        if (consumed_) throw GraphError("tape reused after backward");
    }

    std::vector<Node> nodes_;
    std::unordered_map<std::size_t, int> param_nodes_;
    ParamStore<Scalar>* bound_store_ = nullptr;
    bool record_ = true;
    bool consumed_ = false;
};

template <typename Scalar>
const Mat<Scalar>& Var<Scalar>::value() const {
    if (tape == nullptr) throw GraphError("unbound variable");
    return tape->value(tape->check(*this));
}

}  // namespace mlagen
