#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "glucast/array.hpp"

namespace glucast {

/// Handle to a value produced on a Tape.
struct Value {
    std::size_t id = static_cast<std::size_t>(-1);
};

using ParamId = std::size_t;

/// Per-parameter gradients produced by Tape::backward. Parameters the loss
/// never touched come back as zero arrays of the parameter's shape.
class Gradients {
public:
    explicit Gradients(std::size_t n) : grads_(n) {}

    const Array& operator[](ParamId pid) const { return grads_.at(pid); }
    Array& operator[](ParamId pid) { return grads_.at(pid); }
    std::size_t size() const { return grads_.size(); }

private:
    std::vector<Array> grads_;
};

/// Records executed ops so a reverse sweep can propagate adjoints.
///
/// Values are owned by the tape; op nodes reference them by id and keep only
/// whatever extra intermediates their backward needs (masks, argmax indices,
/// gate activations). A tape is single-owner: record one forward pass, call
/// backward once, then discard or reset.
class Tape {
public:
    struct Node {
        virtual ~Node() = default;
        virtual void backward(Tape& t) = 0;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf holding an input (activations, data).
    Value input(Array v) { return new_value(std::move(v)); }

    /// Leaf bound to a model parameter; its adjoint becomes the gradient.
    Value param(ParamId pid, const Array& v) {
        Value val = new_value(v);
        if (pid >= param_values_.size())
            param_values_.resize(pid + 1, static_cast<std::size_t>(-1));
        param_values_[pid] = val.id;
        return val;
    }

    const Array& value(Value v) const { return values_.at(v.id); }

    Value new_value(Array v) {
        values_.push_back(std::move(v));
        return Value{values_.size() - 1};
    }

    void push_node(std::unique_ptr<Node> n) { nodes_.push_back(std::move(n)); }

    /// Reverse sweep from a scalar loss. Visits nodes in exact reverse
    /// execution order and returns gradients for all registered parameters.
    Gradients backward(Value loss) {
        if (value(loss).size() != 1)
            throw std::invalid_argument("Tape::backward: loss must be scalar");
        adjoints_.assign(values_.size(), Array());
        adjoints_[loss.id] = Array::scalar(1.0);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
            (*it)->backward(*this);

        Gradients g(param_values_.size());
        for (ParamId pid = 0; pid < param_values_.size(); ++pid) {
            std::size_t vid = param_values_[pid];
            if (vid == static_cast<std::size_t>(-1)) continue;
            if (has_adjoint(vid))
                g[pid] = adjoints_[vid];
            else
                g[pid] = Array(values_[vid].shape());
        }
        return g;
    }

    /// Adjoint of any value after backward (zeros if the loss ignores it).
    const Array& adjoint(Value v) {
        return adjoint_acc(v.id);
    }

    // -- used by op nodes during the reverse sweep --

    bool has_adjoint(std::size_t id) const {
        return id < adjoints_.size() && adjoints_[id].size() > 0;
    }

    /// Adjoint of value `id` if it received any gradient, else nullptr.
    const Array* adjoint_if(std::size_t id) const {
        return has_adjoint(id) ? &adjoints_[id] : nullptr;
    }

    /// Adjoint accumulator for value `id`, zero-initialized on first touch.
    Array& adjoint_acc(std::size_t id) {
        if (adjoints_.size() < values_.size()) adjoints_.resize(values_.size());
        if (adjoints_[id].size() == 0) adjoints_[id] = Array(values_[id].shape());
        return adjoints_[id];
    }

    std::size_t num_nodes() const { return nodes_.size(); }
    std::size_t num_values() const { return values_.size(); }

private:
    std::vector<Array> values_;
    std::vector<std::unique_ptr<Node>> nodes_;
    std::vector<Array> adjoints_;
    std::vector<std::size_t> param_values_;
};

} // namespace glucast
