#pragma once

#include "proxbo/tensor.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace proxbo::nn {

/// Trainable array plus its accumulated gradient.
struct Parameter {
    Tensor value;
    Tensor grad;

    Parameter() = default;
    explicit Parameter(std::vector<std::size_t> shape) : value(shape), grad(shape) {}
    void zero_grad() { grad.fill(0.0); }
};

/// Fault injection for the gradient checker's negative control.
enum class BackwardFault {
    none,
    relu_pass_through,  ///< ReLU backward ignores its mask.
};

/// Handle to a node recorded on a Tape.
struct Var {
    std::size_t id = 0;
};

/// Minimal reverse-mode tape over dense tensors. Ops append nodes; backward()
/// walks them in reverse and accumulates into Parameter::grad. Supports what
/// the sequence regressors need: 1D convolution (stride 1, same padding),
/// affine maps, ReLU, tanh, addition, mean pooling over positions, flattening,
/// position slicing and mean squared error.
///
/// A tape built with `record = false` only evaluates (no closures, no grads).
class Tape {
public:
    explicit Tape(bool record = true, BackwardFault fault = BackwardFault::none)
        : record_(record), fault_(fault) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var input(Tensor t);
    Var param(Parameter& p);
    /// Read-only parameter leaf; only valid on a non-recording tape.
    Var param(const Parameter& p);

    const Tensor& value(Var v) const {
        const Node& n = nodes_[v.id];
        return n.param ? n.param->value : n.owned;
    }

    /// Seeds d(loss)/d(loss) = 1 for a single-element node and back-propagates.
    void backward(Var loss);

    /// x[B,L,Cin], w[K,Cin,Cout], b[Cout] -> [B,L,Cout]; K odd, zero padding K/2.
    Var conv1d(Var x, Var w, Var b);
    /// x[B,F], w[F,O], b[O] -> [B,O]
    Var dense(Var x, Var w, Var b);
    /// x[B,F], w[F,O] -> [B,O]
    Var matmul(Var x, Var w);
    Var add(Var a, Var b);
    Var relu(Var x);
    Var tanh(Var x);
    /// [B,L,C] -> [B,C]
    Var mean_pool(Var x);
    /// [B,...] -> [B, prod(...)]
    Var flatten(Var x);
    /// [B,L,C] -> [B,C] taking position t.
    Var position(Var x, std::size_t t);
    /// pred[B,1] against targets[B] -> [1]: mean of squared residuals.
    Var mse(Var pred, std::span<const double> targets);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor owned;
        Tensor grad;                 // lazily sized; unused for parameter nodes
        Parameter* param = nullptr;  // set for parameter leaves
        bool needs_grad = false;
        std::function<void()> back;
    };

    Var push(Tensor value, bool needs_grad);
    bool needs(Var v) const { return nodes_[v.id].needs_grad; }
    /// Gradient buffer for v, allocated zero-filled on first use.
    Tensor& grad(Var v);

    bool record_;
    BackwardFault fault_;
    std::vector<Node> nodes_;
};

}  // namespace proxbo::nn
