#pragma once

// Minimal reverse-mode differentiation over CHW tensors. Every op builds a
// node that remembers its inputs and a closure that pushes the output
// gradient back into them. Nodes whose inputs need no gradient carry no
// closure, so frozen sub-networks cost a plain forward pass.

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "mirrorfill/tensor.hpp"

namespace mirrorfill {

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    Tensor<T>& grad_buffer()
    {
        if (grad.empty()) {
            grad = Tensor<T>(value.shape());
        }
        return grad;
    }
};

template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Var constant(Tensor<T> value)
    {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(value);
        return Var(std::move(n));
    }

    static Var leaf(Tensor<T> value, bool requires_grad = true)
    {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(value);
        n->requires_grad = requires_grad;
        return Var(std::move(n));
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    T item() const { return node_->value.item(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    /// Gradient accumulated by backward(); zeros if nothing reached this node.
    const Tensor<T>& grad() const { return node_->grad_buffer(); }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad = Tensor<T>(); }

    /// Back-propagates from a scalar (single element) output.
    void backward() const;

    const std::shared_ptr<Node<T>>& node() const { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

namespace ag {

/// Builds an op node. `backward` runs only when some input needs a gradient;
/// it reads self.grad and accumulates into self.inputs[i]->grad_buffer().
template <typename T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward);

template <typename T>
Var<T> detach(const Var<T>& a)
{
    return Var<T>::constant(a.value());
}

// Elementwise, identical shapes.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> add_scalar(const Var<T>& a, T s);
/// 1 - a
template <typename T> Var<T> one_minus(const Var<T>& a);
template <typename T> Var<T> square(const Var<T>& a);

// Activations.
template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> leaky_relu(const Var<T>& a, T slope);
template <typename T> Var<T> tanh(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);
/// Gradient passes only strictly inside (lo, hi).
template <typename T> Var<T> clamp(const Var<T>& a, T lo, T hi);

// Reductions to shape {1}.
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
/// mean((a-b)^2)
template <typename T> Var<T> mse(const Var<T>& a, const Var<T>& b);
/// Weighted sum of scalar vars.
template <typename T> Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<T>& weights);

// Channel structure (rank-3 CHW).
template <typename T> Var<T> concat_channels(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> slice_channels(const Var<T>& a, int begin, int count);
/// Repeats a 1-channel tensor to `channels` channels.
template <typename T> Var<T> repeat_channels(const Var<T>& a, int channels);
template <typename T> Var<T> flip_horizontal(const Var<T>& a);

// Convolutions; weights Cout x Cin x K x K (conv), Cin x Cout x K x K (transposed).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad);
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad);

/// Per-channel normalization over the spatial extent with affine gamma/beta (shape {C}).
template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps);

/// Bilinear sampling of `src` (C x Hs x Ws) at the normalized grid (2 x h x w,
/// channel 0 = x, channel 1 = y). Pixel coordinates are (u+1)/2*(extent-1);
/// samples outside the image contribute zero.
template <typename T> Var<T> grid_sample(const Var<T>& src, const Var<T>& grid);

/// Bilinear samples of `src` at fixed pixel coordinates; output C x 1 x L.
/// Points must lie inside the image.
template <typename T>
Var<T> sample_points(const Var<T>& src, const std::vector<std::pair<double, double>>& xy);

/// Mean binary cross-entropy of probabilities against a constant label,
/// with probabilities clamped to [1e-7, 1-1e-7].
template <typename T> Var<T> binary_cross_entropy(const Var<T>& prob, T label);

}  // namespace ag

}  // namespace mirrorfill
