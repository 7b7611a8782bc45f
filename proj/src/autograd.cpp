#include "mirrorfill/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_set>

namespace mirrorfill {

template <typename T>
void Var<T>::backward() const
{
    if (node_->value.size() != 1) {
        throw DimensionError("backward() requires a scalar output, got " + shape_str(node_->value.shape()));
    }
    if (!node_->requires_grad) {
        return;
    }
    // Iterative post-order over nodes that need gradients.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            Node<T>* child = n->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->grad_buffer()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward && !n->grad.empty()) {
            n->backward(*n);
        }
    }
}

namespace ag {

template <typename T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward)
{
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    bool any = false;
    for (const auto& in : inputs) {
        any = any || in.requires_grad();
    }
    if (any) {
        n->requires_grad = true;
        n->inputs.reserve(inputs.size());
        for (auto& in : inputs) {
            n->inputs.push_back(in.node());
        }
        n->backward = std::move(backward);
    }
    return Var<T>(std::move(n));
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Eigen's kernels take different paths (peeling, packet vs scalar tails)
// depending on operand addresses. Products therefore read from aligned
// storage and write through plain loops, so results do not depend on where
// a tensor happens to be allocated.
template <typename T>
using AlignedMap = Eigen::Map<const RowMat<T>, Eigen::AlignedMax>;

template <typename T>
class Operand {
public:
    Operand(const T* p, int rows, int cols) : ptr_(p), rows_(rows), cols_(cols)
    {
        if (reinterpret_cast<std::uintptr_t>(p) % EIGEN_MAX_ALIGN_BYTES != 0) {
            copy_ = Eigen::Map<const RowMat<T>>(p, rows, cols);
            ptr_ = copy_.data();
        }
    }
    AlignedMap<T> map() const { return AlignedMap<T>(ptr_, rows_, cols_); }

private:
    RowMat<T> copy_;
    const T* ptr_;
    int rows_, cols_;
};

/// dst = op(a) * op(b), or dst += ... with `accumulate`; op transposes when asked.
template <typename T>
void matmul(T* dst, bool accumulate, const Operand<T>& a, bool ta, const Operand<T>& b, bool tb)
{
    RowMat<T> out;
    if (ta && tb) {
        out.noalias() = a.map().transpose() * b.map().transpose();
    } else if (ta) {
        out.noalias() = a.map().transpose() * b.map();
    } else if (tb) {
        out.noalias() = a.map() * b.map().transpose();
    } else {
        out.noalias() = a.map() * b.map();
    }
    const T* src = out.data();
    const std::size_t n = static_cast<std::size_t>(out.size());
    if (accumulate) {
        for (std::size_t i = 0; i < n; ++i) {
            dst[i] += src[i];
        }
    } else {
        std::copy(src, src + n, dst);
    }
}

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward)
{
    return make_node<T>(std::move(value), std::move(inputs), std::move(backward));
}

template <typename T>
bool wants(const Node<T>& self, std::size_t i)
{
    return self.inputs[i]->requires_grad;
}

template <typename T>
Tensor<T>& grad_of(Node<T>& self, std::size_t i)
{
    return self.inputs[i]->grad_buffer();
}

template <typename T>
void require_rank3(const Tensor<T>& t, const char* what)
{
    if (t.rank() != 3) {
        throw DimensionError(std::string(what) + ": expected C x H x W tensor, got " + shape_str(t.shape()));
    }
}

template <typename T>
void im2col(const T* x, int c_in, int h, int w, int k, int stride, int pad, int ho, int wo, T* col)
{
    const int n = ho * wo;
    for (int c = 0; c < c_in; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                T* dst = col + static_cast<std::size_t>((c * k + ki) * k + kj) * n;
                for (int oh = 0; oh < ho; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    T* row = dst + oh * wo;
                    if (ih < 0 || ih >= h) {
                        std::fill(row, row + wo, T(0));
                        continue;
                    }
                    const T* src = x + (static_cast<std::size_t>(c) * h + ih) * w;
                    for (int ow = 0; ow < wo; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        row[ow] = (iw >= 0 && iw < w) ? src[iw] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* col, int c_in, int h, int w, int k, int stride, int pad, int ho, int wo, T* x)
{
    const int n = ho * wo;
    for (int c = 0; c < c_in; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const T* src = col + static_cast<std::size_t>((c * k + ki) * k + kj) * n;
                for (int oh = 0; oh < ho; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= h) {
                        continue;
                    }
                    T* dst = x + (static_cast<std::size_t>(c) * h + ih) * w;
                    const T* row = src + oh * wo;
                    for (int ow = 0; ow < wo; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        if (iw >= 0 && iw < w) {
                            dst[iw] += row[ow];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
Var<T> unary(const Var<T>& a, T (*f)(T), T (*df)(T x, T y))
{
    const Tensor<T>& x = a.value();
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = f(x[i]);
    }
    return make_op<T>(std::move(y), {a}, [df](Node<T>& self) {
        const Tensor<T>& x = self.inputs[0]->value;
        Tensor<T>& gx = grad_of(self, 0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            gx[i] += self.grad[i] * df(x[i], self.value[i]);
        }
    });
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b)
{
    require_same_shape(a.value(), b.value(), "add");
    Tensor<T> y(a.shape());
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = a.value()[i] + b.value()[i];
    }
    return make_op<T>(std::move(y), {a, b}, [](Node<T>& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (wants(self, k)) {
                Tensor<T>& g = grad_of(self, k);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    g[i] += self.grad[i];
                }
            }
        }
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b)
{
    require_same_shape(a.value(), b.value(), "sub");
    Tensor<T> y(a.shape());
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = a.value()[i] - b.value()[i];
    }
    return make_op<T>(std::move(y), {a, b}, [](Node<T>& self) {
        if (wants(self, 0)) {
            Tensor<T>& g = grad_of(self, 0);
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i];
            }
        }
        if (wants(self, 1)) {
            Tensor<T>& g = grad_of(self, 1);
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] -= self.grad[i];
            }
        }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b)
{
    require_same_shape(a.value(), b.value(), "mul");
    Tensor<T> y(a.shape());
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = a.value()[i] * b.value()[i];
    }
    return make_op<T>(std::move(y), {a, b}, [](Node<T>& self) {
        const Tensor<T>& av = self.inputs[0]->value;
        const Tensor<T>& bv = self.inputs[1]->value;
        if (wants(self, 0)) {
            Tensor<T>& g = grad_of(self, 0);
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i] * bv[i];
            }
        }
        if (wants(self, 1)) {
            Tensor<T>& g = grad_of(self, 1);
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i] * av[i];
            }
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s)
{
    Tensor<T> y = map(a.value(), [s](T v) { return v * s; });
    return make_op<T>(std::move(y), {a}, [s](Node<T>& self) {
        Tensor<T>& g = grad_of(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * s;
        }
    });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s)
{
    Tensor<T> y = map(a.value(), [s](T v) { return v + s; });
    return make_op<T>(std::move(y), {a}, [](Node<T>& self) {
        Tensor<T>& g = grad_of(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i];
        }
    });
}

template <typename T>
Var<T> one_minus(const Var<T>& a)
{
    return add_scalar(scale(a, T(-1)), T(1));
}

template <typename T>
Var<T> square(const Var<T>& a)
{
    return unary<T>(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Var<T> relu(const Var<T>& a)
{
    // Written so NaN propagates instead of being flushed to zero.
    return unary<T>(a, [](T x) { return x < T(0) ? T(0) : x; }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope)
{
    const Tensor<T>& x = a.value();
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] > T(0) ? x[i] : slope * x[i];
    }
    return make_op<T>(std::move(y), {a}, [slope](Node<T>& self) {
        const Tensor<T>& x = self.inputs[0]->value;
        Tensor<T>& g = grad_of(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * (x[i] > T(0) ? T(1) : slope);
        }
    });
}

template <typename T>
Var<T> tanh(const Var<T>& a)
{
    return unary<T>(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a)
{
    return unary<T>(
        a,
        [](T x) {
            // Split on sign so exp never overflows.
            if (x >= T(0)) {
                return T(1) / (T(1) + std::exp(-x));
            }
            const T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi)
{
    const Tensor<T>& x = a.value();
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = std::min(std::max(x[i], lo), hi);
    }
    return make_op<T>(std::move(y), {a}, [lo, hi](Node<T>& self) {
        const Tensor<T>& x = self.inputs[0]->value;
        Tensor<T>& g = grad_of(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (x[i] > lo && x[i] < hi) {
                g[i] += self.grad[i];
            }
        }
    });
}

template <typename T>
Var<T> sum(const Var<T>& a)
{
    double s = 0.0;
    for (T v : a.value().vec()) {
        s += v;
    }
    return make_op<T>(Tensor<T>::scalar(static_cast<T>(s)), {a}, [](Node<T>& self) {
        Tensor<T>& g = grad_of(self, 0);
        const T gy = self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += gy;
        }
    });
}

template <typename T>
Var<T> mean(const Var<T>& a)
{
    return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b)
{
    require_same_shape(a.value(), b.value(), "mse");
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
        s += d * d;
    }
    const T inv_n = T(1) / static_cast<T>(av.size());
    return make_op<T>(Tensor<T>::scalar(static_cast<T>(s / static_cast<double>(av.size()))), {a, b},
                      [inv_n](Node<T>& self) {
                          const Tensor<T>& av = self.inputs[0]->value;
                          const Tensor<T>& bv = self.inputs[1]->value;
                          const T k = T(2) * inv_n * self.grad[0];
                          if (wants(self, 0)) {
                              Tensor<T>& g = grad_of(self, 0);
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  g[i] += k * (av[i] - bv[i]);
                              }
                          }
                          if (wants(self, 1)) {
                              Tensor<T>& g = grad_of(self, 1);
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  g[i] -= k * (av[i] - bv[i]);
                              }
                          }
                      });
}

template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<T>& weights)
{
    if (terms.size() != weights.size()) {
        throw DimensionError("weighted_sum: term/weight count mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        s += static_cast<double>(weights[i]) * static_cast<double>(terms[i].item());
    }
    return make_op<T>(Tensor<T>::scalar(static_cast<T>(s)), terms, [weights](Node<T>& self) {
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
            if (wants(self, k)) {
                grad_of(self, k)[0] += weights[k] * self.grad[0];
            }
        }
    });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b)
{
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    require_rank3(av, "concat_channels");
    require_rank3(bv, "concat_channels");
    if (av.height() != bv.height() || av.width() != bv.width()) {
        throw DimensionError("concat_channels: spatial mismatch " + shape_str(av.shape()) + " vs " +
                             shape_str(bv.shape()));
    }
    Tensor<T> y(Shape{av.channels() + bv.channels(), av.height(), av.width()});
    std::copy(av.vec().begin(), av.vec().end(), y.data());
    std::copy(bv.vec().begin(), bv.vec().end(), y.data() + av.size());
    const std::size_t split = av.size();
    return make_op<T>(std::move(y), {a, b}, [split](Node<T>& self) {
        if (wants(self, 0)) {
            Tensor<T>& g = grad_of(self, 0);
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i];
            }
        }
        if (wants(self, 1)) {
            Tensor<T>& g = grad_of(self, 1);
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[split + i];
            }
        }
    });
}

template <typename T>
Var<T> slice_channels(const Var<T>& a, int begin, int count)
{
    const Tensor<T>& av = a.value();
    require_rank3(av, "slice_channels");
    if (begin < 0 || count < 1 || begin + count > av.channels()) {
        throw DimensionError("slice_channels: range out of bounds for " + shape_str(av.shape()));
    }
    const std::size_t plane = static_cast<std::size_t>(av.height()) * av.width();
    Tensor<T> y(Shape{count, av.height(), av.width()});
    std::copy(av.data() + begin * plane, av.data() + (begin + count) * plane, y.data());
    const std::size_t offset = begin * plane;
    return make_op<T>(std::move(y), {a}, [offset](Node<T>& self) {
        Tensor<T>& g = grad_of(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            g[offset + i] += self.grad[i];
        }
    });
}

template <typename T>
Var<T> repeat_channels(const Var<T>& a, int channels)
{
    const Tensor<T>& av = a.value();
    require_rank3(av, "repeat_channels");
    if (av.channels() != 1) {
        throw DimensionError("repeat_channels expects a single-channel tensor, got " + shape_str(av.shape()));
    }
    const std::size_t plane = av.size();
    Tensor<T> y(Shape{channels, av.height(), av.width()});
    for (int c = 0; c < channels; ++c) {
        std::copy(av.vec().begin(), av.vec().end(), y.data() + c * plane);
    }
    return make_op<T>(std::move(y), {a}, [plane, channels](Node<T>& self) {
        Tensor<T>& g = grad_of(self, 0);
        for (int c = 0; c < channels; ++c) {
            for (std::size_t i = 0; i < plane; ++i) {
                g[i] += self.grad[c * plane + i];
            }
        }
    });
}

template <typename T>
Var<T> flip_horizontal(const Var<T>& a)
{
    const Tensor<T>& av = a.value();
    require_rank3(av, "flip_horizontal");
    const int c_n = av.channels(), h = av.height(), w = av.width();
    Tensor<T> y(av.shape());
    for (int c = 0; c < c_n; ++c) {
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                y.at(c, i, j) = av.at(c, i, w - 1 - j);
            }
        }
    }
    return make_op<T>(std::move(y), {a}, [c_n, h, w](Node<T>& self) {
        Tensor<T>& g = grad_of(self, 0);
        for (int c = 0; c < c_n; ++c) {
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < w; ++j) {
                    g.at(c, i, w - 1 - j) += self.grad.at(c, i, j);
                }
            }
        }
    });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad)
{
    const Tensor<T>& xv = x.value();
    const Tensor<T>& wv = w.value();
    require_rank3(xv, "conv2d");
    if (wv.rank() != 4 || wv.dim(1) != xv.channels() || wv.dim(2) != wv.dim(3)) {
        throw DimensionError("conv2d: weight " + shape_str(wv.shape()) + " incompatible with input " +
                             shape_str(xv.shape()));
    }
    const int c_in = xv.channels(), h = xv.height(), wd = xv.width();
    const int c_out = wv.dim(0), k = wv.dim(2);
    const int ho = (h + 2 * pad - k) / stride + 1;
    const int wo = (wd + 2 * pad - k) / stride + 1;
    if (h + 2 * pad < k || wd + 2 * pad < k || ho < 1 || wo < 1) {
        throw DimensionError("conv2d: input " + shape_str(xv.shape()) + " smaller than kernel");
    }
    if (b.value().size() != static_cast<std::size_t>(c_out)) {
        throw DimensionError("conv2d: bias size mismatch");
    }
    const int ckk = c_in * k * k;
    const int n = ho * wo;
    auto col = std::make_shared<std::vector<T>>(static_cast<std::size_t>(ckk) * n);
    im2col(xv.data(), c_in, h, wd, k, stride, pad, ho, wo, col->data());

    Tensor<T> y(Shape{c_out, ho, wo});
    matmul(y.data(), false, Operand<T>(wv.data(), c_out, ckk), false, Operand<T>(col->data(), ckk, n), false);
    const T* bias = b.value().data();
    for (int o = 0; o < c_out; ++o) {
        T* row = y.data() + static_cast<std::size_t>(o) * n;
        for (int i = 0; i < n; ++i) {
            row[i] += bias[o];
        }
    }

    return make_op<T>(std::move(y), {x, w, b},
                      [col, c_in, h, wd, k, stride, pad, ho, wo, c_out, ckk, n](Node<T>& self) {
                          const Operand<T> gy(self.grad.data(), c_out, n);
                          if (wants(self, 1)) {
                              matmul(grad_of(self, 1).data(), true, gy, false, Operand<T>(col->data(), ckk, n), true);
                          }
                          if (wants(self, 2)) {
                              Tensor<T>& gb = grad_of(self, 2);
                              for (int o = 0; o < c_out; ++o) {
                                  double acc = 0.0;
                                  const T* row = self.grad.data() + static_cast<std::size_t>(o) * n;
                                  for (int i = 0; i < n; ++i) {
                                      acc += row[i];
                                  }
                                  gb[o] += static_cast<T>(acc);
                              }
                          }
                          if (wants(self, 0)) {
                              std::vector<T> gcol(static_cast<std::size_t>(ckk) * n);
                              matmul(gcol.data(), false, Operand<T>(self.inputs[1]->value.data(), c_out, ckk), true, gy,
                                     false);
                              col2im(gcol.data(), c_in, h, wd, k, stride, pad, ho, wo, grad_of(self, 0).data());
                          }
                      });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad)
{
    const Tensor<T>& xv = x.value();
    const Tensor<T>& wv = w.value();
    require_rank3(xv, "conv_transpose2d");
    if (wv.rank() != 4 || wv.dim(0) != xv.channels() || wv.dim(2) != wv.dim(3)) {
        throw DimensionError("conv_transpose2d: weight " + shape_str(wv.shape()) + " incompatible with input " +
                             shape_str(xv.shape()));
    }
    const int c_in = xv.channels(), hi = xv.height(), wi = xv.width();
    const int c_out = wv.dim(1), k = wv.dim(2);
    const int ho = (hi - 1) * stride - 2 * pad + k;
    const int wo = (wi - 1) * stride - 2 * pad + k;
    if (ho < 1 || wo < 1) {
        throw DimensionError("conv_transpose2d: empty output");
    }
    if (b.value().size() != static_cast<std::size_t>(c_out)) {
        throw DimensionError("conv_transpose2d: bias size mismatch");
    }
    const int okk = c_out * k * k;
    const int n = hi * wi;

    std::vector<T> col(static_cast<std::size_t>(okk) * n);
    matmul(col.data(), false, Operand<T>(wv.data(), c_in, okk), true, Operand<T>(xv.data(), c_in, n), false);
    Tensor<T> y(Shape{c_out, ho, wo});
    col2im(col.data(), c_out, ho, wo, k, stride, pad, hi, wi, y.data());
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    for (int o = 0; o < c_out; ++o) {
        const T bo = b.value()[o];
        T* p = y.data() + o * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            p[i] += bo;
        }
    }

    return make_op<T>(std::move(y), {x, w, b}, [c_in, hi, wi, k, stride, pad, ho, wo, c_out, okk, n](Node<T>& self) {
        const bool need_x = wants(self, 0);
        const bool need_w = wants(self, 1);
        if (wants(self, 2)) {
            Tensor<T>& gb = grad_of(self, 2);
            const std::size_t plane = static_cast<std::size_t>(ho) * wo;
            for (int o = 0; o < c_out; ++o) {
                double s = 0.0;
                const T* p = self.grad.data() + o * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    s += p[i];
                }
                gb[o] += static_cast<T>(s);
            }
        }
        if (!need_x && !need_w) {
            return;
        }
        std::vector<T> gcol(static_cast<std::size_t>(okk) * n);
        im2col(self.grad.data(), c_out, ho, wo, k, stride, pad, hi, wi, gcol.data());
        const Operand<T> gc(gcol.data(), okk, n);
        if (need_w) {
            matmul(grad_of(self, 1).data(), true, Operand<T>(self.inputs[0]->value.data(), c_in, n), false, gc, true);
        }
        if (need_x) {
            matmul(grad_of(self, 0).data(), true, Operand<T>(self.inputs[1]->value.data(), c_in, okk), false, gc, false);
        }
    });
}

template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps)
{
    const Tensor<T>& xv = x.value();
    require_rank3(xv, "instance_norm");
    const int c_n = xv.channels();
    if (gamma.value().size() != static_cast<std::size_t>(c_n) || beta.value().size() != static_cast<std::size_t>(c_n)) {
        throw DimensionError("instance_norm: affine parameter size mismatch");
    }
    const std::size_t plane = static_cast<std::size_t>(xv.height()) * xv.width();
    auto xhat = std::make_shared<Tensor<T>>(xv.shape());
    auto inv_std = std::make_shared<std::vector<T>>(c_n);
    Tensor<T> y(xv.shape());
    for (int c = 0; c < c_n; ++c) {
        const T* p = xv.data() + c * plane;
        double m = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            m += p[i];
        }
        m /= static_cast<double>(plane);
        double v = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            const double d = p[i] - m;
            v += d * d;
        }
        v /= static_cast<double>(plane);
        const T inv = static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(eps)));
        (*inv_std)[c] = inv;
        const T g = gamma.value()[c], bt = beta.value()[c];
        T* xh = xhat->data() + c * plane;
        T* py = y.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            xh[i] = static_cast<T>((p[i] - m) * inv);
            py[i] = g * xh[i] + bt;
        }
    }
    return make_op<T>(std::move(y), {x, gamma, beta}, [xhat, inv_std, c_n, plane](Node<T>& self) {
        const T* gam = self.inputs[1]->value.data();
        for (int c = 0; c < c_n; ++c) {
            const T* gy = self.grad.data() + c * plane;
            const T* xh = xhat->data() + c * plane;
            double sg = 0.0, sgx = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                sg += gy[i];
                sgx += static_cast<double>(gy[i]) * xh[i];
            }
            if (wants(self, 1)) {
                grad_of(self, 1)[c] += static_cast<T>(sgx);
            }
            if (wants(self, 2)) {
                grad_of(self, 2)[c] += static_cast<T>(sg);
            }
            if (wants(self, 0)) {
                T* gx = grad_of(self, 0).data() + c * plane;
                const double k = static_cast<double>(gam[c]) * (*inv_std)[c] / static_cast<double>(plane);
                const double nn = static_cast<double>(plane);
                for (std::size_t i = 0; i < plane; ++i) {
                    gx[i] += static_cast<T>(k * (nn * gy[i] - sg - xh[i] * sgx));
                }
            }
        }
    });
}

template <typename T>
Var<T> grid_sample(const Var<T>& src, const Var<T>& grid)
{
    const Tensor<T>& sv = src.value();
    const Tensor<T>& gv = grid.value();
    require_rank3(sv, "grid_sample");
    require_rank3(gv, "grid_sample");
    if (gv.channels() != 2) {
        throw DimensionError("grid_sample: grid must have 2 channels, got " + shape_str(gv.shape()));
    }
    const int c_n = sv.channels(), hs = sv.height(), ws = sv.width();
    const int h = gv.height(), w = gv.width();
    const T sx = static_cast<T>(ws - 1) / T(2);
    const T sy = static_cast<T>(hs - 1) / T(2);
    const std::size_t src_plane = static_cast<std::size_t>(hs) * ws;
    const std::size_t out_plane = static_cast<std::size_t>(h) * w;

    Tensor<T> y(Shape{c_n, h, w});
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const std::size_t o = static_cast<std::size_t>(i) * w + j;
            const T px = (gv[o] + T(1)) * sx;
            const T py = (gv[out_plane + o] + T(1)) * sy;
            const T fx = std::floor(px), fy = std::floor(py);
            const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
            const T ax = px - fx, ay = py - fy;
            const T wts[4] = {(T(1) - ay) * (T(1) - ax), (T(1) - ay) * ax, ay * (T(1) - ax), ay * ax};
            const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
            const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
            for (int q = 0; q < 4; ++q) {
                if (ys[q] < 0 || ys[q] >= hs || xs[q] < 0 || xs[q] >= ws || wts[q] == T(0)) {
                    continue;
                }
                const std::size_t s = static_cast<std::size_t>(ys[q]) * ws + xs[q];
                for (int c = 0; c < c_n; ++c) {
                    y[c * out_plane + o] += wts[q] * sv[c * src_plane + s];
                }
            }
        }
    }

    return make_op<T>(std::move(y), {src, grid}, [=](Node<T>& self) {
        const Tensor<T>& sv = self.inputs[0]->value;
        const Tensor<T>& gv = self.inputs[1]->value;
        const bool need_src = wants(self, 0);
        const bool need_grid = wants(self, 1);
        T* gs = need_src ? grad_of(self, 0).data() : nullptr;
        T* gg = need_grid ? grad_of(self, 1).data() : nullptr;
        auto fetch = [&](int c, int yy, int xx) -> T {
            if (yy < 0 || yy >= hs || xx < 0 || xx >= ws) {
                return T(0);
            }
            return sv[c * src_plane + static_cast<std::size_t>(yy) * ws + xx];
        };
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const std::size_t o = static_cast<std::size_t>(i) * w + j;
                const T px = (gv[o] + T(1)) * sx;
                const T py = (gv[out_plane + o] + T(1)) * sy;
                const T fx = std::floor(px), fy = std::floor(py);
                const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
                const T ax = px - fx, ay = py - fy;
                T dpx = T(0), dpy = T(0);
                for (int c = 0; c < c_n; ++c) {
                    const T go = self.grad[c * out_plane + o];
                    if (go == T(0)) {
                        continue;
                    }
                    if (need_src) {
                        const T wts[4] = {(T(1) - ay) * (T(1) - ax), (T(1) - ay) * ax, ay * (T(1) - ax), ay * ax};
                        const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
                        const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
                        for (int q = 0; q < 4; ++q) {
                            if (ys[q] >= 0 && ys[q] < hs && xs[q] >= 0 && xs[q] < ws) {
                                gs[c * src_plane + static_cast<std::size_t>(ys[q]) * ws + xs[q]] += go * wts[q];
                            }
                        }
                    }
                    if (need_grid) {
                        const T s00 = fetch(c, y0, x0), s01 = fetch(c, y0, x0 + 1);
                        const T s10 = fetch(c, y0 + 1, x0), s11 = fetch(c, y0 + 1, x0 + 1);
                        dpx += go * ((T(1) - ay) * (s01 - s00) + ay * (s11 - s10));
                        dpy += go * ((T(1) - ax) * (s10 - s00) + ax * (s11 - s01));
                    }
                }
                if (need_grid) {
                    gg[o] += dpx * sx;
                    gg[out_plane + o] += dpy * sy;
                }
            }
        }
    });
}

template <typename T>
Var<T> sample_points(const Var<T>& src, const std::vector<std::pair<double, double>>& xy)
{
    const Tensor<T>& sv = src.value();
    require_rank3(sv, "sample_points");
    const int c_n = sv.channels(), hs = sv.height(), ws = sv.width();
    const int l = static_cast<int>(xy.size());
    if (l == 0) {
        throw DimensionError("sample_points: empty point list");
    }
    struct Tap {
        std::size_t idx[4];
        T wt[4];
    };
    std::vector<Tap> taps(l);
    for (int p = 0; p < l; ++p) {
        const double px = xy[p].first, py = xy[p].second;
        if (!(px >= 0.0 && px <= ws - 1 && py >= 0.0 && py <= hs - 1)) {
            throw DomainError("sample_points: point (" + std::to_string(px) + ", " + std::to_string(py) +
                              ") outside " + std::to_string(ws) + "x" + std::to_string(hs) + " image");
        }
        const int x0 = std::min(static_cast<int>(std::floor(px)), std::max(ws - 2, 0));
        const int y0 = std::min(static_cast<int>(std::floor(py)), std::max(hs - 2, 0));
        const int x1 = std::min(x0 + 1, ws - 1), y1 = std::min(y0 + 1, hs - 1);
        const T ax = static_cast<T>(px - x0), ay = static_cast<T>(py - y0);
        Tap& t = taps[p];
        t.idx[0] = static_cast<std::size_t>(y0) * ws + x0;
        t.idx[1] = static_cast<std::size_t>(y0) * ws + x1;
        t.idx[2] = static_cast<std::size_t>(y1) * ws + x0;
        t.idx[3] = static_cast<std::size_t>(y1) * ws + x1;
        t.wt[0] = (T(1) - ay) * (T(1) - ax);
        t.wt[1] = (T(1) - ay) * ax;
        t.wt[2] = ay * (T(1) - ax);
        t.wt[3] = ay * ax;
    }
    const std::size_t plane = static_cast<std::size_t>(hs) * ws;
    Tensor<T> y(Shape{c_n, 1, l});
    for (int c = 0; c < c_n; ++c) {
        for (int p = 0; p < l; ++p) {
            T v = T(0);
            for (int q = 0; q < 4; ++q) {
                v += taps[p].wt[q] * sv[c * plane + taps[p].idx[q]];
            }
            y[c * l + p] = v;
        }
    }
    return make_op<T>(std::move(y), {src}, [taps, c_n, l, plane](Node<T>& self) {
        Tensor<T>& g = grad_of(self, 0);
        for (int c = 0; c < c_n; ++c) {
            for (int p = 0; p < l; ++p) {
                const T go = self.grad[c * l + p];
                for (int q = 0; q < 4; ++q) {
                    g[c * plane + taps[p].idx[q]] += go * taps[p].wt[q];
                }
            }
        }
    });
}

template <typename T>
Var<T> binary_cross_entropy(const Var<T>& prob, T label)
{
    constexpr double kFloor = 1e-7;
    const Tensor<T>& pv = prob.value();
    double s = 0.0;
    for (T v : pv.vec()) {
        if (!std::isfinite(v)) {
            throw NumericError("binary_cross_entropy: non-finite probability");
        }
        const double p = std::clamp(static_cast<double>(v), kFloor, 1.0 - kFloor);
        s -= label * std::log(p) + (1.0 - label) * std::log(1.0 - p);
    }
    const double n = static_cast<double>(pv.size());
    return make_op<T>(Tensor<T>::scalar(static_cast<T>(s / n)), {prob}, [label, n](Node<T>& self) {
        const Tensor<T>& pv = self.inputs[0]->value;
        Tensor<T>& g = grad_of(self, 0);
        const double gy = self.grad[0] / n;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double p = pv[i];
            if (p <= kFloor || p >= 1.0 - kFloor) {
                continue;
            }
            g[i] += static_cast<T>(-gy * (label / p - (1.0 - label) / (1.0 - p)));
        }
    });
}

#define MIRRORFILL_INSTANTIATE_AG(T)                                                                      \
    template Var<T> make_node(Tensor<T>, std::vector<Var<T>>, std::function<void(Node<T>&)>);             \
    template Var<T> add(const Var<T>&, const Var<T>&);                                                    \
    template Var<T> sub(const Var<T>&, const Var<T>&);                                                    \
    template Var<T> mul(const Var<T>&, const Var<T>&);                                                    \
    template Var<T> scale(const Var<T>&, T);                                                              \
    template Var<T> add_scalar(const Var<T>&, T);                                                         \
    template Var<T> one_minus(const Var<T>&);                                                             \
    template Var<T> square(const Var<T>&);                                                                \
    template Var<T> relu(const Var<T>&);                                                                  \
    template Var<T> leaky_relu(const Var<T>&, T);                                                         \
    template Var<T> tanh(const Var<T>&);                                                                  \
    template Var<T> sigmoid(const Var<T>&);                                                               \
    template Var<T> clamp(const Var<T>&, T, T);                                                           \
    template Var<T> sum(const Var<T>&);                                                                   \
    template Var<T> mean(const Var<T>&);                                                                  \
    template Var<T> mse(const Var<T>&, const Var<T>&);                                                    \
    template Var<T> weighted_sum(const std::vector<Var<T>>&, const std::vector<T>&);                      \
    template Var<T> concat_channels(const Var<T>&, const Var<T>&);                                        \
    template Var<T> slice_channels(const Var<T>&, int, int);                                              \
    template Var<T> repeat_channels(const Var<T>&, int);                                                  \
    template Var<T> flip_horizontal(const Var<T>&);                                                       \
    template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                        \
    template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);              \
    template Var<T> instance_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);                        \
    template Var<T> grid_sample(const Var<T>&, const Var<T>&);                                            \
    template Var<T> sample_points(const Var<T>&, const std::vector<std::pair<double, double>>&);          \
    template Var<T> binary_cross_entropy(const Var<T>&, T);

MIRRORFILL_INSTANTIATE_AG(float)
MIRRORFILL_INSTANTIATE_AG(double)

#undef MIRRORFILL_INSTANTIATE_AG

}  // namespace ag

template class Var<float>;
template class Var<double>;

}  // namespace mirrorfill
