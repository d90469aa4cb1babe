#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "cyclet/error.hpp"
#include "cyclet/gemm.hpp"
#include "cyclet/tensor.hpp"

namespace cyclet {

enum class OpKind {
    input,
    param,
    dense,
    conv2d,
    depthwise_conv2d,
    pointwise_conv2d,
    max_pool2d,
    global_avg_pool,
    relu,
    add,
    softmax,
    softmax_cross_entropy,
    sum_squares,
    weighted_sum,
};

using NodeId = int;

namespace detail {

// col is [C*k*k, OH*OW]; out-of-bounds taps read as zero.
inline void im2col(const float* x, int C, int H, int W, int k, int stride, int pad,
                   int OH, int OW, float* col) {
    for (int c = 0; c < C; ++c) {
        const float* xc = x + std::size_t(c) * H * W;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                float* row = col + (std::size_t(c) * k * k + std::size_t(ky) * k + kx) * OH * OW;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    float* r = row + std::size_t(oy) * OW;
                    if (iy < 0 || iy >= H) {
                        std::fill(r, r + OW, 0.0f);
                        continue;
                    }
                    const float* xrow = xc + std::size_t(iy) * W;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        r[ox] = (ix >= 0 && ix < W) ? xrow[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

inline void col2im_acc(const float* col, int C, int H, int W, int k, int stride, int pad,
                       int OH, int OW, float* dx) {
    for (int c = 0; c < C; ++c) {
        float* xc = dx + std::size_t(c) * H * W;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const float* row = col + (std::size_t(c) * k * k + std::size_t(ky) * k + kx) * OH * OW;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    const float* r = row + std::size_t(oy) * OW;
                    float* xrow = xc + std::size_t(iy) * W;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < W) xrow[ix] += r[ox];
                    }
                }
            }
        }
    }
}

} // namespace detail

// Recording tape over a fixed op set. One Graph instance records one forward
// computation (typically one mini-batch); backward() sweeps it in reverse.
// Gradients only flow through nodes that can reach a trainable parameter, so
// a frozen backbone costs no backward work at all.
class Graph {
public:
    struct Node {
        OpKind kind;
        std::vector<NodeId> in;
        Tensor value;
        Tensor grad;              // allocated only when on the backward path
        Tensor* param = nullptr;  // param leaves: external storage
        bool trainable = false;
        bool needs_grad = false;
        int i0 = 0, i1 = 0;       // op ints: stride/pad or kernel/stride
        std::vector<int> aux_i;   // argmax indices, class labels
        Tensor aux_t;             // cached probabilities, reduction coefficients
    };

    NodeId input(Tensor x) {
        Node n;
        n.kind = OpKind::input;
        n.value = std::move(x);
        return push(std::move(n));
    }

    // Gradients accumulate into p.g when trainable; p must outlive the graph.
    NodeId param(Tensor& p, bool trainable) {
        Node n;
        n.kind = OpKind::param;
        n.value = p; // snapshot of current values
        n.param = &p;
        n.trainable = trainable;
        n.needs_grad = trainable;
        if (trainable && p.g.empty()) p.alloc_grad();
        return push(std::move(n));
    }

    // x [N,Din] * W [Din,Dout] + b [Dout] -> [N,Dout]
    NodeId dense(NodeId x, NodeId W, NodeId b) {
        const Tensor& xv = value(x);
        const Tensor& wv = value(W);
        const Tensor& bv = value(b);
        if (xv.ndim() != 2 || wv.ndim() != 2 || bv.ndim() != 1)
            fail("dense", "expected x[N,Din], W[Din,Dout], b[Dout]; got " + dims(xv, wv, bv));
        if (xv.dim(1) != wv.dim(0) || wv.dim(1) != bv.dim(0))
            fail("dense", "inner dims disagree: " + dims(xv, wv, bv));
        const int N = xv.dim(0), Din = xv.dim(1), Dout = wv.dim(1);
        Node n = make(OpKind::dense, {x, W, b}, Tensor({N, Dout}));
        for (int i = 0; i < N; ++i)
            std::copy(bv.v.begin(), bv.v.end(), n.value.v.begin() + std::size_t(i) * Dout);
        gemm_nn_acc(xv.v.data(), wv.v.data(), n.value.v.data(), N, Din, Dout);
        return push(std::move(n));
    }

    // x [N,Cin,H,W] * W [Cout,Cin,k,k] + b [Cout], explicit stride/pad.
    NodeId conv2d(NodeId x, NodeId W, NodeId b, int stride, int pad) {
        const Tensor& xv = value(x);
        const Tensor& wv = value(W);
        const Tensor& bv = value(b);
        if (xv.ndim() != 4 || wv.ndim() != 4 || bv.ndim() != 1)
            fail("conv2d", "expected x[N,C,H,W], W[Cout,Cin,k,k], b[Cout]; got " + dims(xv, wv, bv));
        if (xv.dim(1) != wv.dim(1))
            fail("conv2d", "input channels " + std::to_string(xv.dim(1)) + " != kernel channels " +
                               std::to_string(wv.dim(1)));
        if (wv.dim(2) != wv.dim(3)) fail("conv2d", "kernel must be square, got " + shape_str(wv.shape));
        if (wv.dim(0) != bv.dim(0)) fail("conv2d", "bias length != output channels");
        if (stride < 1) fail("conv2d", "stride must be >= 1");
        const int N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), Wd = xv.dim(3);
        const int Cout = wv.dim(0), k = wv.dim(2);
        const int OH = (H + 2 * pad - k) / stride + 1;
        const int OW = (Wd + 2 * pad - k) / stride + 1;
        if (OH < 1 || OW < 1) fail("conv2d", "kernel " + std::to_string(k) + " too large for input " + shape_str(xv.shape));
        Node n = make(OpKind::conv2d, {x, W, b}, Tensor({N, Cout, OH, OW}));
        n.i0 = stride;
        n.i1 = pad;
        const int ckk = Cin * k * k, ohw = OH * OW;
        scratch_.assign(std::size_t(ckk) * ohw, 0.0f);
        for (int ni = 0; ni < N; ++ni) {
            const float* xn = xv.v.data() + std::size_t(ni) * Cin * H * Wd;
            float* yn = n.value.v.data() + std::size_t(ni) * Cout * ohw;
            detail::im2col(xn, Cin, H, Wd, k, stride, pad, OH, OW, scratch_.data());
            for (int c = 0; c < Cout; ++c)
                std::fill(yn + std::size_t(c) * ohw, yn + std::size_t(c + 1) * ohw, bv.v[std::size_t(c)]);
            gemm_nn_acc(wv.v.data(), scratch_.data(), yn, Cout, ckk, ohw);
        }
        return push(std::move(n));
    }

    // x [N,C,H,W] * W [C,k,k] + b [C]; one filter per channel.
    NodeId depthwise_conv2d(NodeId x, NodeId W, NodeId b, int stride, int pad) {
        const Tensor& xv = value(x);
        const Tensor& wv = value(W);
        const Tensor& bv = value(b);
        if (xv.ndim() != 4 || wv.ndim() != 3 || bv.ndim() != 1)
            fail("depthwise_conv2d", "expected x[N,C,H,W], W[C,k,k], b[C]; got " + dims(xv, wv, bv));
        if (xv.dim(1) != wv.dim(0) || wv.dim(0) != bv.dim(0))
            fail("depthwise_conv2d", "channel counts disagree: " + dims(xv, wv, bv));
        if (wv.dim(1) != wv.dim(2)) fail("depthwise_conv2d", "kernel must be square");
        if (stride < 1) fail("depthwise_conv2d", "stride must be >= 1");
        const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), Wd = xv.dim(3);
        const int k = wv.dim(1);
        const int OH = (H + 2 * pad - k) / stride + 1;
        const int OW = (Wd + 2 * pad - k) / stride + 1;
        if (OH < 1 || OW < 1) fail("depthwise_conv2d", "kernel too large for input " + shape_str(xv.shape));
        Node n = make(OpKind::depthwise_conv2d, {x, W, b}, Tensor({N, C, OH, OW}));
        n.i0 = stride;
        n.i1 = pad;
        for (int ni = 0; ni < N; ++ni) {
            for (int c = 0; c < C; ++c) {
                const float* xc = xv.v.data() + (std::size_t(ni) * C + c) * H * Wd;
                const float* wc = wv.v.data() + std::size_t(c) * k * k;
                float* yc = n.value.v.data() + (std::size_t(ni) * C + c) * OH * OW;
                for (int oy = 0; oy < OH; ++oy) {
                    for (int ox = 0; ox < OW; ++ox) {
                        float acc = bv.v[std::size_t(c)];
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= Wd) continue;
                                acc += wc[std::size_t(ky) * k + kx] * xc[std::size_t(iy) * Wd + ix];
                            }
                        }
                        yc[std::size_t(oy) * OW + ox] = acc;
                    }
                }
            }
        }
        return push(std::move(n));
    }

    // 1x1 convolution: x [N,Cin,H,W] * W [Cout,Cin] + b [Cout].
    NodeId pointwise_conv2d(NodeId x, NodeId W, NodeId b) {
        const Tensor& xv = value(x);
        const Tensor& wv = value(W);
        const Tensor& bv = value(b);
        if (xv.ndim() != 4 || wv.ndim() != 2 || bv.ndim() != 1)
            fail("pointwise_conv2d", "expected x[N,C,H,W], W[Cout,Cin], b[Cout]; got " + dims(xv, wv, bv));
        if (xv.dim(1) != wv.dim(1))
            fail("pointwise_conv2d", "input channels " + std::to_string(xv.dim(1)) +
                                         " != kernel channels " + std::to_string(wv.dim(1)));
        if (wv.dim(0) != bv.dim(0)) fail("pointwise_conv2d", "bias length != output channels");
        const int N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), Wd = xv.dim(3);
        const int Cout = wv.dim(0), hw = H * Wd;
        Node n = make(OpKind::pointwise_conv2d, {x, W, b}, Tensor({N, Cout, H, Wd}));
        for (int ni = 0; ni < N; ++ni) {
            const float* xn = xv.v.data() + std::size_t(ni) * Cin * hw;
            float* yn = n.value.v.data() + std::size_t(ni) * Cout * hw;
            for (int c = 0; c < Cout; ++c)
                std::fill(yn + std::size_t(c) * hw, yn + std::size_t(c + 1) * hw, bv.v[std::size_t(c)]);
            gemm_nn_acc(wv.v.data(), xn, yn, Cout, Cin, hw);
        }
        return push(std::move(n));
    }

    NodeId max_pool2d(NodeId x, int k, int stride) {
        const Tensor& xv = value(x);
        if (xv.ndim() != 4) fail("max_pool2d", "expected x[N,C,H,W], got " + shape_str(xv.shape));
        if (k < 1 || stride < 1) fail("max_pool2d", "kernel and stride must be >= 1");
        const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), Wd = xv.dim(3);
        const int OH = (H - k) / stride + 1;
        const int OW = (Wd - k) / stride + 1;
        if (OH < 1 || OW < 1) fail("max_pool2d", "window " + std::to_string(k) + " too large for input " + shape_str(xv.shape));
        Node n = make(OpKind::max_pool2d, {x}, Tensor({N, C, OH, OW}));
        n.i0 = k;
        n.i1 = stride;
        n.aux_i.resize(n.value.v.size());
        std::size_t o = 0;
        for (int ni = 0; ni < N; ++ni) {
            for (int c = 0; c < C; ++c) {
                const std::size_t base = (std::size_t(ni) * C + c) * H * Wd;
                for (int oy = 0; oy < OH; ++oy) {
                    for (int ox = 0; ox < OW; ++ox, ++o) {
                        float best = -std::numeric_limits<float>::infinity();
                        int best_idx = 0;
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy * stride + ky;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ox * stride + kx;
                                const int idx = int(base) + iy * Wd + ix;
                                const float val = xv.v[std::size_t(idx)];
                                if (val > best) { // first max wins on ties
                                    best = val;
                                    best_idx = idx;
                                }
                            }
                        }
                        n.value.v[o] = best;
                        n.aux_i[o] = best_idx;
                    }
                }
            }
        }
        return push(std::move(n));
    }

    NodeId global_avg_pool(NodeId x) {
        const Tensor& xv = value(x);
        if (xv.ndim() != 4) fail("global_avg_pool", "expected x[N,C,H,W], got " + shape_str(xv.shape));
        const int N = xv.dim(0), C = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
        Node n = make(OpKind::global_avg_pool, {x}, Tensor({N, C}));
        for (int ni = 0; ni < N; ++ni) {
            for (int c = 0; c < C; ++c) {
                const float* p = xv.v.data() + (std::size_t(ni) * C + c) * hw;
                float s = 0.0f;
                for (int i = 0; i < hw; ++i) s += p[i];
                n.value.v[std::size_t(ni) * C + c] = s / float(hw);
            }
        }
        return push(std::move(n));
    }

    NodeId relu(NodeId x) {
        const Tensor& xv = value(x);
        Node n = make(OpKind::relu, {x}, Tensor(xv.shape));
        for (std::size_t i = 0; i < xv.v.size(); ++i) n.value.v[i] = xv.v[i] > 0.0f ? xv.v[i] : 0.0f;
        return push(std::move(n));
    }

    NodeId add(NodeId a, NodeId b) {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        if (av.shape != bv.shape)
            fail("add", "shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
        Node n = make(OpKind::add, {a, b}, Tensor(av.shape));
        for (std::size_t i = 0; i < av.v.size(); ++i) n.value.v[i] = av.v[i] + bv.v[i];
        return push(std::move(n));
    }

    // Row-wise softmax over [N,C].
    NodeId softmax(NodeId x) {
        const Tensor& xv = value(x);
        if (xv.ndim() != 2) fail("softmax", "expected [N,C], got " + shape_str(xv.shape));
        const int N = xv.dim(0), C = xv.dim(1);
        Node n = make(OpKind::softmax, {x}, Tensor({N, C}));
        for (int i = 0; i < N; ++i) {
            const float* r = xv.v.data() + std::size_t(i) * C;
            float* y = n.value.v.data() + std::size_t(i) * C;
            float m = r[0];
            for (int c = 1; c < C; ++c) m = std::max(m, r[c]);
            float s = 0.0f;
            for (int c = 0; c < C; ++c) {
                y[c] = std::exp(r[c] - m);
                s += y[c];
            }
            for (int c = 0; c < C; ++c) y[c] /= s;
        }
        return push(std::move(n));
    }

    // Fused softmax + mean negative log-likelihood over the batch.
    NodeId softmax_cross_entropy(NodeId logits, const std::vector<int>& labels) {
        const Tensor& xv = value(logits);
        if (xv.ndim() != 2) fail("softmax_cross_entropy", "expected logits [N,C], got " + shape_str(xv.shape));
        const int N = xv.dim(0), C = xv.dim(1);
        if (int(labels.size()) != N)
            fail("softmax_cross_entropy", "label count " + std::to_string(labels.size()) +
                                              " != batch size " + std::to_string(N));
        for (int l : labels)
            if (l < 0 || l >= C)
                fail("softmax_cross_entropy", "label " + std::to_string(l) + " outside [0," + std::to_string(C) + ")");
        Node n = make(OpKind::softmax_cross_entropy, {logits}, Tensor({1}));
        n.aux_i = labels;
        n.aux_t = Tensor({N, C}); // probabilities, reused by backward
        double total = 0.0;
        for (int i = 0; i < N; ++i) {
            const float* r = xv.v.data() + std::size_t(i) * C;
            float* p = n.aux_t.v.data() + std::size_t(i) * C;
            float m = r[0];
            for (int c = 1; c < C; ++c) m = std::max(m, r[c]);
            float s = 0.0f;
            for (int c = 0; c < C; ++c) {
                p[c] = std::exp(r[c] - m);
                s += p[c];
            }
            for (int c = 0; c < C; ++c) p[c] /= s;
            const float lse = m + std::log(s);
            total += double(lse) - double(r[labels[std::size_t(i)]]);
        }
        n.value.v[0] = float(total / N);
        return push(std::move(n));
    }

    NodeId sum_squares(NodeId x) {
        const Tensor& xv = value(x);
        Node n = make(OpKind::sum_squares, {x}, Tensor({1}));
        double s = 0.0;
        for (float v : xv.v) s += double(v) * double(v);
        n.value.v[0] = float(s);
        return push(std::move(n));
    }

    // Scalar reduction sum_i coeffs[i] * x[i]; test utility for probing Jacobians.
    NodeId weighted_sum(NodeId x, std::vector<float> coeffs) {
        const Tensor& xv = value(x);
        if (coeffs.size() != xv.v.size())
            fail("weighted_sum", "coefficient count " + std::to_string(coeffs.size()) +
                                     " != element count " + std::to_string(xv.v.size()));
        Node n = make(OpKind::weighted_sum, {x}, Tensor({1}));
        const int nc = int(coeffs.size());
        n.aux_t = Tensor({nc}, std::move(coeffs));
        double s = 0.0;
        for (std::size_t i = 0; i < xv.v.size(); ++i) s += double(n.aux_t.v[i]) * double(xv.v[i]);
        n.value.v[0] = float(s);
        return push(std::move(n));
    }

    const Tensor& value(NodeId id) const { return node(id).value; }
    const Tensor& grad(NodeId id) const { return node(id).grad; }
    bool has_grad(NodeId id) const { return !node(id).grad.v.empty(); }
    int size() const { return int(nodes_.size()); }

    // Reverse sweep from a scalar loss. Trainable parameter gradients
    // accumulate into their Tensor::g buffers.
    void backward(NodeId loss) {
        Node& ln = node_mut(loss); // validates the id
        if (ln.value.size() != 1)
            fail("backward", "loss must be a scalar, got " + shape_str(ln.value.shape));
        if (!ln.needs_grad) return; // no trainable parameter reachable
        ln.grad = Tensor(ln.value.shape);
        ln.grad.v[0] = 1.0f;
        for (NodeId id = loss; id >= 0; --id) {
            Node& n = nodes_[std::size_t(id)];
            if (n.grad.v.empty()) continue; // not on the path to the loss
            backprop_node(n);
        }
    }

private:
    std::vector<Node> nodes_;
    std::vector<float> scratch_;
    std::vector<float> scratch2_;

    [[noreturn]] static void fail(const std::string& op, const std::string& msg) {
        throw ShapeError(op + ": " + msg);
    }

    static std::string dims(const Tensor& a, const Tensor& b, const Tensor& c) {
        return shape_str(a.shape) + ", " + shape_str(b.shape) + ", " + shape_str(c.shape);
    }

    const Node& node(NodeId id) const {
        if (id < 0 || id >= int(nodes_.size()))
            throw ShapeError("node id " + std::to_string(id) + " was not produced by this graph");
        return nodes_[std::size_t(id)];
    }

    Node& node_mut(NodeId id) { return const_cast<Node&>(node(id)); }

    Node make(OpKind kind, std::vector<NodeId> in, Tensor out) {
        Node n;
        n.kind = kind;
        n.in = std::move(in);
        n.value = std::move(out);
        for (NodeId i : n.in)
            if (node(i).needs_grad) n.needs_grad = true;
        return n;
    }

    NodeId push(Node n) {
        nodes_.push_back(std::move(n));
        return int(nodes_.size()) - 1;
    }

    Tensor& grad_buf(NodeId id) {
        Node& n = nodes_[std::size_t(id)];
        if (n.grad.v.empty()) n.grad = Tensor(n.value.shape);
        return n.grad;
    }

    bool wants_grad(NodeId id) const { return nodes_[std::size_t(id)].needs_grad; }

    void backprop_node(Node& n) {
        switch (n.kind) {
        case OpKind::input:
            break;
        case OpKind::param:
            if (n.trainable) {
                if (n.param->g.empty()) n.param->alloc_grad();
                for (std::size_t i = 0; i < n.grad.v.size(); ++i) n.param->g[i] += n.grad.v[i];
            }
            break;
        case OpKind::dense: {
            const Tensor& xv = nodes_[std::size_t(n.in[0])].value;
            const Tensor& wv = nodes_[std::size_t(n.in[1])].value;
            const int N = xv.dim(0), Din = xv.dim(1), Dout = wv.dim(1);
            if (wants_grad(n.in[0]))
                gemm_nt_acc(n.grad.v.data(), wv.v.data(), grad_buf(n.in[0]).v.data(), N, Dout, Din);
            if (wants_grad(n.in[1]))
                gemm_tn_acc(xv.v.data(), n.grad.v.data(), grad_buf(n.in[1]).v.data(), Din, N, Dout);
            if (wants_grad(n.in[2])) {
                float* db = grad_buf(n.in[2]).v.data();
                for (int i = 0; i < N; ++i) {
                    const float* row = n.grad.v.data() + std::size_t(i) * Dout;
                    for (int j = 0; j < Dout; ++j) db[j] += row[j];
                }
            }
            break;
        }
        case OpKind::conv2d: {
            const Tensor& xv = nodes_[std::size_t(n.in[0])].value;
            const Tensor& wv = nodes_[std::size_t(n.in[1])].value;
            const int N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), Wd = xv.dim(3);
            const int Cout = wv.dim(0), k = wv.dim(2);
            const int stride = n.i0, pad = n.i1;
            const int OH = n.value.dim(2), OW = n.value.dim(3);
            const int ckk = Cin * k * k, ohw = OH * OW;
            const bool dx = wants_grad(n.in[0]), dw = wants_grad(n.in[1]), db = wants_grad(n.in[2]);
            if (dx || dw) scratch_.assign(std::size_t(ckk) * ohw, 0.0f);
            if (dx) scratch2_.assign(std::size_t(ckk) * ohw, 0.0f);
            for (int ni = 0; ni < N; ++ni) {
                const float* xn = xv.v.data() + std::size_t(ni) * Cin * H * Wd;
                const float* gyn = n.grad.v.data() + std::size_t(ni) * Cout * ohw;
                if (dw || dx)
                    detail::im2col(xn, Cin, H, Wd, k, stride, pad, OH, OW, scratch_.data());
                if (dw)
                    gemm_nt_acc(gyn, scratch_.data(), grad_buf(n.in[1]).v.data(), Cout, ohw, ckk);
                if (dx) {
                    std::fill(scratch2_.begin(), scratch2_.end(), 0.0f);
                    gemm_tn_acc(wv.v.data(), gyn, scratch2_.data(), ckk, Cout, ohw);
                    float* gxn = grad_buf(n.in[0]).v.data() + std::size_t(ni) * Cin * H * Wd;
                    detail::col2im_acc(scratch2_.data(), Cin, H, Wd, k, stride, pad, OH, OW, gxn);
                }
                if (db) {
                    float* gb = grad_buf(n.in[2]).v.data();
                    for (int c = 0; c < Cout; ++c) {
                        const float* row = gyn + std::size_t(c) * ohw;
                        float s = 0.0f;
                        for (int i = 0; i < ohw; ++i) s += row[i];
                        gb[c] += s;
                    }
                }
            }
            break;
        }
        case OpKind::depthwise_conv2d: {
            const Tensor& xv = nodes_[std::size_t(n.in[0])].value;
            const Tensor& wv = nodes_[std::size_t(n.in[1])].value;
            const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), Wd = xv.dim(3);
            const int k = wv.dim(1), stride = n.i0, pad = n.i1;
            const int OH = n.value.dim(2), OW = n.value.dim(3);
            const bool dx = wants_grad(n.in[0]), dw = wants_grad(n.in[1]), db = wants_grad(n.in[2]);
            for (int ni = 0; ni < N; ++ni) {
                for (int c = 0; c < C; ++c) {
                    const float* xc = xv.v.data() + (std::size_t(ni) * C + c) * H * Wd;
                    const float* wc = wv.v.data() + std::size_t(c) * k * k;
                    const float* gy = n.grad.v.data() + (std::size_t(ni) * C + c) * OH * OW;
                    float* gx = dx ? grad_buf(n.in[0]).v.data() + (std::size_t(ni) * C + c) * H * Wd : nullptr;
                    float* gw = dw ? grad_buf(n.in[1]).v.data() + std::size_t(c) * k * k : nullptr;
                    float gbsum = 0.0f;
                    for (int oy = 0; oy < OH; ++oy) {
                        for (int ox = 0; ox < OW; ++ox) {
                            const float go = gy[std::size_t(oy) * OW + ox];
                            gbsum += go;
                            for (int ky = 0; ky < k; ++ky) {
                                const int iy = oy * stride - pad + ky;
                                if (iy < 0 || iy >= H) continue;
                                for (int kx = 0; kx < k; ++kx) {
                                    const int ix = ox * stride - pad + kx;
                                    if (ix < 0 || ix >= Wd) continue;
                                    if (gw) gw[std::size_t(ky) * k + kx] += go * xc[std::size_t(iy) * Wd + ix];
                                    if (gx) gx[std::size_t(iy) * Wd + ix] += go * wc[std::size_t(ky) * k + kx];
                                }
                            }
                        }
                    }
                    if (db) grad_buf(n.in[2]).v[std::size_t(c)] += gbsum;
                }
            }
            break;
        }
        case OpKind::pointwise_conv2d: {
            const Tensor& xv = nodes_[std::size_t(n.in[0])].value;
            const Tensor& wv = nodes_[std::size_t(n.in[1])].value;
            const int N = xv.dim(0), Cin = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
            const int Cout = wv.dim(0);
            for (int ni = 0; ni < N; ++ni) {
                const float* xn = xv.v.data() + std::size_t(ni) * Cin * hw;
                const float* gyn = n.grad.v.data() + std::size_t(ni) * Cout * hw;
                if (wants_grad(n.in[0]))
                    gemm_tn_acc(wv.v.data(), gyn, grad_buf(n.in[0]).v.data() + std::size_t(ni) * Cin * hw,
                                Cin, Cout, hw);
                if (wants_grad(n.in[1]))
                    gemm_nt_acc(gyn, xn, grad_buf(n.in[1]).v.data(), Cout, hw, Cin);
                if (wants_grad(n.in[2])) {
                    float* gb = grad_buf(n.in[2]).v.data();
                    for (int c = 0; c < Cout; ++c) {
                        const float* row = gyn + std::size_t(c) * hw;
                        float s = 0.0f;
                        for (int i = 0; i < hw; ++i) s += row[i];
                        gb[c] += s;
                    }
                }
            }
            break;
        }
        case OpKind::max_pool2d:
            if (wants_grad(n.in[0])) {
                float* gx = grad_buf(n.in[0]).v.data();
                for (std::size_t o = 0; o < n.grad.v.size(); ++o)
                    gx[std::size_t(n.aux_i[o])] += n.grad.v[o];
            }
            break;
        case OpKind::global_avg_pool:
            if (wants_grad(n.in[0])) {
                const Tensor& xv = nodes_[std::size_t(n.in[0])].value;
                const int N = xv.dim(0), C = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
                float* gx = grad_buf(n.in[0]).v.data();
                for (int ni = 0; ni < N; ++ni) {
                    for (int c = 0; c < C; ++c) {
                        const float go = n.grad.v[std::size_t(ni) * C + c] / float(hw);
                        float* p = gx + (std::size_t(ni) * C + c) * hw;
                        for (int i = 0; i < hw; ++i) p[i] += go;
                    }
                }
            }
            break;
        case OpKind::relu:
            if (wants_grad(n.in[0])) {
                float* gx = grad_buf(n.in[0]).v.data();
                for (std::size_t i = 0; i < n.grad.v.size(); ++i)
                    if (n.value.v[i] > 0.0f) gx[i] += n.grad.v[i];
            }
            break;
        case OpKind::add:
            for (int side = 0; side < 2; ++side) {
                if (!wants_grad(n.in[std::size_t(side)])) continue;
                float* g = grad_buf(n.in[std::size_t(side)]).v.data();
                for (std::size_t i = 0; i < n.grad.v.size(); ++i) g[i] += n.grad.v[i];
            }
            break;
        case OpKind::softmax:
            if (wants_grad(n.in[0])) {
                const int N = n.value.dim(0), C = n.value.dim(1);
                float* gx = grad_buf(n.in[0]).v.data();
                for (int i = 0; i < N; ++i) {
                    const float* y = n.value.v.data() + std::size_t(i) * C;
                    const float* gy = n.grad.v.data() + std::size_t(i) * C;
                    float dot = 0.0f;
                    for (int c = 0; c < C; ++c) dot += gy[c] * y[c];
                    float* g = gx + std::size_t(i) * C;
                    for (int c = 0; c < C; ++c) g[c] += y[c] * (gy[c] - dot);
                }
            }
            break;
        case OpKind::softmax_cross_entropy:
            if (wants_grad(n.in[0])) {
                const int N = n.aux_t.dim(0), C = n.aux_t.dim(1);
                const float go = n.grad.v[0] / float(N);
                float* gx = grad_buf(n.in[0]).v.data();
                for (int i = 0; i < N; ++i) {
                    const float* p = n.aux_t.v.data() + std::size_t(i) * C;
                    float* g = gx + std::size_t(i) * C;
                    for (int c = 0; c < C; ++c) g[c] += go * p[c];
                    g[n.aux_i[std::size_t(i)]] -= go;
                }
            }
            break;
        case OpKind::sum_squares:
            if (wants_grad(n.in[0])) {
                const Tensor& xv = nodes_[std::size_t(n.in[0])].value;
                float* gx = grad_buf(n.in[0]).v.data();
                for (std::size_t i = 0; i < xv.v.size(); ++i) gx[i] += n.grad.v[0] * 2.0f * xv.v[i];
            }
            break;
        case OpKind::weighted_sum:
            if (wants_grad(n.in[0])) {
                float* gx = grad_buf(n.in[0]).v.data();
                for (std::size_t i = 0; i < n.aux_t.v.size(); ++i) gx[i] += n.grad.v[0] * n.aux_t.v[i];
            }
            break;
        }
    }
};

} // namespace cyclet
