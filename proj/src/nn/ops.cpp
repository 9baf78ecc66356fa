#include "xlvin/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace xlvin::nn {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<Mat>;
using CMapMat = Eigen::Map<const Mat>;

// Builds the output node; wires parents and the backward closure only when
// some input needs a gradient.
Tensor make_result(Shape shape, std::vector<Scalar> value, std::vector<NodePtr> inputs,
                   std::function<void(Node&)> fn) {
    auto out = std::make_shared<Node>();
    out->shape = std::move(shape);
    out->value = std::move(value);
    bool any = false;
    for (auto& in : inputs) any = any || in->requires_grad;
    if (any) {
        out->requires_grad = true;
        out->parents = std::move(inputs);
        out->backward_fn = std::move(fn);
    }
    return Tensor(std::move(out));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
}

void require_2d(const Tensor& a, const char* op) {
    require(a.dim() == 2, std::string(op) + ": expected a 2-D tensor, got " + shape_str(a.shape()));
}

template <class F>
Tensor unary(const Tensor& a, F forward, std::function<Scalar(Scalar x, Scalar y)> dydx) {
    const auto& x = a.node()->value;
    std::vector<Scalar> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = forward(x[i]);
    auto pa = a.node();
    return make_result(a.shape(), std::move(y), {pa}, [pa, dydx](Node& self) {
        if (!pa->requires_grad) return;
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dydx(pa->value[i], self.value[i]);
    });
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<Scalar> y(a.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) + b.at(i);
    auto pa = a.node(), pb = b.node();
    return make_result(a.shape(), std::move(y), {pa, pb}, [pa, pb](Node& self) {
        for (auto* p : {pa.get(), pb.get()}) {
            if (!p->requires_grad) continue;
            auto& g = p->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<Scalar> y(a.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) - b.at(i);
    auto pa = a.node(), pb = b.node();
    return make_result(a.shape(), std::move(y), {pa, pb}, [pa, pb](Node& self) {
        if (pa->requires_grad) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<Scalar> y(a.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) * b.at(i);
    auto pa = a.node(), pb = b.node();
    return make_result(a.shape(), std::move(y), {pa, pb}, [pa, pb](Node& self) {
        if (pa->requires_grad) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
        }
    });
}

Tensor scale(const Tensor& a, Scalar s) {
    return unary(a, [s](Scalar x) { return x * s; }, [s](Scalar, Scalar) { return s; });
}

Tensor add_scalar(const Tensor& a, Scalar s) {
    return unary(a, [s](Scalar x) { return x + s; }, [](Scalar, Scalar) { return Scalar(1); });
}

Tensor neg(const Tensor& a) { return scale(a, Scalar(-1)); }

Tensor square(const Tensor& a) {
    return unary(a, [](Scalar x) { return x * x; }, [](Scalar x, Scalar) { return 2 * x; });
}

Tensor exp(const Tensor& a) {
    return unary(a, [](Scalar x) { return std::exp(x); }, [](Scalar, Scalar y) { return y; });
}

Tensor log(const Tensor& a) {
    for (auto v : a.data()) require(v > 0, "log: input must be positive");
    return unary(a, [](Scalar x) { return std::log(x); }, [](Scalar x, Scalar) { return 1 / x; });
}

Tensor relu(const Tensor& a) {
    // Gradient at exactly 0 is 0.
    return unary(a, [](Scalar x) { return x > 0 ? x : Scalar(0); },
                 [](Scalar x, Scalar) { return x > 0 ? Scalar(1) : Scalar(0); });
}

Tensor clamp(const Tensor& a, Scalar lo, Scalar hi) {
    require(lo <= hi, "clamp: lo > hi");
    return unary(a, [lo, hi](Scalar x) { return std::clamp(x, lo, hi); },
                 [lo, hi](Scalar x, Scalar) { return (x >= lo && x <= hi) ? Scalar(1) : Scalar(0); });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "minimum");
    std::vector<Scalar> y(a.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(a.at(i), b.at(i));
    auto pa = a.node(), pb = b.node();
    return make_result(a.shape(), std::move(y), {pa, pb}, [pa, pb](Node& self) {
        // Ties go to the first argument.
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            bool first = pa->value[i] <= pb->value[i];
            Node* p = first ? pa.get() : pb.get();
            if (p->requires_grad) p->grad_buffer()[i] += self.grad[i];
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    require(numel_of(shape) == a.numel(), "reshape: element count mismatch");
    auto pa = a.node();
    return make_result(std::move(shape), pa->value, {pa}, [pa](Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
    require(b.size(0) == k, "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<Scalar> y(m * n);
    MapMat(y.data(), m, n).noalias() = CMapMat(a.data().data(), m, k) * CMapMat(b.data().data(), k, n);
    auto pa = a.node(), pb = b.node();
    return make_result({m, n}, std::move(y), {pa, pb}, [pa, pb, m, k, n](Node& self) {
        CMapMat gy(self.grad.data(), m, n);
        if (pa->requires_grad)
            MapMat(pa->grad_buffer().data(), m, k).noalias() += gy * CMapMat(pb->value.data(), k, n).transpose();
        if (pb->requires_grad)
            MapMat(pb->grad_buffer().data(), k, n).noalias() += CMapMat(pa->value.data(), m, k).transpose() * gy;
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_row(matmul(x, w), b); }

Tensor add_row(const Tensor& x, const Tensor& b) {
    require_2d(x, "add_row");
    const std::size_t n = x.size(0), d = x.size(1);
    require(b.numel() == d, "add_row: bias length must equal column count");
    std::vector<Scalar> y(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) y[i * d + j] += b.at(j);
    auto px = x.node(), pb = b.node();
    return make_result(x.shape(), std::move(y), {px, pb}, [px, pb, n, d](Node& self) {
        if (px->requires_grad) {
            auto& g = px->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
        }
    });
}

Tensor sum(const Tensor& a) {
    Scalar s = 0;
    for (auto v : a.data()) s += v;
    auto pa = a.node();
    return make_result({1}, {s}, {pa}, [pa](Node& self) {
        auto& g = pa->grad_buffer();
        for (auto& gi : g) gi += self.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.numel())); }

Tensor sum_cols(const Tensor& a) {
    require_2d(a, "sum_cols");
    const std::size_t n = a.size(0), d = a.size(1);
    std::vector<Scalar> y(n, Scalar(0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) y[i] += a.at(i * d + j);
    auto pa = a.node();
    return make_result({n}, std::move(y), {pa}, [pa, n, d](Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[i];
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps) {
    require(x.dim() == 1 || x.dim() == 2, "layer_norm: expected [d] or [n,d]");
    const std::size_t d = x.shape().back();
    const std::size_t n = x.numel() / d;
    require(gain.numel() == d && bias.numel() == d, "layer_norm: gain/bias length must equal feature size");
    std::vector<Scalar> xhat(x.numel()), inv_std(n), y(x.numel());
    for (std::size_t i = 0; i < n; ++i) {
        const Scalar* row = x.data().data() + i * d;
        Scalar mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<Scalar>(d);
        Scalar var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<Scalar>(d);
        inv_std[i] = Scalar(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[i * d + j] = (row[j] - mu) * inv_std[i];
            y[i * d + j] = gain.at(j) * xhat[i * d + j] + bias.at(j);
        }
    }
    auto px = x.node(), pg = gain.node(), pb = bias.node();
    return make_result(x.shape(), std::move(y), {px, pg, pb},
                       [px, pg, pb, xhat = std::move(xhat), inv_std = std::move(inv_std), n, d](Node& self) {
        const auto& gy = self.grad;
        if (pg->requires_grad) {
            auto& g = pg->grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) g[j] += gy[i * d + j] * xhat[i * d + j];
        }
        if (pb->requires_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) g[j] += gy[i * d + j];
        }
        if (px->requires_grad) {
            auto& g = px->grad_buffer();
            const Scalar inv_d = Scalar(1) / static_cast<Scalar>(d);
            for (std::size_t i = 0; i < n; ++i) {
                Scalar s1 = 0, s2 = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    Scalar gh = gy[i * d + j] * pg->value[j];
                    s1 += gh;
                    s2 += gh * xhat[i * d + j];
                }
                for (std::size_t j = 0; j < d; ++j) {
                    Scalar gh = gy[i * d + j] * pg->value[j];
                    g[i * d + j] += inv_std[i] * (gh - inv_d * s1 - xhat[i * d + j] * inv_d * s2);
                }
            }
        }
    });
}

Tensor softmax(const Tensor& x) {
    require(x.dim() == 1 || x.dim() == 2, "softmax: expected [d] or [n,d]");
    const std::size_t d = x.shape().back();
    const std::size_t n = x.numel() / d;
    std::vector<Scalar> y(x.numel());
    for (std::size_t i = 0; i < n; ++i) {
        const Scalar* row = x.data().data() + i * d;
        Scalar mx = *std::max_element(row, row + d);
        Scalar z = 0;
        for (std::size_t j = 0; j < d; ++j) z += (y[i * d + j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < d; ++j) y[i * d + j] /= z;
    }
    auto px = x.node();
    return make_result(x.shape(), std::move(y), {px}, [px, n, d](Node& self) {
        auto& g = px->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
            Scalar dot = 0;
            for (std::size_t j = 0; j < d; ++j) dot += self.grad[i * d + j] * self.value[i * d + j];
            for (std::size_t j = 0; j < d; ++j)
                g[i * d + j] += self.value[i * d + j] * (self.grad[i * d + j] - dot);
        }
    });
}

Tensor log_softmax(const Tensor& x) {
    require(x.dim() == 1 || x.dim() == 2, "log_softmax: expected [d] or [n,d]");
    const std::size_t d = x.shape().back();
    const std::size_t n = x.numel() / d;
    std::vector<Scalar> y(x.numel());
    for (std::size_t i = 0; i < n; ++i) {
        const Scalar* row = x.data().data() + i * d;
        Scalar mx = *std::max_element(row, row + d);
        Scalar z = 0;
        for (std::size_t j = 0; j < d; ++j) z += std::exp(row[j] - mx);
        Scalar lse = mx + std::log(z);
        for (std::size_t j = 0; j < d; ++j) y[i * d + j] = row[j] - lse;
    }
    auto px = x.node();
    return make_result(x.shape(), std::move(y), {px}, [px, n, d](Node& self) {
        auto& g = px->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
            Scalar gs = 0;
            for (std::size_t j = 0; j < d; ++j) gs += self.grad[i * d + j];
            for (std::size_t j = 0; j < d; ++j)
                g[i * d + j] += self.grad[i * d + j] - std::exp(self.value[i * d + j]) * gs;
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    const std::size_t n = parts.front().size(0);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    std::vector<NodePtr> inputs;
    for (const auto& p : parts) {
        require_2d(p, "concat_cols");
        require(p.size(0) == n, "concat_cols: row counts differ");
        widths.push_back(p.size(1));
        total += p.size(1);
        inputs.push_back(p.node());
    }
    std::vector<Scalar> y(n * total);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto src = parts[k].data();
        for (std::size_t i = 0; i < n; ++i)
            std::copy_n(src.data() + i * widths[k], widths[k], y.data() + i * total + off);
        off += widths[k];
    }
    auto captured = inputs;
    return make_result({n, total}, std::move(y), std::move(inputs), [captured, widths, n, total](Node& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < captured.size(); ++k) {
            if (captured[k]->requires_grad) {
                auto& g = captured[k]->grad_buffer();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += self.grad[i * total + off + j];
            }
            off += widths[k];
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_rows: no inputs");
    const std::size_t d = parts.front().size(1);
    std::vector<std::size_t> rows;
    std::vector<NodePtr> inputs;
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_2d(p, "concat_rows");
        require(p.size(1) == d, "concat_rows: column counts differ");
        rows.push_back(p.size(0));
        total += p.size(0);
        inputs.push_back(p.node());
    }
    std::vector<Scalar> y;
    y.reserve(total * d);
    for (const auto& p : parts) y.insert(y.end(), p.data().begin(), p.data().end());
    auto captured = inputs;
    return make_result({total, d}, std::move(y), std::move(inputs), [captured, rows, d](Node& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < captured.size(); ++k) {
            const std::size_t len = rows[k] * d;
            if (captured[k]->requires_grad) {
                auto& g = captured[k]->grad_buffer();
                for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[off + i];
            }
            off += len;
        }
    });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    require_2d(x, "slice_rows");
    require(begin < end && end <= x.size(0), "slice_rows: bad range");
    const std::size_t d = x.size(1);
    std::vector<Scalar> y(x.data().begin() + begin * d, x.data().begin() + end * d);
    auto px = x.node();
    return make_result({end - begin, d}, std::move(y), {px}, [px, begin, d](Node& self) {
        auto& g = px->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * d + i] += self.grad[i];
    });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
    require_2d(x, "gather_rows");
    require(!rows.empty(), "gather_rows: empty index list");
    const std::size_t n = x.size(0), d = x.size(1);
    std::vector<Scalar> y(rows.size() * d);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        require(rows[r] < n, "gather_rows: index out of range");
        std::copy_n(x.data().data() + rows[r] * d, d, y.data() + r * d);
    }
    auto px = x.node();
    return make_result({rows.size(), d}, std::move(y), {px}, [px, rows, d](Node& self) {
        auto& g = px->grad_buffer();
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t j = 0; j < d; ++j) g[rows[r] * d + j] += self.grad[r * d + j];
    });
}

Tensor pick(const Tensor& x, const std::vector<std::size_t>& cols) {
    require_2d(x, "pick");
    const std::size_t n = x.size(0), d = x.size(1);
    require(cols.size() == n, "pick: need one column index per row");
    std::vector<Scalar> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        require(cols[i] < d, "pick: column out of range");
        y[i] = x.at(i * d + cols[i]);
    }
    auto px = x.node();
    return make_result({n}, std::move(y), {px}, [px, cols, d](Node& self) {
        auto& g = px->grad_buffer();
        for (std::size_t i = 0; i < cols.size(); ++i) g[i * d + cols[i]] += self.grad[i];
    });
}

Tensor segment_max(const Tensor& x, const std::vector<std::size_t>& segment, std::size_t n_segments) {
    require_2d(x, "segment_max");
    const std::size_t e = x.size(0), d = x.size(1);
    require(segment.size() == e, "segment_max: one segment id per row required");
    require(n_segments > 0, "segment_max: need at least one segment");
    constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> argmax(n_segments * d, kNone);
    std::vector<Scalar> y(n_segments * d, Scalar(0));
    for (std::size_t r = 0; r < e; ++r) {
        const std::size_t s = segment[r];
        require(s < n_segments, "segment_max: segment id out of range");
        for (std::size_t j = 0; j < d; ++j) {
            Scalar v = x.at(r * d + j);
            auto& am = argmax[s * d + j];
            if (am == kNone || v > y[s * d + j]) {
                am = r;
                y[s * d + j] = v;
            }
        }
    }
    auto px = x.node();
    return make_result({n_segments, d}, std::move(y), {px}, [px, argmax = std::move(argmax), d](Node& self) {
        auto& g = px->grad_buffer();
        for (std::size_t i = 0; i < argmax.size(); ++i)
            if (argmax[i] != kNone) g[argmax[i] * d + i % d] += self.grad[i];
    });
}

Tensor max_reduce(const Tensor& x) {
    require_2d(x, "max_reduce");
    return reshape(segment_max(x, std::vector<std::size_t>(x.size(0), 0), 1), {x.size(1)});
}

Tensor conv2d(const Tensor& x, const Tensor& kernels) {
    const bool unbatched = x.dim() == 3;
    require(x.dim() == 4 || unbatched, "conv2d: input must be [N,C,H,W] or [C,H,W]");
    require(kernels.dim() == 4 && kernels.size(2) == 3 && kernels.size(3) == 3,
            "conv2d: kernels must be [O,C,3,3]");
    const std::size_t N = unbatched ? 1 : x.size(0);
    const std::size_t C = x.shape()[x.dim() - 3], H = x.shape()[x.dim() - 2], W = x.shape()[x.dim() - 1];
    const std::size_t O = kernels.size(0);
    require(kernels.size(1) == C, "conv2d: channel mismatch, input has " + std::to_string(C) +
                                      " channels, kernels expect " + std::to_string(kernels.size(1)));
    const std::size_t HW = H * W, CK = C * 9;

    // im2col per image: cols[C*9, H*W]; out = K[O, C*9] * cols.
    auto im2col = [=](const Scalar* img, Scalar* cols) {
        for (std::size_t c = 0; c < C; ++c)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    Scalar* dst = cols + ((c * 9) + ky * 3 + kx) * HW;
                    for (std::size_t i = 0; i < H; ++i) {
                        const long si = static_cast<long>(i) + ky - 1;
                        for (std::size_t j = 0; j < W; ++j) {
                            const long sj = static_cast<long>(j) + kx - 1;
                            dst[i * W + j] = (si < 0 || sj < 0 || si >= static_cast<long>(H) || sj >= static_cast<long>(W))
                                                 ? Scalar(0)
                                                 : img[c * HW + si * W + sj];
                        }
                    }
                }
    };

    std::vector<Scalar> cols(N * CK * HW);
    std::vector<Scalar> y(N * O * HW);
    CMapMat K(kernels.data().data(), O, CK);
    for (std::size_t nidx = 0; nidx < N; ++nidx) {
        im2col(x.data().data() + nidx * C * HW, cols.data() + nidx * CK * HW);
        MapMat(y.data() + nidx * O * HW, O, HW).noalias() = K * CMapMat(cols.data() + nidx * CK * HW, CK, HW);
    }
    Shape out_shape = unbatched ? Shape{O, H, W} : Shape{N, O, H, W};
    auto px = x.node(), pk = kernels.node();
    return make_result(std::move(out_shape), std::move(y), {px, pk},
                       [px, pk, cols = std::move(cols), N, C, H, W, O, HW, CK](Node& self) {
        if (pk->requires_grad) {
            MapMat gk(pk->grad_buffer().data(), O, CK);
            for (std::size_t n = 0; n < N; ++n)
                gk.noalias() += CMapMat(self.grad.data() + n * O * HW, O, HW) *
                                CMapMat(cols.data() + n * CK * HW, CK, HW).transpose();
        }
        if (px->requires_grad) {
            auto& gx = px->grad_buffer();
            Mat gcols(CK, HW);
            CMapMat K(pk->value.data(), O, CK);
            for (std::size_t n = 0; n < N; ++n) {
                gcols.noalias() = K.transpose() * CMapMat(self.grad.data() + n * O * HW, O, HW);
                Scalar* gimg = gx.data() + n * C * HW;
                for (std::size_t c = 0; c < C; ++c)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const Scalar* src = gcols.data() + ((c * 9) + ky * 3 + kx) * HW;
                            for (std::size_t i = 0; i < H; ++i) {
                                const long si = static_cast<long>(i) + ky - 1;
                                if (si < 0 || si >= static_cast<long>(H)) continue;
                                for (std::size_t j = 0; j < W; ++j) {
                                    const long sj = static_cast<long>(j) + kx - 1;
                                    if (sj < 0 || sj >= static_cast<long>(W)) continue;
                                    gimg[c * HW + si * W + sj] += src[i * W + j];
                                }
                            }
                        }
            }
        }
    });
}

Tensor global_avg_pool(const Tensor& x) {
    require(x.dim() == 4, "global_avg_pool: expected [N,C,H,W]");
    const std::size_t N = x.size(0), C = x.size(1), HW = x.size(2) * x.size(3);
    std::vector<Scalar> y(N * C, Scalar(0));
    for (std::size_t i = 0; i < N * C; ++i) {
        const Scalar* src = x.data().data() + i * HW;
        Scalar s = 0;
        for (std::size_t k = 0; k < HW; ++k) s += src[k];
        y[i] = s / static_cast<Scalar>(HW);
    }
    auto px = x.node();
    return make_result({N, C}, std::move(y), {px}, [px, HW](Node& self) {
        auto& g = px->grad_buffer();
        const Scalar inv = Scalar(1) / static_cast<Scalar>(HW);
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            for (std::size_t k = 0; k < HW; ++k) g[i * HW + k] += self.grad[i] * inv;
    });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  bool training) {
    require(x.dim() == 4, "batch_norm: expected [N,C,H,W]");
    const std::size_t N = x.size(0), C = x.size(1), HW = x.size(2) * x.size(3);
    require(gamma.numel() == C && beta.numel() == C, "batch_norm: gamma/beta length must equal channels");
    require(stats.running_mean.numel() == C && stats.running_var.numel() == C, "batch_norm: stats size mismatch");
    auto run_mean = stats.running_mean.mutable_data();
    auto run_var = stats.running_var.mutable_data();
    const Scalar count = static_cast<Scalar>(N * HW);
    std::vector<Scalar> mu(C, 0), inv_std(C, 0);
    for (std::size_t c = 0; c < C; ++c) {
        if (training) {
            Scalar m = 0, v = 0;
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t k = 0; k < HW; ++k) m += x.at((n * C + c) * HW + k);
            m /= count;
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t k = 0; k < HW; ++k) {
                    Scalar dlt = x.at((n * C + c) * HW + k) - m;
                    v += dlt * dlt;
                }
            v /= count;
            mu[c] = m;
            inv_std[c] = Scalar(1) / std::sqrt(v + stats.eps);
            const Scalar unbiased = count > 1 ? v * count / (count - 1) : v;
            run_mean[c] = (1 - stats.momentum) * run_mean[c] + stats.momentum * m;
            run_var[c] = (1 - stats.momentum) * run_var[c] + stats.momentum * unbiased;
        } else {
            mu[c] = run_mean[c];
            inv_std[c] = Scalar(1) / std::sqrt(run_var[c] + stats.eps);
        }
    }
    std::vector<Scalar> xhat(x.numel()), y(x.numel());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t k = 0; k < HW; ++k) {
                const std::size_t i = (n * C + c) * HW + k;
                xhat[i] = (x.at(i) - mu[c]) * inv_std[c];
                y[i] = gamma.at(c) * xhat[i] + beta.at(c);
            }
    auto px = x.node(), pg = gamma.node(), pb = beta.node();
    return make_result(x.shape(), std::move(y), {px, pg, pb},
                       [px, pg, pb, xhat = std::move(xhat), inv_std = std::move(inv_std), N, C, HW, training,
                        count](Node& self) {
        const auto& gy = self.grad;
        std::vector<Scalar> sum_g(C, 0), sum_gx(C, 0);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t k = 0; k < HW; ++k) {
                    const std::size_t i = (n * C + c) * HW + k;
                    sum_g[c] += gy[i];
                    sum_gx[c] += gy[i] * xhat[i];
                }
        if (pg->requires_grad) {
            auto& g = pg->grad_buffer();
            for (std::size_t c = 0; c < C; ++c) g[c] += sum_gx[c];
        }
        if (pb->requires_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t c = 0; c < C; ++c) g[c] += sum_g[c];
        }
        if (px->requires_grad) {
            auto& g = px->grad_buffer();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c) {
                    const Scalar gam = pg->value[c];
                    for (std::size_t k = 0; k < HW; ++k) {
                        const std::size_t i = (n * C + c) * HW + k;
                        if (training)
                            g[i] += gam * inv_std[c] * (gy[i] - sum_g[c] / count - xhat[i] * sum_gx[c] / count);
                        else
                            g[i] += gam * inv_std[c] * gy[i];
                    }
                }
        }
    });
}

} // namespace xlvin::nn
