#pragma once

#include <vector>

#include "xlvin/nn/tensor.hpp"

// Differentiable primitives. Every op returns a fresh tensor and leaves its
// inputs untouched. 2-D tensors are row-major [rows, cols].
namespace xlvin::nn {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar s);
Tensor add_scalar(const Tensor& a, Scalar s);
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor clamp(const Tensor& a, Scalar lo, Scalar hi);

Tensor reshape(const Tensor& a, Shape shape);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// x[n,in] * w[in,out] + b[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
// x[n,d] + b[d] broadcast over rows
Tensor add_row(const Tensor& x, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// [n,d] -> [n]
Tensor sum_cols(const Tensor& a);

// Row-wise over the last axis of x[n,d] (or x[d]).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps = 1e-5);
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);

// Concatenate 2-D tensors with equal row counts along columns.
Tensor concat_cols(const std::vector<Tensor>& parts);
// Stack 2-D tensors with equal column counts along rows.
Tensor concat_rows(const std::vector<Tensor>& parts);
// Rows [begin, end) of x[n,d].
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows);
// out[i] = x[i, cols[i]]
Tensor pick(const Tensor& x, const std::vector<std::size_t>& cols);

// Element-wise max of x[e,d] rows grouped by segment id; empty segments
// yield zeros. Ties route the gradient to the first maximal row.
Tensor segment_max(const Tensor& x, const std::vector<std::size_t>& segment, std::size_t n_segments);
// Column-wise max over all rows: [n,d] -> [d].
Tensor max_reduce(const Tensor& x);

// x[N,C,H,W] (or [C,H,W]) with kernels[O,C,3,3], zero padding 1.
Tensor conv2d(const Tensor& x, const Tensor& kernels);
// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& x);

// Running estimates are leaf tensors so they can be checkpointed with the
// parameters; batch_norm in training mode writes them in place.
struct BatchNormStats {
    Tensor running_mean;
    Tensor running_var;
    Scalar momentum = 0.1;
    Scalar eps = 1e-5;

    explicit BatchNormStats(std::size_t channels = 1)
        : running_mean(Tensor::zeros({channels})), running_var(Tensor::full({channels}, Scalar(1))) {}
};

// Per-channel normalization of x[N,C,H,W]. In training mode batch statistics
// are used and the running estimates are updated in `stats`.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  bool training);

} // namespace xlvin::nn
