#pragma once

#include <cstdint>
#include <vector>

#include "gridword/tensor.hpp"

namespace gridword {

// All ops treat tensors as row-major 2D matrices unless stated otherwise.
// Shape mismatches raise ShapeError; every op both computes values and, when
// grad is enabled and an input requires it, attaches the backward record.

TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr div(const TensorPtr& a, const TensorPtr& b);
TensorPtr add_scalar(const TensorPtr& a, double s);
TensorPtr mul_scalar(const TensorPtr& a, double s);
TensorPtr neg(const TensorPtr& a);
TensorPtr square(const TensorPtr& a);

TensorPtr relu(const TensorPtr& a);
TensorPtr sigmoid(const TensorPtr& a);
TensorPtr exp_op(const TensorPtr& a);
TensorPtr log_op(const TensorPtr& a);

/// Elementwise min/max; at exact ties the gradient flows to the first input.
TensorPtr minimum(const TensorPtr& a, const TensorPtr& b);
TensorPtr maximum(const TensorPtr& a, const TensorPtr& b);
/// Clamp to [lo, hi]; gradient is zero where the clamp is active.
TensorPtr clamp(const TensorPtr& a, double lo, double hi);

/// (p x q) * (q x r) -> p x r.
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
/// (p x q) * (r x q)^T -> p x r. Avoids materializing the transpose.
TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(const TensorPtr& a);

TensorPtr sum(const TensorPtr& a);
TensorPtr reshape(const TensorPtr& a, std::vector<int> new_shape);
TensorPtr concat_rows(const TensorPtr& a, const TensorPtr& b);
TensorPtr concat_cols(const TensorPtr& a, const TensorPtr& b);
TensorPtr slice_rows(const TensorPtr& a, int r0, int r1);
TensorPtr slice_cols(const TensorPtr& a, int c0, int c1);

/// a: p x q, bias: 1 x q, broadcast-added to every row.
TensorPtr add_bias(const TensorPtr& a, const TensorPtr& bias);
/// table: V x d, ids in [0, V) -> len(ids) x d; backward scatters into rows.
TensorPtr embed(const TensorPtr& table, const std::vector<int>& ids);
/// row: 1 x d -> n x d.
TensorPtr repeat_row(const TensorPtr& row, int n);
/// Mean of the rows with mask==1 -> 1 x d. All-zero mask raises MaskError.
TensorPtr masked_mean_rows(const TensorPtr& a, const std::vector<std::uint8_t>& mask);

/// Row-wise softmax over keys. key_mask has one entry per column; masked
/// columns never enter the max/denominator and come out exactly 0.0, so the
/// result is bit-identical under any change to masked columns' scores.
/// A fully masked key set raises MaskError.
TensorPtr softmax_rows(const TensorPtr& scores, const std::vector<std::uint8_t>& key_mask);

/// Row-wise normalization over the feature dim, then gamma/beta (1 x d each).
TensorPtr layer_norm(const TensorPtr& a, const TensorPtr& gamma, const TensorPtr& beta,
                     double eps = 1e-5);

/// Per-channel normalization over spatial positions of a single C x H x W map
/// (stored as a (C*H*W) x 1 tensor plus explicit dims). In training mode uses
/// batch statistics and, unless suppressed, folds them into running buffers
/// with running = (1 - momentum) * running + momentum * batch. In inference
/// mode uses the running buffers.
struct BatchNormState {
    TensorPtr gamma;         // 1 x C, parameter
    TensorPtr beta;          // 1 x C, parameter
    TensorPtr running_mean;  // 1 x C, buffer
    TensorPtr running_var;   // 1 x C, buffer
    double momentum = 0.1;
    double eps = 1e-5;
};
TensorPtr batch_norm_chw(const TensorPtr& x, int C, int H, int W, BatchNormState& bn,
                         bool training, bool update_running_stats);

/// input laid out as (C*H*W) x 1, weight (O*C*k*k) x 1, bias 1 x O.
/// Zero padding, square kernel. Output is (O*Ho*Wo) x 1.
TensorPtr conv2d(const TensorPtr& input, int C, int H, int W, const TensorPtr& weight, int O,
                 int k, const TensorPtr& bias, int stride, int pad);

/// (C*H*W) x 1 feature map -> (H*W) x C rows; row y*W+x holds the channel
/// vector at that cell.
TensorPtr chw_to_rows(const TensorPtr& a, int C, int H, int W);

}  // namespace gridword
