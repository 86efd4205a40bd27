#pragma once

#include <random>

#include "gridword/config.hpp"
#include "gridword/ops.hpp"
#include "gridword/params.hpp"
#include "gridword/tensor.hpp"

namespace gridword {

/// Axis-aligned box in pixel coordinates; (x, y) is the center.
struct BBox {
    double x = 0, y = 0, w = 0, h = 0;
};

struct HeadParams {
    TensorPtr w;  // d x 5
    TensorPtr b;  // 1 x 5
};

HeadParams make_head(ParamStore& store, const Config& cfg, std::mt19937_64& rng);

/// Per-cell linear map to 5 channels followed by sigmoid. Column layout:
/// 0 = coarse score, 1 = x offset, 2 = y offset, 3 = width, 4 = height.
struct HeadOutput {
    TensorPtr maps;  // (w*h) x 5, all values in (0, 1)
};

HeadOutput head_forward(const TensorPtr& visual, const HeadParams& p);

/// Training target: the coarse cell containing the box center, the in-cell
/// offsets in [0, 1), and image-normalized sizes in (0, 1].
struct LocTarget {
    int cx = 0, cy = 0;
    double dx = 0, dy = 0;
    double sw = 0, sh = 0;
};

/// Degenerate size or a center outside the image raises ValidationError.
LocTarget build_target(const BBox& b, const Config& cfg);

struct LossBreakdown {
    TensorPtr cls, off, rgr, giou, total;
};

/// Four-term loss. L_cls is binary cross-entropy summed over all cells
/// against the one-hot coarse map (scores clamped to [1e-12, 1 - 1e-12]);
/// L_off and L_rgr are squared errors read at the coarse cell; L_giou is
/// 1 - GIoU of the box decoded at the coarse cell (or at the current argmax
/// cell with cfg.giou_from_argmax) against the ground truth.
/// total = cls + lambda_off * off + lambda_rgr * rgr + giou.
LossBreakdown loss_terms(const HeadOutput& pred, const LocTarget& target, const BBox& gt,
                         const Config& cfg);

/// Row-major first occurrence of the maximum coarse score.
int argmax_cell(const HeadOutput& pred, const Config& cfg);

/// Box at the argmax cell: ((cx + tx) * W/w, (cy + ty) * H/h, tw * W, th * H).
BBox decode(const HeadOutput& pred, const Config& cfg);

/// Plain-double box overlap measures. iou is in [0, 1]; giou is in (-1, 1]
/// and equals iou - (hull - union) / hull.
double iou(const BBox& a, const BBox& b);
double giou(const BBox& a, const BBox& b);

/// GIoU of a graph-valued box (center/size as 1x1 tensors) against a fixed
/// box, built from min/max/relu primitives so it backpropagates.
TensorPtr giou_graph(const TensorPtr& x, const TensorPtr& y, const TensorPtr& w,
                     const TensorPtr& h, const BBox& fixed);

}  // namespace gridword
