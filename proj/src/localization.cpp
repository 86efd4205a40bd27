#include "gridword/localization.hpp"

#include <algorithm>
#include <cmath>

namespace gridword {

namespace {
constexpr double kLogEps = 1e-12;
}

HeadParams make_head(ParamStore& store, const Config& cfg, std::mt19937_64& rng) {
    HeadParams p;
    p.w = store.add_param("head.w", xavier_uniform(cfg.d, 5, rng));
    // Zero bias means every channel starts at sigmoid(w x) around 0.5. Seeding
    // the score bias at the one-hot prior looks attractive but is unstable in
    // practice: the all-cells-equal score state is a stationary trap for the
    // classification term, and a prior bias parks the model right next to it.
    p.b = store.add_param("head.b", Tensor::zeros({1, 5}));
    return p;
}

HeadOutput head_forward(const TensorPtr& visual, const HeadParams& p) {
    return {sigmoid(add_bias(matmul(visual, p.w), p.b))};
}

LocTarget build_target(const BBox& b, const Config& cfg) {
    if (b.w <= 0 || b.h <= 0) throw ValidationError("degenerate box size");
    if (b.x < 0 || b.x >= cfg.img_w || b.y < 0 || b.y >= cfg.img_h)
        throw ValidationError("box center outside image");
    const double cell_w = static_cast<double>(cfg.img_w) / cfg.grid_w;
    const double cell_h = static_cast<double>(cfg.img_h) / cfg.grid_h;
    LocTarget t;
    t.cx = std::min(static_cast<int>(b.x / cell_w), cfg.grid_w - 1);
    t.cy = std::min(static_cast<int>(b.y / cell_h), cfg.grid_h - 1);
    t.dx = b.x / cell_w - t.cx;
    t.dy = b.y / cell_h - t.cy;
    t.sw = b.w / cfg.img_w;
    t.sh = b.h / cfg.img_h;
    return t;
}

LossBreakdown loss_terms(const HeadOutput& pred, const LocTarget& target, const BBox& gt,
                         const Config& cfg) {
    const int wh = cfg.grid_w * cfg.grid_h;
    if (pred.maps->rows() != wh || pred.maps->cols() != 5)
        throw ShapeError("loss_terms: head output must be (w*h) x 5");

    // Coarse map BCE against the one-hot indicator, summed over cells.
    TensorPtr scores = slice_cols(pred.maps, 0, 1);
    std::vector<double> onehot(static_cast<std::size_t>(wh), 0.0);
    onehot[static_cast<std::size_t>(target.cy) * cfg.grid_w + target.cx] = 1.0;
    TensorPtr c = Tensor::from(std::move(onehot), {wh, 1});
    TensorPtr p = clamp(scores, kLogEps, 1.0 - kLogEps);
    TensorPtr ll = add(mul(c, log_op(p)),
                       mul(add_scalar(neg(c), 1.0), log_op(add_scalar(neg(p), 1.0))));
    TensorPtr cls = neg(sum(ll));

    // Offset and size regression act only at the coarse cell.
    const int idx = target.cy * cfg.grid_w + target.cx;
    TensorPtr row = slice_rows(pred.maps, idx, idx + 1);
    TensorPtr tx = slice_cols(row, 1, 2), ty = slice_cols(row, 2, 3);
    TensorPtr tw = slice_cols(row, 3, 4), th = slice_cols(row, 4, 5);
    TensorPtr off = add(square(add_scalar(tx, -target.dx)), square(add_scalar(ty, -target.dy)));
    TensorPtr rgr = add(square(add_scalar(tw, -target.sw)), square(add_scalar(th, -target.sh)));

    // GIoU of the decoded box. Default reads offsets at the ground-truth cell;
    // the flag switches to the current argmax cell.
    int gx = target.cx, gy = target.cy;
    if (cfg.giou_from_argmax) {
        const int am = argmax_cell(pred, cfg);
        gx = am % cfg.grid_w;
        gy = am / cfg.grid_w;
    }
    const int gidx = gy * cfg.grid_w + gx;
    TensorPtr grow = gidx == idx ? row : slice_rows(pred.maps, gidx, gidx + 1);
    const double cell_w = static_cast<double>(cfg.img_w) / cfg.grid_w;
    const double cell_h = static_cast<double>(cfg.img_h) / cfg.grid_h;
    TensorPtr bx = mul_scalar(add_scalar(slice_cols(grow, 1, 2), gx), cell_w);
    TensorPtr by = mul_scalar(add_scalar(slice_cols(grow, 2, 3), gy), cell_h);
    TensorPtr bw = mul_scalar(slice_cols(grow, 3, 4), cfg.img_w);
    TensorPtr bh = mul_scalar(slice_cols(grow, 4, 5), cfg.img_h);
    TensorPtr gl = add_scalar(neg(giou_graph(bx, by, bw, bh, gt)), 1.0);

    LossBreakdown out;
    out.cls = cls;
    out.off = off;
    out.rgr = rgr;
    out.giou = gl;
    out.total = add(add(cls, gl),
                    add(mul_scalar(off, cfg.lambda_off), mul_scalar(rgr, cfg.lambda_rgr)));
    return out;
}

int argmax_cell(const HeadOutput& pred, const Config& cfg) {
    const int wh = cfg.grid_w * cfg.grid_h;
    int best = 0;
    double best_v = pred.maps->values[0];
    for (int i = 1; i < wh; ++i) {
        const double v = pred.maps->values[static_cast<std::size_t>(i) * 5];
        if (v > best_v) {
            best_v = v;
            best = i;
        }
    }
    return best;
}

BBox decode(const HeadOutput& pred, const Config& cfg) {
    const int idx = argmax_cell(pred, cfg);
    const int cx = idx % cfg.grid_w, cy = idx / cfg.grid_w;
    const double* row = &pred.maps->values[static_cast<std::size_t>(idx) * 5];
    const double cell_w = static_cast<double>(cfg.img_w) / cfg.grid_w;
    const double cell_h = static_cast<double>(cfg.img_h) / cfg.grid_h;
    BBox b;
    b.x = (cx + row[1]) * cell_w;
    b.y = (cy + row[2]) * cell_h;
    b.w = row[3] * cfg.img_w;
    b.h = row[4] * cfg.img_h;
    return b;
}

namespace {

struct Corners {
    double x0, y0, x1, y1;
};

Corners corners(const BBox& b) {
    return {b.x - b.w / 2, b.y - b.h / 2, b.x + b.w / 2, b.y + b.h / 2};
}

}  // namespace

namespace {

// Areas are derived from the same corner arithmetic as the intersection so
// that identical boxes give inter == union bit-for-bit and giou(a,a) == 1.
double corner_area(const Corners& c) { return (c.x1 - c.x0) * (c.y1 - c.y0); }

}  // namespace

double iou(const BBox& a, const BBox& b) {
    const Corners ca = corners(a), cb = corners(b);
    const double iw = std::max(0.0, std::min(ca.x1, cb.x1) - std::max(ca.x0, cb.x0));
    const double ih = std::max(0.0, std::min(ca.y1, cb.y1) - std::max(ca.y0, cb.y0));
    const double inter = iw * ih;
    const double uni = corner_area(ca) + corner_area(cb) - inter;
    return inter / uni;
}

double giou(const BBox& a, const BBox& b) {
    const Corners ca = corners(a), cb = corners(b);
    const double iw = std::max(0.0, std::min(ca.x1, cb.x1) - std::max(ca.x0, cb.x0));
    const double ih = std::max(0.0, std::min(ca.y1, cb.y1) - std::max(ca.y0, cb.y0));
    const double inter = iw * ih;
    const double uni = corner_area(ca) + corner_area(cb) - inter;
    const double hull = (std::max(ca.x1, cb.x1) - std::min(ca.x0, cb.x0)) *
                        (std::max(ca.y1, cb.y1) - std::min(ca.y0, cb.y0));
    return inter / uni - (hull - uni) / hull;
}

TensorPtr giou_graph(const TensorPtr& x, const TensorPtr& y, const TensorPtr& w,
                     const TensorPtr& h, const BBox& fixed) {
    auto half = [&](const TensorPtr& t) { return mul_scalar(t, 0.5); };
    TensorPtr ax0 = sub(x, half(w)), ax1 = add(x, half(w));
    TensorPtr ay0 = sub(y, half(h)), ay1 = add(y, half(h));
    const Corners cb = corners(fixed);
    TensorPtr bx0 = Tensor::scalar(cb.x0), bx1 = Tensor::scalar(cb.x1);
    TensorPtr by0 = Tensor::scalar(cb.y0), by1 = Tensor::scalar(cb.y1);

    TensorPtr iw = relu(sub(minimum(ax1, bx1), maximum(ax0, bx0)));
    TensorPtr ih = relu(sub(minimum(ay1, by1), maximum(ay0, by0)));
    TensorPtr inter = mul(iw, ih);
    TensorPtr uni = sub(add(mul(w, h), Tensor::scalar(fixed.w * fixed.h)), inter);
    TensorPtr hull = mul(sub(maximum(ax1, bx1), minimum(ax0, bx0)),
                         sub(maximum(ay1, by1), minimum(ay0, by0)));
    return sub(div(inter, uni), div(sub(hull, uni), hull));
}

}  // namespace gridword
