#pragma once

// Pixel-grid counting oracle for IoU/GIoU, shared by the localization unit
// tests and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <random>

#include "gridword/localization.hpp"

namespace gridword::testing {

/// n x n sample points over the joint hull of the pair, half-open membership.
/// For axis-aligned boxes the 2D count factors into per-axis counts, which is
/// what is computed here.
struct PixelOracle {
    double iou, giou;
};

inline PixelOracle pixel_oracle(const BBox& a, const BBox& b, int n = 512) {
    const double ax0 = a.x - a.w / 2, ax1 = a.x + a.w / 2;
    const double ay0 = a.y - a.h / 2, ay1 = a.y + a.h / 2;
    const double bx0 = b.x - b.w / 2, bx1 = b.x + b.w / 2;
    const double by0 = b.y - b.h / 2, by1 = b.y + b.h / 2;
    const double hx0 = std::min(ax0, bx0), hx1 = std::max(ax1, bx1);
    const double hy0 = std::min(ay0, by0), hy1 = std::max(ay1, by1);
    const double cw = (hx1 - hx0) / n, ch = (hy1 - hy0) / n;

    long xa = 0, xb = 0, xi = 0, ya = 0, yb = 0, yi = 0;
    for (int i = 0; i < n; ++i) {
        const double px = hx0 + (i + 0.5) * cw;
        const bool ia = px >= ax0 && px < ax1, ib = px >= bx0 && px < bx1;
        xa += ia;
        xb += ib;
        xi += ia && ib;
        const double py = hy0 + (i + 0.5) * ch;
        const bool ja = py >= ay0 && py < ay1, jb = py >= by0 && py < by1;
        ya += ja;
        yb += jb;
        yi += ja && jb;
    }
    const double ca = static_cast<double>(xa) * ya, cb = static_cast<double>(xb) * yb;
    const double ci = static_cast<double>(xi) * yi;
    const double uni_cells = ca + cb - ci;
    PixelOracle o;
    o.iou = uni_cells > 0 ? ci / uni_cells : 0.0;
    const double uni_area = uni_cells * cw * ch;
    const double hull_area = (hx1 - hx0) * (hy1 - hy0);
    o.giou = o.iou - (hull_area - uni_area) / hull_area;
    return o;
}

inline BBox random_box(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> center(0.0, 64.0), size(2.0, 40.0);
    return {center(rng), center(rng), size(rng), size(rng)};
}

}  // namespace gridword::testing
