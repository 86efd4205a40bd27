#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gridword/tensor.hpp"

namespace gridword::testing {

struct FDReport {
    double max_rel_err = 0.0;
    int coords_checked = 0;
    // Coordinates of the worst disagreement, for diagnostics.
    int worst_leaf = -1;
    int worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Central-difference check of reverse-mode gradients.
///
/// `loss_fn` must rebuild the forward graph from the leaves' current values
/// and return a scalar. Relative error uses a floor in the denominator so
/// near-zero derivative pairs are compared on an absolute scale:
///     rel = |a - n| / max(|a|, |n|, floor)
/// With h = 1e-5 the truncation plus rounding noise of the difference
/// quotient sits well below the floors used by the tests.
///
/// Piecewise-linear ops (relu, masking) make a lone central difference
/// unreliable when some pre-activation lies within h of its kink: the
/// quotient then measures a chord across two linear pieces, not a
/// derivative. When retry_h > 0, any coordinate whose error exceeds
/// retry_threshold is re-measured at the smaller step and the better of
/// the two estimates is kept. A wrong analytic derivative disagrees at
/// every step size, so this only filters kink artifacts.
inline FDReport gradcheck(const std::function<TensorPtr()>& loss_fn,
                          const std::vector<TensorPtr>& leaves, double h = 1e-5,
                          double floor = 1e-6, int max_coords_per_leaf = -1,
                          std::mt19937_64* rng = nullptr, double retry_h = 0.0,
                          double retry_threshold = 1e-4) {
    for (const auto& leaf : leaves) leaf->zero_grad();
    TensorPtr loss = loss_fn();
    backward(loss);

    FDReport rep;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Tensor& leaf = *leaves[li];
        std::vector<int> coords(static_cast<std::size_t>(leaf.size()));
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<int>(i);
        if (max_coords_per_leaf > 0 &&
            static_cast<int>(coords.size()) > max_coords_per_leaf && rng) {
            std::shuffle(coords.begin(), coords.end(), *rng);
            coords.resize(static_cast<std::size_t>(max_coords_per_leaf));
        }
        for (int idx : coords) {
            const double saved = leaf.values[static_cast<std::size_t>(idx)];
            const auto central = [&](double step) {
                NoGradGuard ng;
                leaf.values[static_cast<std::size_t>(idx)] = saved + step;
                const double plus = loss_fn()->item();
                leaf.values[static_cast<std::size_t>(idx)] = saved - step;
                const double minus = loss_fn()->item();
                leaf.values[static_cast<std::size_t>(idx)] = saved;
                return (plus - minus) / (2.0 * step);
            };
            const double analytic =
                leaf.grad.empty() ? 0.0 : leaf.grad[static_cast<std::size_t>(idx)];
            const auto rel_of = [&](double numeric) {
                const double denom =
                    std::max({std::fabs(analytic), std::fabs(numeric), floor});
                return std::fabs(analytic - numeric) / denom;
            };
            double numeric = central(h);
            double rel = rel_of(numeric);
            if (retry_h > 0.0 && rel > retry_threshold) {
                const double numeric2 = central(retry_h);
                const double rel2 = rel_of(numeric2);
                if (rel2 < rel) {
                    rel = rel2;
                    numeric = numeric2;
                }
            }
            ++rep.coords_checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_leaf = static_cast<int>(li);
                rep.worst_index = idx;
                rep.analytic = analytic;
                rep.numeric = numeric;
            }
        }
    }
    return rep;
}

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

}  // namespace gridword::testing
