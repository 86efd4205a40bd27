#pragma once

#include <vector>

#include "gridword/tensor.hpp"

namespace gridword {

/// Adam with bias correction. All parameters share one step counter. A step
/// that sees any non-finite gradient raises NumericError before mutating any
/// state, so a failed step leaves parameters and moments untouched.
class Adam {
public:
    explicit Adam(std::vector<TensorPtr> params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    void step();
    void zero_grad();

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    long steps() const { return t_; }

private:
    std::vector<TensorPtr> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace gridword
