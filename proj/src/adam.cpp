#include "gridword/adam.hpp"

#include <cmath>
#include <utility>

namespace gridword {

Adam::Adam(std::vector<TensorPtr> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(static_cast<std::size_t>(params_[i]->size()), 0.0);
        v_[i].assign(static_cast<std::size_t>(params_[i]->size()), 0.0);
    }
}

void Adam::step() {
    // A parameter untouched by the last graph has an empty grad; that is a
    // zero gradient, not an error. Non-finite entries abort before mutation.
    for (const auto& p : params_)
        for (double g : p->grad)
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in optimizer step");

    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = *params_[i];
        const bool has_grad = !p.grad.empty();
        for (std::size_t j = 0; j < m_[i].size(); ++j) {
            const double g = has_grad ? p.grad[j] : 0.0;
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            p.values[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::zero_grad() {
    for (const auto& p : params_) p->zero_grad();
}

}  // namespace gridword
