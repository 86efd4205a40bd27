#include "gridword/params.hpp"

#include <cmath>

namespace gridword {

TensorPtr ParamStore::add_param(const std::string& name, TensorPtr t) {
    if (find(name)) throw ConfigError("duplicate state name: " + name);
    t->requires_grad = true;
    params_.emplace_back(name, t);
    return t;
}

TensorPtr ParamStore::add_buffer(const std::string& name, TensorPtr t) {
    if (find(name)) throw ConfigError("duplicate state name: " + name);
    t->requires_grad = false;
    buffers_.emplace_back(name, t);
    return t;
}

TensorPtr ParamStore::find(const std::string& name) const {
    for (const auto& [n, t] : params_)
        if (n == name) return t;
    for (const auto& [n, t] : buffers_)
        if (n == name) return t;
    return nullptr;
}

std::vector<TensorPtr> ParamStore::param_tensors() const {
    std::vector<TensorPtr> out;
    out.reserve(params_.size());
    for (const auto& [n, t] : params_) out.push_back(t);
    return out;
}

void ParamStore::zero_grad() {
    for (const auto& [n, t] : params_) t->zero_grad();
}

std::int64_t ParamStore::total_param_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : params_) n += t->size();
    return n;
}

TensorPtr xavier_uniform(int rows, int cols, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> dist(-a, a);
    std::vector<double> v(static_cast<std::size_t>(rows) * cols);
    for (double& x : v) x = dist(rng);
    return Tensor::from(std::move(v), {rows, cols});
}

TensorPtr kaiming_conv(int out_ch, int in_ch, int k, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / (in_ch * k * k));
    std::uniform_real_distribution<double> dist(-a, a);
    std::vector<double> v(static_cast<std::size_t>(out_ch) * in_ch * k * k);
    for (double& x : v) x = dist(rng);
    return Tensor::from(std::move(v), {out_ch * in_ch * k * k, 1});
}

TensorPtr normal_init(int rows, int cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(static_cast<std::size_t>(rows) * cols);
    for (double& x : v) x = dist(rng);
    return Tensor::from(std::move(v), {rows, cols});
}

}  // namespace gridword
