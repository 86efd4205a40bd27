#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gridword/tensor.hpp"

namespace gridword {

/// Ordered registry of model state. Params are trainable leaves; buffers are
/// non-trainable state (batch-norm running statistics). Registration order is
/// the canonical serialization order, so construction must be deterministic.
class ParamStore {
public:
    TensorPtr add_param(const std::string& name, TensorPtr t);
    TensorPtr add_buffer(const std::string& name, TensorPtr t);

    TensorPtr find(const std::string& name) const;

    const std::vector<std::pair<std::string, TensorPtr>>& params() const { return params_; }
    const std::vector<std::pair<std::string, TensorPtr>>& buffers() const { return buffers_; }

    std::vector<TensorPtr> param_tensors() const;
    void zero_grad();
    std::int64_t total_param_count() const;

private:
    std::vector<std::pair<std::string, TensorPtr>> params_;
    std::vector<std::pair<std::string, TensorPtr>> buffers_;
};

/// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)); used for dense weights.
TensorPtr xavier_uniform(int rows, int cols, std::mt19937_64& rng);
/// U(-a, a) with a = sqrt(6 / fan_in); used for conv weights ahead of ReLU.
TensorPtr kaiming_conv(int out_ch, int in_ch, int k, std::mt19937_64& rng);
/// N(0, stddev); used for embedding tables.
TensorPtr normal_init(int rows, int cols, double stddev, std::mt19937_64& rng);

}  // namespace gridword
