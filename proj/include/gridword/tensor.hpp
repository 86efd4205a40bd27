#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gridword/errors.hpp"

namespace gridword {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense 64-bit float tensor, node in a define-by-run reverse-mode graph.
///
/// Values are immutable after creation except for leaf parameters between
/// optimizer steps; `grad` is written only during backward(). Non-leaf nodes
/// carry the producing operation as `backward_fn` plus strong references to
/// their inputs, so holding the loss root keeps the whole graph alive.
struct Tensor : std::enable_shared_from_this<Tensor> {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;

    std::vector<TensorPtr> parents;
    std::function<void()> backward_fn;

    Tensor(std::vector<double> v, std::vector<int> s, bool req_grad);
    Tensor(const Tensor&) = delete;
    Tensor& operator=(const Tensor&) = delete;

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
    int rows() const;
    int cols() const;
    bool is_leaf() const { return parents.empty(); }

    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols() + c]; }
    double item() const;

    void zero_grad();
    void accumulate_grad(const std::vector<double>& g);

    static TensorPtr zeros(const std::vector<int>& shape, bool requires_grad = false);
    static TensorPtr full(const std::vector<int>& shape, double value, bool requires_grad = false);
    static TensorPtr from(std::vector<double> v, std::vector<int> shape, bool requires_grad = false);
    static TensorPtr scalar(double v, bool requires_grad = false);
};

std::int64_t shape_size(const std::vector<int>& shape);

/// Runs reverse-mode accumulation from a scalar loss. Each reachable node is
/// visited exactly once in reverse topological order; leaves with
/// requires_grad end up holding d(loss)/d(leaf).
void backward(const TensorPtr& loss);

/// Graph recording switch. While disabled, ops compute values but attach no
/// op record (no parents, no backward_fn, requires_grad always false).
bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// Number of op records attached since process start. The inference path is
/// expected to leave this counter untouched.
std::uint64_t graph_records_created();

namespace detail {

/// Allocates the grad buffer with zeros on first touch.
std::vector<double>& ensure_grad(Tensor& t);

/// Builds an op output. With grad recording off (or no parent needing grad)
/// the result is a plain value tensor with no record.
TensorPtr make_node(std::vector<double> values, std::vector<int> shape,
                    std::vector<TensorPtr> parents);

}  // namespace detail

}  // namespace gridword
