#include "gridword/tensor.hpp"

#include <unordered_set>
#include <utility>

namespace gridword {

namespace {
bool g_grad_enabled = true;
std::uint64_t g_graph_records = 0;
}  // namespace

std::int64_t shape_size(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<double> v, std::vector<int> s, bool req_grad)
    : shape(std::move(s)), values(std::move(v)), requires_grad(req_grad) {
    if (shape.size() != 2 || shape[0] <= 0 || shape[1] <= 0)
        throw ShapeError("tensor shape must be 2D with positive dims");
    if (shape_size(shape) != static_cast<std::int64_t>(values.size()))
        throw ShapeError("tensor shape does not match value count");
}

int Tensor::rows() const { return shape[0]; }
int Tensor::cols() const { return shape[1]; }

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() requires a 1-element tensor");
    return values[0];
}

void Tensor::zero_grad() { grad.clear(); }

void Tensor::accumulate_grad(const std::vector<double>& g) {
    if (static_cast<std::int64_t>(g.size()) != size())
        throw ShapeError("gradient size does not match tensor size");
    if (grad.empty()) {
        grad = g;
    } else {
        for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
    }
}

TensorPtr Tensor::zeros(const std::vector<int>& shape, bool requires_grad) {
    return std::make_shared<Tensor>(
        std::vector<double>(static_cast<std::size_t>(shape_size(shape)), 0.0), shape,
        requires_grad);
}

TensorPtr Tensor::full(const std::vector<int>& shape, double value, bool requires_grad) {
    return std::make_shared<Tensor>(
        std::vector<double>(static_cast<std::size_t>(shape_size(shape)), value), shape,
        requires_grad);
}

TensorPtr Tensor::from(std::vector<double> v, std::vector<int> shape, bool requires_grad) {
    return std::make_shared<Tensor>(std::move(v), std::move(shape), requires_grad);
}

TensorPtr Tensor::scalar(double v, bool requires_grad) {
    return std::make_shared<Tensor>(std::vector<double>{v}, std::vector<int>{1, 1},
                                    requires_grad);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

std::uint64_t graph_records_created() { return g_graph_records; }

namespace detail {

std::vector<double>& ensure_grad(Tensor& t) {
    if (t.grad.empty()) t.grad.assign(static_cast<std::size_t>(t.size()), 0.0);
    return t.grad;
}

TensorPtr make_node(std::vector<double> values, std::vector<int> shape,
                    std::vector<TensorPtr> parents) {
    if (!g_grad_enabled)
        return std::make_shared<Tensor>(std::move(values), std::move(shape), false);
    bool req = false;
    for (const auto& p : parents)
        if (p && p->requires_grad) req = true;
    auto out = std::make_shared<Tensor>(std::move(values), std::move(shape), req);
    if (req) {
        out->parents = std::move(parents);
        ++g_graph_records;
    }
    return out;
}

}  // namespace detail

void backward(const TensorPtr& loss) {
    if (!loss) throw ShapeError("backward root is null");
    if (loss->size() != 1) throw ShapeError("backward requires a scalar root");
    if (!loss->requires_grad) return;

    // Post-order DFS with an explicit stack; parents are expanded in stored
    // order so repeated runs over the same graph visit nodes identically.
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> visited;
    struct Frame {
        Tensor* node;
        std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.get(), 0});
    visited.insert(loss.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            Tensor* p = f.node->parents[f.next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    detail::ensure_grad(*loss)[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
    }
}

}  // namespace gridword
