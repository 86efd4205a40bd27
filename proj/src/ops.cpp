#include "gridword/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <memory>
#include <utility>

namespace gridword {

using detail::ensure_grad;
using detail::make_node;

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const EMat>;
using MapM = Eigen::Map<EMat>;

void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (a->shape != b->shape)
        throw ShapeError(std::string(op) + ": operand shapes differ");
}

TensorPtr elementwise_binary(const TensorPtr& a, const TensorPtr& b, const char* name,
                             double (*f)(double, double),
                             void (*df)(double, double, double, double&, double&)) {
    check_same_shape(a, b, name);
    std::vector<double> v(a->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(a->values[i], b->values[i]);
    auto out = make_node(std::move(v), a->shape, {a, b});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, a, b, df]() {
            std::vector<double>* ga = a->requires_grad ? &ensure_grad(*a) : nullptr;
            std::vector<double>* gb = b->requires_grad ? &ensure_grad(*b) : nullptr;
            for (std::size_t i = 0; i < o->grad.size(); ++i) {
                double da = 0.0, db = 0.0;
                df(a->values[i], b->values[i], o->grad[i], da, db);
                if (ga) (*ga)[i] += da;
                if (gb) (*gb)[i] += db;
            }
        };
    }
    return out;
}

TensorPtr elementwise_unary(const TensorPtr& a, const char* /*name*/, double (*f)(double),
                            double (*df)(double x, double y)) {
    std::vector<double> v(a->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(a->values[i]);
    auto out = make_node(std::move(v), a->shape, {a});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, a, df]() {
            auto& ga = ensure_grad(*a);
            for (std::size_t i = 0; i < o->grad.size(); ++i)
                ga[i] += o->grad[i] * df(a->values[i], o->values[i]);
        };
    }
    return out;
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    return elementwise_binary(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double, double g, double& da, double& db) {
            da = g;
            db = g;
        });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    return elementwise_binary(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double, double g, double& da, double& db) {
            da = g;
            db = -g;
        });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    return elementwise_binary(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& da, double& db) {
            da = g * y;
            db = g * x;
        });
}

TensorPtr div(const TensorPtr& a, const TensorPtr& b) {
    return elementwise_binary(
        a, b, "div", [](double x, double y) { return x / y; },
        [](double x, double y, double g, double& da, double& db) {
            da = g / y;
            db = -g * x / (y * y);
        });
}

TensorPtr minimum(const TensorPtr& a, const TensorPtr& b) {
    return elementwise_binary(
        a, b, "minimum", [](double x, double y) { return x <= y ? x : y; },
        [](double x, double y, double g, double& da, double& db) {
            if (x <= y)
                da = g;
            else
                db = g;
        });
}

TensorPtr maximum(const TensorPtr& a, const TensorPtr& b) {
    return elementwise_binary(
        a, b, "maximum", [](double x, double y) { return x >= y ? x : y; },
        [](double x, double y, double g, double& da, double& db) {
            if (x >= y)
                da = g;
            else
                db = g;
        });
}

TensorPtr add_scalar(const TensorPtr& a, double s) {
    std::vector<double> v(a->values);
    for (double& x : v) x += s;
    auto out = make_node(std::move(v), a->shape, {a});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, a]() {
            auto& ga = ensure_grad(*a);
            for (std::size_t i = 0; i < o->grad.size(); ++i) ga[i] += o->grad[i];
        };
    }
    return out;
}

TensorPtr mul_scalar(const TensorPtr& a, double s) {
    std::vector<double> v(a->values);
    for (double& x : v) x *= s;
    auto out = make_node(std::move(v), a->shape, {a});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, a, s]() {
            auto& ga = ensure_grad(*a);
            for (std::size_t i = 0; i < o->grad.size(); ++i) ga[i] += o->grad[i] * s;
        };
    }
    return out;
}

TensorPtr neg(const TensorPtr& a) { return mul_scalar(a, -1.0); }

TensorPtr square(const TensorPtr& a) {
    return elementwise_unary(
        a, "square", [](double x) { return x * x; },
        [](double x, double) { return 2.0 * x; });
}

TensorPtr relu(const TensorPtr& a) {
    return elementwise_unary(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

TensorPtr sigmoid(const TensorPtr& a) {
    return elementwise_unary(
        a, "sigmoid",
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

TensorPtr exp_op(const TensorPtr& a) {
    return elementwise_unary(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

TensorPtr log_op(const TensorPtr& a) {
    for (double x : a->values)
        if (!(x > 0.0)) throw NumericError("log of non-positive value");
    return elementwise_unary(
        a, "log", [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; });
}

TensorPtr clamp(const TensorPtr& a, double lo, double hi) {
    if (!(lo <= hi)) throw ShapeError("clamp: lo must not exceed hi");
    std::vector<double> v(a->values.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = a->values[i] < lo ? lo : (a->values[i] > hi ? hi : a->values[i]);
    auto out = make_node(std::move(v), a->shape, {a});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, a, lo, hi]() {
            auto& ga = ensure_grad(*a);
            for (std::size_t i = 0; i < o->grad.size(); ++i) {
                double x = a->values[i];
                if (x > lo && x < hi) ga[i] += o->grad[i];
            }
        };
    }
    return out;
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->cols() != b->rows()) throw ShapeError("matmul: inner dims differ");
    const int p = a->rows(), q = a->cols(), r = b->cols();
    std::vector<double> v(static_cast<std::size_t>(p) * r);
    MapC A(a->values.data(), p, q), B(b->values.data(), q, r);
    MapM(v.data(), p, r).noalias() = A * B;
    auto out = make_node(std::move(v), {p, r}, {a, b});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, a, b, p, q, r]() {
            MapC G(o->grad.data(), p, r);
            if (a->requires_grad) {
                MapC B(b->values.data(), q, r);
                MapM(ensure_grad(*a).data(), p, q).noalias() += G * B.transpose();
            }
            if (b->requires_grad) {
                MapC A(a->values.data(), p, q);
                MapM(ensure_grad(*b).data(), q, r).noalias() += A.transpose() * G;
            }
        };
    }
    return out;
}

TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b) {
    if (a->cols() != b->cols()) throw ShapeError("matmul_nt: inner dims differ");
    const int p = a->rows(), q = a->cols(), r = b->rows();
    std::vector<double> v(static_cast<std::size_t>(p) * r);
    MapC A(a->values.data(), p, q), B(b->values.data(), r, q);
    MapM(v.data(), p, r).noalias() = A * B.transpose();
    auto out = make_node(std::move(v), {p, r}, {a, b});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, a, b, p, q, r]() {
            MapC G(o->grad.data(), p, r);
            if (a->requires_grad) {
                MapC B(b->values.data(), r, q);
                MapM(ensure_grad(*a).data(), p, q).noalias() += G * B;
            }
            if (b->requires_grad) {
                MapC A(a->values.data(), p, q);
                MapM(ensure_grad(*b).data(), r, q).noalias() += G.transpose() * A;
            }
        };
    }
    return out;
}

TensorPtr transpose(const TensorPtr& a) {
    const int p = a->rows(), q = a->cols();
    std::vector<double> v(a->values.size());
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < q; ++j)
            v[static_cast<std::size_t>(j) * p + i] = a->values[static_cast<std::size_t>(i) * q + j];
    auto out = make_node(std::move(v), {q, p}, {a});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, a, p, q]() {
            auto& ga = ensure_grad(*a);
            for (int i = 0; i < p; ++i)
                for (int j = 0; j < q; ++j)
                    ga[static_cast<std::size_t>(i) * q + j] +=
                        o->grad[static_cast<std::size_t>(j) * p + i];
        };
    }
    return out;
}

TensorPtr sum(const TensorPtr& a) {
    double s = 0.0;
    for (double x : a->values) s += x;
    auto out = make_node({s}, {1, 1}, {a});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, a]() {
            auto& ga = ensure_grad(*a);
            for (double& g : ga) g += o->grad[0];
        };
    }
    return out;
}

TensorPtr reshape(const TensorPtr& a, std::vector<int> new_shape) {
    if (shape_size(new_shape) != a->size()) throw ShapeError("reshape: element count differs");
    auto out = make_node(a->values, std::move(new_shape), {a});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, a]() { a->accumulate_grad(o->grad); };
    }
    return out;
}

TensorPtr concat_rows(const TensorPtr& a, const TensorPtr& b) {
    if (a->cols() != b->cols()) throw ShapeError("concat_rows: column counts differ");
    std::vector<double> v;
    v.reserve(a->values.size() + b->values.size());
    v.insert(v.end(), a->values.begin(), a->values.end());
    v.insert(v.end(), b->values.begin(), b->values.end());
    auto out = make_node(std::move(v), {a->rows() + b->rows(), a->cols()}, {a, b});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, a, b]() {
            const std::size_t na = a->values.size();
            if (a->requires_grad) {
                auto& ga = ensure_grad(*a);
                for (std::size_t i = 0; i < na; ++i) ga[i] += o->grad[i];
            }
            if (b->requires_grad) {
                auto& gb = ensure_grad(*b);
                for (std::size_t i = 0; i < b->values.size(); ++i) gb[i] += o->grad[na + i];
            }
        };
    }
    return out;
}

TensorPtr concat_cols(const TensorPtr& a, const TensorPtr& b) {
    if (a->rows() != b->rows()) throw ShapeError("concat_cols: row counts differ");
    const int p = a->rows(), qa = a->cols(), qb = b->cols();
    std::vector<double> v(static_cast<std::size_t>(p) * (qa + qb));
    for (int i = 0; i < p; ++i) {
        std::memcpy(&v[static_cast<std::size_t>(i) * (qa + qb)],
                    &a->values[static_cast<std::size_t>(i) * qa], sizeof(double) * qa);
        std::memcpy(&v[static_cast<std::size_t>(i) * (qa + qb) + qa],
                    &b->values[static_cast<std::size_t>(i) * qb], sizeof(double) * qb);
    }
    auto out = make_node(std::move(v), {p, qa + qb}, {a, b});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, a, b, p, qa, qb]() {
            for (int i = 0; i < p; ++i) {
                const double* g = &o->grad[static_cast<std::size_t>(i) * (qa + qb)];
                if (a->requires_grad) {
                    auto& ga = ensure_grad(*a);
                    for (int j = 0; j < qa; ++j) ga[static_cast<std::size_t>(i) * qa + j] += g[j];
                }
                if (b->requires_grad) {
                    auto& gb = ensure_grad(*b);
                    for (int j = 0; j < qb; ++j)
                        gb[static_cast<std::size_t>(i) * qb + j] += g[qa + j];
                }
            }
        };
    }
    return out;
}

TensorPtr slice_rows(const TensorPtr& a, int r0, int r1) {
    if (r0 < 0 || r1 > a->rows() || r0 >= r1) throw ShapeError("slice_rows: bad range");
    const int q = a->cols();
    std::vector<double> v(a->values.begin() + static_cast<std::size_t>(r0) * q,
                          a->values.begin() + static_cast<std::size_t>(r1) * q);
    auto out = make_node(std::move(v), {r1 - r0, q}, {a});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, a, r0, q]() {
            auto& ga = ensure_grad(*a);
            for (std::size_t i = 0; i < o->grad.size(); ++i)
                ga[static_cast<std::size_t>(r0) * q + i] += o->grad[i];
        };
    }
    return out;
}

TensorPtr slice_cols(const TensorPtr& a, int c0, int c1) {
    if (c0 < 0 || c1 > a->cols() || c0 >= c1) throw ShapeError("slice_cols: bad range");
    const int p = a->rows(), q = a->cols(), w = c1 - c0;
    std::vector<double> v(static_cast<std::size_t>(p) * w);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < w; ++j)
            v[static_cast<std::size_t>(i) * w + j] =
                a->values[static_cast<std::size_t>(i) * q + c0 + j];
    auto out = make_node(std::move(v), {p, w}, {a});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, a, c0, p, q, w]() {
            auto& ga = ensure_grad(*a);
            for (int i = 0; i < p; ++i)
                for (int j = 0; j < w; ++j)
                    ga[static_cast<std::size_t>(i) * q + c0 + j] +=
                        o->grad[static_cast<std::size_t>(i) * w + j];
        };
    }
    return out;
}

TensorPtr add_bias(const TensorPtr& a, const TensorPtr& bias) {
    if (bias->rows() != 1 || bias->cols() != a->cols())
        throw ShapeError("add_bias: bias must be 1 x cols(a)");
    const int p = a->rows(), q = a->cols();
    std::vector<double> v(a->values);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < q; ++j) v[static_cast<std::size_t>(i) * q + j] += bias->values[j];
    auto out = make_node(std::move(v), a->shape, {a, bias});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, a, bias, p, q]() {
            if (a->requires_grad) {
                auto& ga = ensure_grad(*a);
                for (std::size_t i = 0; i < o->grad.size(); ++i) ga[i] += o->grad[i];
            }
            if (bias->requires_grad) {
                auto& gb = ensure_grad(*bias);
                for (int i = 0; i < p; ++i)
                    for (int j = 0; j < q; ++j)
                        gb[j] += o->grad[static_cast<std::size_t>(i) * q + j];
            }
        };
    }
    return out;
}

TensorPtr embed(const TensorPtr& table, const std::vector<int>& ids) {
    const int V = table->rows(), d = table->cols(), T = static_cast<int>(ids.size());
    if (T == 0) throw ShapeError("embed: empty id list");
    for (int id : ids)
        if (id < 0 || id >= V) throw ShapeError("embed: id out of range");
    std::vector<double> v(static_cast<std::size_t>(T) * d);
    for (int t = 0; t < T; ++t)
        std::memcpy(&v[static_cast<std::size_t>(t) * d],
                    &table->values[static_cast<std::size_t>(ids[t]) * d], sizeof(double) * d);
    auto out = make_node(std::move(v), {T, d}, {table});
    if (out->requires_grad) {
        Tensor* o = out.get();
        auto idc = ids;
        out->backward_fn = [o, table, idc, d]() {
            auto& g = ensure_grad(*table);
            for (std::size_t t = 0; t < idc.size(); ++t)
                for (int j = 0; j < d; ++j)
                    g[static_cast<std::size_t>(idc[t]) * d + j] += o->grad[t * d + j];
        };
    }
    return out;
}

TensorPtr repeat_row(const TensorPtr& row, int n) {
    if (row->rows() != 1) throw ShapeError("repeat_row: input must have one row");
    if (n <= 0) throw ShapeError("repeat_row: n must be positive");
    const int d = row->cols();
    std::vector<double> v(static_cast<std::size_t>(n) * d);
    for (int i = 0; i < n; ++i)
        std::memcpy(&v[static_cast<std::size_t>(i) * d], row->values.data(), sizeof(double) * d);
    auto out = make_node(std::move(v), {n, d}, {row});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, row, n, d]() {
            auto& g = ensure_grad(*row);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) g[j] += o->grad[static_cast<std::size_t>(i) * d + j];
        };
    }
    return out;
}

TensorPtr masked_mean_rows(const TensorPtr& a, const std::vector<std::uint8_t>& mask) {
    const int p = a->rows(), d = a->cols();
    if (static_cast<int>(mask.size()) != p)
        throw MaskError("masked_mean_rows: mask length must equal row count");
    int n = 0;
    for (auto m : mask) n += m ? 1 : 0;
    if (n == 0) throw MaskError("masked_mean_rows: mask selects no rows");
    std::vector<double> v(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < p; ++i)
        if (mask[i])
            for (int j = 0; j < d; ++j) v[j] += a->values[static_cast<std::size_t>(i) * d + j];
    for (double& x : v) x /= n;
    auto out = make_node(std::move(v), {1, d}, {a});
    if (out->requires_grad) {
        Tensor* o = out.get();
        auto mk = mask;
        out->backward_fn = [o, a, mk, p, d, n]() {
            auto& ga = ensure_grad(*a);
            for (int i = 0; i < p; ++i)
                if (mk[i])
                    for (int j = 0; j < d; ++j)
                        ga[static_cast<std::size_t>(i) * d + j] += o->grad[j] / n;
        };
    }
    return out;
}

TensorPtr softmax_rows(const TensorPtr& scores, const std::vector<std::uint8_t>& key_mask) {
    const int p = scores->rows(), q = scores->cols();
    std::vector<std::uint8_t> mask = key_mask;
    if (mask.empty()) mask.assign(static_cast<std::size_t>(q), 1);
    if (static_cast<int>(mask.size()) != q)
        throw MaskError("softmax_rows: key mask length must equal column count");
    bool any = false;
    for (auto m : mask) any = any || m;
    if (!any) throw MaskError("softmax_rows: all keys masked");

    // Masked columns are excluded from the max and the denominator and get an
    // exact 0.0 weight, so the output is invariant to their score values.
    std::vector<double> v(scores->values.size(), 0.0);
    for (int i = 0; i < p; ++i) {
        const double* s = &scores->values[static_cast<std::size_t>(i) * q];
        double m = -1e308;
        for (int j = 0; j < q; ++j)
            if (mask[j] && s[j] > m) m = s[j];
        double z = 0.0;
        double* o = &v[static_cast<std::size_t>(i) * q];
        for (int j = 0; j < q; ++j) {
            if (mask[j]) {
                o[j] = std::exp(s[j] - m);
                z += o[j];
            }
        }
        for (int j = 0; j < q; ++j)
            if (mask[j]) o[j] /= z;
    }
    auto out = make_node(std::move(v), scores->shape, {scores});
    if (out->requires_grad) {
        Tensor* o = out.get();
        auto mk = std::move(mask);
        out->backward_fn = [o, scores, mk, p, q]() {
            auto& gs = ensure_grad(*scores);
            for (int i = 0; i < p; ++i) {
                const double* pr = &o->values[static_cast<std::size_t>(i) * q];
                const double* gp = &o->grad[static_cast<std::size_t>(i) * q];
                double dot = 0.0;
                for (int j = 0; j < q; ++j)
                    if (mk[j]) dot += gp[j] * pr[j];
                for (int j = 0; j < q; ++j)
                    if (mk[j]) gs[static_cast<std::size_t>(i) * q + j] += pr[j] * (gp[j] - dot);
            }
        };
    }
    return out;
}

TensorPtr layer_norm(const TensorPtr& a, const TensorPtr& gamma, const TensorPtr& beta,
                     double eps) {
    const int p = a->rows(), d = a->cols();
    if (gamma->rows() != 1 || gamma->cols() != d || beta->rows() != 1 || beta->cols() != d)
        throw ShapeError("layer_norm: gamma/beta must be 1 x d");
    std::vector<double> v(a->values.size());
    std::vector<double> inv_std(static_cast<std::size_t>(p));
    std::vector<double> xhat(a->values.size());
    for (int i = 0; i < p; ++i) {
        const double* x = &a->values[static_cast<std::size_t>(i) * d];
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += x[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int j = 0; j < d; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * d + j;
            xhat[idx] = (x[j] - mu) * is;
            v[idx] = gamma->values[j] * xhat[idx] + beta->values[j];
        }
    }
    auto out = make_node(std::move(v), a->shape, {a, gamma, beta});
    if (out->requires_grad) {
        Tensor* o = out.get();
        auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
        auto is = std::make_shared<std::vector<double>>(std::move(inv_std));
        out->backward_fn = [o, a, gamma, beta, xh, is, p, d]() {
            for (int i = 0; i < p; ++i) {
                const std::size_t base = static_cast<std::size_t>(i) * d;
                const double* gy = &o->grad[base];
                const double* x1 = &(*xh)[base];
                if (a->requires_grad) {
                    double mean_g = 0.0, mean_gx = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double gxh = gy[j] * gamma->values[j];
                        mean_g += gxh;
                        mean_gx += gxh * x1[j];
                    }
                    mean_g /= d;
                    mean_gx /= d;
                    auto& ga = ensure_grad(*a);
                    for (int j = 0; j < d; ++j) {
                        const double gxh = gy[j] * gamma->values[j];
                        ga[base + j] += (*is)[i] * (gxh - mean_g - x1[j] * mean_gx);
                    }
                }
                if (gamma->requires_grad) {
                    auto& gg = ensure_grad(*gamma);
                    for (int j = 0; j < d; ++j) gg[j] += gy[j] * x1[j];
                }
                if (beta->requires_grad) {
                    auto& gb = ensure_grad(*beta);
                    for (int j = 0; j < d; ++j) gb[j] += gy[j];
                }
            }
        };
    }
    return out;
}

TensorPtr batch_norm_chw(const TensorPtr& x, int C, int H, int W, BatchNormState& bn,
                         bool training, bool update_running_stats) {
    const std::int64_t n = static_cast<std::int64_t>(H) * W;
    if (x->size() != static_cast<std::int64_t>(C) * n || x->cols() != 1)
        throw ShapeError("batch_norm_chw: input must be (C*H*W) x 1");
    if (bn.gamma->cols() != C || bn.beta->cols() != C || bn.running_mean->cols() != C ||
        bn.running_var->cols() != C)
        throw ShapeError("batch_norm_chw: state width must be C");

    std::vector<double> v(x->values.size());
    if (!training) {
        for (int c = 0; c < C; ++c) {
            const double is = 1.0 / std::sqrt(bn.running_var->values[c] + bn.eps);
            const double g = bn.gamma->values[c], b = bn.beta->values[c];
            const double m = bn.running_mean->values[c];
            for (std::int64_t i = 0; i < n; ++i) {
                const std::size_t idx = static_cast<std::size_t>(c * n + i);
                v[idx] = g * (x->values[idx] - m) * is + b;
            }
        }
        auto out = make_node(std::move(v), x->shape, {x, bn.gamma, bn.beta});
        if (out->requires_grad) {
            Tensor* o = out.get();
            TensorPtr gamma = bn.gamma, beta = bn.beta, rv = bn.running_var,
                      rm = bn.running_mean;
            const double eps = bn.eps;
            out->backward_fn = [o, x, gamma, beta, rv, rm, eps, C, n]() {
                for (int c = 0; c < C; ++c) {
                    const double is = 1.0 / std::sqrt(rv->values[c] + eps);
                    if (x->requires_grad) {
                        auto& gx = ensure_grad(*x);
                        for (std::int64_t i = 0; i < n; ++i) {
                            const std::size_t idx = static_cast<std::size_t>(c * n + i);
                            gx[idx] += o->grad[idx] * gamma->values[c] * is;
                        }
                    }
                    if (gamma->requires_grad) {
                        auto& gg = ensure_grad(*gamma);
                        for (std::int64_t i = 0; i < n; ++i) {
                            const std::size_t idx = static_cast<std::size_t>(c * n + i);
                            gg[c] += o->grad[idx] * (x->values[idx] - rm->values[c]) * is;
                        }
                    }
                    if (beta->requires_grad) {
                        auto& gb = ensure_grad(*beta);
                        for (std::int64_t i = 0; i < n; ++i)
                            gb[c] += o->grad[static_cast<std::size_t>(c * n + i)];
                    }
                }
            };
        }
        return out;
    }

    std::vector<double> mean(static_cast<std::size_t>(C)), inv_std(static_cast<std::size_t>(C));
    std::vector<double> xhat(x->values.size());
    for (int c = 0; c < C; ++c) {
        double mu = 0.0;
        for (std::int64_t i = 0; i < n; ++i) mu += x->values[static_cast<std::size_t>(c * n + i)];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double dxy = x->values[static_cast<std::size_t>(c * n + i)] - mu;
            var += dxy * dxy;
        }
        var /= static_cast<double>(n);
        mean[c] = mu;
        const double is = 1.0 / std::sqrt(var + bn.eps);
        inv_std[c] = is;
        for (std::int64_t i = 0; i < n; ++i) {
            const std::size_t idx = static_cast<std::size_t>(c * n + i);
            xhat[idx] = (x->values[idx] - mu) * is;
            v[idx] = bn.gamma->values[c] * xhat[idx] + bn.beta->values[c];
        }
        if (update_running_stats) {
            // PyTorch convention: running buffers mix in the batch statistic
            // with weight `momentum`; running_var uses the unbiased estimate.
            const double unbiased = n > 1 ? var * static_cast<double>(n) / (n - 1) : var;
            bn.running_mean->values[c] =
                (1.0 - bn.momentum) * bn.running_mean->values[c] + bn.momentum * mu;
            bn.running_var->values[c] =
                (1.0 - bn.momentum) * bn.running_var->values[c] + bn.momentum * unbiased;
        }
    }
    auto out = make_node(std::move(v), x->shape, {x, bn.gamma, bn.beta});
    if (out->requires_grad) {
        Tensor* o = out.get();
        TensorPtr gamma = bn.gamma, beta = bn.beta;
        auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
        auto is = std::make_shared<std::vector<double>>(std::move(inv_std));
        out->backward_fn = [o, x, gamma, beta, xh, is, C, n]() {
            for (int c = 0; c < C; ++c) {
                const std::size_t base = static_cast<std::size_t>(c * n);
                if (x->requires_grad) {
                    double mean_g = 0.0, mean_gx = 0.0;
                    for (std::int64_t i = 0; i < n; ++i) {
                        mean_g += o->grad[base + i];
                        mean_gx += o->grad[base + i] * (*xh)[base + i];
                    }
                    mean_g /= static_cast<double>(n);
                    mean_gx /= static_cast<double>(n);
                    auto& gx = ensure_grad(*x);
                    const double k = gamma->values[c] * (*is)[c];
                    for (std::int64_t i = 0; i < n; ++i)
                        gx[base + i] +=
                            k * (o->grad[base + i] - mean_g - (*xh)[base + i] * mean_gx);
                }
                if (gamma->requires_grad) {
                    auto& gg = ensure_grad(*gamma);
                    for (std::int64_t i = 0; i < n; ++i)
                        gg[c] += o->grad[base + i] * (*xh)[base + i];
                }
                if (beta->requires_grad) {
                    auto& gb = ensure_grad(*beta);
                    for (std::int64_t i = 0; i < n; ++i) gb[c] += o->grad[base + i];
                }
            }
        };
    }
    return out;
}

TensorPtr conv2d(const TensorPtr& input, int C, int H, int W, const TensorPtr& weight, int O,
                 int k, const TensorPtr& bias, int stride, int pad) {
    if (input->size() != static_cast<std::int64_t>(C) * H * W || input->cols() != 1)
        throw ShapeError("conv2d: input must be (C*H*W) x 1");
    if (weight->size() != static_cast<std::int64_t>(O) * C * k * k || weight->cols() != 1)
        throw ShapeError("conv2d: weight must be (O*C*k*k) x 1");
    if (bias->rows() != 1 || bias->cols() != O) throw ShapeError("conv2d: bias must be 1 x O");
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: kernel larger than padded input");

    const int ckk = C * k * k;
    const std::int64_t rows = static_cast<std::int64_t>(Ho) * Wo;
    auto col = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows) * ckk, 0.0);
    for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
            double* row = &(*col)[(static_cast<std::size_t>(oy) * Wo + ox) * ckk];
            for (int c = 0; c < C; ++c) {
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= W) continue;
                        row[(c * k + ky) * k + kx] =
                            input->values[(static_cast<std::size_t>(c) * H + iy) * W + ix];
                    }
                }
            }
        }
    }

    // out(r, o) = col(r, :) . weight(o, :), then relaid as (O*Ho*Wo) x 1.
    EMat prod(rows, O);
    {
        MapC Col(col->data(), rows, ckk), Wt(weight->values.data(), O, ckk);
        prod.noalias() = Col * Wt.transpose();
    }
    std::vector<double> v(static_cast<std::size_t>(O) * rows);
    for (int o = 0; o < O; ++o)
        for (std::int64_t r = 0; r < rows; ++r)
            v[static_cast<std::size_t>(o) * rows + r] = prod(r, o) + bias->values[o];

    auto out = make_node(std::move(v), {static_cast<int>(O * rows), 1}, {input, weight, bias});
    if (out->requires_grad) {
        Tensor* on = out.get();
        out->backward_fn = [on, input, weight, bias, col, C, H, W, O, k, stride, pad, Ho, Wo,
                            ckk, rows]() {
            EMat G(rows, O);
            for (int o = 0; o < O; ++o)
                for (std::int64_t r = 0; r < rows; ++r)
                    G(r, o) = on->grad[static_cast<std::size_t>(o) * rows + r];
            if (bias->requires_grad) {
                auto& gb = ensure_grad(*bias);
                for (int o = 0; o < O; ++o) gb[o] += G.col(o).sum();
            }
            if (weight->requires_grad) {
                MapC Col(col->data(), rows, ckk);
                MapM(ensure_grad(*weight).data(), O, ckk).noalias() += G.transpose() * Col;
            }
            if (input->requires_grad) {
                MapC Wt(weight->values.data(), O, ckk);
                EMat dcol = G * Wt;  // rows x ckk
                auto& gi = ensure_grad(*input);
                for (int oy = 0; oy < Ho; ++oy) {
                    for (int ox = 0; ox < Wo; ++ox) {
                        const std::int64_t r = static_cast<std::int64_t>(oy) * Wo + ox;
                        for (int c = 0; c < C; ++c) {
                            for (int ky = 0; ky < k; ++ky) {
                                const int iy = oy * stride - pad + ky;
                                if (iy < 0 || iy >= H) continue;
                                for (int kx = 0; kx < k; ++kx) {
                                    const int ix = ox * stride - pad + kx;
                                    if (ix < 0 || ix >= W) continue;
                                    gi[(static_cast<std::size_t>(c) * H + iy) * W + ix] +=
                                        dcol(r, (c * k + ky) * k + kx);
                                }
                            }
                        }
                    }
                }
            }
        };
    }
    return out;
}

TensorPtr chw_to_rows(const TensorPtr& a, int C, int H, int W) {
    if (a->size() != static_cast<std::int64_t>(C) * H * W || a->cols() != 1)
        throw ShapeError("chw_to_rows: input must be (C*H*W) x 1");
    const std::int64_t n = static_cast<std::int64_t>(H) * W;
    std::vector<double> v(a->values.size());
    for (std::int64_t cell = 0; cell < n; ++cell)
        for (int c = 0; c < C; ++c)
            v[static_cast<std::size_t>(cell) * C + c] =
                a->values[static_cast<std::size_t>(c) * n + cell];
    auto out = make_node(std::move(v), {static_cast<int>(n), C}, {a});
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [o, a, C, n]() {
            auto& ga = ensure_grad(*a);
            for (std::int64_t cell = 0; cell < n; ++cell)
                for (int c = 0; c < C; ++c)
                    ga[static_cast<std::size_t>(c) * n + cell] +=
                        o->grad[static_cast<std::size_t>(cell) * C + c];
        };
    }
    return out;
}

}  // namespace gridword
