#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "gridword/attention.hpp"
#include "gridword/fusion.hpp"

using namespace gridword;
using gridword::testing::gradcheck;
using gridword::testing::random_values;

namespace {

TensorPtr identity(int n) {
    std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
    return Tensor::from(std::move(v), {n, n});
}

Config tiny_cfg() { return Config::tiny(); }

}  // namespace

TEST_CASE("spatial positional encoding structure") {
    const int w = 3, h = 2, d = 8;
    auto pe = spatial_positional_encoding(w, h, d);
    CHECK(pe->shape == std::vector<int>{6, 8});
    // Cell (0,0): every sine channel 0, every cosine channel 1.
    for (int i = 0; i < d / 4; ++i) {
        CHECK(pe->at(0, 2 * i) == 0.0);
        CHECK(pe->at(0, 2 * i + 1) == 1.0);
        CHECK(pe->at(0, d / 2 + 2 * i) == 0.0);
        CHECK(pe->at(0, d / 2 + 2 * i + 1) == 1.0);
    }
    // Cells sharing x have identical x halves: (1,0) is row 1, (1,1) is row 4.
    for (int j = 0; j < d / 2; ++j) CHECK(pe->at(1, j) == pe->at(4, j));
    // Cells sharing y have identical y halves.
    for (int j = d / 2; j < d; ++j) CHECK(pe->at(1, j) == pe->at(2, j));
    for (double v : pe->values) {
        CHECK(v <= 1.0);
        CHECK(v >= -1.0);
    }
    CHECK_THROWS_AS(spatial_positional_encoding(2, 2, 6), ConfigError);
}

TEST_CASE("attention with a single key returns that value row") {
    const int d = 4;
    AttentionParams ap{identity(d), identity(d), identity(d), identity(d)};
    std::mt19937_64 rng(31);
    auto q = Tensor::from(random_values(2 * d, rng), {2, d});
    auto kv = Tensor::from(random_values(d, rng), {1, d});
    auto out = multi_head_attention(q, kv, kv, {}, ap, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < d; ++j)
            CHECK(out->at(i, j) == doctest::Approx(kv->values[j]).epsilon(1e-12));
}

TEST_CASE("attention with constant scores averages the value rows") {
    const int d = 4, n = 5;
    AttentionParams ap{Tensor::zeros({d, d}), identity(d), identity(d), identity(d)};
    std::mt19937_64 rng(32);
    auto q = Tensor::from(random_values(3 * d, rng), {3, d});
    auto kv = Tensor::from(random_values(n * d, rng), {n, d});
    auto out = multi_head_attention(q, kv, kv, {}, ap, 2);
    for (int j = 0; j < d; ++j) {
        double mean = 0.0;
        for (int i = 0; i < n; ++i) mean += kv->at(i, j);
        mean /= n;
        for (int i = 0; i < 3; ++i) CHECK(out->at(i, j) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("attention output is bitwise independent of masked-key content") {
    const int d = 8, n = 5, p = 3;
    std::mt19937_64 rng(33);
    ParamStore store;
    auto layer = make_transformer_layer(store, "t", d, 16, rng);
    auto q = Tensor::from(random_values(p * d, rng), {p, d});
    auto kv = Tensor::from(random_values(n * d, rng), {n, d});
    std::vector<std::uint8_t> mask{1, 0, 1, 0, 1};
    auto out1 = multi_head_attention(q, kv, kv, mask, layer.attn, 2);

    auto kv2 = Tensor::from(kv->values, {n, d});
    std::uniform_real_distribution<double> big(-100.0, 100.0);
    for (int j = 0; j < d; ++j) {
        kv2->values[static_cast<std::size_t>(1) * d + j] = big(rng);
        kv2->values[static_cast<std::size_t>(3) * d + j] = big(rng);
    }
    auto out2 = multi_head_attention(q, kv2, kv2, mask, layer.attn, 2);
    CHECK(out1->values == out2->values);

    CHECK_THROWS_AS(multi_head_attention(q, kv, kv, {0, 0, 0, 0, 0}, layer.attn, 2),
                    MaskError);
}

TEST_CASE("attention rows over unmasked keys sum to 1 within 1e-9, 100 cases") {
    std::mt19937_64 rng(34);
    for (int rep = 0; rep < 100; ++rep) {
        const int d = 8, heads = 2;
        const int p = 1 + static_cast<int>(rng() % 6);
        const int n = 1 + static_cast<int>(rng() % 6);
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(n));
        bool any = false;
        for (auto& m : mask) {
            m = rng() % 2;
            any = any || m;
        }
        if (!any) mask[rng() % n] = 1;
        ParamStore store;
        auto layer = make_transformer_layer(store, "t", d, 16, rng);
        auto q = Tensor::from(random_values(static_cast<std::size_t>(p) * d, rng, 2.0), {p, d});
        auto kv = Tensor::from(random_values(static_cast<std::size_t>(n) * d, rng, 2.0), {n, d});
        AttnTrace trace;
        multi_head_attention(q, kv, kv, mask, layer.attn, heads, &trace, "case");
        REQUIRE(trace.entries.size() == static_cast<std::size_t>(heads));
        for (const auto& e : trace.entries) {
            for (int i = 0; i < e.rows; ++i) {
                double s = 0.0;
                for (int j = 0; j < e.cols; ++j) {
                    const double wgt = e.weights[static_cast<std::size_t>(i) * e.cols + j];
                    if (!mask[static_cast<std::size_t>(j)]) CHECK(wgt == 0.0);
                    s += wgt;
                }
                CHECK(std::fabs(s - 1.0) < 1e-9);
            }
        }
    }
}

TEST_CASE("zeroed attention and FFN weights reduce a layer to a layer-norm chain") {
    const int d = 8, dff = 16, p = 3;
    std::mt19937_64 rng(35);
    ParamStore store;
    auto layer = make_transformer_layer(store, "t", d, dff, rng);
    for (auto* t : {&layer.attn.wq, &layer.attn.wk, &layer.attn.wv, &layer.attn.wo})
        std::fill((*t)->values.begin(), (*t)->values.end(), 0.0);
    std::fill(layer.ffn.w1->values.begin(), layer.ffn.w1->values.end(), 0.0);
    std::fill(layer.ffn.w2->values.begin(), layer.ffn.w2->values.end(), 0.0);

    auto x = Tensor::from(random_values(p * d, rng), {p, d});
    auto out = transformer_layer(x, x, x, x, {}, layer, 2);
    auto expect = layer_norm(layer_norm(x, layer.ln1.gamma, layer.ln1.beta), layer.ln2.gamma,
                             layer.ln2.beta);
    for (std::size_t i = 0; i < out->values.size(); ++i)
        CHECK(out->values[i] == doctest::Approx(expect->values[i]).epsilon(1e-12));
}

TEST_CASE("cross module: shapes, ablation passthrough, all-masked error") {
    Config cfg = tiny_cfg();
    std::mt19937_64 rng(36);
    ParamStore store;
    auto params = make_cross(store, cfg, rng, true, true);
    auto pos = spatial_positional_encoding(cfg.grid_w, cfg.grid_h, cfg.d);
    auto E = Tensor::from(random_values(static_cast<std::size_t>(cfg.tokens) * cfg.d, rng),
                          {cfg.tokens, cfg.d});
    auto G = Tensor::from(
        random_values(static_cast<std::size_t>(cfg.grid_w * cfg.grid_h) * cfg.d, rng),
        {cfg.grid_w * cfg.grid_h, cfg.d});
    std::vector<std::uint8_t> valid{1, 1, 1, 0};

    auto out = cross_attention_module(E, G, valid, pos, params, cfg);
    CHECK(out.h_lgv->shape == std::vector<int>{cfg.tokens, cfg.d});
    CHECK(out.h_vgl->shape == std::vector<int>{cfg.grid_w * cfg.grid_h, cfg.d});

    CrossParams lgv_only{params.lgv, {}};
    auto out2 = cross_attention_module(E, G, valid, pos, lgv_only, cfg);
    CHECK(out2.h_vgl->values == G->values);  // missing branch passes raw input
    CrossParams vgl_only{{}, params.vgl};
    auto out3 = cross_attention_module(E, G, valid, pos, vgl_only, cfg);
    CHECK(out3.h_lgv->values == E->values);

    CHECK_THROWS_AS(cross_attention_module(E, G, {0, 0, 0, 0}, pos, params, cfg), MaskError);
    CHECK_THROWS_AS(cross_attention_module(E, G, {1, 1}, pos, params, cfg), MaskError);
}

TEST_CASE("interleaved mode differs from parallel stacks but keeps shapes") {
    Config cfg = tiny_cfg();
    cfg.cross_layers = 2;
    std::mt19937_64 rng(37);
    ParamStore store;
    auto params = make_cross(store, cfg, rng, true, true);
    auto pos = spatial_positional_encoding(cfg.grid_w, cfg.grid_h, cfg.d);
    auto E = Tensor::from(random_values(static_cast<std::size_t>(cfg.tokens) * cfg.d, rng),
                          {cfg.tokens, cfg.d});
    auto G = Tensor::from(
        random_values(static_cast<std::size_t>(cfg.grid_w * cfg.grid_h) * cfg.d, rng),
        {cfg.grid_w * cfg.grid_h, cfg.d});
    std::vector<std::uint8_t> valid{1, 1, 1, 1};

    auto parallel = cross_attention_module(E, G, valid, pos, params, cfg);
    cfg.interleaved_cross = true;
    auto inter = cross_attention_module(E, G, valid, pos, params, cfg);
    CHECK(inter.h_lgv->shape == parallel.h_lgv->shape);
    CHECK(inter.h_vgl->shape == parallel.h_vgl->shape);
    double diff = 0.0;
    for (std::size_t i = 0; i < inter.h_vgl->values.size(); ++i)
        diff = std::max(diff, std::fabs(inter.h_vgl->values[i] - parallel.h_vgl->values[i]));
    CHECK(diff > 1e-6);
}

TEST_CASE("padding invariance of the cross module, 100 cases") {
    Config cfg = tiny_cfg();
    std::mt19937_64 rng(38);
    for (int rep = 0; rep < 100; ++rep) {
        ParamStore store;
        auto params = make_cross(store, cfg, rng, true, true);
        auto pos = spatial_positional_encoding(cfg.grid_w, cfg.grid_h, cfg.d);
        auto E = Tensor::from(random_values(static_cast<std::size_t>(cfg.tokens) * cfg.d, rng),
                              {cfg.tokens, cfg.d});
        auto G = Tensor::from(
            random_values(static_cast<std::size_t>(cfg.grid_w * cfg.grid_h) * cfg.d, rng),
            {cfg.grid_w * cfg.grid_h, cfg.d});
        // Last one or two positions are padding.
        const int pad_from = 2 + static_cast<int>(rng() % 2);
        std::vector<std::uint8_t> valid(static_cast<std::size_t>(cfg.tokens), 1);
        for (int t = pad_from; t < cfg.tokens; ++t) valid[static_cast<std::size_t>(t)] = 0;

        auto base = cross_attention_module(E, G, valid, pos, params, cfg);
        auto E2 = Tensor::from(E->values, E->shape);
        std::uniform_real_distribution<double> big(-50.0, 50.0);
        for (int t = pad_from; t < cfg.tokens; ++t)
            for (int j = 0; j < cfg.d; ++j)
                E2->values[static_cast<std::size_t>(t) * cfg.d + j] = big(rng);
        auto mut = cross_attention_module(E2, G, valid, pos, params, cfg);

        CHECK(mut.h_vgl->values == base.h_vgl->values);  // exact
        for (int t = 0; t < pad_from; ++t)
            for (int j = 0; j < cfg.d; ++j)
                CHECK(mut.h_lgv->at(t, j) == base.h_lgv->at(t, j));
    }
}

TEST_CASE("grid permutation equivariance, 100 cases") {
    Config cfg = tiny_cfg();
    const int wh = cfg.grid_w * cfg.grid_h;
    std::mt19937_64 rng(39);
    for (int rep = 0; rep < 100; ++rep) {
        ParamStore store;
        auto params = make_cross(store, cfg, rng, true, true);
        auto pos = spatial_positional_encoding(cfg.grid_w, cfg.grid_h, cfg.d);
        auto E = Tensor::from(random_values(static_cast<std::size_t>(cfg.tokens) * cfg.d, rng),
                              {cfg.tokens, cfg.d});
        auto G = Tensor::from(random_values(static_cast<std::size_t>(wh) * cfg.d, rng),
                              {wh, cfg.d});
        std::vector<std::uint8_t> valid{1, 1, 1, 0};

        std::vector<int> perm(static_cast<std::size_t>(wh));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        auto permute = [&](const TensorPtr& m) {
            std::vector<double> v(m->values.size());
            for (int i = 0; i < wh; ++i)
                for (int j = 0; j < cfg.d; ++j)
                    v[static_cast<std::size_t>(i) * cfg.d + j] =
                        m->values[static_cast<std::size_t>(perm[i]) * cfg.d + j];
            return Tensor::from(std::move(v), m->shape);
        };

        auto base = cross_attention_module(E, G, valid, pos, params, cfg);
        auto permuted = cross_attention_module(E, permute(G), valid, permute(pos), params, cfg);

        // H_VGL rows permute identically; H_LGV is unchanged.
        for (int i = 0; i < wh; ++i)
            for (int j = 0; j < cfg.d; ++j)
                CHECK(std::fabs(permuted.h_vgl->at(i, j) -
                                base.h_vgl->at(perm[static_cast<std::size_t>(i)], j)) < 1e-9);
        for (std::size_t i = 0; i < base.h_lgv->values.size(); ++i)
            CHECK(std::fabs(permuted.h_lgv->values[i] - base.h_lgv->values[i]) < 1e-9);
    }
}

TEST_CASE("cross module gradient check at tiny scale") {
    Config cfg = tiny_cfg();
    std::mt19937_64 rng(40);
    ParamStore store;
    auto params = make_cross(store, cfg, rng, true, true);
    auto pos = spatial_positional_encoding(cfg.grid_w, cfg.grid_h, cfg.d);
    auto E = Tensor::from(random_values(static_cast<std::size_t>(cfg.tokens) * cfg.d, rng),
                          {cfg.tokens, cfg.d}, true);
    auto G = Tensor::from(
        random_values(static_cast<std::size_t>(cfg.grid_w * cfg.grid_h) * cfg.d, rng),
        {cfg.grid_w * cfg.grid_h, cfg.d}, true);
    std::vector<std::uint8_t> valid{1, 1, 1, 0};

    std::vector<TensorPtr> leaves = store.param_tensors();
    leaves.push_back(E);
    leaves.push_back(G);
    // A random linear functional keeps the loss sensitive to every output
    // coordinate; a sum of squares after layer norm is nearly constant.
    auto wl = Tensor::from(random_values(static_cast<std::size_t>(cfg.tokens) * cfg.d, rng),
                           {cfg.tokens, cfg.d});
    auto wv = Tensor::from(
        random_values(static_cast<std::size_t>(cfg.grid_w * cfg.grid_h) * cfg.d, rng),
        {cfg.grid_w * cfg.grid_h, cfg.d});
    auto rep = gradcheck(
        [&] {
            auto out = cross_attention_module(E, G, valid, pos, params, cfg);
            return add(sum(mul(out.h_lgv, wl)), sum(mul(out.h_vgl, wv)));
        },
        leaves, 1e-5, 1e-6, 24, &rng);
    CAPTURE(rep.analytic);
    CAPTURE(rep.numeric);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("fusion: shape, pad independence of grid rows, word-mask probe") {
    Config cfg = tiny_cfg();
    const int wh = cfg.grid_w * cfg.grid_h;
    std::mt19937_64 rng(41);
    ParamStore store;
    auto params = make_fusion(store, cfg, rng);
    auto pos = spatial_positional_encoding(cfg.grid_w, cfg.grid_h, cfg.d);
    auto hl = Tensor::from(random_values(static_cast<std::size_t>(cfg.tokens) * cfg.d, rng),
                           {cfg.tokens, cfg.d});
    auto hv = Tensor::from(random_values(static_cast<std::size_t>(wh) * cfg.d, rng),
                           {wh, cfg.d});
    std::vector<std::uint8_t> valid{1, 1, 1, 0};

    auto fused = fuse(hl, hv, valid, pos, params, cfg);
    CHECK(fused->shape == std::vector<int>{cfg.tokens + wh, cfg.d});
    auto vis = slice_visual(fused, cfg);
    CHECK(vis->shape == std::vector<int>{wh, cfg.d});
    // slice_visual of a raw concatenation returns the second block.
    auto cat = concat_rows(hl, hv);
    CHECK(slice_visual(cat, cfg)->values == hv->values);

    // Mutating the [PAD] word row leaves every grid row bitwise unchanged.
    auto hl2 = Tensor::from(hl->values, hl->shape);
    for (int j = 0; j < cfg.d; ++j)
        hl2->values[static_cast<std::size_t>(3) * cfg.d + j] = 77.0 + j;
    auto fused2 = fuse(hl2, hv, valid, pos, params, cfg);
    CHECK(slice_visual(fused2, cfg)->values == vis->values);

    // With every word key masked, grid rows ignore word content entirely.
    std::vector<std::uint8_t> none(static_cast<std::size_t>(cfg.tokens), 0);
    auto probe1 = slice_visual(fuse(hl, hv, none, pos, params, cfg), cfg);
    auto probe2 = slice_visual(fuse(hl2, hv, none, pos, params, cfg), cfg);
    CHECK(probe1->values == probe2->values);
}

TEST_CASE("fusion gradient check, with and without re-added positions") {
    Config cfg = tiny_cfg();
    const int wh = cfg.grid_w * cfg.grid_h;
    std::mt19937_64 rng(42);
    for (bool repos : {false, true}) {
        cfg.fusion_positions = repos;
        ParamStore store;
        auto params = make_fusion(store, cfg, rng);
        auto pos = spatial_positional_encoding(cfg.grid_w, cfg.grid_h, cfg.d);
        auto hl = Tensor::from(random_values(static_cast<std::size_t>(cfg.tokens) * cfg.d, rng),
                               {cfg.tokens, cfg.d}, true);
        auto hv = Tensor::from(random_values(static_cast<std::size_t>(wh) * cfg.d, rng),
                               {wh, cfg.d}, true);
        std::vector<std::uint8_t> valid{1, 1, 1, 0};
        std::vector<TensorPtr> leaves = store.param_tensors();
        leaves.push_back(hl);
        leaves.push_back(hv);
        auto wsum = Tensor::from(
            random_values(static_cast<std::size_t>(cfg.tokens + wh) * cfg.d, rng),
            {cfg.tokens + wh, cfg.d});
        auto rep = gradcheck(
            [&] { return sum(mul(fuse(hl, hv, valid, pos, params, cfg), wsum)); }, leaves,
            1e-5, 1e-6, 24, &rng);
        CHECK(rep.max_rel_err < 1e-4);
    }
}
