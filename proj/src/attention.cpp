#include "gridword/attention.hpp"

#include <cmath>

namespace gridword {

TensorPtr spatial_positional_encoding(int w, int h, int d) {
    if (d % 4 != 0) throw ConfigError("positional encoding requires d divisible by 4");
    const int quarter = d / 4;  // frequency count per axis
    std::vector<double> freq(static_cast<std::size_t>(quarter));
    for (int i = 0; i < quarter; ++i)
        freq[i] = 1.0 / std::pow(10000.0, static_cast<double>(i) / quarter);
    std::vector<double> v(static_cast<std::size_t>(w) * h * d);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double* row = &v[(static_cast<std::size_t>(y) * w + x) * d];
            for (int i = 0; i < quarter; ++i) {
                row[2 * i] = std::sin(x * freq[i]);
                row[2 * i + 1] = std::cos(x * freq[i]);
                row[d / 2 + 2 * i] = std::sin(y * freq[i]);
                row[d / 2 + 2 * i + 1] = std::cos(y * freq[i]);
            }
        }
    }
    return Tensor::from(std::move(v), {w * h, d});
}

TransformerLayerParams make_transformer_layer(ParamStore& store, const std::string& prefix,
                                              int d, int dff, std::mt19937_64& rng) {
    TransformerLayerParams p;
    p.attn.wq = store.add_param(prefix + ".wq", xavier_uniform(d, d, rng));
    p.attn.wk = store.add_param(prefix + ".wk", xavier_uniform(d, d, rng));
    p.attn.wv = store.add_param(prefix + ".wv", xavier_uniform(d, d, rng));
    p.attn.wo = store.add_param(prefix + ".wo", xavier_uniform(d, d, rng));
    p.ffn.w1 = store.add_param(prefix + ".ffn.w1", xavier_uniform(d, dff, rng));
    p.ffn.b1 = store.add_param(prefix + ".ffn.b1", Tensor::zeros({1, dff}));
    p.ffn.w2 = store.add_param(prefix + ".ffn.w2", xavier_uniform(dff, d, rng));
    p.ffn.b2 = store.add_param(prefix + ".ffn.b2", Tensor::zeros({1, d}));
    p.ln1.gamma = store.add_param(prefix + ".ln1.g", Tensor::full({1, d}, 1.0));
    p.ln1.beta = store.add_param(prefix + ".ln1.b", Tensor::zeros({1, d}));
    p.ln2.gamma = store.add_param(prefix + ".ln2.g", Tensor::full({1, d}, 1.0));
    p.ln2.beta = store.add_param(prefix + ".ln2.b", Tensor::zeros({1, d}));
    return p;
}

TensorPtr multi_head_attention(const TensorPtr& q_in, const TensorPtr& k_in,
                               const TensorPtr& v_in,
                               const std::vector<std::uint8_t>& key_mask,
                               const AttentionParams& p, int heads, AttnTrace* trace,
                               const std::string& tag) {
    const int d = q_in->cols();
    if (k_in->cols() != d || v_in->cols() != d)
        throw ShapeError("attention: feature dims differ");
    if (k_in->rows() != v_in->rows()) throw ShapeError("attention: key/value counts differ");
    if (heads <= 0 || d % heads != 0) throw ShapeError("attention: d must divide by heads");
    const int hd = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    TensorPtr Q = matmul(q_in, p.wq);
    TensorPtr K = matmul(k_in, p.wk);
    TensorPtr V = matmul(v_in, p.wv);

    TensorPtr cat;
    for (int hidx = 0; hidx < heads; ++hidx) {
        TensorPtr qh = slice_cols(Q, hidx * hd, (hidx + 1) * hd);
        TensorPtr kh = slice_cols(K, hidx * hd, (hidx + 1) * hd);
        TensorPtr vh = slice_cols(V, hidx * hd, (hidx + 1) * hd);
        TensorPtr scores = mul_scalar(matmul_nt(qh, kh), scale);
        TensorPtr weights = softmax_rows(scores, key_mask);
        if (trace)
            trace->entries.push_back(
                {tag, hidx, weights->rows(), weights->cols(), weights->values});
        TensorPtr oh = matmul(weights, vh);
        cat = cat ? concat_cols(cat, oh) : oh;
    }
    return matmul(cat, p.wo);
}

TensorPtr transformer_layer(const TensorPtr& x, const TensorPtr& q_in, const TensorPtr& k_in,
                            const TensorPtr& v_in, const std::vector<std::uint8_t>& key_mask,
                            const TransformerLayerParams& p, int heads, AttnTrace* trace,
                            const std::string& tag) {
    TensorPtr attn = multi_head_attention(q_in, k_in, v_in, key_mask, p.attn, heads, trace, tag);
    TensorPtr h = layer_norm(add(x, attn), p.ln1.gamma, p.ln1.beta);
    TensorPtr f = add_bias(matmul(relu(add_bias(matmul(h, p.ffn.w1), p.ffn.b1)), p.ffn.w2),
                           p.ffn.b2);
    return layer_norm(add(h, f), p.ln2.gamma, p.ln2.beta);
}

CrossParams make_cross(ParamStore& store, const Config& cfg, std::mt19937_64& rng,
                       bool with_lgv, bool with_vgl) {
    CrossParams p;
    for (int n = 0; n < cfg.cross_layers; ++n) {
        if (with_lgv)
            p.lgv.push_back(make_transformer_layer(store, "cross.lgv." + std::to_string(n),
                                                   cfg.d, cfg.dff, rng));
        if (with_vgl)
            p.vgl.push_back(make_transformer_layer(store, "cross.vgl." + std::to_string(n),
                                                   cfg.d, cfg.dff, rng));
    }
    return p;
}

CrossOutputs cross_attention_module(const TensorPtr& E, const TensorPtr& G,
                                    const std::vector<std::uint8_t>& word_valid,
                                    const TensorPtr& pos, const CrossParams& p,
                                    const Config& cfg, AttnTrace* trace) {
    if (static_cast<int>(word_valid.size()) != E->rows())
        throw MaskError("cross attention: word mask length must equal T");
    const std::vector<std::uint8_t> grid_all(static_cast<std::size_t>(G->rows()), 1);

    auto lgv_step = [&](const TensorPtr& e, const TensorPtr& g, int n) {
        // Queries are words; grid positions ride on the key inputs only.
        return transformer_layer(e, e, add(g, pos), g, grid_all, p.lgv[static_cast<std::size_t>(n)],
                                 cfg.heads, trace, "lgv." + std::to_string(n));
    };
    auto vgl_step = [&](const TensorPtr& g, const TensorPtr& e, int n) {
        // Queries are grid cells (positions added); [PAD] word keys masked.
        return transformer_layer(g, add(g, pos), e, e, word_valid,
                                 p.vgl[static_cast<std::size_t>(n)], cfg.heads, trace,
                                 "vgl." + std::to_string(n));
    };

    CrossOutputs out;
    if (cfg.interleaved_cross && !p.lgv.empty() && !p.vgl.empty()) {
        TensorPtr e = E, g = G;
        for (int n = 0; n < cfg.cross_layers; ++n) {
            TensorPtr e_next = lgv_step(e, g, n);
            TensorPtr g_next = vgl_step(g, e, n);
            e = e_next;
            g = g_next;
        }
        out.h_lgv = e;
        out.h_vgl = g;
        return out;
    }

    // Parallel stacks: both read the original E and G.
    TensorPtr e = E;
    for (std::size_t n = 0; n < p.lgv.size(); ++n)
        e = lgv_step(e, G, static_cast<int>(n));
    TensorPtr g = G;
    for (std::size_t n = 0; n < p.vgl.size(); ++n)
        g = vgl_step(g, E, static_cast<int>(n));
    out.h_lgv = e;
    out.h_vgl = g;
    return out;
}

}  // namespace gridword
