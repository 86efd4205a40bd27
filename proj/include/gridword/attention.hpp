#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gridword/config.hpp"
#include "gridword/ops.hpp"
#include "gridword/params.hpp"
#include "gridword/tensor.hpp"

namespace gridword {

/// DETR-style 2D sinusoidal encoding over a w x h grid, one row per cell in
/// row-major order. The first d/2 channels encode x as interleaved sin/cos at
/// geometric frequencies 10000^(-i/(d/4)); the last d/2 encode y the same
/// way. Parameter-free and deterministic; d % 4 != 0 raises ConfigError.
TensorPtr spatial_positional_encoding(int w, int h, int d);

/// Capture sink for attention weight matrices, fed to the heatmap exporter.
struct AttnTrace {
    struct Entry {
        std::string tag;  // e.g. "lgv.0", "fusion.2"
        int head;
        int rows, cols;
        std::vector<double> weights;  // rows x cols, post-softmax
    };
    std::vector<Entry> entries;
};

struct AttentionParams {
    TensorPtr wq, wk, wv, wo;  // each d x d, heads packed along columns
};

struct FFNParams {
    TensorPtr w1, b1, w2, b2;  // d -> dff -> d
};

struct LayerNormParams {
    TensorPtr gamma, beta;
};

struct TransformerLayerParams {
    AttentionParams attn;
    FFNParams ffn;
    LayerNormParams ln1, ln2;
};

/// Registers one layer's parameters under `prefix.` in deterministic order.
TransformerLayerParams make_transformer_layer(ParamStore& store, const std::string& prefix,
                                              int d, int dff, std::mt19937_64& rng);

/// softmax(Q K^T / sqrt(d/m)) V per head, heads concatenated, then output
/// projection. Masked keys get exact zero weight. When `trace` is non-null
/// each head's weight matrix is appended under `tag`.
TensorPtr multi_head_attention(const TensorPtr& q_in, const TensorPtr& k_in,
                               const TensorPtr& v_in,
                               const std::vector<std::uint8_t>& key_mask,
                               const AttentionParams& p, int heads,
                               AttnTrace* trace = nullptr, const std::string& tag = "");

/// Post-norm transformer layer: attention, residual add of `x`, layer norm,
/// FFN, residual, layer norm. `q_in`/`k_in` may differ from `x`/`v_in` when
/// positional encodings are added to query or key inputs only.
TensorPtr transformer_layer(const TensorPtr& x, const TensorPtr& q_in, const TensorPtr& k_in,
                            const TensorPtr& v_in, const std::vector<std::uint8_t>& key_mask,
                            const TransformerLayerParams& p, int heads,
                            AttnTrace* trace = nullptr, const std::string& tag = "");

struct CrossParams {
    std::vector<TransformerLayerParams> lgv;  // queries = words
    std::vector<TransformerLayerParams> vgl;  // queries = grid
};

CrossParams make_cross(ParamStore& store, const Config& cfg, std::mt19937_64& rng,
                       bool with_lgv, bool with_vgl);

struct CrossOutputs {
    TensorPtr h_lgv;  // T x d
    TensorPtr h_vgl;  // (w*h) x d
};

/// N LGV layers and N VGL layers. In the default parallel mode both stacks
/// read the original E and G; with cfg.interleaved_cross each layer reads the
/// other stack's previous output. Positions ride on grid keys (LGV) and grid
/// queries (VGL), never on values. An empty `lgv`/`vgl` parameter stack
/// passes the corresponding raw input through (ablation variants).
CrossOutputs cross_attention_module(const TensorPtr& E, const TensorPtr& G,
                                    const std::vector<std::uint8_t>& word_valid,
                                    const TensorPtr& pos, const CrossParams& p,
                                    const Config& cfg, AttnTrace* trace = nullptr);

}  // namespace gridword
