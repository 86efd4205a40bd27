#include "gridword/fusion.hpp"

namespace gridword {

FusionParams make_fusion(ParamStore& store, const Config& cfg, std::mt19937_64& rng) {
    FusionParams p;
    for (int k = 0; k < cfg.fusion_layers; ++k)
        p.layers.push_back(
            make_transformer_layer(store, "fusion." + std::to_string(k), cfg.d, cfg.dff, rng));
    return p;
}

TensorPtr fuse(const TensorPtr& h_lgv, const TensorPtr& h_vgl,
               const std::vector<std::uint8_t>& word_valid, const TensorPtr& pos,
               const FusionParams& p, const Config& cfg, AttnTrace* trace) {
    if (h_lgv->rows() != cfg.tokens || h_vgl->rows() != cfg.grid_w * cfg.grid_h)
        throw ShapeError("fuse: input row counts must be T and w*h");
    if (static_cast<int>(word_valid.size()) != cfg.tokens)
        throw MaskError("fuse: word mask length must equal T");

    std::vector<std::uint8_t> key_mask(word_valid);
    key_mask.insert(key_mask.end(), static_cast<std::size_t>(h_vgl->rows()), 1);

    TensorPtr s = concat_rows(h_lgv, h_vgl);
    TensorPtr pos_padded;
    if (cfg.fusion_positions)
        pos_padded = concat_rows(Tensor::zeros({cfg.tokens, cfg.d}), pos);
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        TensorPtr qk_in = cfg.fusion_positions ? add(s, pos_padded) : s;
        s = transformer_layer(s, qk_in, qk_in, s, key_mask, p.layers[k], cfg.heads, trace,
                              "fusion." + std::to_string(k));
    }
    return s;
}

TensorPtr slice_visual(const TensorPtr& fused, const Config& cfg) {
    return slice_rows(fused, cfg.tokens, cfg.tokens + cfg.grid_w * cfg.grid_h);
}

}  // namespace gridword
