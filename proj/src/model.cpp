#include "gridword/model.hpp"

namespace gridword {

GroundingModel::GroundingModel(const Config& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    text_ = make_text_encoder(store_, cfg_, rng);
    img_ = make_image_encoder(store_, cfg_, rng);
    if (cfg_.variant == "concat-baseline") {
        mlp_w1 = store_.add_param("mlp.w1", xavier_uniform(2 * cfg_.d, cfg_.d, rng));
        mlp_b1 = store_.add_param("mlp.b1", Tensor::zeros({1, cfg_.d}));
        mlp_w2 = store_.add_param("mlp.w2", xavier_uniform(cfg_.d, cfg_.d, rng));
        mlp_b2 = store_.add_param("mlp.b2", Tensor::zeros({1, cfg_.d}));
    } else {
        const bool with_lgv = cfg_.variant != "vgl-only";
        const bool with_vgl = cfg_.variant != "lgv-only";
        cross_ = make_cross(store_, cfg_, rng, with_lgv, with_vgl);
        fusion_ = make_fusion(store_, cfg_, rng);
    }
    head_ = make_head(store_, cfg_, rng);
    pos_ = spatial_positional_encoding(cfg_.grid_w, cfg_.grid_h, cfg_.d);
}

std::vector<std::uint8_t> GroundingModel::word_valid_mask(const std::vector<int>& ids) {
    std::vector<std::uint8_t> m(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) m[i] = ids[i] != 0 ? 1 : 0;
    return m;
}

HeadOutput GroundingModel::forward(const std::vector<int>& ids,
                                   const std::vector<double>& image, bool training,
                                   bool update_bn_stats, AttnTrace* trace) {
    TensorPtr E = encode_text(ids, text_, cfg_);
    TensorPtr G = encode_image(image, img_, cfg_, training, update_bn_stats);
    const auto valid = word_valid_mask(ids);

    TensorPtr visual;
    if (cfg_.variant == "concat-baseline") {
        TensorPtr sentence = masked_mean_rows(E, valid);
        TensorPtr tiled = repeat_row(sentence, cfg_.grid_w * cfg_.grid_h);
        TensorPtr cat = concat_cols(G, tiled);
        TensorPtr h1 = relu(add_bias(matmul(cat, mlp_w1), mlp_b1));
        visual = add_bias(matmul(h1, mlp_w2), mlp_b2);
    } else {
        CrossOutputs co = cross_attention_module(E, G, valid, pos_, cross_, cfg_, trace);
        TensorPtr fused = fuse(co.h_lgv, co.h_vgl, valid, pos_, fusion_, cfg_, trace);
        visual = slice_visual(fused, cfg_);
    }
    return head_forward(visual, head_);
}

}  // namespace gridword
