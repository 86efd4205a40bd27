#include "gridword/encoders.hpp"

namespace gridword {

TextEncoderParams make_text_encoder(ParamStore& store, const Config& cfg,
                                    std::mt19937_64& rng) {
    TextEncoderParams p;
    p.word_emb = store.add_param("text.word_emb", normal_init(cfg.vocab, cfg.d, 0.1, rng));
    p.pos_emb = store.add_param("text.pos_emb", normal_init(cfg.tokens, cfg.d, 0.1, rng));
    return p;
}

TensorPtr encode_text(const std::vector<int>& ids, const TextEncoderParams& p,
                      const Config& cfg) {
    if (static_cast<int>(ids.size()) != cfg.tokens)
        throw VocabError("token sequence must have exactly T ids");
    for (int id : ids)
        if (id < 0 || id >= cfg.vocab) throw VocabError("token id outside vocabulary");
    return add(embed(p.word_emb, ids), p.pos_emb);
}

ImageEncoderParams make_image_encoder(ParamStore& store, const Config& cfg,
                                      std::mt19937_64& rng) {
    ImageEncoderParams p;
    int in_ch = 3;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        const int out_ch = cfg.conv_channels[i];
        const std::string prefix = "img.conv" + std::to_string(i);
        ImageEncoderParams::ConvLayer layer;
        layer.w = store.add_param(prefix + ".w", kaiming_conv(out_ch, in_ch, 3, rng));
        layer.b = store.add_param(prefix + ".b", Tensor::zeros({1, out_ch}));
        layer.in_ch = in_ch;
        layer.out_ch = out_ch;
        p.convs.push_back(layer);
        in_ch = out_ch;
    }
    p.proj_w = store.add_param("img.proj.w", kaiming_conv(cfg.d, in_ch, 1, rng));
    p.proj_b = store.add_param("img.proj.b", Tensor::zeros({1, cfg.d}));
    p.bn.gamma = store.add_param("img.bn.g", Tensor::full({1, cfg.d}, 1.0));
    p.bn.beta = store.add_param("img.bn.b", Tensor::zeros({1, cfg.d}));
    p.bn.running_mean = store.add_buffer("img.bn.rm", Tensor::zeros({1, cfg.d}));
    p.bn.running_var = store.add_buffer("img.bn.rv", Tensor::full({1, cfg.d}, 1.0));
    return p;
}

TensorPtr encode_image(const std::vector<double>& image_chw, ImageEncoderParams& p,
                       const Config& cfg, bool training, bool update_bn_stats) {
    if (static_cast<std::int64_t>(image_chw.size()) !=
        static_cast<std::int64_t>(3) * cfg.img_h * cfg.img_w)
        throw ShapeError("image must be 3 x H x W");
    TensorPtr x = Tensor::from(image_chw, {static_cast<int>(image_chw.size()), 1});
    int H = cfg.img_h, W = cfg.img_w;
    int ch = 3;
    for (const auto& layer : p.convs) {
        x = relu(conv2d(x, ch, H, W, layer.w, layer.out_ch, 3, layer.b, 2, 1));
        ch = layer.out_ch;
        H = (H + 2 - 3) / 2 + 1;
        W = (W + 2 - 3) / 2 + 1;
    }
    x = conv2d(x, ch, H, W, p.proj_w, cfg.d, 1, p.proj_b, 1, 0);
    x = batch_norm_chw(x, cfg.d, H, W, p.bn, training, update_bn_stats);
    x = relu(x);
    return chw_to_rows(x, cfg.d, H, W);
}

}  // namespace gridword
