#pragma once

#include <random>
#include <string>
#include <vector>

#include "gridword/config.hpp"
#include "gridword/ops.hpp"
#include "gridword/params.hpp"
#include "gridword/tensor.hpp"

namespace gridword {

struct TextEncoderParams {
    TensorPtr word_emb;  // vocab x d
    TensorPtr pos_emb;   // T x d, learned
};

TextEncoderParams make_text_encoder(ParamStore& store, const Config& cfg,
                                    std::mt19937_64& rng);

/// E[t] = word_emb[ids[t]] + pos_emb[t]. Ids must be exactly T long and in
/// range; violations raise VocabError.
TensorPtr encode_text(const std::vector<int>& ids, const TextEncoderParams& p,
                      const Config& cfg);

struct ImageEncoderParams {
    struct ConvLayer {
        TensorPtr w, b;
        int in_ch, out_ch;
    };
    std::vector<ConvLayer> convs;  // 3x3 stride-2 convs with ReLU
    TensorPtr proj_w, proj_b;      // 1x1 conv, d_g -> d
    BatchNormState bn;             // over the d projected channels
};

ImageEncoderParams make_image_encoder(ParamStore& store, const Config& cfg,
                                      std::mt19937_64& rng);

/// image: 3*H*W doubles, CHW layout, values in [0, 1]. Returns (w*h) x d grid
/// rows after the strided conv stack, 1x1 projection, batch norm, and ReLU.
/// Wrong input size raises ShapeError.
TensorPtr encode_image(const std::vector<double>& image_chw, ImageEncoderParams& p,
                       const Config& cfg, bool training, bool update_bn_stats);

}  // namespace gridword
