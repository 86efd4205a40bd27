#pragma once

#include <cstdint>
#include <vector>

#include "gridword/attention.hpp"
#include "gridword/config.hpp"
#include "gridword/encoders.hpp"
#include "gridword/fusion.hpp"
#include "gridword/localization.hpp"
#include "gridword/params.hpp"

namespace gridword {

/// Full grounding network. The config's `variant` selects which sub-modules
/// exist and receive parameters:
///   full            cross-attention (LGV+VGL) -> fusion -> head
///   lgv-only        LGV stack only; raw grid features stand in for H_VGL
///   vgl-only        VGL stack only; raw word features stand in for H_LGV
///   concat-baseline valid-token mean tiled onto grid rows -> 2-layer MLP -> head
class GroundingModel {
public:
    explicit GroundingModel(const Config& cfg);

    /// ids: exactly T token ids. image: 3*H*W doubles in [0, 1], CHW.
    HeadOutput forward(const std::vector<int>& ids, const std::vector<double>& image,
                       bool training, bool update_bn_stats, AttnTrace* trace = nullptr);

    static std::vector<std::uint8_t> word_valid_mask(const std::vector<int>& ids);

    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }
    const Config& config() const { return cfg_; }
    const TensorPtr& positions() const { return pos_; }

private:
    Config cfg_;
    ParamStore store_;
    TextEncoderParams text_;
    ImageEncoderParams img_;
    CrossParams cross_;
    FusionParams fusion_;
    TensorPtr mlp_w1, mlp_b1, mlp_w2, mlp_b2;  // concat-baseline only
    HeadParams head_;
    TensorPtr pos_;
};

}  // namespace gridword
