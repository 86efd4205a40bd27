#pragma once

#include <random>
#include <vector>

#include "gridword/attention.hpp"
#include "gridword/config.hpp"

namespace gridword {

struct FusionParams {
    std::vector<TransformerLayerParams> layers;
};

FusionParams make_fusion(ParamStore& store, const Config& cfg, std::mt19937_64& rng);

/// Concatenates word rows over grid rows into a (T + w*h) x d sequence and
/// runs K self-attention layers. [PAD] word rows are masked as keys; grid
/// keys are always valid. With cfg.fusion_positions the spatial encoding is
/// re-added to the grid rows of the query/key inputs at every layer.
TensorPtr fuse(const TensorPtr& h_lgv, const TensorPtr& h_vgl,
               const std::vector<std::uint8_t>& word_valid, const TensorPtr& pos,
               const FusionParams& p, const Config& cfg, AttnTrace* trace = nullptr);

/// Rows [T, T + w*h) of the fused sequence, in grid order.
TensorPtr slice_visual(const TensorPtr& fused, const Config& cfg);

}  // namespace gridword
