#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gridword {

/// Flat run configuration. The desk preset is the tested default; the
/// full-scale preset is the production-sized model, which validates but is
/// not sized for CPU runs; tiny is for exhaustive gradient checks.
struct Config {
    // Model.
    int d = 64;
    int heads = 4;
    int cross_layers = 2;   // N: LGV layers and VGL layers each
    int fusion_layers = 4;  // K
    int tokens = 12;        // T, includes [CLS]/[SEP]
    int grid_w = 8, grid_h = 8;
    int img_w = 64, img_h = 64;
    int dff = 128;
    int vocab = 48;
    // Image encoder: one 3x3 stride-2 conv per entry; the last entry is the
    // pre-projection channel count. 2^len(conv_channels) must equal the
    // image-to-grid stride.
    std::vector<int> conv_channels = {16, 32, 64};
    std::string variant = "full";  // full | lgv-only | vgl-only | concat-baseline
    bool interleaved_cross = false;
    bool fusion_positions = false;
    bool giou_from_argmax = false;
    double lambda_off = 5.0, lambda_rgr = 5.0;

    // Training.
    double lr = 1e-3;
    int epochs = 30;
    int batch = 8;
    int lr_halve_every = 10;
    std::uint64_t seed = 1;
    bool early_stop = false;
    double target_easy = 0.90;  // attribute+absolute accuracy for early stop
    double target_hard = 0.75;  // relation+compare accuracy for early stop

    static Config desk();
    static Config full_scale();
    static Config tiny();

    /// Raises ConfigError describing the first violated constraint.
    void validate() const;

    /// Canonical key=value form; fixed key order, parse(serialize(c)) == c.
    std::string serialize() const;
};

/// Parses key=value lines ('#' comments, blank lines allowed). A `preset`
/// key is applied first regardless of position; remaining keys override it.
/// Unknown keys or malformed values raise ConfigError.
Config parse_config_text(const std::string& text);
Config parse_config_file(const std::string& path);

/// Applies one `key=value` override onto an existing config.
void apply_config_override(Config& cfg, const std::string& key, const std::string& value);

}  // namespace gridword
