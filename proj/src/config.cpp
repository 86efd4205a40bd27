#include "gridword/config.hpp"

#include <fstream>
#include <sstream>

#include "gridword/errors.hpp"

namespace gridword {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + key + ": '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError("bad boolean for " + key + ": '" + v + "' (use 0/1/true/false)");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
    if (out.empty()) throw ConfigError("empty list for " + key);
    return out;
}

std::string fmt_double(double x) {
    std::ostringstream os;
    os << x;
    return os.str();
}

}  // namespace

Config Config::desk() { return Config{}; }

Config Config::full_scale() {
    Config c;
    c.d = 768;
    c.heads = 8;
    c.cross_layers = 2;
    c.fusion_layers = 4;
    c.tokens = 20;
    c.grid_w = c.grid_h = 16;
    c.img_w = c.img_h = 256;
    c.dff = 1536;
    c.conv_channels = {64, 128, 256, 512};
    c.lr = 5e-5;
    c.epochs = 100;
    return c;
}

Config Config::tiny() {
    Config c;
    c.d = 8;
    c.heads = 2;
    c.cross_layers = 1;
    c.fusion_layers = 1;
    c.tokens = 4;
    c.grid_w = c.grid_h = 2;
    c.img_w = c.img_h = 16;
    c.dff = 16;
    c.vocab = 26;  // covers the standard query vocabulary
    c.conv_channels = {4, 6, 8};
    return c;
}

void Config::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (d <= 0) fail("d must be positive");
    if (d % 4 != 0) fail("d must be divisible by 4 for the positional encoding");
    if (heads <= 0 || d % heads != 0) fail("d must be divisible by heads");
    if (cross_layers < 1) fail("cross_layers must be at least 1");
    if (fusion_layers < 1) fail("fusion_layers must be at least 1");
    if (tokens < 3) fail("tokens must fit [CLS], one word, [SEP]");
    if (grid_w <= 0 || grid_h <= 0 || img_w <= 0 || img_h <= 0) fail("dims must be positive");
    if (img_w % grid_w != 0 || img_h % grid_h != 0) fail("image dims must be grid multiples");
    if (img_w / grid_w != img_h / grid_h) fail("x and y strides must match");
    if (dff <= 0) fail("dff must be positive");
    if (vocab < 5) fail("vocab must cover the 4 reserved ids plus one word");
    if (conv_channels.empty()) fail("conv_channels must not be empty");
    for (int c : conv_channels)
        if (c <= 0) fail("conv_channels entries must be positive");
    int stride = 1;
    for (std::size_t i = 0; i < conv_channels.size(); ++i) stride *= 2;
    if (stride != img_w / grid_w)
        fail("2^len(conv_channels) must equal the image-to-grid stride");
    if (variant != "full" && variant != "lgv-only" && variant != "vgl-only" &&
        variant != "concat-baseline")
        fail("unknown variant: " + variant);
    if (lambda_off < 0 || lambda_rgr < 0) fail("loss weights must be non-negative");
    if (lr <= 0) fail("lr must be positive");
    if (epochs < 1) fail("epochs must be at least 1");
    if (batch < 1) fail("batch must be at least 1");
    if (lr_halve_every < 1) fail("lr_halve_every must be at least 1");
    if (target_easy < 0 || target_easy > 1 || target_hard < 0 || target_hard > 1)
        fail("early-stop targets must lie in [0, 1]");
}

std::string Config::serialize() const {
    std::ostringstream os;
    os << "d=" << d << "\n";
    os << "heads=" << heads << "\n";
    os << "cross_layers=" << cross_layers << "\n";
    os << "fusion_layers=" << fusion_layers << "\n";
    os << "tokens=" << tokens << "\n";
    os << "grid_w=" << grid_w << "\n";
    os << "grid_h=" << grid_h << "\n";
    os << "img_w=" << img_w << "\n";
    os << "img_h=" << img_h << "\n";
    os << "dff=" << dff << "\n";
    os << "vocab=" << vocab << "\n";
    os << "conv_channels=";
    for (std::size_t i = 0; i < conv_channels.size(); ++i)
        os << (i ? "," : "") << conv_channels[i];
    os << "\n";
    os << "variant=" << variant << "\n";
    os << "interleaved_cross=" << (interleaved_cross ? 1 : 0) << "\n";
    os << "fusion_positions=" << (fusion_positions ? 1 : 0) << "\n";
    os << "giou_from_argmax=" << (giou_from_argmax ? 1 : 0) << "\n";
    os << "lambda_off=" << fmt_double(lambda_off) << "\n";
    os << "lambda_rgr=" << fmt_double(lambda_rgr) << "\n";
    os << "lr=" << fmt_double(lr) << "\n";
    os << "epochs=" << epochs << "\n";
    os << "batch=" << batch << "\n";
    os << "lr_halve_every=" << lr_halve_every << "\n";
    os << "seed=" << seed << "\n";
    os << "early_stop=" << (early_stop ? 1 : 0) << "\n";
    os << "target_easy=" << fmt_double(target_easy) << "\n";
    os << "target_hard=" << fmt_double(target_hard) << "\n";
    return os.str();
}

void apply_config_override(Config& c, const std::string& key, const std::string& value) {
    if (key == "d")
        c.d = parse_int(key, value);
    else if (key == "heads")
        c.heads = parse_int(key, value);
    else if (key == "cross_layers")
        c.cross_layers = parse_int(key, value);
    else if (key == "fusion_layers")
        c.fusion_layers = parse_int(key, value);
    else if (key == "tokens")
        c.tokens = parse_int(key, value);
    else if (key == "grid_w")
        c.grid_w = parse_int(key, value);
    else if (key == "grid_h")
        c.grid_h = parse_int(key, value);
    else if (key == "img_w")
        c.img_w = parse_int(key, value);
    else if (key == "img_h")
        c.img_h = parse_int(key, value);
    else if (key == "dff")
        c.dff = parse_int(key, value);
    else if (key == "vocab")
        c.vocab = parse_int(key, value);
    else if (key == "conv_channels")
        c.conv_channels = parse_int_list(key, value);
    else if (key == "variant")
        c.variant = value;
    else if (key == "interleaved_cross")
        c.interleaved_cross = parse_bool(key, value);
    else if (key == "fusion_positions")
        c.fusion_positions = parse_bool(key, value);
    else if (key == "giou_from_argmax")
        c.giou_from_argmax = parse_bool(key, value);
    else if (key == "lambda_off")
        c.lambda_off = parse_double(key, value);
    else if (key == "lambda_rgr")
        c.lambda_rgr = parse_double(key, value);
    else if (key == "lr")
        c.lr = parse_double(key, value);
    else if (key == "epochs")
        c.epochs = parse_int(key, value);
    else if (key == "batch")
        c.batch = parse_int(key, value);
    else if (key == "lr_halve_every")
        c.lr_halve_every = parse_int(key, value);
    else if (key == "seed")
        c.seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "early_stop")
        c.early_stop = parse_bool(key, value);
    else if (key == "target_easy")
        c.target_easy = parse_double(key, value);
    else if (key == "target_hard")
        c.target_hard = parse_double(key, value);
    else
        throw ConfigError("unknown config key: " + key);
}

Config parse_config_text(const std::string& text) {
    // First pass: locate a preset line so later keys override it wherever
    // they appear in the file.
    Config cfg = Config::desk();
    std::istringstream pre(text);
    std::string line;
    while (std::getline(pre, line)) {
        line = trim(line);
        if (line.rfind("preset=", 0) == 0) {
            const std::string p = trim(line.substr(7));
            if (p == "desk")
                cfg = Config::desk();
            else if (p == "full-scale")
                cfg = Config::full_scale();
            else if (p == "tiny")
                cfg = Config::tiny();
            else
                throw ConfigError("unknown preset: " + p);
        }
    }
    std::istringstream in(text);
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key=value, got: " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "preset") continue;
        apply_config_override(cfg, key, value);
    }
    return cfg;
}

Config parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace gridword
