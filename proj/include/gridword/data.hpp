#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "gridword/config.hpp"
#include "gridword/errors.hpp"
#include "gridword/localization.hpp"

namespace gridword {

// ---------------------------------------------------------------------------
// Vocabulary and tokenization

/// Token table. Ids 0..3 are reserved: [PAD], [CLS], [SEP], [UNK].
struct Vocab {
    std::vector<std::string> tokens;
    std::unordered_map<std::string, int> index;

    static constexpr int kPad = 0, kCls = 1, kSep = 2, kUnk = 3;

    /// The built-in table covering the query template grammar.
    static Vocab standard();

    int id(const std::string& word) const;  // kUnk when absent
    int size() const { return static_cast<int>(tokens.size()); }
};

Vocab load_vocab(const std::string& path);
void save_vocab(const Vocab& v, const std::string& path);

/// [CLS] + word ids + [SEP], padded with [PAD] to exactly T slots. Words
/// beyond T-2 are dropped; `truncated`, when given, reports that.
std::vector<int> tokenize(const std::string& text, const Vocab& v, int T,
                          bool* truncated = nullptr);

// ---------------------------------------------------------------------------
// Letterboxing (for ingesting images whose size differs from the config)

struct Letterboxed {
    std::vector<double> chw;  // 3 * target * target
    int target = 0;
    double scale = 1.0;
    double pad_x = 0.0, pad_y = 0.0;
};

/// Aspect-preserving resize of the long edge to `target`, centered padding
/// with `fill`. Bilinear sampling.
Letterboxed letterbox(const std::vector<double>& chw, int in_w, int in_h, int target,
                      double fill);

BBox box_to_letterbox(const BBox& b, const Letterboxed& t);
BBox box_from_letterbox(const BBox& b, const Letterboxed& t);

// ---------------------------------------------------------------------------
// Synthetic scenes

enum class ShapeKind { circle, square, triangle };
enum class ColorName { red, green, blue, yellow, purple };
enum class SizeClass { small, large };

const char* to_word(ShapeKind s);
const char* to_word(ColorName c);
const char* to_word(SizeClass s);

struct SceneObject {
    ShapeKind shape;
    ColorName color;
    SizeClass size_class;
    BBox bbox;       // exact extent of the rendered shape
    int draw_order;  // position in painter's order
};

struct Scene {
    std::vector<double> image;  // 3*H*W in [0, 1], CHW
    std::vector<SceneObject> objects;
    int img_w = 0, img_h = 0;
};

/// Solid shapes on a mid-gray background, no anti-aliasing, pixel-center
/// membership. Pairwise IoU between object boxes stays below 0.1.
/// Throws GenerationError when placement fails after bounded retries.
Scene generate_scene(std::mt19937_64& rng, const Config& cfg, int n_objects = -1);

enum class QueryCategory { absolute, attribute, relation, compare };

const char* to_word(QueryCategory c);
QueryCategory category_from_word(const std::string& w);

struct QuerySample {
    std::string text;
    QueryCategory category;
    int target_index = -1;
    BBox target_bbox;
};

/// Fills one template of the requested category and verifies, exhaustively
/// over the scene's objects, that exactly one object satisfies it. Returns
/// nullopt when the draw is ambiguous or has no referent (normal outcome).
std::optional<QuerySample> generate_query(const Scene& scene, std::mt19937_64& rng,
                                          QueryCategory category);

// ---------------------------------------------------------------------------
// Dataset on disk: index.txt + vocab.txt + images/*.ppm

struct DataSample {
    std::int64_t id = 0;
    std::uint64_t seed = 0;
    QueryCategory category = QueryCategory::attribute;
    BBox bbox;
    std::vector<int> token_ids;
    std::vector<std::uint8_t> pixels;  // 3*H*W, CHW, quantized
    int img_w = 0, img_h = 0;

    std::vector<double> image() const;  // pixels / 255
};

struct Dataset {
    std::vector<DataSample> samples;
    Vocab vocab;
};

struct GenSpec {
    std::string out_dir;
    int n = 0;
    std::uint64_t seed = 0;  // sample i uses seed + i; keep split ranges disjoint
    std::vector<QueryCategory> categories;  // assigned round-robin
};

/// Writes index.txt, vocab.txt, and one PPM per sample.
void generate_dataset(const GenSpec& spec, const Config& cfg);

Dataset load_dataset(const std::string& dir);

void write_ppm(const std::string& path, const std::vector<double>& chw, int w, int h);
std::vector<std::uint8_t> read_ppm(const std::string& path, int& w, int& h);

}  // namespace gridword
