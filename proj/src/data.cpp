#include "gridword/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace gridword {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Vocabulary

Vocab Vocab::standard() {
    Vocab v;
    v.tokens = {"[PAD]", "[CLS]", "[SEP]", "[UNK]",
                "the",   "shape", "in",    "top",    "bottom", "left",
                "right", "of",    "above", "below",  "biggest", "smallest",
                "large", "small", "red",   "green",  "blue",   "yellow",
                "purple", "circle", "square", "triangle"};
    for (int i = 0; i < static_cast<int>(v.tokens.size()); ++i) v.index[v.tokens[i]] = i;
    return v;
}

int Vocab::id(const std::string& word) const {
    auto it = index.find(word);
    return it == index.end() ? kUnk : it->second;
}

Vocab load_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary file: " + path);
    Vocab v;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        v.index[line] = static_cast<int>(v.tokens.size());
        v.tokens.push_back(line);
    }
    if (v.size() < 4 || v.tokens[0] != "[PAD]" || v.tokens[1] != "[CLS]" ||
        v.tokens[2] != "[SEP]" || v.tokens[3] != "[UNK]")
        throw VocabError("vocabulary must start with [PAD] [CLS] [SEP] [UNK]");
    return v;
}

void save_vocab(const Vocab& v, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write vocabulary file: " + path);
    for (const auto& t : v.tokens) out << t << '\n';
}

std::vector<int> tokenize(const std::string& text, const Vocab& v, int T, bool* truncated) {
    if (T < 2) throw ConfigError("token budget must fit [CLS] and [SEP]");
    std::vector<int> ids;
    ids.reserve(static_cast<std::size_t>(T));
    ids.push_back(Vocab::kCls);
    std::istringstream ss(text);
    std::string word;
    bool trunc = false;
    while (ss >> word) {
        if (static_cast<int>(ids.size()) == T - 1) {
            trunc = true;
            break;
        }
        ids.push_back(v.id(word));
    }
    ids.push_back(Vocab::kSep);
    ids.resize(static_cast<std::size_t>(T), Vocab::kPad);
    if (truncated) *truncated = trunc;
    return ids;
}

// ---------------------------------------------------------------------------
// Letterboxing

Letterboxed letterbox(const std::vector<double>& chw, int in_w, int in_h, int target,
                      double fill) {
    if (in_w <= 0 || in_h <= 0 || target <= 0)
        throw ValidationError("letterbox requires positive dimensions");
    if (chw.size() != static_cast<std::size_t>(3) * in_w * in_h)
        throw ShapeError("letterbox input is not a 3-channel image of the stated size");

    Letterboxed out;
    out.target = target;
    out.scale = static_cast<double>(target) / std::max(in_w, in_h);
    const int out_w = static_cast<int>(std::lround(in_w * out.scale));
    const int out_h = static_cast<int>(std::lround(in_h * out.scale));
    out.pad_x = (target - out_w) / 2.0;
    out.pad_y = (target - out_h) / 2.0;
    out.chw.assign(static_cast<std::size_t>(3) * target * target, fill);

    auto src = [&](int c, int x, int y) {
        x = std::clamp(x, 0, in_w - 1);
        y = std::clamp(y, 0, in_h - 1);
        return chw[static_cast<std::size_t>(c) * in_h * in_w +
                   static_cast<std::size_t>(y) * in_w + x];
    };
    for (int c = 0; c < 3; ++c)
        for (int oy = 0; oy < target; ++oy)
            for (int ox = 0; ox < target; ++ox) {
                const double rx = ox - out.pad_x, ry = oy - out.pad_y;
                if (rx < 0 || ry < 0 || rx >= out_w || ry >= out_h) continue;
                const double sx = (rx + 0.5) / out.scale - 0.5;
                const double sy = (ry + 0.5) / out.scale - 0.5;
                const int x0 = static_cast<int>(std::floor(sx));
                const int y0 = static_cast<int>(std::floor(sy));
                const double fx = sx - x0, fy = sy - y0;
                const double v = (1 - fx) * (1 - fy) * src(c, x0, y0) +
                                 fx * (1 - fy) * src(c, x0 + 1, y0) +
                                 (1 - fx) * fy * src(c, x0, y0 + 1) +
                                 fx * fy * src(c, x0 + 1, y0 + 1);
                out.chw[static_cast<std::size_t>(c) * target * target +
                        static_cast<std::size_t>(oy) * target + ox] = v;
            }
    return out;
}

BBox box_to_letterbox(const BBox& b, const Letterboxed& t) {
    return {b.x * t.scale + t.pad_x, b.y * t.scale + t.pad_y, b.w * t.scale, b.h * t.scale};
}

BBox box_from_letterbox(const BBox& b, const Letterboxed& t) {
    return {(b.x - t.pad_x) / t.scale, (b.y - t.pad_y) / t.scale, b.w / t.scale,
            b.h / t.scale};
}

// ---------------------------------------------------------------------------
// Scene generation

const char* to_word(ShapeKind s) {
    switch (s) {
        case ShapeKind::circle: return "circle";
        case ShapeKind::square: return "square";
        default: return "triangle";
    }
}
const char* to_word(ColorName c) {
    switch (c) {
        case ColorName::red: return "red";
        case ColorName::green: return "green";
        case ColorName::blue: return "blue";
        case ColorName::yellow: return "yellow";
        default: return "purple";
    }
}
const char* to_word(SizeClass s) { return s == SizeClass::small ? "small" : "large"; }

const char* to_word(QueryCategory c) {
    switch (c) {
        case QueryCategory::absolute: return "absolute";
        case QueryCategory::attribute: return "attribute";
        case QueryCategory::relation: return "relation";
        default: return "compare";
    }
}

QueryCategory category_from_word(const std::string& w) {
    if (w == "absolute") return QueryCategory::absolute;
    if (w == "attribute") return QueryCategory::attribute;
    if (w == "relation") return QueryCategory::relation;
    if (w == "compare") return QueryCategory::compare;
    throw ConfigError("unknown query category: " + w);
}

namespace {

struct Rgb {
    double r, g, b;
};

Rgb color_value(ColorName c) {
    switch (c) {
        case ColorName::red: return {0.90, 0.10, 0.10};
        case ColorName::green: return {0.10, 0.80, 0.15};
        case ColorName::blue: return {0.10, 0.25, 0.90};
        case ColorName::yellow: return {0.95, 0.90, 0.10};
        default: return {0.60, 0.15, 0.80};
    }
}

constexpr double kBackground = 0.5;

/// Pixel-center membership, half-open on the right/bottom edges so adjacent
/// shapes never share a pixel column.
bool covers(const SceneObject& o, double px, double py) {
    const BBox& b = o.bbox;
    const double x0 = b.x - b.w / 2, x1 = b.x + b.w / 2;
    const double y0 = b.y - b.h / 2, y1 = b.y + b.h / 2;
    switch (o.shape) {
        case ShapeKind::square:
            return px >= x0 && px < x1 && py >= y0 && py < y1;
        case ShapeKind::circle: {
            const double r = b.w / 2;
            const double dx = px - b.x, dy = py - b.y;
            return dx * dx + dy * dy <= r * r;
        }
        default: {  // isoceles triangle, apex up
            if (py < y0 || py >= y1) return false;
            const double half = (py - y0) / (y1 - y0) * (b.w / 2);
            return std::fabs(px - b.x) <= half;
        }
    }
}

void rasterize(Scene& scene) {
    const int W = scene.img_w, H = scene.img_h;
    scene.image.assign(static_cast<std::size_t>(3) * H * W, kBackground);
    for (const auto& o : scene.objects) {
        const Rgb c = color_value(o.color);
        const int x_lo = std::max(0, static_cast<int>(std::floor(o.bbox.x - o.bbox.w)));
        const int x_hi = std::min(W - 1, static_cast<int>(std::ceil(o.bbox.x + o.bbox.w)));
        const int y_lo = std::max(0, static_cast<int>(std::floor(o.bbox.y - o.bbox.h)));
        const int y_hi = std::min(H - 1, static_cast<int>(std::ceil(o.bbox.y + o.bbox.h)));
        for (int y = y_lo; y <= y_hi; ++y)
            for (int x = x_lo; x <= x_hi; ++x) {
                if (!covers(o, x + 0.5, y + 0.5)) continue;
                const std::size_t px = static_cast<std::size_t>(y) * W + x;
                scene.image[px] = c.r;
                scene.image[static_cast<std::size_t>(H) * W + px] = c.g;
                scene.image[static_cast<std::size_t>(2) * H * W + px] = c.b;
            }
    }
}

}  // namespace

Scene generate_scene(std::mt19937_64& rng, const Config& cfg, int n_objects) {
    std::uniform_int_distribution<int> n_dist(2, 6);
    const int n = n_objects < 0 ? n_dist(rng) : n_objects;
    if (n < 2 || n > 6) throw GenerationError("scene wants 2..6 objects");

    Scene scene;
    scene.img_w = cfg.img_w;
    scene.img_h = cfg.img_h;
    const double unit = cfg.img_w / 64.0;  // size ranges are calibrated at 64 px

    std::uniform_int_distribution<int> shape_d(0, 2), color_d(0, 4), size_class_d(0, 1);
    std::uniform_real_distribution<double> small_d(9.0 * unit, 14.0 * unit);
    std::uniform_real_distribution<double> large_d(19.0 * unit, 26.0 * unit);

    for (int scene_try = 0; scene_try < 40; ++scene_try) {
        scene.objects.clear();
        bool ok = true;
        for (int i = 0; i < n && ok; ++i) {
            SceneObject o;
            o.shape = static_cast<ShapeKind>(shape_d(rng));
            o.color = static_cast<ColorName>(color_d(rng));
            o.size_class = static_cast<SizeClass>(size_class_d(rng));
            const double s = o.size_class == SizeClass::small ? small_d(rng) : large_d(rng);
            o.draw_order = i;
            bool placed = false;
            for (int t = 0; t < 120 && !placed; ++t) {
                std::uniform_real_distribution<double> cx(s / 2 + 1.0, cfg.img_w - s / 2 - 1.0);
                std::uniform_real_distribution<double> cy(s / 2 + 1.0, cfg.img_h - s / 2 - 1.0);
                o.bbox = {cx(rng), cy(rng), s, s};
                placed = true;
                for (const auto& prev : scene.objects)
                    if (iou(o.bbox, prev.bbox) >= 0.1) {
                        placed = false;
                        break;
                    }
            }
            if (placed)
                scene.objects.push_back(o);
            else
                ok = false;
        }
        if (ok) {
            rasterize(scene);
            return scene;
        }
    }
    throw GenerationError("could not place objects without overlap after bounded retries");
}

// ---------------------------------------------------------------------------
// Query templates

namespace {

struct AttrPhrase {
    std::optional<SizeClass> size;
    std::optional<ColorName> color;
    std::optional<ShapeKind> shape;
};

bool attr_matches(const SceneObject& o, const AttrPhrase& p) {
    if (p.size && *p.size != o.size_class) return false;
    if (p.color && *p.color != o.color) return false;
    if (p.shape && *p.shape != o.shape) return false;
    return true;
}

int count_matches(const Scene& s, const AttrPhrase& p) {
    int n = 0;
    for (const auto& o : s.objects) n += attr_matches(o, p);
    return n;
}

std::string attr_words(const AttrPhrase& p) {
    std::string out;
    if (p.size) out += std::string(to_word(*p.size)) + " ";
    if (p.color) out += std::string(to_word(*p.color)) + " ";
    out += p.shape ? to_word(*p.shape) : "shape";
    return out;
}

AttrPhrase phrase_for(const SceneObject& o, unsigned mask) {
    AttrPhrase p;
    if (mask & 1u) p.size = o.size_class;
    if (mask & 2u) p.color = o.color;
    if (mask & 4u) p.shape = o.shape;
    return p;
}

enum class Rel { left_of, right_of, above, below };

constexpr double kRelMargin = 2.0;

bool rel_holds(const SceneObject& a, const SceneObject& b, Rel r) {
    switch (r) {
        case Rel::left_of: return a.bbox.x < b.bbox.x - kRelMargin;
        case Rel::right_of: return a.bbox.x > b.bbox.x + kRelMargin;
        case Rel::above: return a.bbox.y < b.bbox.y - kRelMargin;
        default: return a.bbox.y > b.bbox.y + kRelMargin;
    }
}

const char* rel_words(Rel r) {
    switch (r) {
        case Rel::left_of: return "left of";
        case Rel::right_of: return "right of";
        case Rel::above: return "above";
        default: return "below";
    }
}

std::optional<QuerySample> try_absolute(const Scene& s, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(s.objects.size()) - 1);
    const int ti = pick(rng);
    const auto& t = s.objects[static_cast<std::size_t>(ti)];
    const bool top = t.bbox.y < s.img_h / 2.0;
    const bool left = t.bbox.x < s.img_w / 2.0;
    int n = 0;
    for (const auto& o : s.objects)
        n += (o.bbox.y < s.img_h / 2.0) == top && (o.bbox.x < s.img_w / 2.0) == left;
    if (n != 1) return std::nullopt;
    QuerySample q;
    q.text = std::string("the shape in the ") + (top ? "top" : "bottom") + " " +
             (left ? "left" : "right");
    q.category = QueryCategory::absolute;
    q.target_index = ti;
    q.target_bbox = t.bbox;
    return q;
}

std::optional<QuerySample> try_attribute(const Scene& s, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(s.objects.size()) - 1);
    std::uniform_int_distribution<unsigned> mask_d(1, 7);
    const int ti = pick(rng);
    const auto p = phrase_for(s.objects[static_cast<std::size_t>(ti)], mask_d(rng));
    if (count_matches(s, p) != 1) return std::nullopt;
    QuerySample q;
    q.text = "the " + attr_words(p);
    q.category = QueryCategory::attribute;
    q.target_index = ti;
    q.target_bbox = s.objects[static_cast<std::size_t>(ti)].bbox;
    return q;
}

std::optional<QuerySample> try_relation(const Scene& s, std::mt19937_64& rng) {
    const int n = static_cast<int>(s.objects.size());
    std::uniform_int_distribution<int> pick(0, n - 1);
    const int ti = pick(rng);
    int ri = pick(rng);
    if (ri == ti) return std::nullopt;
    const auto& t = s.objects[static_cast<std::size_t>(ti)];
    const auto& r = s.objects[static_cast<std::size_t>(ri)];

    std::vector<Rel> holding;
    for (Rel rel : {Rel::left_of, Rel::right_of, Rel::above, Rel::below})
        if (rel_holds(t, r, rel)) holding.push_back(rel);
    if (holding.empty()) return std::nullopt;
    std::uniform_int_distribution<int> rel_pick(0, static_cast<int>(holding.size()) - 1);
    const Rel rel = holding[static_cast<std::size_t>(rel_pick(rng))];

    // The reference needs its own unambiguous description.
    std::uniform_int_distribution<unsigned> mask_d(1, 7);
    AttrPhrase ref;
    bool found = false;
    for (int attempt = 0; attempt < 8 && !found; ++attempt) {
        ref = phrase_for(r, mask_d(rng));
        found = count_matches(s, ref) == 1;
    }
    if (!found) return std::nullopt;

    int candidates = 0;
    for (int i = 0; i < n; ++i) {
        if (i == ri) continue;
        const auto& o = s.objects[static_cast<std::size_t>(i)];
        candidates += o.shape == t.shape && rel_holds(o, r, rel);
    }
    if (candidates != 1) return std::nullopt;

    QuerySample q;
    q.text = "the " + std::string(to_word(t.shape)) + " " + rel_words(rel) + " the " +
             attr_words(ref);
    q.category = QueryCategory::relation;
    q.target_index = ti;
    q.target_bbox = t.bbox;
    return q;
}

std::optional<QuerySample> try_compare(const Scene& s, std::mt19937_64& rng) {
    std::vector<ShapeKind> classes;
    for (ShapeKind k : {ShapeKind::circle, ShapeKind::square, ShapeKind::triangle}) {
        int n = 0;
        for (const auto& o : s.objects) n += o.shape == k;
        if (n >= 2) classes.push_back(k);
    }
    if (classes.empty()) return std::nullopt;
    std::uniform_int_distribution<int> class_pick(0, static_cast<int>(classes.size()) - 1);
    std::uniform_int_distribution<int> dir_pick(0, 1);
    const ShapeKind k = classes[static_cast<std::size_t>(class_pick(rng))];
    const bool biggest = dir_pick(rng) == 0;

    int best = -1;
    double best_a = 0, second_a = 0;
    for (int i = 0; i < static_cast<int>(s.objects.size()); ++i) {
        const auto& o = s.objects[static_cast<std::size_t>(i)];
        if (o.shape != k) continue;
        const double area = o.bbox.w * o.bbox.h;
        const double key = biggest ? area : -area;
        if (best < 0 || key > (biggest ? best_a : -best_a)) {
            if (best >= 0) second_a = best_a;
            best = i;
            best_a = area;
        } else if (second_a == 0 ||
                   (biggest ? area > second_a : area < second_a)) {
            second_a = area;
        }
    }
    // A clear margin keeps the comparison visually learnable.
    const double ratio = biggest ? best_a / second_a : second_a / best_a;
    if (ratio < 1.2) return std::nullopt;

    QuerySample q;
    q.text = std::string("the ") + (biggest ? "biggest" : "smallest") + " " + to_word(k);
    q.category = QueryCategory::compare;
    q.target_index = best;
    q.target_bbox = s.objects[static_cast<std::size_t>(best)].bbox;
    return q;
}

}  // namespace

std::optional<QuerySample> generate_query(const Scene& scene, std::mt19937_64& rng,
                                          QueryCategory category) {
    if (scene.objects.empty()) throw GenerationError("query needs a populated scene");
    switch (category) {
        case QueryCategory::absolute: return try_absolute(scene, rng);
        case QueryCategory::attribute: return try_attribute(scene, rng);
        case QueryCategory::relation: return try_relation(scene, rng);
        default: return try_compare(scene, rng);
    }
}

// ---------------------------------------------------------------------------
// PPM I/O

void write_ppm(const std::string& path, const std::vector<double>& chw, int w, int h) {
    if (chw.size() != static_cast<std::size_t>(3) * w * h)
        throw ShapeError("ppm writer expects a 3-channel image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image: " + path);
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = chw[static_cast<std::size_t>(c) * h * w +
                                     static_cast<std::size_t>(y) * w + x];
                row[static_cast<std::size_t>(x) * 3 + c] = static_cast<unsigned char>(
                    std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
}

std::vector<std::uint8_t> read_ppm(const std::string& path, int& w, int& h) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path);
    std::string magic;
    int maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0)
        throw IoError("unsupported image format in " + path);
    in.get();  // single whitespace after maxval
    std::vector<std::uint8_t> inter(static_cast<std::size_t>(3) * w * h);
    in.read(reinterpret_cast<char*>(inter.data()), static_cast<std::streamsize>(inter.size()));
    if (in.gcount() != static_cast<std::streamsize>(inter.size()))
        throw IoError("truncated image: " + path);
    std::vector<std::uint8_t> chw(inter.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                chw[static_cast<std::size_t>(c) * h * w + static_cast<std::size_t>(y) * w + x] =
                    inter[(static_cast<std::size_t>(y) * w + x) * 3 + c];
    return chw;
}

// ---------------------------------------------------------------------------
// Dataset writer / loader

std::vector<double> DataSample::image() const {
    std::vector<double> img(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) img[i] = pixels[i] / 255.0;
    return img;
}

static constexpr const char* kIndexMagic = "GRIDWORD-DATA-V1";

void generate_dataset(const GenSpec& spec, const Config& cfg) {
    cfg.validate();
    if (spec.n <= 0) throw GenerationError("dataset size must be positive");
    if (spec.categories.empty()) throw GenerationError("need at least one query category");

    fs::create_directories(fs::path(spec.out_dir) / "images");
    const Vocab vocab = Vocab::standard();
    save_vocab(vocab, (fs::path(spec.out_dir) / "vocab.txt").string());

    std::ofstream index(fs::path(spec.out_dir) / "index.txt");
    if (!index) throw IoError("cannot write dataset index in " + spec.out_dir);
    index << kIndexMagic << "\n";

    int truncated_total = 0;
    for (int i = 0; i < spec.n; ++i) {
        const std::uint64_t seed = spec.seed + static_cast<std::uint64_t>(i);
        std::mt19937_64 rng(seed);
        const QueryCategory cat =
            spec.categories[static_cast<std::size_t>(i) % spec.categories.size()];

        std::optional<QuerySample> q;
        Scene scene;
        for (int scene_try = 0; scene_try < 40 && !q; ++scene_try) {
            scene = generate_scene(rng, cfg);
            for (int t = 0; t < 40 && !q; ++t) q = generate_query(scene, rng, cat);
        }
        if (!q)
            throw GenerationError("sample " + std::to_string(i) +
                                  ": no unambiguous query after bounded retries");

        bool truncated = false;
        const auto ids = tokenize(q->text, vocab, cfg.tokens, &truncated);
        truncated_total += truncated;

        char rel[64];
        std::snprintf(rel, sizeof rel, "images/%06d.ppm", i);
        write_ppm((fs::path(spec.out_dir) / rel).string(), scene.image, scene.img_w,
                  scene.img_h);

        char box[128];
        std::snprintf(box, sizeof box, "%.6f %.6f %.6f %.6f", q->target_bbox.x,
                      q->target_bbox.y, q->target_bbox.w, q->target_bbox.h);
        index << i << " " << seed << " " << to_word(cat) << " " << box << " ";
        for (std::size_t k = 0; k < ids.size(); ++k)
            index << (k ? "," : "") << ids[k];
        index << " " << rel << "\n";
    }
    if (truncated_total > 0)
        std::fprintf(stderr, "warning: %d queries were truncated to the token budget\n",
                      truncated_total);
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream index(fs::path(dir) / "index.txt");
    if (!index) throw IoError("cannot open dataset index in " + dir);
    std::string magic;
    std::getline(index, magic);
    if (magic != kIndexMagic)
        throw VersionError("unrecognized dataset index header in " + dir);

    Dataset ds;
    ds.vocab = load_vocab((fs::path(dir) / "vocab.txt").string());

    std::string line;
    while (std::getline(index, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        DataSample s;
        std::string cat, ids_csv, rel;
        if (!(ss >> s.id >> s.seed >> cat >> s.bbox.x >> s.bbox.y >> s.bbox.w >> s.bbox.h >>
              ids_csv >> rel))
            throw IoError("malformed dataset record: " + line);
        s.category = category_from_word(cat);
        std::istringstream cs(ids_csv);
        std::string tok;
        while (std::getline(cs, tok, ',')) s.token_ids.push_back(std::stoi(tok));
        s.pixels = read_ppm((fs::path(dir) / rel).string(), s.img_w, s.img_h);
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw IoError("dataset in " + dir + " has no samples");
    return ds;
}

}  // namespace gridword
