#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "gridword/data.hpp"

using namespace gridword;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Independent query interpreter: re-resolves an expression against the object
// list from the text alone. Returns the satisfying object index, or -1 when
// none / -2 when ambiguous.

std::vector<std::string> words_of(const std::string& text) {
    std::istringstream ss(text);
    std::vector<std::string> w;
    std::string x;
    while (ss >> x) w.push_back(x);
    return w;
}

bool is_shape_word(const std::string& w) {
    return w == "circle" || w == "square" || w == "triangle";
}
bool is_color_word(const std::string& w) {
    return w == "red" || w == "green" || w == "blue" || w == "yellow" || w == "purple";
}

struct ParsedAttrs {
    std::string size, color, shape;  // empty = unstated; shape may be "shape"
};

ParsedAttrs parse_attrs(const std::vector<std::string>& w, std::size_t from) {
    ParsedAttrs p;
    std::size_t i = from;
    if (i < w.size() && (w[i] == "large" || w[i] == "small")) p.size = w[i++];
    if (i < w.size() && is_color_word(w[i])) p.color = w[i++];
    REQUIRE(i + 1 == w.size());
    REQUIRE((is_shape_word(w[i]) || w[i] == "shape"));
    p.shape = w[i];
    return p;
}

bool attrs_match(const SceneObject& o, const ParsedAttrs& p) {
    if (!p.size.empty() && p.size != to_word(o.size_class)) return false;
    if (!p.color.empty() && p.color != to_word(o.color)) return false;
    if (p.shape != "shape" && p.shape != to_word(o.shape)) return false;
    return true;
}

int unique_index(const std::vector<int>& hits) {
    if (hits.empty()) return -1;
    return hits.size() == 1 ? hits[0] : -2;
}

// Mirrors the generator's relation semantics: a 2 px center margin.
bool rel_true(const SceneObject& a, const SceneObject& b, const std::string& rel) {
    if (rel == "left") return a.bbox.x < b.bbox.x - 2.0;
    if (rel == "right") return a.bbox.x > b.bbox.x + 2.0;
    if (rel == "above") return a.bbox.y < b.bbox.y - 2.0;
    return a.bbox.y > b.bbox.y + 2.0;
}

int resolve(const Scene& s, const std::string& text) {
    const auto w = words_of(text);
    REQUIRE(w.size() >= 2);
    REQUIRE(w[0] == "the");

    if (w.size() == 6 && w[1] == "shape" && w[2] == "in" && w[3] == "the") {
        const bool top = w[4] == "top", left = w[5] == "left";
        std::vector<int> hits;
        for (int i = 0; i < static_cast<int>(s.objects.size()); ++i) {
            const auto& o = s.objects[static_cast<std::size_t>(i)];
            if ((o.bbox.y < s.img_h / 2.0) == top && (o.bbox.x < s.img_w / 2.0) == left)
                hits.push_back(i);
        }
        return unique_index(hits);
    }

    if (w[1] == "biggest" || w[1] == "smallest") {
        REQUIRE(w.size() == 3);
        const bool biggest = w[1] == "biggest";
        int best = -1;
        double best_a = 0;
        for (int i = 0; i < static_cast<int>(s.objects.size()); ++i) {
            const auto& o = s.objects[static_cast<std::size_t>(i)];
            if (to_word(o.shape) != w[2]) continue;
            const double a = o.bbox.w * o.bbox.h;
            if (best < 0 || (biggest ? a > best_a : a < best_a)) {
                best = i;
                best_a = a;
            }
        }
        return best;
    }

    // Relation: "the <shape> left|right of the ..." or "the <shape> above|below the ..."
    std::size_t rel_at = 0;
    for (std::size_t i = 2; i < w.size() && !rel_at; ++i)
        if (w[i] == "left" || w[i] == "right" || w[i] == "above" || w[i] == "below")
            rel_at = i;
    if (rel_at) {
        REQUIRE(rel_at == 2);
        REQUIRE(is_shape_word(w[1]));
        const std::string rel = w[2];
        std::size_t ref_the = (rel == "left" || rel == "right") ? 4 : 3;
        if (rel == "left" || rel == "right") REQUIRE(w[3] == "of");
        REQUIRE(w[ref_the] == "the");
        const auto ref = parse_attrs(w, ref_the + 1);

        std::vector<int> ref_hits;
        for (int i = 0; i < static_cast<int>(s.objects.size()); ++i)
            if (attrs_match(s.objects[static_cast<std::size_t>(i)], ref)) ref_hits.push_back(i);
        if (ref_hits.size() != 1) return -2;
        const int ri = ref_hits[0];

        std::vector<int> hits;
        for (int i = 0; i < static_cast<int>(s.objects.size()); ++i) {
            if (i == ri) continue;
            const auto& o = s.objects[static_cast<std::size_t>(i)];
            if (to_word(o.shape) == w[1] &&
                rel_true(o, s.objects[static_cast<std::size_t>(ri)], rel))
                hits.push_back(i);
        }
        return unique_index(hits);
    }

    const auto attrs = parse_attrs(w, 1);
    std::vector<int> hits;
    for (int i = 0; i < static_cast<int>(s.objects.size()); ++i)
        if (attrs_match(s.objects[static_cast<std::size_t>(i)], attrs)) hits.push_back(i);
    return unique_index(hits);
}

}  // namespace

TEST_CASE("tokenize produces [CLS] ids [SEP] padded to the budget") {
    const Vocab v = Vocab::standard();
    const int T = 12;

    auto ids = tokenize("red circle", v, T);
    std::vector<int> want = {Vocab::kCls, v.id("red"), v.id("circle"), Vocab::kSep};
    want.resize(static_cast<std::size_t>(T), Vocab::kPad);
    CHECK(ids == want);
    CHECK(v.id("red") != Vocab::kUnk);

    CHECK(tokenize("", v, T) ==
          std::vector<int>{1, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});

    auto unk = tokenize("red wombat circle", v, T);
    CHECK(unk[2] == Vocab::kUnk);
    CHECK(unk[3] == v.id("circle"));
    CHECK(static_cast<int>(unk.size()) == T);

    bool truncated = false;
    auto cut = tokenize("the large red circle", v, 4, &truncated);
    CHECK(truncated);
    CHECK(static_cast<int>(cut.size()) == 4);
    CHECK(cut == std::vector<int>{1, v.id("the"), v.id("large"), 2});

    truncated = true;
    tokenize("red", v, 4, &truncated);
    CHECK(!truncated);
}

TEST_CASE("vocabulary file round-trips and rejects a bad header") {
    const Vocab v = Vocab::standard();
    const auto path = fs::temp_directory_path() / "gw_vocab_rt.txt";
    save_vocab(v, path.string());
    const Vocab back = load_vocab(path.string());
    CHECK(back.tokens == v.tokens);
    CHECK(back.id("purple") == v.id("purple"));
    CHECK(back.id("not-a-word") == Vocab::kUnk);

    std::ofstream(path) << "the\nred\ncircle\nsquare\n";
    CHECK_THROWS_AS(load_vocab(path.string()), VocabError);
    CHECK_THROWS_AS(load_vocab("/nonexistent/vocab.txt"), IoError);
    std::remove(path.string().c_str());
}

TEST_CASE("letterbox geometry: identity, long-edge scaling, round-trip") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    std::vector<double> square(static_cast<std::size_t>(3) * 64 * 64);
    for (double& x : square) x = u(rng);
    auto id = letterbox(square, 64, 64, 64, 0.0);
    CHECK(id.scale == 1.0);
    CHECK(id.pad_x == 0.0);
    CHECK(id.pad_y == 0.0);
    CHECK(id.chw == square);

    std::vector<double> wide(static_cast<std::size_t>(3) * 64 * 128);  // 128 wide, 64 tall
    for (double& x : wide) x = u(rng);
    auto lb = letterbox(wide, 128, 64, 64, 0.25);
    CHECK(lb.scale == 0.5);
    CHECK(lb.pad_x == 0.0);
    CHECK(lb.pad_y == 16.0);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                const double v =
                    lb.chw[static_cast<std::size_t>(c) * 64 * 64 + static_cast<std::size_t>(y) * 64 + x];
                if (y < 16 || y >= 48) CHECK(v == 0.25);
            }

    for (int rep = 0; rep < 100; ++rep) {
        std::uniform_real_distribution<double> cx(5.0, 123.0), cy(5.0, 59.0), sz(2.0, 10.0);
        BBox b{cx(rng), cy(rng), sz(rng), sz(rng)};
        BBox fwd = box_to_letterbox(b, lb);
        BBox back = box_from_letterbox(fwd, lb);
        CHECK(std::fabs(back.x - b.x) < 0.5);
        CHECK(std::fabs(back.y - b.y) < 0.5);
        CHECK(std::fabs(back.w - b.w) < 0.5);
        CHECK(std::fabs(back.h - b.h) < 0.5);
    }

    CHECK_THROWS_AS(letterbox(square, 0, 64, 64, 0.0), ValidationError);
    CHECK_THROWS_AS(letterbox(square, 63, 64, 64, 0.0), ShapeError);
}

TEST_CASE("scene generation: determinism, separation, containment") {
    Config cfg = Config::desk();
    std::mt19937_64 a(100), b(100);
    Scene s1 = generate_scene(a, cfg);
    Scene s2 = generate_scene(b, cfg);
    CHECK(s1.image == s2.image);
    REQUIRE(s1.objects.size() == s2.objects.size());
    for (std::size_t i = 0; i < s1.objects.size(); ++i) {
        CHECK(s1.objects[i].bbox.x == s2.objects[i].bbox.x);
        CHECK(s1.objects[i].shape == s2.objects[i].shape);
    }

    std::mt19937_64 rng(200);
    for (int rep = 0; rep < 30; ++rep) {
        Scene s = generate_scene(rng, cfg, rep % 2 ? 2 : -1);
        if (rep % 2) CHECK(s.objects.size() == 2);
        CHECK(s.objects.size() >= 2);
        CHECK(s.objects.size() <= 6);
        for (std::size_t i = 0; i < s.objects.size(); ++i) {
            const BBox& bb = s.objects[i].bbox;
            CHECK(bb.x - bb.w / 2 >= 0.0);
            CHECK(bb.y - bb.h / 2 >= 0.0);
            CHECK(bb.x + bb.w / 2 <= cfg.img_w);
            CHECK(bb.y + bb.h / 2 <= cfg.img_h);
            for (std::size_t j = i + 1; j < s.objects.size(); ++j)
                CHECK(iou(bb, s.objects[j].bbox) < 0.1);
        }
    }
}

TEST_CASE("rendered square covers its box area; paint stays inside boxes") {
    Config cfg = Config::desk();
    std::mt19937_64 rng(300);
    int squares_checked = 0;
    for (int rep = 0; rep < 60 && squares_checked < 10; ++rep) {
        Scene s = generate_scene(rng, cfg);

        // Any painted pixel must lie inside some object's box.
        for (int y = 0; y < cfg.img_h; ++y)
            for (int x = 0; x < cfg.img_w; ++x) {
                if (s.image[static_cast<std::size_t>(y) * cfg.img_w + x] == 0.5) continue;
                bool inside = false;
                for (const auto& o : s.objects) {
                    const BBox& b = o.bbox;
                    if (x + 0.5 >= b.x - b.w / 2 && x + 0.5 <= b.x + b.w / 2 &&
                        y + 0.5 >= b.y - b.h / 2 && y + 0.5 <= b.y + b.h / 2)
                        inside = true;
                }
                CHECK(inside);
            }

        for (std::size_t i = 0; i < s.objects.size(); ++i) {
            const auto& o = s.objects[i];
            if (o.shape != ShapeKind::square) continue;
            bool isolated = true;
            for (std::size_t j = 0; j < s.objects.size(); ++j)
                if (j != i && iou(o.bbox, s.objects[j].bbox) > 0.0) isolated = false;
            if (!isolated) continue;
            ++squares_checked;

            int painted = 0;
            for (int y = 0; y < cfg.img_h; ++y)
                for (int x = 0; x < cfg.img_w; ++x) {
                    const double px = x + 0.5, py = y + 0.5;
                    if (px < o.bbox.x - o.bbox.w / 2 || px > o.bbox.x + o.bbox.w / 2 ||
                        py < o.bbox.y - o.bbox.h / 2 || py > o.bbox.y + o.bbox.h / 2)
                        continue;
                    painted += s.image[static_cast<std::size_t>(y) * cfg.img_w + x] != 0.5;
                }
            const double area = o.bbox.w * o.bbox.h;
            CHECK(std::fabs(painted - area) <= 2 * (o.bbox.w + o.bbox.h) + 4);
        }
    }
    CHECK(squares_checked >= 10);
}

TEST_CASE("every accepted query resolves to its target under a fresh interpreter") {
    Config cfg = Config::desk();
    std::mt19937_64 rng(400);
    int accepted[4] = {0, 0, 0, 0};
    const QueryCategory cats[4] = {QueryCategory::absolute, QueryCategory::attribute,
                                   QueryCategory::relation, QueryCategory::compare};
    for (int rep = 0; rep < 400; ++rep) {
        Scene s = generate_scene(rng, cfg);
        const QueryCategory cat = cats[rep % 4];
        auto q = generate_query(s, rng, cat);
        if (!q) continue;
        ++accepted[rep % 4];
        CHECK(q->category == cat);
        CHECK(resolve(s, q->text) == q->target_index);
        const BBox& tb = s.objects[static_cast<std::size_t>(q->target_index)].bbox;
        CHECK(q->target_bbox.x == tb.x);
        CHECK(q->target_bbox.w == tb.w);
    }
    for (int c = 0; c < 4; ++c) {
        CAPTURE(c);
        CHECK(accepted[c] >= 20);  // rejection happens, but not overwhelmingly
    }
}

TEST_CASE("attribute ambiguity forces rejection") {
    // Two identical red circles: any attribute phrase matches both.
    Config cfg = Config::desk();
    Scene s;
    s.img_w = cfg.img_w;
    s.img_h = cfg.img_h;
    s.objects.push_back({ShapeKind::circle, ColorName::red, SizeClass::small,
                         {16, 16, 10, 10}, 0});
    s.objects.push_back({ShapeKind::circle, ColorName::red, SizeClass::small,
                         {48, 48, 10, 10}, 1});
    std::mt19937_64 rng(500);
    for (int rep = 0; rep < 50; ++rep)
        CHECK(!generate_query(s, rng, QueryCategory::attribute).has_value());

    // Make one blue: now color (or any phrase including it) disambiguates.
    s.objects[1].color = ColorName::blue;
    int hits = 0;
    for (int rep = 0; rep < 50; ++rep) {
        auto q = generate_query(s, rng, QueryCategory::attribute);
        if (!q) continue;
        ++hits;
        CHECK(resolve(s, q->text) == q->target_index);
    }
    CHECK(hits > 0);
}

TEST_CASE("ppm image round-trips through quantization") {
    std::mt19937_64 rng(600);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int w = 16, h = 8;
    std::vector<double> img(static_cast<std::size_t>(3) * w * h);
    for (double& x : img) x = u(rng);

    const auto path = fs::temp_directory_path() / "gw_rt.ppm";
    write_ppm(path.string(), img, w, h);
    int rw = 0, rh = 0;
    auto back = read_ppm(path.string(), rw, rh);
    CHECK(rw == w);
    CHECK(rh == h);
    REQUIRE(back.size() == img.size());
    for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(back[i] == static_cast<std::uint8_t>(std::lround(img[i] * 255.0)));
    std::remove(path.string().c_str());

    CHECK_THROWS_AS(read_ppm("/nonexistent.ppm", rw, rh), IoError);
}

TEST_CASE("dataset writer round-trips and is byte-deterministic") {
    Config cfg = Config::desk();
    const auto root = fs::temp_directory_path() / "gw_ds";
    fs::remove_all(root);

    GenSpec spec;
    spec.out_dir = (root / "a").string();
    spec.n = 24;
    spec.seed = 7000;
    spec.categories = {QueryCategory::absolute, QueryCategory::attribute,
                       QueryCategory::relation, QueryCategory::compare};
    generate_dataset(spec, cfg);
    spec.out_dir = (root / "b").string();
    generate_dataset(spec, cfg);

    CHECK(slurp(root / "a" / "index.txt") == slurp(root / "b" / "index.txt"));
    CHECK(slurp(root / "a" / "images" / "000005.ppm") ==
          slurp(root / "b" / "images" / "000005.ppm"));

    Dataset ds = load_dataset((root / "a").string());
    REQUIRE(ds.samples.size() == 24);
    CHECK(ds.vocab.tokens == Vocab::standard().tokens);
    int cat_counts[4] = {0, 0, 0, 0};
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        CHECK(s.id == static_cast<std::int64_t>(i));
        CHECK(s.seed == 7000 + i);
        ++cat_counts[static_cast<int>(s.category)];
        CHECK(static_cast<int>(s.token_ids.size()) == cfg.tokens);
        for (int id : s.token_ids) {
            CHECK(id >= 0);
            CHECK(id < ds.vocab.size());
        }
        CHECK(s.img_w == cfg.img_w);
        CHECK(s.img_h == cfg.img_h);
        CHECK(s.pixels.size() == static_cast<std::size_t>(3) * cfg.img_w * cfg.img_h);
        CHECK_NOTHROW(build_target(s.bbox, cfg));
        const auto img = s.image();
        CHECK(img[0] == s.pixels[0] / 255.0);
    }
    // Round-robin assignment keeps categories exactly balanced.
    for (int c = 0; c < 4; ++c) CHECK(cat_counts[c] == 6);

    // Seed-disjoint splits share no sample seeds.
    GenSpec other = spec;
    other.out_dir = (root / "c").string();
    other.seed = 7024;
    other.n = 8;
    generate_dataset(other, cfg);
    Dataset ds2 = load_dataset((root / "c").string());
    for (const auto& s : ds2.samples) CHECK(s.seed >= 7024);

    // Corrupt the header: the loader must refuse.
    std::string idx = slurp(root / "a" / "index.txt");
    idx[0] = 'X';
    std::ofstream(root / "a" / "index.txt", std::ios::binary) << idx;
    CHECK_THROWS_AS(load_dataset((root / "a").string()), VersionError);
    CHECK_THROWS_AS(load_dataset("/nonexistent-dir"), IoError);

    fs::remove_all(root);
}
