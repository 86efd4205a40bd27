#include "gridword/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "gridword/adam.hpp"
#include "gridword/checkpoint.hpp"

namespace gridword {

namespace fs = std::filesystem;

namespace {

void check_compatible(const Config& cfg, const Dataset& data, const char* which) {
    for (const auto& s : data.samples) {
        if (static_cast<int>(s.token_ids.size()) != cfg.tokens)
            throw ConfigError(std::string(which) +
                              " dataset token length does not match config");
        if (s.img_w != cfg.img_w || s.img_h != cfg.img_h)
            throw ConfigError(std::string(which) + " dataset image size does not match config");
        for (int id : s.token_ids)
            if (id < 0 || id >= cfg.vocab)
                throw VocabError(std::string(which) + " dataset uses token ids outside the "
                                                      "configured vocabulary");
    }
}

bool is_easy(QueryCategory c) {
    return c == QueryCategory::absolute || c == QueryCategory::attribute;
}

}  // namespace

EvalReport evaluate_model(GroundingModel& model, const Dataset& data,
                          std::vector<PredRecord>* preds) {
    const Config& cfg = model.config();
    EvalReport r;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& s : data.samples) {
        NoGradGuard ng;
        auto out = model.forward(s.token_ids, s.image(), false, false);
        const BBox box = decode(out, cfg);
        const int cell = argmax_cell(out, cfg);
        const double score = out.maps->values[static_cast<std::size_t>(cell) * 5];
        const double overlap = iou(box, s.bbox);
        const bool hit = counts_as_hit(overlap);

        auto bump = [&](CategoryStat& st) {
            ++st.count;
            st.hits += hit;
            st.iou_sum += overlap;
        };
        bump(r.overall);
        bump(r.per_category[s.category]);
        bump(is_easy(s.category) ? r.easy : r.hard);
        if (preds) preds->push_back({s.id, box, score});
    }
    const auto t1 = std::chrono::steady_clock::now();
    if (!data.samples.empty())
        r.ms_per_sample = std::chrono::duration<double, std::milli>(t1 - t0).count() /
                          static_cast<double>(data.samples.size());
    return r;
}

void write_report(const EvalReport& r, const std::string& path) {
    std::ofstream txt(path);
    if (!txt) throw IoError("cannot write report: " + path);
    char line[160];
    std::snprintf(line, sizeof line, "samples: %d\naccuracy@0.5: %.6f\nmean-iou: %.6f\n",
                  r.overall.count, r.overall.accuracy(), r.overall.mean_iou());
    txt << line;
    for (const auto& [cat, st] : r.per_category) {
        std::snprintf(line, sizeof line, "%s: accuracy %.6f, mean-iou %.6f (n=%d)\n",
                      to_word(cat), st.accuracy(), st.mean_iou(), st.count);
        txt << line;
    }
    std::snprintf(line, sizeof line,
                  "easy (absolute+attribute): %.6f (n=%d)\n"
                  "hard (relation+compare): %.6f (n=%d)\n",
                  r.easy.accuracy(), r.easy.count, r.hard.accuracy(), r.hard.count);
    txt << line;
    std::snprintf(line, sizeof line, "inference: %.3f ms/sample\n", r.ms_per_sample);
    txt << line;

    std::ofstream csv(path + ".csv");
    if (!csv) throw IoError("cannot write report csv: " + path + ".csv");
    csv << "split,count,accuracy,mean_iou\n";
    auto row = [&](const std::string& name, const CategoryStat& st) {
        std::snprintf(line, sizeof line, "%s,%d,%.6f,%.6f\n", name.c_str(), st.count,
                      st.accuracy(), st.mean_iou());
        csv << line;
    };
    row("overall", r.overall);
    for (const auto& [cat, st] : r.per_category) row(to_word(cat), st);
    row("easy", r.easy);
    row("hard", r.hard);
}

void write_predictions(const std::vector<PredRecord>& preds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write predictions: " + path);
    out << "id,x,y,w,h,score\n";
    char line[160];
    for (const auto& p : preds) {
        std::snprintf(line, sizeof line, "%lld,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                      static_cast<long long>(p.id), p.box.x, p.box.y, p.box.w, p.box.h,
                      p.score);
        out << line;
    }
}

TrainResult train_model(const Config& cfg, const Dataset& train, const Dataset& val,
                        const std::string& out_dir, bool verbose) {
    cfg.validate();
    check_compatible(cfg, train, "train");
    check_compatible(cfg, val, "val");
    fs::create_directories(out_dir);

    GroundingModel model(cfg);
    Adam opt(model.store().param_tensors(), cfg.lr);

    TrainResult result;
    result.ckpt_path = (fs::path(out_dir) / "best.ckpt").string();
    result.metrics_path = (fs::path(out_dir) / "metrics.csv").string();

    std::ofstream metrics(result.metrics_path);
    if (!metrics) throw IoError("cannot write metrics: " + result.metrics_path);
    metrics << "epoch,lr,loss_total,loss_cls,loss_off,loss_rgr,loss_giou,val_acc\n";

    const int n = static_cast<int>(train.samples.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    std::vector<LocTarget> targets;
    targets.reserve(train.samples.size());
    for (const auto& s : train.samples) targets.push_back(build_target(s.bbox, cfg));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr * std::pow(0.5, epoch / cfg.lr_halve_every);
        opt.set_lr(lr);

        std::mt19937_64 shuffle_rng(cfg.seed ^
                                    (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch + 1)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double sum_total = 0, sum_cls = 0, sum_off = 0, sum_rgr = 0, sum_giou = 0;
        for (int start = 0; start < n; start += cfg.batch) {
            const int bsz = std::min(cfg.batch, n - start);
            model.store().zero_grad();
            for (int k = 0; k < bsz; ++k) {
                const int idx = order[static_cast<std::size_t>(start + k)];
                const auto& s = train.samples[static_cast<std::size_t>(idx)];
                auto out = model.forward(s.token_ids, s.image(), true, true);
                auto loss = loss_terms(out, targets[static_cast<std::size_t>(idx)], s.bbox, cfg);
                const double total = loss.total->item();
                if (!std::isfinite(total))
                    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                                       ", batch " + std::to_string(start / cfg.batch) +
                                       ", sample id " + std::to_string(s.id));
                sum_total += total;
                sum_cls += loss.cls->item();
                sum_off += loss.off->item();
                sum_rgr += loss.rgr->item();
                sum_giou += loss.giou->item();
                backward(mul_scalar(loss.total, 1.0 / bsz));
            }
            opt.step();
        }

        EvalReport ev = evaluate_model(model, val);
        const double val_acc = ev.overall.accuracy();

        char row[256];
        std::snprintf(row, sizeof row, "%d,%.8f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", epoch, lr,
                      sum_total / n, sum_cls / n, sum_off / n, sum_rgr / n, sum_giou / n,
                      val_acc);
        metrics << row;
        metrics.flush();
        if (verbose) {
            std::printf("epoch %2d  lr %.6f  loss %.4f  val %.4f  easy %.4f  hard %.4f\n",
                        epoch, lr, sum_total / n, val_acc, ev.easy.accuracy(),
                        ev.hard.accuracy());
            std::fflush(stdout);
        }

        result.epochs_run = epoch + 1;
        result.final_val = ev;
        if (val_acc > result.best_val_acc || result.best_epoch < 0) {
            result.best_val_acc = val_acc;
            result.best_epoch = epoch;
            save_checkpoint(result.ckpt_path, cfg.serialize(), model.store());
        }

        if (cfg.early_stop) {
            const bool easy_ok = ev.easy.count == 0 || ev.easy.accuracy() >= cfg.target_easy;
            const bool hard_ok = ev.hard.count == 0 || ev.hard.accuracy() >= cfg.target_hard;
            if (easy_ok && hard_ok) break;
        }
    }
    return result;
}

void export_heatmaps(GroundingModel& model, const Dataset& data, std::int64_t sample_id,
                     const std::string& out_dir) {
    const DataSample* sample = nullptr;
    for (const auto& s : data.samples)
        if (s.id == sample_id) sample = &s;
    if (!sample) throw IoError("sample id " + std::to_string(sample_id) + " not in dataset");

    const Config& cfg = model.config();
    fs::create_directories(out_dir);

    AttnTrace trace;
    HeadOutput out;
    {
        NoGradGuard ng;
        out = model.forward(sample->token_ids, sample->image(), false, false, &trace);
    }
    const int cell = argmax_cell(out, cfg);
    const BBox box = decode(out, cfg);
    const double score = out.maps->values[static_cast<std::size_t>(cell) * 5];
    const int T = cfg.tokens, wh = cfg.grid_w * cfg.grid_h;

    for (int k = 0; k < cfg.fusion_layers; ++k) {
        const std::string tag = "fusion." + std::to_string(k);
        std::vector<double> avg(static_cast<std::size_t>(T + wh), 0.0);
        int heads = 0;
        for (const auto& e : trace.entries) {
            if (e.tag != tag) continue;
            ++heads;
            const std::size_t base = static_cast<std::size_t>(T + cell) * (T + wh);
            for (int j = 0; j < T + wh; ++j)
                avg[static_cast<std::size_t>(j)] += e.weights[base + static_cast<std::size_t>(j)];
        }
        if (heads != cfg.heads)
            throw ConfigError("fusion trace is missing attention heads for layer " +
                              std::to_string(k));
        for (double& v : avg) v /= heads;

        double word_mass = 0, grid_mass = 0;
        for (int j = 0; j < T; ++j) word_mass += avg[static_cast<std::size_t>(j)];
        for (int j = 0; j < wh; ++j) grid_mass += avg[static_cast<std::size_t>(T + j)];

        char buf[64];
        std::ofstream words(fs::path(out_dir) / ("words_layer" + std::to_string(k) + ".csv"));
        words << "token,weight\n";
        for (int j = 0; j < T; ++j) {
            const int id = sample->token_ids[static_cast<std::size_t>(j)];
            std::snprintf(buf, sizeof buf, "%.6f", avg[static_cast<std::size_t>(j)] / word_mass);
            words << data.vocab.tokens[static_cast<std::size_t>(id)] << ',' << buf << '\n';
        }

        std::ofstream grid(fs::path(out_dir) / ("grid_layer" + std::to_string(k) + ".csv"));
        for (int y = 0; y < cfg.grid_h; ++y) {
            for (int x = 0; x < cfg.grid_w; ++x) {
                std::snprintf(buf, sizeof buf, "%.6f",
                              avg[static_cast<std::size_t>(T + y * cfg.grid_w + x)] / grid_mass);
                grid << (x ? "," : "") << buf;
            }
            grid << '\n';
        }
    }

    std::ofstream meta(fs::path(out_dir) / "box.txt");
    char line[200];
    std::snprintf(line, sizeof line,
                  "sample: %lld\ncell: %d %d\nscore: %.6f\nbox: %.6f %.6f %.6f %.6f\n"
                  "ground-truth: %.6f %.6f %.6f %.6f\n",
                  static_cast<long long>(sample_id), cell % cfg.grid_w, cell / cfg.grid_w,
                  score, box.x, box.y, box.w, box.h, sample->bbox.x, sample->bbox.y,
                  sample->bbox.w, sample->bbox.h);
    meta << line;
}

std::vector<AblationRow> run_ablation(const Config& base,
                                      const std::vector<std::string>& variants,
                                      const Dataset& train, const Dataset& val,
                                      const std::string& out_dir, bool verbose) {
    if (variants.size() < 2) throw ConfigError("ablation needs at least two variants");
    std::vector<AblationRow> rows;
    for (const auto& v : variants) {
        Config cfg = base;
        cfg.variant = v;
        cfg.validate();
        if (verbose) {
            std::printf("== variant %s ==\n", v.c_str());
            std::fflush(stdout);
        }
        const std::string dir = (fs::path(out_dir) / v).string();
        TrainResult tr = train_model(cfg, train, val, dir, verbose);

        GroundingModel model(cfg);
        auto ckpt = load_checkpoint(tr.ckpt_path);
        load_into_store(ckpt, model.store());
        EvalReport ev = evaluate_model(model, val);
        rows.push_back({v, ev.overall.accuracy(), ev.easy.accuracy(), ev.hard.accuracy(),
                        tr.epochs_run});
    }
    return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
    std::string out = "variant,overall,easy,hard,epochs\n";
    char line[160];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%s,%.6f,%.6f,%.6f,%d\n", r.variant.c_str(),
                      r.overall, r.easy, r.hard, r.epochs);
        out += line;
    }
    return out;
}

}  // namespace gridword
