// Command-line front end: dataset generation, training, evaluation,
// attention heatmap export, and the variant ablation sweep.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gridword/checkpoint.hpp"
#include "gridword/data.hpp"
#include "gridword/train.hpp"

namespace fs = std::filesystem;
using namespace gridword;

namespace {

Config config_from(const std::string& config_file, const std::vector<std::string>& overrides) {
    Config cfg = config_file.empty() ? Config::desk() : parse_config_file(config_file);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override must be key=value, got: " + kv);
        apply_config_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

std::vector<QueryCategory> parse_categories(const std::string& csv) {
    std::vector<QueryCategory> cats;
    std::istringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) cats.push_back(category_from_word(item));
    if (cats.empty()) throw ConfigError("category list is empty");
    return cats;
}

GroundingModel model_from_checkpoint(const std::string& path) {
    auto ckpt = load_checkpoint(path);
    Config cfg = parse_config_text(ckpt.config_text);
    GroundingModel model(cfg);
    load_into_store(ckpt, model.store());
    return model;
}

/// Grid file: ordinary key=value config lines plus one
/// `variants=a,b,...` line naming the variants to sweep.
std::pair<Config, std::vector<std::string>> parse_grid_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open grid file: " + path);
    std::string line, config_text;
    std::vector<std::string> variants;
    while (std::getline(in, line)) {
        if (line.rfind("variants=", 0) == 0) {
            std::istringstream ss(line.substr(9));
            std::string v;
            while (std::getline(ss, v, ','))
                if (!v.empty()) variants.push_back(v);
        } else {
            config_text += line + "\n";
        }
    }
    if (variants.empty())
        throw ConfigError("grid file needs a variants=... line");
    return {parse_config_text(config_text), variants};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"grid-word grounding toolkit"};
    app.require_subcommand(1);

    std::string out_dir, data_dir, config_file, ckpt_file, report_file, grid_file;
    std::string categories = "absolute,attribute,relation,compare";
    std::vector<std::string> overrides;
    int n_samples = 1000;
    std::uint64_t seed = 1;
    std::int64_t sample_id = 0;
    bool quiet = false;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset split");
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--n", n_samples, "number of samples")->required();
    gen->add_option("--seed", seed, "base seed; sample i uses seed+i");
    gen->add_option("--categories", categories, "comma-separated query categories");
    gen->add_option("--config", config_file, "config file (image/grid/token sizes)");
    gen->add_option("--set", overrides, "config override key=value")->take_all();

    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--config", config_file, "config file");
    train->add_option("--data", data_dir, "directory holding train/ and val/ splits")
        ->required();
    train->add_option("--out", out_dir, "output directory (checkpoint + metrics)")
        ->required();
    train->add_option("--set", overrides, "config override key=value")->take_all();
    train->add_flag("--quiet", quiet, "suppress per-epoch progress");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--ckpt", ckpt_file, "checkpoint file")->required();
    eval->add_option("--data", data_dir, "dataset split directory")->required();
    eval->add_option("--report", report_file, "report path (text; .csv and preds.csv "
                                              "written alongside)")
        ->required();

    auto* heat = app.add_subcommand("heatmap", "export attention heatmaps for one sample");
    heat->add_option("--ckpt", ckpt_file, "checkpoint file")->required();
    heat->add_option("--data", data_dir, "dataset split directory")->required();
    heat->add_option("--sample", sample_id, "sample id within the split")->required();
    heat->add_option("--out", out_dir, "output directory")->required();

    auto* ablate = app.add_subcommand("ablate", "train and compare model variants");
    ablate->add_option("--grid", grid_file, "config file plus a variants=... line")
        ->required();
    ablate->add_option("--data", data_dir, "directory holding train/ and val/ splits")
        ->required();
    ablate->add_option("--out", out_dir, "output directory (default: .)");
    ablate->add_flag("--quiet", quiet, "suppress per-epoch progress");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            Config cfg = config_from(config_file, overrides);
            GenSpec spec;
            spec.out_dir = out_dir;
            spec.n = n_samples;
            spec.seed = seed;
            spec.categories = parse_categories(categories);
            generate_dataset(spec, cfg);
            std::printf("wrote %d samples to %s\n", n_samples, out_dir.c_str());
        } else if (train->parsed()) {
            Config cfg = config_from(config_file, overrides);
            Dataset tr = load_dataset((fs::path(data_dir) / "train").string());
            Dataset va = load_dataset((fs::path(data_dir) / "val").string());
            TrainResult res = train_model(cfg, tr, va, out_dir, !quiet);
            std::printf("best val accuracy %.6f at epoch %d; checkpoint %s\n",
                        res.best_val_acc, res.best_epoch, res.ckpt_path.c_str());
        } else if (eval->parsed()) {
            GroundingModel model = model_from_checkpoint(ckpt_file);
            Dataset data = load_dataset(data_dir);
            std::vector<PredRecord> preds;
            EvalReport rep = evaluate_model(model, data, &preds);
            write_report(rep, report_file);
            write_predictions(preds, report_file + ".preds.csv");
            std::printf("accuracy@0.5 %.6f over %d samples (report: %s)\n",
                        rep.overall.accuracy(), rep.overall.count, report_file.c_str());
        } else if (heat->parsed()) {
            GroundingModel model = model_from_checkpoint(ckpt_file);
            Dataset data = load_dataset(data_dir);
            export_heatmaps(model, data, sample_id, out_dir);
            std::printf("wrote %d heatmap layer pairs to %s\n",
                        model.config().fusion_layers, out_dir.c_str());
        } else if (ablate->parsed()) {
            auto [base, variants] = parse_grid_file(grid_file);
            Dataset tr = load_dataset((fs::path(data_dir) / "train").string());
            Dataset va = load_dataset((fs::path(data_dir) / "val").string());
            if (out_dir.empty()) out_dir = ".";
            auto rows = run_ablation(base, variants, tr, va, out_dir, !quiet);
            const std::string table = format_ablation_table(rows);
            std::ofstream((fs::path(out_dir) / "ablation.csv").string()) << table;
            std::fputs(table.c_str(), stdout);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
