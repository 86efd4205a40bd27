#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gridword/data.hpp"
#include "gridword/model.hpp"

namespace gridword {

struct CategoryStat {
    int count = 0;
    int hits = 0;
    double iou_sum = 0.0;

    double accuracy() const { return count ? static_cast<double>(hits) / count : 0.0; }
    double mean_iou() const { return count ? iou_sum / count : 0.0; }
};

/// Box-level accuracy uses the strict rule: a hit needs IoU > 0.5.
struct EvalReport {
    CategoryStat overall;
    std::map<QueryCategory, CategoryStat> per_category;
    CategoryStat easy;  // absolute + attribute
    CategoryStat hard;  // relation + compare
    double ms_per_sample = 0.0;
};

struct PredRecord {
    std::int64_t id = 0;
    BBox box;
    double score = 0.0;
};

/// The accuracy rule: a prediction counts only when IoU is strictly above 0.5.
inline bool counts_as_hit(double iou_value) { return iou_value > 0.5; }

EvalReport evaluate_model(GroundingModel& model, const Dataset& data,
                          std::vector<PredRecord>* preds = nullptr);

/// Plain-text report (includes timing) plus `path + ".csv"` (no timing).
void write_report(const EvalReport& r, const std::string& path);
void write_predictions(const std::vector<PredRecord>& preds, const std::string& path);

struct TrainResult {
    double best_val_acc = 0.0;
    int best_epoch = -1;
    int epochs_run = 0;
    std::string ckpt_path;
    std::string metrics_path;
    EvalReport final_val;
};

/// Adam with the halving schedule; single-sample gradient accumulation forms
/// batch gradients. Writes metrics.csv (one row per epoch: epoch, lr, train
/// loss components, val accuracy) and best.ckpt under out_dir. Deterministic
/// for a fixed (config, dataset) pair. Non-finite loss aborts with a
/// NumericError naming the offending batch.
TrainResult train_model(const Config& cfg, const Dataset& train, const Dataset& val,
                        const std::string& out_dir, bool verbose);

/// Per fusion layer: the word-attention vector and the w x h grid map of the
/// predicted center cell's attention row, head-averaged and renormalized per
/// block. Writes words_layer<k>.csv, grid_layer<k>.csv, and box.txt.
void export_heatmaps(GroundingModel& model, const Dataset& data, std::int64_t sample_id,
                     const std::string& out_dir);

struct AblationRow {
    std::string variant;
    double overall = 0.0, easy = 0.0, hard = 0.0;
    int epochs = 0;
};

/// Trains each variant with the same seed and data, evaluating on val.
std::vector<AblationRow> run_ablation(const Config& base,
                                      const std::vector<std::string>& variants,
                                      const Dataset& train, const Dataset& val,
                                      const std::string& out_dir, bool verbose);

std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace gridword
