#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "zoomiq/augment.hpp"
#include "zoomiq/checkpoint.hpp"
#include "zoomiq/dataset.hpp"
#include "zoomiq/loss.hpp"
#include "zoomiq/train.hpp"

namespace zoomiq::evaluation {

struct MetricReport {
    std::string label;
    double srcc = 0;
    double plcc = 0;
    int n = 0;       // scored samples
    int skipped = 0; // undersized images counted out of the metrics
};

struct PredRow {
    std::string id; // image path as listed in the manifest
    double pred = 0;
    double mos = 0;
};
using PredSet = std::vector<PredRow>;

// Scores one whole image; the record rides along so test stubs can fabricate
// predictions without a model.
using FullImageScorer = std::function<double(const data::SampleRecord&, const img::ImageF32&)>;

// Scores one TTA patch of the given size tag.
using PatchScorer = std::function<double(const img::ImageF32& patch, int size_tag)>;

// Full-resolution pass through the best head, denormalized to MOS units.
FullImageScorer make_model_scorer(const net::Model& model, int best_head, double mos_mean,
                                  double mos_std);

// For each patch size, the heads to average: every head whose crop equals the
// size; best_head when none matches.
std::vector<std::vector<int>> head_routing(const aug::ZoomRegistry& registry,
                                           const std::vector<int>& patch_sizes, int best_head);

// Patch scorer that averages the routed heads, denormalized to MOS units.
PatchScorer make_tta_model_scorer(const net::Model& model, const aug::ZoomRegistry& registry,
                                  const aug::TtaConfig& cfg, int best_head, double mos_mean,
                                  double mos_std);

// Mean patch score in fixed extraction order.
double tta_score_image(const img::ImageF32& image, const aug::TtaConfig& cfg, const PatchScorer& scorer);

// Per-sample evaluation over a manifest. Images with a side below min_side
// are skipped and counted. threads > 1 shards samples; results keep manifest
// order either way.
MetricReport evaluate_manifest(const data::Manifest& manifest, const FullImageScorer& scorer,
                               const std::string& label, int min_side = 1, PredSet* preds = nullptr,
                               int threads = 1);

MetricReport evaluate_no_tta(const training::Checkpoint& ckpt, const data::Manifest& manifest,
                             PredSet* preds = nullptr, int threads = 1);

MetricReport evaluate_tta(const training::Checkpoint& ckpt, const data::Manifest& manifest, const aug::TtaConfig& cfg,
                          PredSet* preds = nullptr, int threads = 1);

void write_pred_csv(const PredSet& preds, const std::filesystem::path& path);
void write_report_csv(const std::vector<std::tuple<std::string, std::uint64_t, MetricReport>>& rows,
                      const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

struct AblationRow {
    std::string config;          // registry name
    bool multi_resize = false;   // table columns
    bool multi_crop = false;
    bool tta = false;
    bool failed = false;
    std::string error;
    double mean_srcc = 0;
    double mean_plcc = 0;
    std::vector<MetricReport> per_seed;
};

struct AblationSetup {
    std::vector<std::uint64_t> seeds{1, 2, 3};
    net::BackboneConfig backbone;
    training::LossConfig loss;
    training::TrainConfig train;
    aug::TtaConfig tta;
    double val_fraction = 0.8; // train-side reference split used for head selection
};

// Runs the five-row ladder: baseline, multi_resize, multi_crop, combined,
// combined + TTA (reusing the combined checkpoints). Per-row failures are
// recorded and the remaining rows continue.
std::vector<AblationRow> ablation_run(const data::Manifest& train_manifest,
                                      const data::Manifest& test_manifest, const AblationSetup& setup,
                                      std::ostream* log = nullptr);

// Aligned-column table with one row per configuration.
void write_ablation_table(const std::vector<AblationRow>& rows, std::ostream& out);
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::vector<std::uint64_t>& seeds,
                        const std::filesystem::path& path);

} // namespace zoomiq::evaluation
