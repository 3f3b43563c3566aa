#include "zoomiq/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "zoomiq/metrics.hpp"
#include "zoomiq/png_io.hpp"

namespace zoomiq::evaluation {

FullImageScorer make_model_scorer(const net::Model& model, int best_head, double mos_mean,
                                  double mos_std) {
    return [&model, best_head, mos_mean, mos_std](const data::SampleRecord&, const img::ImageF32& image) {
        auto x = training::stack_images<float>({image});
        auto score = model.forward(nullptr, x, best_head);
        return double(score->values[0]) * mos_std + mos_mean;
    };
}

std::vector<std::vector<int>> head_routing(const aug::ZoomRegistry& registry,
                                           const std::vector<int>& patch_sizes, int best_head) {
    std::vector<std::vector<int>> routes;
    for (int size : patch_sizes) {
        std::vector<int> heads;
        for (const auto& spec : registry.specs)
            if (spec.crop && *spec.crop == size) heads.push_back(spec.head_index);
        if (heads.empty()) heads.push_back(best_head);
        routes.push_back(std::move(heads));
    }
    return routes;
}

PatchScorer make_tta_model_scorer(const net::Model& model, const aug::ZoomRegistry& registry,
                                  const aug::TtaConfig& cfg, int best_head, double mos_mean,
                                  double mos_std) {
    auto routes = head_routing(registry, cfg.patch_sizes, best_head);
    auto sizes = cfg.patch_sizes;
    return [&model, routes = std::move(routes), sizes = std::move(sizes), mos_mean,
            mos_std](const img::ImageF32& patch, int size_tag) {
        std::size_t si = 0;
        while (si < sizes.size() && sizes[si] != size_tag) ++si;
        if (si == sizes.size()) throw ContractViolation("tta scorer: unknown patch size tag");
        auto emb = model.forward_features(nullptr, training::stack_images<float>({patch}));
        double acc = 0;
        for (int h : routes[si]) acc += double(model.forward_head(nullptr, emb, h)->values[0]);
        return acc / double(routes[si].size()) * mos_std + mos_mean;
    };
}

double tta_score_image(const img::ImageF32& image, const aug::TtaConfig& cfg, const PatchScorer& scorer) {
    const auto patches = aug::extract_tta_patches(image, cfg);
    double acc = 0;
    for (const auto& p : patches) acc += scorer(p.image, p.size_tag);
    return acc / double(patches.size());
}

MetricReport evaluate_manifest(const data::Manifest& manifest, const FullImageScorer& scorer,
                               const std::string& label, int min_side, PredSet* preds, int threads) {
    const std::size_t n = manifest.size();
    std::vector<double> scores(n);
    std::vector<char> usable(n, 0);

    auto run_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const auto& record = manifest.records[i];
            auto image = img::load_image_f32(manifest.resolve(record));
            if (image.width < min_side || image.height < min_side) continue; // skipped, counted below
            scores[i] = scorer(record, image);
            usable[i] = 1;
        }
    };
    if (threads <= 1 || n < 2) {
        run_range(0, n);
    } else {
        const int workers = std::min<int>(threads, int(n));
        std::vector<std::thread> pool;
        const std::size_t nworkers = std::size_t(workers);
        std::vector<std::exception_ptr> errors(nworkers);
        const std::size_t chunk = (n + std::size_t(workers) - 1) / std::size_t(workers);
        for (int t = 0; t < workers; ++t) {
            const std::size_t lo = std::size_t(t) * chunk;
            const std::size_t hi = std::min(n, lo + chunk);
            if (lo >= hi) continue;
            pool.emplace_back([&, t, lo, hi] {
                try {
                    run_range(lo, hi);
                } catch (...) {
                    errors[std::size_t(t)] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    // reduction in manifest order regardless of completion order
    std::vector<double> pred, mos;
    MetricReport report;
    report.label = label;
    for (std::size_t i = 0; i < n; ++i) {
        if (!usable[i]) {
            ++report.skipped;
            continue;
        }
        pred.push_back(scores[i]);
        mos.push_back(manifest.records[i].mos);
        if (preds) preds->push_back({manifest.records[i].image_path, scores[i], manifest.records[i].mos});
    }
    report.n = int(pred.size());
    if (report.n < 2) throw DataError("evaluate: fewer than 2 scored samples");
    report.srcc = metrics::srcc(pred, mos);
    report.plcc = metrics::plcc(pred, mos);
    return report;
}

MetricReport evaluate_no_tta(const training::Checkpoint& ckpt, const data::Manifest& manifest, PredSet* preds,
                             int threads) {
    auto model = training::model_from_checkpoint(ckpt);
    auto scorer = make_model_scorer(model, ckpt.best_head(), ckpt.mos_mean(), ckpt.mos_std());
    return evaluate_manifest(manifest, scorer, "no-tta", net::kMinInputSide, preds, threads);
}

MetricReport evaluate_tta(const training::Checkpoint& ckpt, const data::Manifest& manifest, const aug::TtaConfig& cfg,
                          PredSet* preds, int threads) {
    auto model = training::model_from_checkpoint(ckpt);
    auto registry = registry_from_checkpoint(ckpt);
    auto patch_scorer =
        make_tta_model_scorer(model, registry, cfg, ckpt.best_head(), ckpt.mos_mean(), ckpt.mos_std());
    auto scorer = [&](const data::SampleRecord&, const img::ImageF32& image) {
        return tta_score_image(image, cfg, patch_scorer);
    };
    return evaluate_manifest(manifest, scorer, "tta", 1, preds, threads);
}

void write_pred_csv(const PredSet& preds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write predictions '" + path.string() + "'");
    out << "image_path,pred,mos\n";
    char buf[96];
    for (const auto& row : preds) {
        std::snprintf(buf, sizeof(buf), ",%.8f,%.8f\n", row.pred, row.mos);
        out << row.id << buf;
    }
    if (!out) throw DataError("failed writing predictions '" + path.string() + "'");
}

void write_report_csv(const std::vector<std::tuple<std::string, std::uint64_t, MetricReport>>& rows,
                      const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write report '" + path.string() + "'");
    out << "config,seed,srcc,plcc,n\n";
    char buf[96];
    for (const auto& [config, seed, report] : rows) {
        std::snprintf(buf, sizeof(buf), ",%llu,%.6f,%.6f,%d\n", (unsigned long long)seed, report.srcc,
                      report.plcc, report.n);
        out << config << buf;
    }
    if (!out) throw DataError("failed writing report '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

std::vector<AblationRow> ablation_run(const data::Manifest& train_manifest,
                                      const data::Manifest& test_manifest, const AblationSetup& setup,
                                      std::ostream* log) {
    struct RowSpec {
        const char* registry;
        bool multi_resize, multi_crop, tta;
    };
    // Fixed five-row ladder; the last row reuses the combined checkpoints.
    const RowSpec ladder[5] = {{"baseline", false, false, false},
                               {"multi_resize", true, false, false},
                               {"multi_crop", false, true, false},
                               {"combined", true, true, false},
                               {"combined", true, true, true}};

    std::vector<training::Checkpoint> combined_ckpts; // one per seed
    std::vector<AblationRow> rows;
    for (const auto& spec : ladder) {
        AblationRow row;
        row.config = spec.registry;
        row.multi_resize = spec.multi_resize;
        row.multi_crop = spec.multi_crop;
        row.tta = spec.tta;
        try {
            double srcc_sum = 0, plcc_sum = 0;
            for (std::size_t si = 0; si < setup.seeds.size(); ++si) {
                const std::uint64_t seed = setup.seeds[si];
                training::Checkpoint ckpt;
                if (spec.tta) {
                    if (combined_ckpts.size() != setup.seeds.size())
                        throw DataError("ablation: combined row failed, no checkpoints to reuse");
                    ckpt = combined_ckpts[si];
                } else {
                    auto registry = aug::builtin_registry(spec.registry);
                    auto cfg = setup.train;
                    cfg.seed = seed;
                    auto [fit, val] = data::split(train_manifest, setup.val_fraction, seed);
                    auto result = training::train(registry, setup.backbone, setup.loss, cfg, fit, val);
                    ckpt = std::move(result.checkpoint);
                    if (std::string(spec.registry) == "combined") combined_ckpts.push_back(ckpt);
                }
                auto report = spec.tta ? evaluate_tta(ckpt, test_manifest, setup.tta)
                                       : evaluate_no_tta(ckpt, test_manifest);
                if (log)
                    (*log) << row.config << (spec.tta ? "+tta" : "") << " seed " << seed << " srcc "
                           << report.srcc << " plcc " << report.plcc << '\n';
                srcc_sum += report.srcc;
                plcc_sum += report.plcc;
                row.per_seed.push_back(std::move(report));
            }
            row.mean_srcc = srcc_sum / double(setup.seeds.size());
            row.mean_plcc = plcc_sum / double(setup.seeds.size());
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
            if (log) (*log) << row.config << " FAILED: " << e.what() << '\n';
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_ablation_table(const std::vector<AblationRow>& rows, std::ostream& out) {
    out << "multi-resize  multi-crop  tta   srcc    plcc\n";
    char buf[128];
    for (const auto& r : rows) {
        if (r.failed) {
            std::snprintf(buf, sizeof(buf), "%-13s %-11s %-5s FAILED\n", r.multi_resize ? "x" : "-",
                          r.multi_crop ? "x" : "-", r.tta ? "x" : "-");
        } else {
            std::snprintf(buf, sizeof(buf), "%-13s %-11s %-5s %.4f  %.4f\n", r.multi_resize ? "x" : "-",
                          r.multi_crop ? "x" : "-", r.tta ? "x" : "-", r.mean_srcc, r.mean_plcc);
        }
        out << buf;
    }
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::vector<std::uint64_t>& seeds,
                        const std::filesystem::path& path) {
    std::vector<std::tuple<std::string, std::uint64_t, MetricReport>> flat;
    for (const auto& r : rows) {
        if (r.failed) continue;
        for (std::size_t si = 0; si < r.per_seed.size(); ++si)
            flat.emplace_back(r.config + (r.tta ? "+tta" : ""), seeds[si], r.per_seed[si]);
    }
    write_report_csv(flat, path);
}

} // namespace zoomiq::evaluation
