#include "zoomiq/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "zoomiq/adam.hpp"
#include "zoomiq/metrics.hpp"
#include "zoomiq/png_io.hpp"

namespace zoomiq::training {

namespace {

constexpr std::uint64_t kCropStreamTag = 0x63726f70; // "crop"
constexpr std::uint64_t kShuffleStreamTag = 0x73687566; // "shuf"

std::vector<img::ImageF32> load_batch(const data::Manifest& m, const std::vector<std::size_t>& indices) {
    std::vector<img::ImageF32> images;
    images.reserve(indices.size());
    for (std::size_t i : indices) images.push_back(img::load_image_f32(m.resolve(m.records[i])));
    return images;
}

double srcc_or_zero(const std::vector<double>& pred, const std::vector<double>& mos) {
    try {
        return metrics::srcc(pred, mos);
    } catch (const DataError&) {
        return 0.0; // constant predictions rank nothing; such a head scores 0
    }
}

} // namespace

std::vector<double> predict_manifest(const net::Model& model, const aug::ZoomSpec& spec, int head_index,
                                     const data::Manifest& manifest, int batch_size) {
    std::vector<double> preds;
    preds.reserve(manifest.size());
    std::vector<img::ImageF32> batch;
    auto flush = [&] {
        if (batch.empty()) return;
        std::vector<img::ImageF32> zoomed;
        zoomed.reserve(batch.size());
        for (const auto& im : batch) zoomed.push_back(aug::apply_zoom(im, spec, aug::ZoomMode::Eval));
        auto scores = predict_scores<float>(model, nullptr, zoomed, head_index);
        for (float v : scores->values) preds.push_back(double(v));
        batch.clear();
    };
    for (const auto& r : manifest.records) {
        batch.push_back(img::load_image_f32(manifest.resolve(r)));
        if (int(batch.size()) == batch_size) flush();
    }
    flush();
    return preds;
}

FullImagePredictions predict_manifest_all_heads(const net::Model& model, const data::Manifest& manifest,
                                                int batch_size) {
    FullImagePredictions out;
    out.per_head.resize(std::size_t(model.num_heads()));

    std::vector<img::ImageF32> batch;
    std::vector<std::size_t> batch_idx;
    auto flush = [&] {
        if (batch.empty()) return;
        // images of one size share a single backbone pass; every head reads
        // the same embedding
        std::vector<std::pair<int, int>> sizes;
        std::vector<std::vector<std::size_t>> members;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const std::pair<int, int> key{batch[i].height, batch[i].width};
            std::size_t g = 0;
            while (g < sizes.size() && sizes[g] != key) ++g;
            if (g == sizes.size()) {
                sizes.push_back(key);
                members.emplace_back();
            }
            members[g].push_back(i);
        }
        for (std::size_t g = 0; g < sizes.size(); ++g) {
            std::vector<img::ImageF32> group;
            for (std::size_t i : members[g]) group.push_back(batch[i]);
            auto emb = model.forward_features(nullptr, stack_images<float>(group));
            for (int h = 0; h < model.num_heads(); ++h) {
                auto scores = model.forward_head(nullptr, emb, h);
                for (std::size_t k = 0; k < members[g].size(); ++k)
                    out.per_head[std::size_t(h)].push_back(double(scores->values[k]));
            }
            for (std::size_t i : members[g]) out.sample_indices.push_back(batch_idx[i]);
        }
        batch.clear();
        batch_idx.clear();
    };

    for (std::size_t i = 0; i < manifest.size(); ++i) {
        auto image = img::load_image_f32(manifest.resolve(manifest.records[i]));
        if (image.width < net::kMinInputSide || image.height < net::kMinInputSide) continue;
        batch.push_back(std::move(image));
        batch_idx.push_back(i);
        if (int(batch.size()) == batch_size) flush();
    }
    flush();
    return out;
}

TrainResult train(const aug::ZoomRegistry& registry, const net::BackboneConfig& backbone_cfg,
                  const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                  const data::Manifest& train_manifest, const data::Manifest& val_manifest,
                  std::ostream* log) {
    if (train_cfg.batch_size < 2) throw ContractViolation("train: batch_size must be >= 2");
    if (train_cfg.epochs < 1) throw ContractViolation("train: epochs must be >= 1");
    if (train_manifest.records.empty() || val_manifest.records.empty())
        throw DataError("train: empty manifest");

    // z-normalization stats from the training split only
    double mos_mean = 0;
    for (const auto& r : train_manifest.records) mos_mean += r.mos;
    mos_mean /= double(train_manifest.size());
    double mos_var = 0;
    for (const auto& r : train_manifest.records) mos_var += (r.mos - mos_mean) * (r.mos - mos_mean);
    double mos_std = std::sqrt(mos_var / double(train_manifest.size()));
    if (mos_std < 1e-12) mos_std = 1.0; // degenerate labels still train (to a constant)

    auto model = net::init_model<float>(backbone_cfg, registry.num_heads(), train_cfg.seed);
    auto params = model.parameters();
    nd::AdamState<float> opt;
    opt.lr = float(train_cfg.lr);
    opt.beta1 = float(train_cfg.beta1);
    opt.beta2 = float(train_cfg.beta2);
    opt.epsilon = float(train_cfg.adam_epsilon);
    opt.init(params);

    Rng crop_rng(mix_seed(train_cfg.seed, kCropStreamTag));

    std::vector<double> val_mos;
    for (const auto& r : val_manifest.records) val_mos.push_back(r.mos);

    TrainResult result;
    std::vector<std::size_t> order(train_manifest.size());
    std::iota(order.begin(), order.end(), std::size_t(0));

    for (int epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(train_cfg.seed, kShuffleStreamTag ^ std::uint64_t(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0;
        int steps = 0;
        for (std::size_t start = 0; start < order.size(); start += std::size_t(train_cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + std::size_t(train_cfg.batch_size));
            if (end - start < 2) continue; // a 1-sample tail cannot carry the batch loss
            const std::vector<std::size_t> indices(order.begin() + std::ptrdiff_t(start),
                                                   order.begin() + std::ptrdiff_t(end));
            auto images = load_batch(train_manifest, indices);
            std::vector<float> targets;
            targets.reserve(indices.size());
            for (std::size_t i : indices)
                targets.push_back(float((train_manifest.records[i].mos - mos_mean) / mos_std));
            const int batch_n = int(targets.size());
            auto target_tensor = nd::Tensor::from({batch_n}, std::move(targets));

            model.zero_grad();
            nd::Tape<float> tape;
            auto loss = multi_head_step_loss<float>(model, &tape, registry, images, target_tensor,
                                                    loss_cfg, aug::ZoomMode::Train, &crop_rng);
            const double loss_value = double(loss->item());
            if (!std::isfinite(loss_value)) throw NumericFailure("train: non-finite loss, aborting");
            tape.backward(loss);
            nd::adam_step(params, opt);
            loss_sum += loss_value;
            ++steps;
        }
        if (steps == 0) throw DataError("train: no usable batches (need at least 2 samples)");

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / double(steps);
        auto val = predict_manifest_all_heads(model, val_manifest, train_cfg.batch_size);
        std::vector<double> usable_mos;
        for (std::size_t i : val.sample_indices) usable_mos.push_back(val_mos[i]);
        for (int h = 0; h < registry.num_heads(); ++h)
            stats.val_srcc.push_back(usable_mos.size() >= 2
                                         ? srcc_or_zero(val.per_head[std::size_t(h)], usable_mos)
                                         : 0.0);
        if (log) {
            (*log) << "epoch " << epoch << " loss " << stats.mean_loss << " val_srcc";
            for (double v : stats.val_srcc) (*log) << ' ' << v;
            (*log) << '\n';
        }
        result.history.push_back(std::move(stats));
    }

    const auto& final_srcc = result.history.back().val_srcc;
    int best_head = 0;
    for (int h = 1; h < int(final_srcc.size()); ++h)
        if (final_srcc[std::size_t(h)] > final_srcc[std::size_t(best_head)]) best_head = h;

    Checkpoint ckpt;
    ckpt.meta["backbone"] = backbone_to_json(backbone_cfg);
    ckpt.meta["registry"] = registry_to_json(registry);
    ckpt.meta["loss"] = {{"lambda", loss_cfg.lambda}, {"epsilon_var", loss_cfg.epsilon_var}};
    ckpt.meta["train"] = {{"epochs", train_cfg.epochs},
                          {"batch_size", train_cfg.batch_size},
                          {"lr", train_cfg.lr},
                          {"beta1", train_cfg.beta1},
                          {"beta2", train_cfg.beta2},
                          {"adam_epsilon", train_cfg.adam_epsilon}};
    ckpt.meta["seed"] = train_cfg.seed;
    ckpt.meta["epoch"] = train_cfg.epochs;
    ckpt.meta["best_head"] = best_head;
    ckpt.meta["mos_mean"] = mos_mean;
    ckpt.meta["mos_std"] = mos_std;
    for (const auto& [name, param] : model.named_parameters())
        ckpt.tensors.emplace_back(name, nd::Tensor::from(param->shape, param->values));
    result.checkpoint = std::move(ckpt);
    return result;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write history '" + path.string() + "'");
    out << "epoch,step_loss";
    const std::size_t heads = history.empty() ? 0 : history[0].val_srcc.size();
    for (std::size_t h = 0; h < heads; ++h) out << ",val_srcc_head" << h;
    out << '\n';
    char buf[64];
    for (const auto& e : history) {
        out << e.epoch;
        std::snprintf(buf, sizeof(buf), ",%.8f", e.mean_loss);
        out << buf;
        for (double v : e.val_srcc) {
            std::snprintf(buf, sizeof(buf), ",%.8f", v);
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw DataError("failed writing history '" + path.string() + "'");
}

} // namespace zoomiq::training
