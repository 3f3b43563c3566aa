#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "zoomiq/augment.hpp"
#include "zoomiq/checkpoint.hpp"
#include "zoomiq/dataset.hpp"
#include "zoomiq/loss.hpp"
#include "zoomiq/model.hpp"
#include "zoomiq/ops.hpp"

namespace zoomiq::training {

struct TrainConfig {
    int epochs = 20;
    int batch_size = 16; // >= 2, the PLCC term needs a batch
    std::uint64_t seed = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
};

struct EpochStats {
    int epoch = 0;        // 1-based
    double mean_loss = 0; // mean summed-head step loss over the epoch
    std::vector<double> val_srcc;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochStats> history;
};

// [B,3,h,w] from same-sized images.
template <typename T>
nd::TensorPtr<T> stack_images(const std::vector<img::ImageF32>& images) {
    if (images.empty()) throw ContractViolation("stack_images: empty batch");
    const int h = images[0].height, w = images[0].width;
    std::vector<T> values;
    values.reserve(images.size() * std::size_t(3) * h * w);
    for (const auto& im : images) {
        if (im.height != h || im.width != w) throw ContractViolation("stack_images: size mismatch");
        auto t = img::normalize<T>(im);
        values.insert(values.end(), t->values.begin(), t->values.end());
    }
    return nd::TensorT<T>::from({int(images.size()), 3, h, w}, std::move(values));
}

// Per-head predictions for a batch of zoomed images. Images of equal size
// forward together; mixed sizes (resize-only zooms on mixed-aspect data)
// forward per size group and are stitched back into batch order.
template <typename T>
nd::TensorPtr<T> predict_scores(const net::ModelT<T>& model, nd::Tape<T>* tape,
                                const std::vector<img::ImageF32>& zoomed, int head_index) {
    const std::size_t B = zoomed.size();
    std::vector<std::pair<int, int>> sizes;
    std::vector<std::vector<int>> group_members;
    for (std::size_t i = 0; i < B; ++i) {
        const std::pair<int, int> key{zoomed[i].height, zoomed[i].width};
        std::size_t g = 0;
        while (g < sizes.size() && sizes[g] != key) ++g;
        if (g == sizes.size()) {
            sizes.push_back(key);
            group_members.emplace_back();
        }
        group_members[g].push_back(int(i));
    }

    std::vector<nd::TensorPtr<T>> parts;
    std::vector<int> cat_order;
    for (std::size_t g = 0; g < sizes.size(); ++g) {
        std::vector<img::ImageF32> group;
        for (int i : group_members[g]) {
            group.push_back(zoomed[std::size_t(i)]);
            cat_order.push_back(i);
        }
        auto x = stack_images<T>(group);
        parts.push_back(model.forward_head(tape, model.forward_features(tape, x), head_index));
    }
    if (parts.size() == 1) return parts[0];

    auto cat = nd::concat1d(tape, parts);
    // restore original batch order
    std::vector<int> gather_idx(B);
    for (std::size_t j = 0; j < B; ++j) gather_idx[std::size_t(cat_order[j])] = int(j);
    return nd::gather1d(tape, cat, gather_idx);
}

// One training step's loss: apply every zoom level to the same image batch,
// score it with that level's head, and sum the per-head losses.
template <typename T>
nd::TensorPtr<T> multi_head_step_loss(const net::ModelT<T>& model, nd::Tape<T>* tape,
                                      const aug::ZoomRegistry& registry,
                                      const std::vector<img::ImageF32>& images,
                                      const nd::TensorPtr<T>& targets, const LossConfig& loss_cfg,
                                      aug::ZoomMode mode, Rng* rng) {
    if (int(model.heads.size()) != registry.num_heads())
        throw ContractViolation("step loss: head count does not match registry");
    nd::TensorPtr<T> total;
    for (const auto& spec : registry.specs) {
        std::vector<img::ImageF32> zoomed;
        zoomed.reserve(images.size());
        for (const auto& im : images) zoomed.push_back(aug::apply_zoom(im, spec, mode, rng));
        auto pred = predict_scores(model, tape, zoomed, spec.head_index);
        auto loss = total_loss(tape, pred, targets, loss_cfg);
        total = total ? nd::add(tape, total, loss) : loss;
    }
    return total;
}

// Full multi-task loop: per step one batch through every zoom level, one
// backward, one optimizer step. Per epoch the validation SRCC of each head is
// recorded; the final epoch's argmax picks best_head.
TrainResult train(const aug::ZoomRegistry& registry, const net::BackboneConfig& backbone_cfg,
                  const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                  const data::Manifest& train_manifest, const data::Manifest& val_manifest,
                  std::ostream* log = nullptr);

// `epoch,step_loss,val_srcc_head0,...` rows.
void write_history_csv(const std::vector<EpochStats>& history, const std::filesystem::path& path);

// Eval-mode predictions of one head over a manifest, in manifest order.
std::vector<double> predict_manifest(const net::Model& model, const aug::ZoomSpec& spec, int head_index,
                                     const data::Manifest& manifest, int batch_size = 16);

// Full-image predictions for every head, sharing one backbone pass per
// image. Validation runs this so head selection mirrors the deployment
// condition (whole image, no crop or scale). Undersized images are skipped;
// sample_indices maps prediction rows back to manifest rows.
struct FullImagePredictions {
    std::vector<std::vector<double>> per_head;
    std::vector<std::size_t> sample_indices;
};
FullImagePredictions predict_manifest_all_heads(const net::Model& model, const data::Manifest& manifest,
                                                int batch_size = 16);

} // namespace zoomiq::training
