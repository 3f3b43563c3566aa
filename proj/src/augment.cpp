#include "zoomiq/augment.hpp"

#include <cmath>
#include <unordered_set>

#include "zoomiq/errors.hpp"

namespace zoomiq::aug {

ZoomRegistry make_registry(const std::string& name, std::vector<ZoomSpec> specs) {
    if (specs.empty()) throw ContractViolation("registry '" + name + "' has no zoom specs");
    std::unordered_set<std::string> names;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        auto& s = specs[i];
        s.head_index = int(i);
        if (s.name.empty()) throw ContractViolation("zoom spec " + std::to_string(i) + " has no name");
        if (!names.insert(s.name).second)
            throw ContractViolation("duplicate zoom spec name '" + s.name + "'");
        if (s.resize && *s.resize < 1) throw ContractViolation("zoom spec '" + s.name + "': resize < 1");
        if (s.crop && *s.crop < 1) throw ContractViolation("zoom spec '" + s.name + "': crop < 1");
    }
    return ZoomRegistry{name, std::move(specs)};
}

ZoomRegistry builtin_registry(const std::string& config_name) {
    if (config_name == "baseline")
        return make_registry("baseline", {{"r224c224", 224, 224, 0}});
    if (config_name == "multi_crop")
        return make_registry("multi_crop", {{"c224", std::nullopt, 224, 0},
                                            {"c256", std::nullopt, 256, 0},
                                            {"c299", std::nullopt, 299, 0},
                                            {"c384", std::nullopt, 384, 0},
                                            {"full", std::nullopt, std::nullopt, 0}});
    if (config_name == "multi_resize")
        return make_registry("multi_resize", {{"r224", 224, std::nullopt, 0},
                                              {"r256", 256, std::nullopt, 0},
                                              {"r299", 299, std::nullopt, 0},
                                              {"r384", 384, std::nullopt, 0},
                                              {"r512", 512, std::nullopt, 0}});
    if (config_name == "combined")
        return make_registry("combined", {{"c224", std::nullopt, 224, 0},
                                          {"c384", std::nullopt, 384, 0},
                                          {"r768c384", 768, 384, 0},
                                          {"r512c224", 512, 224, 0}});
    throw UsageError("unknown registry '" + config_name +
                     "' (expected baseline, multi_crop, multi_resize, or combined)");
}

namespace {

// Upscale the short side to the crop size when the image cannot host the crop.
img::ImageF32 fit_for_crop(img::ImageF32 image, int crop_size) {
    if (image.width < crop_size || image.height < crop_size)
        return img::resize_short_side(image, crop_size);
    return image;
}

} // namespace

img::ImageF32 apply_zoom(const img::ImageF32& image, const ZoomSpec& spec, ZoomMode mode, Rng* rng) {
    if (image.empty()) throw ContractViolation("apply_zoom: empty image");
    img::ImageF32 work = image;
    if (spec.resize) work = img::resize_short_side(work, *spec.resize);
    if (spec.crop) {
        const int c = *spec.crop;
        work = fit_for_crop(std::move(work), c);
        int x, y;
        if (mode == ZoomMode::Train) {
            if (!rng) throw ContractViolation("apply_zoom: train mode requires an rng");
            x = rng->uniform_int(0, work.width - c);
            y = rng->uniform_int(0, work.height - c);
        } else {
            x = (work.width - c) / 2;
            y = (work.height - c) / 2;
        }
        work = img::crop(work, x, y, c, c);
    }
    return work;
}

std::vector<std::pair<int, int>> uniform_grid_offsets(int width, int height, int crop_size, int rows,
                                                      int cols) {
    if (rows < 2 || cols < 2) throw ContractViolation("uniform_grid_offsets: rows and cols must be >= 2");
    if (width < crop_size || height < crop_size)
        throw ContractViolation("uniform_grid_offsets: image smaller than crop");
    const std::size_t nc = std::size_t(cols), nr = std::size_t(rows);
    std::vector<int> xs(nc), ys(nr);
    for (int i = 0; i < cols; ++i)
        xs[std::size_t(i)] = int(std::lround(double(i) * double(width - crop_size) / double(cols - 1)));
    for (int j = 0; j < rows; ++j)
        ys[std::size_t(j)] = int(std::lround(double(j) * double(height - crop_size) / double(rows - 1)));
    std::vector<std::pair<int, int>> out;
    out.reserve(std::size_t(rows) * cols);
    for (int j = 0; j < rows; ++j)
        for (int i = 0; i < cols; ++i) out.emplace_back(xs[std::size_t(i)], ys[std::size_t(j)]);
    return out;
}

std::vector<TtaPatch> extract_tta_patches(const img::ImageF32& image, const TtaConfig& cfg) {
    if (image.empty()) throw ContractViolation("extract_tta_patches: empty image");
    if (cfg.scales.empty() || cfg.patch_sizes.empty())
        throw ContractViolation("extract_tta_patches: empty scales or patch sizes");
    std::vector<TtaPatch> out;
    out.reserve(std::size_t(cfg.patches_per_image()));
    for (double s : cfg.scales) {
        const auto scaled = img::scale_by_factor(image, s);
        for (int c : cfg.patch_sizes) {
            const auto base = fit_for_crop(scaled, c);
            for (const auto& [x, y] : uniform_grid_offsets(base.width, base.height, c, cfg.grid_rows,
                                                           cfg.grid_cols)) {
                auto patch = img::crop(base, x, y, c, c);
                img::ImageF32 transposed, flipped;
                if (cfg.transpose) transposed = img::transpose_image(patch);
                if (cfg.hflip) flipped = img::hflip(patch);
                out.push_back({std::move(patch), c});
                if (cfg.transpose) out.push_back({std::move(transposed), c});
                if (cfg.hflip) out.push_back({std::move(flipped), c});
            }
        }
    }
    return out;
}

} // namespace zoomiq::aug
