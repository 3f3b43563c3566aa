#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "zoomiq/image.hpp"
#include "zoomiq/rng.hpp"

namespace zoomiq::aug {

// One zoom level: optional short-side resize followed by an optional square
// crop. Both unset means the image passes through untouched.
struct ZoomSpec {
    std::string name;
    std::optional<int> resize;
    std::optional<int> crop;
    int head_index = 0;
};

// Ordered list of zoom levels; head_index equals the position in the list.
struct ZoomRegistry {
    std::string name;
    std::vector<ZoomSpec> specs;

    int num_heads() const { return int(specs.size()); }
};

// Built-in configurations: baseline, multi_crop, multi_resize, combined.
ZoomRegistry builtin_registry(const std::string& config_name);

// Validates names/head indices of a custom spec list.
ZoomRegistry make_registry(const std::string& name, std::vector<ZoomSpec> specs);

enum class ZoomMode { Train, Eval };

// Resize first (if set), then crop (if set). Train mode draws a uniform
// random offset; eval mode crops the center. If the working image cannot
// host the crop, its short side is first upscaled to the crop size.
img::ImageF32 apply_zoom(const img::ImageF32& image, const ZoomSpec& spec, ZoomMode mode,
                         Rng* rng = nullptr);

// Evenly spaced crop origins covering [0, W-c] x [0, H-c], duplicates kept.
std::vector<std::pair<int, int>> uniform_grid_offsets(int width, int height, int crop_size, int rows,
                                                      int cols);

struct TtaConfig {
    std::vector<double> scales{0.5, 1.0, 2.0};
    std::vector<int> patch_sizes{224, 384};
    int grid_rows = 3;
    int grid_cols = 3;
    bool transpose = true;
    bool hflip = false; // off by default; transpose is the standard variant

    int patches_per_image() const {
        return grid_rows * grid_cols * int(patch_sizes.size()) * int(scales.size()) *
               (1 + (transpose ? 1 : 0) + (hflip ? 1 : 0));
    }
};

struct TtaPatch {
    img::ImageF32 image;
    int size_tag = 0; // requested patch size
};

// Deterministic patch set: scales outer, then patch sizes, then grid cells
// row-major, each cell emitting the original patch followed by its enabled
// variants (transpose, then hflip).
std::vector<TtaPatch> extract_tta_patches(const img::ImageF32& image, const TtaConfig& cfg);

} // namespace zoomiq::aug
