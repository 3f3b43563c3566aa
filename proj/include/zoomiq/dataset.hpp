#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "zoomiq/errors.hpp"
#include "zoomiq/image.hpp"

namespace zoomiq::data {

// One MOS-annotated image. Higher mos means better quality. image_path is
// stored as written in the source file; resolve against Manifest::base_dir.
struct SampleRecord {
    std::string image_path;
    double mos = 0.0;
    std::string dist_type;            // optional
    std::optional<int> dist_level;    // optional
    std::string ref_path;             // optional, groups distortions of one source
};

struct Manifest {
    std::vector<SampleRecord> records;
    std::string source;
    std::filesystem::path base_dir;
    double mos_min = 0.0;
    double mos_max = 0.0;

    std::size_t size() const { return records.size(); }
    std::filesystem::path resolve(const SampleRecord& r) const {
        std::filesystem::path p(r.image_path);
        return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    }
    void refresh_stats();
};

// Generic CSV with header `image_path,mos[,dist_type,dist_level,ref_path]`.
Manifest load_manifest_csv(const std::filesystem::path& path);
void write_manifest_csv(const Manifest& m, const std::filesystem::path& path);

// TID-2013 style `<mos> <filename>` lines.
Manifest load_tid2013(const std::filesystem::path& mos_file, const std::filesystem::path& image_dir);

// KADID-10k style CSV with header `dist_img,ref_img,dmos,var`.
Manifest load_kadid(const std::filesystem::path& dmos_csv, const std::filesystem::path& image_dir);

// Procedural distortion set: smooth seeded base images, four distortion
// families at five strengths each, pseudo-MOS = 6 - level.
struct SyntheticSpec {
    int num_refs = 10;
    int image_size = 128;
    std::uint64_t seed = 0;
};

inline constexpr const char* kDistortionFamilies[4] = {"gaussian_blur", "additive_noise",
                                                       "contrast_reduction", "pixelate"};
inline constexpr int kDistortionLevels = 5;

// Distortion primitives, exposed for direct checking.
img::ImageF32 apply_gaussian_blur(const img::ImageF32& src, double sigma);
img::ImageF32 apply_additive_noise(const img::ImageF32& src, double sigma, std::uint64_t seed);
img::ImageF32 apply_contrast_reduction(const img::ImageF32& src, double factor);
img::ImageF32 apply_pixelate(const img::ImageF32& src, int block);

// Writes PNGs plus `manifest.csv` under out_dir and returns the manifest.
Manifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

// Partition by reference group (ref_path when present, else the sample's own
// path): floor(train_fraction * groups) groups go to train after a seeded
// shuffle. Record order within each side follows the input manifest.
std::pair<Manifest, Manifest> split(const Manifest& m, double train_fraction, std::uint64_t seed);

} // namespace zoomiq::data
