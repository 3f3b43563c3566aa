#include "zoomiq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "zoomiq/png_io.hpp"
#include "zoomiq/rng.hpp"

namespace zoomiq::data {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    // fields in the supported formats never contain commas or quotes
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_mos(const std::string& s, const std::filesystem::path& file, int line_no) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw DataError("unparseable mos '" + s + "' at " + file.string() + ":" + std::to_string(line_no));
    }
}

int parse_level(const std::string& s, const std::filesystem::path& file, int line_no) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size() || v < 1) throw std::invalid_argument("bad");
        return v;
    } catch (const std::exception&) {
        throw DataError("unparseable dist_level '" + s + "' at " + file.string() + ":" +
                        std::to_string(line_no));
    }
}

std::string format_mos(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

} // namespace

void Manifest::refresh_stats() {
    if (records.empty()) {
        mos_min = mos_max = 0.0;
        return;
    }
    mos_min = mos_max = records[0].mos;
    for (const auto& r : records) {
        mos_min = std::min(mos_min, r.mos);
        mos_max = std::max(mos_max, r.mos);
    }
}

Manifest load_manifest_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty manifest '" + path.string() + "'");

    const auto header = split_csv_line(line);
    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* required : {"image_path", "mos"})
        if (!col.count(required))
            throw DataError("manifest '" + path.string() + "' missing required column '" + required + "'");

    Manifest m;
    m.source = "manifest_csv";
    m.base_dir = path.parent_path();
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() < header.size())
            throw DataError("short row at " + path.string() + ":" + std::to_string(line_no));
        SampleRecord r;
        r.image_path = fields[col["image_path"]];
        r.mos = parse_mos(fields[col["mos"]], path, line_no);
        if (col.count("dist_type")) r.dist_type = fields[col["dist_type"]];
        if (col.count("dist_level")) {
            const auto& f = fields[col["dist_level"]];
            if (!f.empty()) r.dist_level = parse_level(f, path, line_no);
        }
        if (col.count("ref_path")) r.ref_path = fields[col["ref_path"]];
        m.records.push_back(std::move(r));
    }
    if (m.records.empty()) throw DataError("empty manifest '" + path.string() + "'");
    m.refresh_stats();
    return m;
}

void write_manifest_csv(const Manifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary); // binary: byte-stable newlines
    if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
    out << "image_path,mos,dist_type,dist_level,ref_path\n";
    for (const auto& r : m.records) {
        out << r.image_path << ',' << format_mos(r.mos) << ',' << r.dist_type << ',';
        if (r.dist_level) out << *r.dist_level;
        out << ',' << r.ref_path << '\n';
    }
    if (!out) throw DataError("failed writing manifest '" + path.string() + "'");
}

Manifest load_tid2013(const std::filesystem::path& mos_file, const std::filesystem::path& image_dir) {
    std::ifstream in(mos_file);
    if (!in) throw DataError("cannot open mos file '" + mos_file.string() + "'");
    Manifest m;
    m.source = "tid2013";
    m.base_dir = image_dir;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto space = line.find(' ');
        if (space == std::string::npos || space == 0 || space + 1 >= line.size())
            throw DataError("malformed line at " + mos_file.string() + ":" + std::to_string(line_no));
        SampleRecord r;
        r.mos = parse_mos(line.substr(0, space), mos_file, line_no);
        r.image_path = line.substr(space + 1);
        m.records.push_back(std::move(r));
    }
    if (m.records.empty()) throw DataError("empty mos file '" + mos_file.string() + "'");
    m.refresh_stats();
    return m;
}

Manifest load_kadid(const std::filesystem::path& dmos_csv, const std::filesystem::path& image_dir) {
    std::ifstream in(dmos_csv);
    if (!in) throw DataError("cannot open dmos csv '" + dmos_csv.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty dmos csv '" + dmos_csv.string() + "'");
    const auto header = split_csv_line(line);
    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* required : {"dist_img", "ref_img", "dmos"})
        if (!col.count(required))
            throw DataError("dmos csv '" + dmos_csv.string() + "' missing required column '" + required +
                            "'");
    Manifest m;
    m.source = "kadid";
    m.base_dir = image_dir;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() < header.size())
            throw DataError("short row at " + dmos_csv.string() + ":" + std::to_string(line_no));
        SampleRecord r;
        r.image_path = fields[col["dist_img"]];
        r.ref_path = fields[col["ref_img"]];
        r.mos = parse_mos(fields[col["dmos"]], dmos_csv, line_no);
        m.records.push_back(std::move(r));
    }
    if (m.records.empty()) throw DataError("empty dmos csv '" + dmos_csv.string() + "'");
    m.refresh_stats();
    return m;
}

// ---------------------------------------------------------------------------
// Synthetic distortion set
// ---------------------------------------------------------------------------

namespace {

// Band-limited noise: coarse seeded grids upsampled to full size, two
// octaves, then a per-channel contrast stretch.
img::ImageF32 make_base_image(int size, std::uint64_t seed) {
    Rng rng(seed);
    auto noise_layer = [&](int grid) {
        img::ImageF32 g(grid, grid);
        for (auto& v : g.data) v = float(rng.uniform());
        return img::resize_to(g, size, size);
    };
    auto coarse = noise_layer(9);
    auto mid = noise_layer(33);
    img::ImageF32 out(size, size);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = 0.7f * coarse.data[i] + 0.3f * mid.data[i];
    // stretch each channel to [0.05, 0.95] so every distortion family bites
    const std::size_t hw = std::size_t(size) * size;
    for (int c = 0; c < 3; ++c) {
        float* p = out.plane(c);
        float lo = p[0], hi = p[0];
        for (std::size_t i = 0; i < hw; ++i) {
            lo = std::min(lo, p[i]);
            hi = std::max(hi, p[i]);
        }
        const float span = hi - lo;
        if (span < 1e-6f) continue;
        for (std::size_t i = 0; i < hw; ++i)
            p[i] = 0.05f + 0.9f * (p[i] - lo) / span;
    }
    return out;
}

const double kBlurSigmas[5] = {0.8, 1.6, 2.4, 3.2, 4.0};
const double kNoiseSigmas[5] = {0.02, 0.05, 0.09, 0.14, 0.20};
const double kContrastFactors[5] = {0.85, 0.70, 0.55, 0.40, 0.25};
const int kPixelateBlocks[5] = {2, 4, 6, 8, 12};

} // namespace

img::ImageF32 apply_gaussian_blur(const img::ImageF32& src, double sigma) {
    const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<double> k(std::size_t(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        k[std::size_t(i + radius)] = std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));
        sum += k[std::size_t(i + radius)];
    }
    for (auto& v : k) v /= sum;

    const int h = src.height, w = src.width;
    img::ImageF32 tmp(h, w), out(h, w);
    for (int c = 0; c < 3; ++c) {
        const float* sp = src.plane(c);
        float* tp = tmp.plane(c);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[std::size_t(i + radius)] * double(sp[std::size_t(y) * w + std::clamp(x + i, 0, w - 1)]);
                tp[std::size_t(y) * w + x] = float(acc);
            }
        const float* tpc = tmp.plane(c);
        float* op = out.plane(c);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[std::size_t(i + radius)] * double(tpc[std::size_t(std::clamp(y + i, 0, h - 1)) * w + x]);
                op[std::size_t(y) * w + x] = float(acc);
            }
    }
    return out;
}

img::ImageF32 apply_additive_noise(const img::ImageF32& src, double sigma, std::uint64_t seed) {
    Rng rng(seed);
    img::ImageF32 out = src;
    for (auto& v : out.data) v = std::clamp(v + float(sigma * rng.normal()), 0.0f, 1.0f);
    return out;
}

img::ImageF32 apply_contrast_reduction(const img::ImageF32& src, double factor) {
    img::ImageF32 out = src;
    for (auto& v : out.data) v = float(0.5 + factor * (double(v) - 0.5));
    return out;
}

img::ImageF32 apply_pixelate(const img::ImageF32& src, int block) {
    img::ImageF32 out(src.height, src.width);
    for (int c = 0; c < 3; ++c) {
        const float* sp = src.plane(c);
        float* op = out.plane(c);
        for (int by = 0; by < src.height; by += block)
            for (int bx = 0; bx < src.width; bx += block) {
                const int ey = std::min(by + block, src.height);
                const int ex = std::min(bx + block, src.width);
                double acc = 0;
                for (int y = by; y < ey; ++y)
                    for (int x = bx; x < ex; ++x) acc += double(sp[std::size_t(y) * src.width + x]);
                const float mean = float(acc / (double(ey - by) * double(ex - bx)));
                for (int y = by; y < ey; ++y)
                    for (int x = bx; x < ex; ++x) op[std::size_t(y) * src.width + x] = mean;
            }
    }
    return out;
}

Manifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
    if (spec.num_refs < 1 || spec.image_size < 16)
        throw ContractViolation("generate_synthetic: need num_refs >= 1 and image_size >= 16");
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    if (ec) throw DataError("cannot create output directory '" + (out_dir / "images").string() + "'");

    Manifest m;
    m.source = "synthetic";
    m.base_dir = out_dir;

    char name[128];
    for (int ref = 0; ref < spec.num_refs; ++ref) {
        const auto base = make_base_image(spec.image_size, mix_seed(spec.seed, std::uint64_t(ref)));
        std::snprintf(name, sizeof(name), "images/ref%02d.png", ref);
        const std::string ref_rel = name;
        img::save_image_f32(out_dir / ref_rel, base);

        SampleRecord pristine;
        pristine.image_path = ref_rel;
        pristine.mos = 5.0;
        pristine.ref_path = ref_rel;
        m.records.push_back(pristine);

        for (int fam = 0; fam < 4; ++fam)
            for (int level = 1; level <= kDistortionLevels; ++level) {
                img::ImageF32 distorted;
                switch (fam) {
                case 0: distorted = apply_gaussian_blur(base, kBlurSigmas[level - 1]); break;
                case 1:
                    distorted = apply_additive_noise(
                        base, kNoiseSigmas[level - 1],
                        mix_seed(spec.seed, (std::uint64_t(ref) << 16) | std::uint64_t(fam * 8 + level)));
                    break;
                case 2: distorted = apply_contrast_reduction(base, kContrastFactors[level - 1]); break;
                default: distorted = apply_pixelate(base, kPixelateBlocks[level - 1]); break;
                }
                std::snprintf(name, sizeof(name), "images/ref%02d_%s_l%d.png", ref,
                              kDistortionFamilies[fam], level);
                img::save_image_f32(out_dir / name, distorted);
                SampleRecord r;
                r.image_path = name;
                r.mos = double(6 - level);
                r.dist_type = kDistortionFamilies[fam];
                r.dist_level = level;
                r.ref_path = ref_rel;
                m.records.push_back(std::move(r));
            }
    }
    m.refresh_stats();
    write_manifest_csv(m, out_dir / "manifest.csv");
    return m;
}

std::pair<Manifest, Manifest> split(const Manifest& m, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ContractViolation("split: train_fraction must be in (0, 1)");

    std::vector<std::string> groups; // first-appearance order
    std::unordered_set<std::string> seen;
    auto key_of = [](const SampleRecord& r) { return r.ref_path.empty() ? r.image_path : r.ref_path; };
    for (const auto& r : m.records) {
        const auto key = key_of(r);
        if (seen.insert(key).second) groups.push_back(key);
    }
    if (groups.size() < 2) throw DataError("split: fewer than 2 reference groups");

    Rng rng(seed);
    rng.shuffle(groups);
    const std::size_t n_train = std::size_t(std::floor(train_fraction * double(groups.size())));
    std::unordered_set<std::string> train_keys(groups.begin(), groups.begin() + std::ptrdiff_t(n_train));

    Manifest train, test;
    train.source = m.source + "/train";
    test.source = m.source + "/test";
    train.base_dir = test.base_dir = m.base_dir;
    for (const auto& r : m.records)
        (train_keys.count(key_of(r)) ? train : test).records.push_back(r);
    if (train.records.empty() || test.records.empty())
        throw DataError("split: one side of the split is empty");
    train.refresh_stats();
    test.refresh_stats();
    return {std::move(train), std::move(test)};
}

} // namespace zoomiq::data
