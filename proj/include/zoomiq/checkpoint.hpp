#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "zoomiq/augment.hpp"
#include "zoomiq/model.hpp"
#include "zoomiq/tensor.hpp"

namespace zoomiq::training {

// Binary container: magic "MSLQ", version u32 LE, metadata length u32 LE,
// metadata JSON (UTF-8), tensor count u32 LE, then per tensor: name length
// u16 LE, name bytes, rank u8, dims u32 LE, values f32 LE row-major.
// Save -> load -> save round-trips byte-exactly.
inline constexpr char kCheckpointMagic[4] = {'M', 'S', 'L', 'Q'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    nlohmann::json meta; // config echo, mos stats, best_head, epoch, seed
    std::vector<std::pair<std::string, nd::TensorF>> tensors;

    int best_head() const { return meta.at("best_head").get<int>(); }
    double mos_mean() const { return meta.at("mos_mean").get<double>(); }
    double mos_std() const { return meta.at("mos_std").get<double>(); }
    std::uint64_t seed() const { return meta.at("seed").get<std::uint64_t>(); }
    int epoch() const { return meta.at("epoch").get<int>(); }
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Metadata <-> typed structures.
nlohmann::json registry_to_json(const aug::ZoomRegistry& registry);
aug::ZoomRegistry registry_from_json(const nlohmann::json& j);
nlohmann::json backbone_to_json(const net::BackboneConfig& cfg);
net::BackboneConfig backbone_from_json(const nlohmann::json& j);

aug::ZoomRegistry registry_from_checkpoint(const Checkpoint& ckpt);

// Rebuilds the model described by the checkpoint metadata and loads every
// named tensor into it. Missing or misshapen tensors raise DataError.
net::Model model_from_checkpoint(const Checkpoint& ckpt);

} // namespace zoomiq::training
