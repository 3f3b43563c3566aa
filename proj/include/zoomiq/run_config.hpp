#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "zoomiq/augment.hpp"
#include "zoomiq/loss.hpp"
#include "zoomiq/model.hpp"
#include "zoomiq/train.hpp"

namespace zoomiq::cli {

// The run-configuration document. Every field has a default; unknown keys
// are rejected with the offending path. CLI flags override after parsing.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string registry_name = "combined";
    bool has_custom_specs = false;
    aug::ZoomRegistry custom_registry;

    net::BackboneConfig backbone;
    training::LossConfig loss;
    training::TrainConfig train;
    aug::TtaConfig tta;

    std::string train_manifest, val_manifest, test_manifest;

    aug::ZoomRegistry registry() const {
        return has_custom_specs ? custom_registry : aug::builtin_registry(registry_name);
    }
};

// Throws UsageError naming the field path on any schema violation.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json run_config_to_json(const RunConfig& cfg);

} // namespace zoomiq::cli
