#include "zoomiq/run_config.hpp"

#include <fstream>
#include <set>

#include "zoomiq/checkpoint.hpp"
#include "zoomiq/errors.hpp"

namespace zoomiq::cli {

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw UsageError("config: " + path + " must be an object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key))
            throw UsageError("config: unknown key '" + (path.empty() ? key : path + "." + key) + "'");
}

template <typename T>
T get_or(const json& obj, const std::string& path, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw UsageError("config: bad value for '" + path + key + "'");
    }
}

void check_range(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw UsageError("config: " + field + " " + what);
}

} // namespace

RunConfig parse_run_config(const json& doc) {
    RunConfig cfg;
    require_keys(doc, "", {"seed", "registry", "zoom_specs", "backbone", "loss", "train", "tta", "data"});

    cfg.seed = get_or<std::uint64_t>(doc, "", "seed", cfg.seed);

    if (doc.contains("registry") && doc.contains("zoom_specs"))
        throw UsageError("config: give either 'registry' or 'zoom_specs', not both");
    cfg.registry_name = get_or<std::string>(doc, "", "registry", cfg.registry_name);
    if (doc.contains("zoom_specs")) {
        if (!doc.at("zoom_specs").is_array() || doc.at("zoom_specs").empty())
            throw UsageError("config: zoom_specs must be a non-empty array");
        std::vector<aug::ZoomSpec> specs;
        std::size_t i = 0;
        for (const auto& s : doc.at("zoom_specs")) {
            const std::string path = "zoom_specs[" + std::to_string(i++) + "]";
            require_keys(s, path, {"name", "resize", "crop"});
            aug::ZoomSpec spec;
            spec.name = get_or<std::string>(s, path + ".", "name", "");
            if (spec.name.empty()) throw UsageError("config: " + path + ".name is required");
            if (s.contains("resize")) {
                spec.resize = get_or<int>(s, path + ".", "resize", 0);
                check_range(*spec.resize >= 1, path + ".resize", "must be >= 1");
            }
            if (s.contains("crop")) {
                spec.crop = get_or<int>(s, path + ".", "crop", 0);
                check_range(*spec.crop >= 1, path + ".crop", "must be >= 1");
            }
            specs.push_back(std::move(spec));
        }
        try {
            cfg.custom_registry = aug::make_registry("custom", std::move(specs));
        } catch (const ContractViolation& e) {
            throw UsageError(std::string("config: zoom_specs: ") + e.what());
        }
        cfg.has_custom_specs = true;
    } else {
        try {
            (void)aug::builtin_registry(cfg.registry_name);
        } catch (const UsageError&) {
            throw UsageError("config: registry '" + cfg.registry_name + "' is not a builtin");
        }
    }

    if (doc.contains("backbone")) {
        const auto& b = doc.at("backbone");
        require_keys(b, "backbone", {"stem_channels", "num_blocks", "embed_dim"});
        cfg.backbone.stem_channels = get_or<int>(b, "backbone.", "stem_channels", cfg.backbone.stem_channels);
        cfg.backbone.num_blocks = get_or<int>(b, "backbone.", "num_blocks", cfg.backbone.num_blocks);
        cfg.backbone.embed_dim = get_or<int>(b, "backbone.", "embed_dim", cfg.backbone.embed_dim);
        check_range(cfg.backbone.stem_channels >= 1, "backbone.stem_channels", "must be >= 1");
        check_range(cfg.backbone.num_blocks >= 1, "backbone.num_blocks", "must be >= 1");
        check_range(cfg.backbone.embed_dim >= 1, "backbone.embed_dim", "must be >= 1");
    }

    if (doc.contains("loss")) {
        const auto& l = doc.at("loss");
        require_keys(l, "loss", {"lambda", "epsilon_var"});
        cfg.loss.lambda = get_or<double>(l, "loss.", "lambda", cfg.loss.lambda);
        cfg.loss.epsilon_var = get_or<double>(l, "loss.", "epsilon_var", cfg.loss.epsilon_var);
        check_range(cfg.loss.lambda >= 0.0 && cfg.loss.lambda <= 1.0, "loss.lambda", "must be in [0, 1]");
        check_range(cfg.loss.epsilon_var > 0.0, "loss.epsilon_var", "must be positive");
    }

    if (doc.contains("train")) {
        const auto& t = doc.at("train");
        require_keys(t, "train", {"epochs", "batch_size", "lr", "beta1", "beta2", "adam_epsilon"});
        cfg.train.epochs = get_or<int>(t, "train.", "epochs", cfg.train.epochs);
        cfg.train.batch_size = get_or<int>(t, "train.", "batch_size", cfg.train.batch_size);
        cfg.train.lr = get_or<double>(t, "train.", "lr", cfg.train.lr);
        cfg.train.beta1 = get_or<double>(t, "train.", "beta1", cfg.train.beta1);
        cfg.train.beta2 = get_or<double>(t, "train.", "beta2", cfg.train.beta2);
        cfg.train.adam_epsilon = get_or<double>(t, "train.", "adam_epsilon", cfg.train.adam_epsilon);
        check_range(cfg.train.epochs >= 1, "train.epochs", "must be >= 1");
        check_range(cfg.train.batch_size >= 2, "train.batch_size", "must be >= 2");
        check_range(cfg.train.lr > 0.0, "train.lr", "must be positive");
        check_range(cfg.train.beta1 >= 0.0 && cfg.train.beta1 < 1.0, "train.beta1", "must be in [0, 1)");
        check_range(cfg.train.beta2 >= 0.0 && cfg.train.beta2 < 1.0, "train.beta2", "must be in [0, 1)");
        check_range(cfg.train.adam_epsilon > 0.0, "train.adam_epsilon", "must be positive");
    }

    if (doc.contains("tta")) {
        const auto& t = doc.at("tta");
        require_keys(t, "tta", {"scales", "patch_sizes", "grid_rows", "grid_cols", "transpose", "hflip"});
        if (t.contains("scales")) {
            cfg.tta.scales = get_or<std::vector<double>>(t, "tta.", "scales", cfg.tta.scales);
            check_range(!cfg.tta.scales.empty(), "tta.scales", "must be non-empty");
            for (double s : cfg.tta.scales) check_range(s > 0.0, "tta.scales", "entries must be positive");
        }
        if (t.contains("patch_sizes")) {
            cfg.tta.patch_sizes = get_or<std::vector<int>>(t, "tta.", "patch_sizes", cfg.tta.patch_sizes);
            check_range(!cfg.tta.patch_sizes.empty(), "tta.patch_sizes", "must be non-empty");
            for (int p : cfg.tta.patch_sizes)
                check_range(p >= 1, "tta.patch_sizes", "entries must be >= 1");
        }
        cfg.tta.grid_rows = get_or<int>(t, "tta.", "grid_rows", cfg.tta.grid_rows);
        cfg.tta.grid_cols = get_or<int>(t, "tta.", "grid_cols", cfg.tta.grid_cols);
        cfg.tta.transpose = get_or<bool>(t, "tta.", "transpose", cfg.tta.transpose);
        cfg.tta.hflip = get_or<bool>(t, "tta.", "hflip", cfg.tta.hflip);
        check_range(cfg.tta.grid_rows >= 2, "tta.grid_rows", "must be >= 2");
        check_range(cfg.tta.grid_cols >= 2, "tta.grid_cols", "must be >= 2");
    }

    if (doc.contains("data")) {
        const auto& d = doc.at("data");
        require_keys(d, "data", {"train_manifest", "val_manifest", "test_manifest"});
        cfg.train_manifest = get_or<std::string>(d, "data.", "train_manifest", "");
        cfg.val_manifest = get_or<std::string>(d, "data.", "val_manifest", "");
        cfg.test_manifest = get_or<std::string>(d, "data.", "test_manifest", "");
    }

    cfg.train.seed = cfg.seed;
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config '" + path.string() + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw UsageError("config: invalid JSON in '" + path.string() + "': " + e.what());
    }
    return parse_run_config(doc);
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
    nlohmann::json doc;
    doc["seed"] = cfg.seed;
    if (cfg.has_custom_specs)
        doc["zoom_specs"] = training::registry_to_json(cfg.custom_registry).at("specs");
    else
        doc["registry"] = cfg.registry_name;
    doc["backbone"] = training::backbone_to_json(cfg.backbone);
    doc["loss"] = {{"lambda", cfg.loss.lambda}, {"epsilon_var", cfg.loss.epsilon_var}};
    doc["train"] = {{"epochs", cfg.train.epochs},     {"batch_size", cfg.train.batch_size},
                    {"lr", cfg.train.lr},             {"beta1", cfg.train.beta1},
                    {"beta2", cfg.train.beta2},       {"adam_epsilon", cfg.train.adam_epsilon}};
    doc["tta"] = {{"scales", cfg.tta.scales},       {"patch_sizes", cfg.tta.patch_sizes},
                  {"grid_rows", cfg.tta.grid_rows}, {"grid_cols", cfg.tta.grid_cols},
                  {"transpose", cfg.tta.transpose}, {"hflip", cfg.tta.hflip}};
    doc["data"] = {{"train_manifest", cfg.train_manifest},
                   {"val_manifest", cfg.val_manifest},
                   {"test_manifest", cfg.test_manifest}};
    return doc;
}

} // namespace zoomiq::cli
