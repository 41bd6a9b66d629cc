#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "isoattack/backend.hpp"
#include "isoattack/errors.hpp"
#include "isoattack/pipeline.hpp"

namespace isoattack {

// Labels attached to a run so `report asr` can place its cell.
struct RunLabels {
    std::string model;
    std::string dataset;
    std::string mode = "answer";

    bool operator==(const RunLabels&) const = default;
};

inline void to_json(json& j, const RunLabels& l) {
    j = json{{"model", l.model}, {"dataset", l.dataset}, {"mode", l.mode}};
}
inline void from_json(const json& j, RunLabels& l) {
    l.model = j.value("model", "");
    l.dataset = j.value("dataset", "");
    l.mode = j.value("mode", "answer");
}

struct AppConfig {
    std::vector<BackendConfig> backends;
    PipelineConfig pipeline;
    std::filesystem::path templates_dir = "templates";
    std::filesystem::path lexicon_path = "config/refusal_lexicon.txt";
    std::optional<RunLabels> labels;

    const BackendConfig* find_backend(const std::string& alias) const {
        for (const auto& b : backends) {
            if (b.alias == alias) return &b;
        }
        return nullptr;
    }
};

inline void to_json(json& j, const AppConfig& c) {
    j = json{{"backends", c.backends},
             {"pipeline", c.pipeline},
             {"templates_dir", c.templates_dir.string()},
             {"lexicon_path", c.lexicon_path.string()}};
    detail::put_opt(j, "labels", c.labels);
}
inline void from_json(const json& j, AppConfig& c) {
    c.backends = j.at("backends").get<std::vector<BackendConfig>>();
    c.pipeline = j.at("pipeline").get<PipelineConfig>();
    c.templates_dir = j.value("templates_dir", std::string("templates"));
    c.lexicon_path = j.value("lexicon_path", std::string("config/refusal_lexicon.txt"));
    c.labels = detail::get_opt<RunLabels>(j, "labels");
}

// Loads and validates the config file. Relative templates_dir/lexicon_path
// are resolved against the config file's own directory.
inline AppConfig load_app_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + ": " + e.what());
    }
    AppConfig config;
    try {
        config = j.get<AppConfig>();
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + ": " + e.what());
    }

    std::set<std::string> aliases;
    for (const auto& backend : config.backends) {
        validate_backend_config(backend);
        if (!aliases.insert(backend.alias).second)
            throw ConfigError("duplicate backend alias \"" + backend.alias + "\"");
    }

    auto base = path.parent_path();
    if (config.templates_dir.is_relative()) config.templates_dir = base / config.templates_dir;
    if (config.lexicon_path.is_relative()) config.lexicon_path = base / config.lexicon_path;
    return config;
}

}  // namespace isoattack
