#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "isoattack/domain.hpp"
#include "isoattack/errors.hpp"

namespace isoattack {

enum class TemplateId {
    Stage1Rewrite,
    Stage2Extract,
    Stage3SafeGen,
    Stage4Invert,
    GateJudge,
    SuccessJudge,
    HarmJudge,
};

namespace detail {
template <> struct EnumNames<TemplateId> {
    static constexpr std::pair<TemplateId, const char*> values[] = {
        {TemplateId::Stage1Rewrite, "Stage1Rewrite"},
        {TemplateId::Stage2Extract, "Stage2Extract"},
        {TemplateId::Stage3SafeGen, "Stage3SafeGen"},
        {TemplateId::Stage4Invert, "Stage4Invert"},
        {TemplateId::GateJudge, "GateJudge"},
        {TemplateId::SuccessJudge, "SuccessJudge"},
        {TemplateId::HarmJudge, "HarmJudge"},
    };
};
}  // namespace detail

inline constexpr TemplateId kAllTemplateIds[] = {
    TemplateId::Stage1Rewrite, TemplateId::Stage2Extract, TemplateId::Stage3SafeGen,
    TemplateId::Stage4Invert,  TemplateId::GateJudge,     TemplateId::SuccessJudge,
    TemplateId::HarmJudge,
};

class UnboundPlaceholder : public ConfigError {
public:
    explicit UnboundPlaceholder(const std::string& name)
        : ConfigError("unbound placeholder: {" + name + "}"), name_(name) {}
    const std::string& name() const { return name_; }

private:
    std::string name_;
};

class UnknownBinding : public ConfigError {
public:
    explicit UnknownBinding(const std::string& name)
        : ConfigError("binding does not match any placeholder: " + name) {}
};

class MissingTemplate : public ConfigError {
public:
    explicit MissingTemplate(const std::string& id)
        : ConfigError("template pack is missing " + id) {}
};

class PlaceholderMismatch : public ConfigError {
public:
    explicit PlaceholderMismatch(const std::string& what) : ConfigError(what) {}
};

// Placeholders are `{identifier}` tokens. Braces that do not wrap a plain
// identifier (JSON literals in instructions, for instance) are left alone.
inline std::set<std::string> scan_placeholders(const std::string& text) {
    std::set<std::string> names;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{') continue;
        std::size_t j = i + 1;
        if (j >= text.size() ||
            !(std::isalpha(static_cast<unsigned char>(text[j])) || text[j] == '_'))
            continue;
        while (j < text.size() &&
               (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
            ++j;
        if (j < text.size() && text[j] == '}') {
            names.insert(text.substr(i + 1, j - i - 1));
            i = j;
        }
    }
    return names;
}

struct PromptTemplate {
    TemplateId template_id = TemplateId::Stage1Rewrite;
    std::string system_text;
    std::string user_text;
    std::set<std::string> placeholders;  // always the scanned set of both texts

    bool operator==(const PromptTemplate&) const = default;
};

inline PromptTemplate make_template(TemplateId id, std::string system_text,
                                    std::string user_text) {
    PromptTemplate t;
    t.template_id = id;
    t.system_text = std::move(system_text);
    t.user_text = std::move(user_text);
    t.placeholders = scan_placeholders(t.system_text);
    auto user_names = scan_placeholders(t.user_text);
    t.placeholders.insert(user_names.begin(), user_names.end());
    return t;
}

inline void to_json(json& j, const PromptTemplate& t) {
    j = json{{"template_id", enum_to_string(t.template_id)},
             {"system_text", t.system_text},
             {"user_text", t.user_text},
             {"placeholders", t.placeholders}};
}
inline void from_json(const json& j, PromptTemplate& t) {
    PromptTemplate built =
        make_template(enum_from_string<TemplateId>(j.at("template_id").get<std::string>()),
                      j.at("system_text").get<std::string>(),
                      j.at("user_text").get<std::string>());
    if (auto it = j.find("placeholders"); it != j.end() && !it->is_null()) {
        auto declared = it->get<std::set<std::string>>();
        if (declared != built.placeholders) {
            throw PlaceholderMismatch(
                enum_to_string(built.template_id) +
                ": declared placeholders do not match the {name} tokens in the text");
        }
    }
    t = std::move(built);
}

using Bindings = std::map<std::string, std::string>;

// Renders the [system, user] message pair. Substitution is a single pass
// over the template text, so binding values are never re-scanned.
inline std::vector<ChatMessage> render(const PromptTemplate& tpl, const Bindings& bindings,
                                       bool strict = false) {
    for (const auto& name : tpl.placeholders) {
        if (!bindings.count(name)) throw UnboundPlaceholder(name);
    }
    if (strict) {
        for (const auto& [name, _] : bindings) {
            if (!tpl.placeholders.count(name)) throw UnknownBinding(name);
        }
    }
    auto substitute = [&](const std::string& text) {
        std::string out;
        out.reserve(text.size());
        for (std::size_t i = 0; i < text.size(); ++i) {
            if (text[i] == '{') {
                std::size_t close = text.find('}', i + 1);
                if (close != std::string::npos) {
                    std::string name = text.substr(i + 1, close - i - 1);
                    auto it = bindings.find(name);
                    if (it != bindings.end() && tpl.placeholders.count(name)) {
                        out += it->second;
                        i = close;
                        continue;
                    }
                }
            }
            out.push_back(text[i]);
        }
        return out;
    };
    return {{Role::System, substitute(tpl.system_text)},
            {Role::User, substitute(tpl.user_text)}};
}

// The placeholder contract the pipeline renders against. Stage templates
// must consume exactly their argument lists; judge templates may use any
// subset of what the pipeline supplies.
inline const std::map<TemplateId, std::set<std::string>>& required_placeholders() {
    static const std::map<TemplateId, std::set<std::string>> required = {
        {TemplateId::Stage1Rewrite, {"q_harm"}},
        {TemplateId::Stage2Extract, {"q_harm", "q_safe"}},
        {TemplateId::Stage3SafeGen, {"q_safe"}},
        {TemplateId::Stage4Invert, {"r_safe", "t_harm", "t_safe"}},
    };
    return required;
}

inline const std::map<TemplateId, std::set<std::string>>& allowed_placeholders() {
    static const std::map<TemplateId, std::set<std::string>> allowed = {
        {TemplateId::GateJudge, {"stage", "attempt", "task", "content"}},
        {TemplateId::SuccessJudge, {"question", "response"}},
        {TemplateId::HarmJudge, {"response"}},
    };
    return allowed;
}

class TemplateRegistry {
public:
    const PromptTemplate& get(TemplateId id) const {
        auto it = templates_.find(id);
        if (it == templates_.end()) throw MissingTemplate(enum_to_string(id));
        return it->second;
    }

    void put(PromptTemplate tpl) { templates_[tpl.template_id] = std::move(tpl); }

    std::size_t size() const { return templates_.size(); }

private:
    std::map<TemplateId, PromptTemplate> templates_;
};

// Loads `<dir>/<TemplateId>.json` for all seven ids and verifies the
// placeholder contract up front, so a broken pack fails at startup rather
// than mid-campaign.
inline TemplateRegistry load_template_pack(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw IoError("template pack directory not found: " + dir.string());
    TemplateRegistry registry;
    for (TemplateId id : kAllTemplateIds) {
        auto path = dir / (enum_to_string(id) + ".json");
        std::ifstream in(path);
        if (!in) throw MissingTemplate(enum_to_string(id));
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError("template file " + path.string() + ": " + e.what());
        }
        PromptTemplate tpl = j.get<PromptTemplate>();
        if (tpl.template_id != id)
            throw ConfigError("template file " + path.string() +
                              " declares template_id " + enum_to_string(tpl.template_id));

        const auto& required = required_placeholders();
        if (auto it = required.find(id); it != required.end() && tpl.placeholders != it->second)
            throw PlaceholderMismatch(enum_to_string(id) +
                                      ": placeholder set does not match the stage arguments");
        const auto& allowed = allowed_placeholders();
        if (auto it = allowed.find(id); it != allowed.end()) {
            for (const auto& name : tpl.placeholders) {
                if (!it->second.count(name))
                    throw PlaceholderMismatch(enum_to_string(id) +
                                              ": placeholder {" + name +
                                              "} is not supplied by the pipeline");
            }
        }
        registry.put(std::move(tpl));
    }
    return registry;
}

}  // namespace isoattack
