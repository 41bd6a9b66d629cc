#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "isoattack/domain.hpp"
#include "isoattack/errors.hpp"

namespace isoattack {

enum class BackendKind { HttpChat, Mock };

namespace detail {
template <> struct EnumNames<BackendKind> {
    static constexpr std::pair<BackendKind, const char*> values[] = {
        {BackendKind::HttpChat, "HttpChat"},
        {BackendKind::Mock, "Mock"},
    };
};
}  // namespace detail

// One scripted mock reply. All `match_all` substrings must occur
// (case-insensitively) in the last user message for the turn to fire; an
// empty list matches everything.
struct ScriptedTurn {
    std::vector<std::string> match_all;
    std::string response_text;
    std::optional<std::string> reasoning_text;

    bool operator==(const ScriptedTurn&) const = default;
};

// Deterministic stand-in for a safety-aligned model: scripted turns first,
// then a flagged-terms refusal policy, then the compliance fallback.
struct MockPolicy {
    std::vector<std::string> flagged_terms;
    std::string refusal_text = "I'm sorry, I can't help with that.";
    std::string compliance_text = "Here is the information you asked for: {prompt}";
    std::vector<ScriptedTurn> scripted_turns;
    int delay_ms = 0;  // widens race windows in concurrency tests

    bool operator==(const MockPolicy&) const = default;
};

struct BackendConfig {
    std::string alias;
    BackendKind kind = BackendKind::Mock;
    std::optional<std::string> endpoint_url;
    std::optional<std::string> model_id;
    std::optional<std::string> api_key_env;
    std::optional<double> temperature;
    std::chrono::milliseconds request_timeout{30000};
    int max_retries_transport = 2;
    std::optional<int> rate_limit;  // requests per minute
    std::optional<MockPolicy> mock_policy;

    bool operator==(const BackendConfig&) const = default;
};

inline void to_json(json& j, const ScriptedTurn& t) {
    j = json{{"match_all", t.match_all}, {"response_text", t.response_text}};
    detail::put_opt(j, "reasoning_text", t.reasoning_text);
}
inline void from_json(const json& j, ScriptedTurn& t) {
    t.match_all = j.value("match_all", std::vector<std::string>{});
    t.response_text = j.at("response_text").get<std::string>();
    t.reasoning_text = detail::get_opt<std::string>(j, "reasoning_text");
}

inline void to_json(json& j, const MockPolicy& p) {
    j = json{{"flagged_terms", p.flagged_terms},
             {"refusal_text", p.refusal_text},
             {"compliance_text", p.compliance_text},
             {"scripted_turns", p.scripted_turns},
             {"delay_ms", p.delay_ms}};
}
inline void from_json(const json& j, MockPolicy& p) {
    p.flagged_terms = j.value("flagged_terms", std::vector<std::string>{});
    p.refusal_text = j.value("refusal_text", MockPolicy{}.refusal_text);
    p.compliance_text = j.value("compliance_text", MockPolicy{}.compliance_text);
    p.scripted_turns = j.value("scripted_turns", std::vector<ScriptedTurn>{});
    p.delay_ms = j.value("delay_ms", 0);
}

inline void to_json(json& j, const BackendConfig& c) {
    j = json{{"alias", c.alias}, {"kind", enum_to_string(c.kind)}};
    detail::put_opt(j, "endpoint_url", c.endpoint_url);
    detail::put_opt(j, "model_id", c.model_id);
    detail::put_opt(j, "api_key_env", c.api_key_env);
    detail::put_opt(j, "temperature", c.temperature);
    j["request_timeout"] = c.request_timeout.count();
    j["max_retries_transport"] = c.max_retries_transport;
    detail::put_opt(j, "rate_limit", c.rate_limit);
    detail::put_opt(j, "mock_policy", c.mock_policy);
}
inline void from_json(const json& j, BackendConfig& c) {
    c.alias = j.at("alias").get<std::string>();
    c.kind = enum_from_string<BackendKind>(j.at("kind").get<std::string>());
    c.endpoint_url = detail::get_opt<std::string>(j, "endpoint_url");
    c.model_id = detail::get_opt<std::string>(j, "model_id");
    c.api_key_env = detail::get_opt<std::string>(j, "api_key_env");
    c.temperature = detail::get_opt<double>(j, "temperature");
    c.request_timeout =
        std::chrono::milliseconds(j.value("request_timeout", std::int64_t{30000}));
    c.max_retries_transport = j.value("max_retries_transport", 2);
    c.rate_limit = detail::get_opt<int>(j, "rate_limit");
    c.mock_policy = detail::get_opt<MockPolicy>(j, "mock_policy");
}

inline void validate_backend_config(const BackendConfig& c) {
    if (c.alias.empty()) throw ConfigError("backend with empty alias");
    if (c.kind == BackendKind::HttpChat) {
        if (!c.endpoint_url || !c.model_id || !c.api_key_env)
            throw ConfigError("backend \"" + c.alias +
                              "\": HttpChat requires endpoint_url, model_id and api_key_env");
    } else {
        if (!c.mock_policy)
            throw ConfigError("backend \"" + c.alias + "\": Mock requires mock_policy");
    }
    if (c.max_retries_transport < 0)
        throw ConfigError("backend \"" + c.alias + "\": negative max_retries_transport");
}

struct CompletionOptions {
    std::optional<double> temperature;  // overrides the backend default
};

// Uniform chat interface; implementations must be safe to call from many
// threads at once.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatExchange complete(const std::vector<ChatMessage>& messages,
                                  const CompletionOptions& options = {}) = 0;
    virtual const BackendConfig& config() const = 0;
};

class BackendRegistry {
public:
    void put(std::shared_ptr<ChatBackend> backend) {
        by_alias_[backend->config().alias] = std::move(backend);
    }

    std::shared_ptr<ChatBackend> resolve(const std::string& alias) const {
        auto it = by_alias_.find(alias);
        if (it == by_alias_.end())
            throw ConfigError("no backend configured with alias \"" + alias + "\"");
        return it->second;
    }

    bool contains(const std::string& alias) const { return by_alias_.count(alias) > 0; }

    std::size_t size() const { return by_alias_.size(); }

private:
    std::map<std::string, std::shared_ptr<ChatBackend>> by_alias_;
};

}  // namespace isoattack
