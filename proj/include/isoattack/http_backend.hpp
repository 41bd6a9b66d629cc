#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "isoattack/backend.hpp"
#include "isoattack/mock_backend.hpp"
#include "isoattack/rate_limiter.hpp"
#include "isoattack/wire.hpp"

namespace isoattack {

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // leading slash, "/" if absent
};

inline ParsedUrl parse_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("endpoint_url is missing a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    ParsedUrl out;
    if (path_start == std::string::npos) {
        out.origin = url;
        out.path = "/";
    } else {
        out.origin = url.substr(0, path_start);
        out.path = url.substr(path_start);
    }
    return out;
}

// Chat adapter over the OpenAI-style JSON wire shape. Transport retries
// (connectivity, 5xx, 429 backoff) are bounded by max_retries_transport and
// are a separate budget from the pipeline's quality retries.
class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(BackendConfig config) : config_(std::move(config)) {
        validate_backend_config(config_);
        url_ = parse_url(*config_.endpoint_url);
        const char* key = std::getenv(config_.api_key_env->c_str());
        if (key == nullptr || *key == '\0')
            throw ConfigError("backend \"" + config_.alias + "\": env var " +
                              *config_.api_key_env + " is not set");
        api_key_ = key;
        if (config_.rate_limit.has_value())
            limiter_ = std::make_unique<SlidingWindowLimiter>(*config_.rate_limit);
    }

    ChatExchange complete(const std::vector<ChatMessage>& messages,
                          const CompletionOptions& options = {}) override {
        if (messages.empty()) throw ProtocolError("empty message list");
        if (messages.front().role == Role::Assistant)
            throw ProtocolError("first message role must be system or user");

        auto temperature = options.temperature ? options.temperature : config_.temperature;
        std::string body = build_request_body(config_.model_id.value_or(""), messages,
                                              temperature);

        ChatExchange exchange;
        exchange.backend_alias = config_.alias;
        exchange.request_messages = messages;

        auto started = std::chrono::steady_clock::now();
        std::string response_body = post_with_retries(body, exchange);
        exchange.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - started);

        WireResponse wire = parse_wire_response(response_body);
        exchange.response_text = std::move(wire.response_text);
        exchange.reasoning_text = std::move(wire.reasoning_text);
        exchange.reasoning_length =
            exchange.reasoning_text
                ? static_cast<std::int64_t>(exchange.reasoning_text->size())
                : 0;
        return exchange;
    }

    const BackendConfig& config() const override { return config_; }

private:
    std::string post_with_retries(const std::string& body, ChatExchange& exchange) {
        int max_attempts = 1 + config_.max_retries_transport;
        std::string last_failure = "no attempt made";
        bool saw_rate_limit = false;

        for (int attempt = 1; attempt <= max_attempts; ++attempt) {
            if (limiter_ != nullptr) {
                auto delay = limiter_->delay_for(std::chrono::steady_clock::now());
                if (delay.count() > 0) std::this_thread::sleep_for(delay);
            }

            // Client per request: no shared connection state to synchronize.
            httplib::Client client(url_.origin);
            auto timeout = std::chrono::duration_cast<std::chrono::seconds>(
                config_.request_timeout);
            client.set_connection_timeout(timeout.count() > 0 ? timeout.count() : 1, 0);
            client.set_read_timeout(timeout.count() > 0 ? timeout.count() : 1, 0);
            httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};

            auto result = client.Post(url_.path, headers, body, "application/json");

            if (!result) {
                last_failure = "transport failure: " + httplib::to_string(result.error());
            } else if (result->status == 200) {
                return result->body;
            } else if (result->status == 401 || result->status == 403) {
                throw AuthError("backend \"" + config_.alias + "\": HTTP " +
                                std::to_string(result->status));
            } else if (result->status == 429) {
                saw_rate_limit = true;
                last_failure = "HTTP 429";
            } else if (result->status >= 500) {
                last_failure = "HTTP " + std::to_string(result->status);
            } else {
                throw ProtocolError("backend \"" + config_.alias + "\": unexpected HTTP " +
                                    std::to_string(result->status));
            }

            if (attempt < max_attempts) {
                exchange.transport_retries += 1;
                exchange.diagnostics.push_back("transport retry " + std::to_string(attempt) +
                                               " after " + last_failure);
                std::this_thread::sleep_for(backoff_delay(attempt));
            }
        }

        std::string what = "backend \"" + config_.alias + "\": " + last_failure + " after " +
                           std::to_string(max_attempts) + " attempts";
        if (saw_rate_limit) throw RateLimited(what);
        throw TransportError(what);
    }

    static std::chrono::milliseconds backoff_delay(int attempt) {
        auto delay = std::chrono::milliseconds(100) * (1 << std::min(attempt - 1, 5));
        return std::min(delay, std::chrono::milliseconds(4000));
    }

    BackendConfig config_;
    ParsedUrl url_;
    std::string api_key_;
    std::unique_ptr<SlidingWindowLimiter> limiter_;
};

inline std::shared_ptr<ChatBackend> make_backend(const BackendConfig& config) {
    validate_backend_config(config);
    if (config.kind == BackendKind::Mock)
        return std::make_shared<MockBackend>(config);
    return std::make_shared<HttpChatBackend>(config);
}

}  // namespace isoattack
