#pragma once

#include <atomic>
#include <chrono>
#include <string>
#include <thread>
#include <vector>

#include "isoattack/backend.hpp"
#include "isoattack/util.hpp"

namespace isoattack {

// In-process mock backend. The reply is a pure function of (policy, message
// sequence), so identical requests produce identical exchanges across runs
// and across concurrent callers.
class MockBackend : public ChatBackend {
public:
    explicit MockBackend(BackendConfig config) : config_(std::move(config)) {
        validate_backend_config(config_);
    }

    ChatExchange complete(const std::vector<ChatMessage>& messages,
                          const CompletionOptions& /*options*/ = {}) override {
        if (messages.empty()) throw ProtocolError("empty message list");
        if (messages.front().role == Role::Assistant)
            throw ProtocolError("first message role must be system or user");

        int entered = 1 + in_flight_.fetch_add(1);
        int watermark = max_in_flight_.load();
        while (entered > watermark &&
               !max_in_flight_.compare_exchange_weak(watermark, entered)) {
        }

        const MockPolicy& policy = *config_.mock_policy;
        if (policy.delay_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(policy.delay_ms));

        std::string prompt = last_user_content(messages);

        ChatExchange exchange;
        exchange.backend_alias = config_.alias;
        exchange.request_messages = messages;

        bool matched = false;
        for (const auto& turn : policy.scripted_turns) {
            bool all = true;
            for (const auto& needle : turn.match_all) {
                if (!contains_ci(prompt, needle)) {
                    all = false;
                    break;
                }
            }
            if (all) {
                exchange.response_text = substitute_prompt(turn.response_text, prompt);
                if (turn.reasoning_text) {
                    exchange.reasoning_text = *turn.reasoning_text;
                    exchange.reasoning_length =
                        static_cast<std::int64_t>(turn.reasoning_text->size());
                }
                matched = true;
                break;
            }
        }
        if (!matched) {
            bool flagged = false;
            for (const auto& term : policy.flagged_terms) {
                if (!term.empty() && contains_ci(prompt, term)) {
                    flagged = true;
                    break;
                }
            }
            const std::string& tpl = flagged ? policy.refusal_text : policy.compliance_text;
            exchange.response_text = substitute_prompt(tpl, prompt);
        }

        in_flight_.fetch_sub(1);
        return exchange;
    }

    const BackendConfig& config() const override { return config_; }

    // High-water mark of concurrent complete() calls; used by campaign
    // concurrency tests.
    int max_concurrent_entries() const { return max_in_flight_.load(); }

private:
    static std::string last_user_content(const std::vector<ChatMessage>& messages) {
        for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
            if (it->role == Role::User) return it->content;
        }
        return messages.back().content;
    }

    static std::string substitute_prompt(const std::string& tpl, const std::string& prompt) {
        std::string out = tpl;
        const std::string token = "{prompt}";
        std::size_t pos = 0;
        while ((pos = out.find(token, pos)) != std::string::npos) {
            out.replace(pos, token.size(), prompt);
            pos += prompt.size();
        }
        return out;
    }

    BackendConfig config_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
};

}  // namespace isoattack
