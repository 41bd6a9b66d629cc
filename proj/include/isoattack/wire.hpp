#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "isoattack/domain.hpp"
#include "isoattack/errors.hpp"
#include "isoattack/util.hpp"

namespace isoattack {

// OpenAI-style chat-completions wire shape: POST body with `model`,
// `messages[{role,content}]` and optional `temperature`; reply content at
// `choices[0].message.content` with optional
// `choices[0].message.reasoning_content`.

struct WireResponse {
    std::string response_text;
    std::optional<std::string> reasoning_text;

    bool operator==(const WireResponse&) const = default;
};

inline std::string build_request_body(const std::string& model_id,
                                      const std::vector<ChatMessage>& messages,
                                      std::optional<double> temperature) {
    json body;
    body["model"] = model_id;
    body["messages"] = json::array();
    for (const auto& m : messages) {
        body["messages"].push_back({{"role", enum_to_string(m.role)}, {"content", m.content}});
    }
    if (temperature.has_value()) body["temperature"] = *temperature;
    return body.dump();
}

// Splits a leading <think>...</think> block out of the content. Local
// thinking-mode deployments often inline reasoning this way instead of
// using a structured field.
inline WireResponse split_inline_reasoning(std::string content) {
    WireResponse out;
    std::string_view view = content;
    std::size_t start = view.find_first_not_of(" \t\r\n");
    const std::string_view open = "<think>";
    const std::string_view close = "</think>";
    if (start != std::string_view::npos && view.substr(start, open.size()) == open) {
        std::size_t end = view.find(close, start + open.size());
        if (end != std::string_view::npos) {
            out.reasoning_text =
                std::string(view.substr(start + open.size(), end - start - open.size()));
            std::string rest(view.substr(end + close.size()));
            out.response_text = trim(rest);
            return out;
        }
    }
    out.response_text = std::move(content);
    return out;
}

inline WireResponse parse_wire_response(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("unparseable response body: ") + e.what());
    }
    auto choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty())
        throw ProtocolError("response body has no choices");
    const json& first = (*choices)[0];
    auto message = first.find("message");
    if (message == first.end() || !message->is_object())
        throw ProtocolError("response choice has no message");
    auto content = message->find("content");
    if (content == message->end() || !content->is_string())
        throw ProtocolError("response message has no content");

    auto reasoning = message->find("reasoning_content");
    if (reasoning != message->end() && reasoning->is_string()) {
        WireResponse out;
        out.response_text = content->get<std::string>();
        out.reasoning_text = reasoning->get<std::string>();
        return out;
    }
    return split_inline_reasoning(content->get<std::string>());
}

}  // namespace isoattack
