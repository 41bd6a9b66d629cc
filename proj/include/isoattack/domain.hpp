#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "isoattack/errors.hpp"
#include "isoattack/util.hpp"

namespace isoattack {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Enums
// ---------------------------------------------------------------------------

enum class DatasetSource { JailbreakBench, AdvBench, HarmBench, Custom };
enum class Stage { Rewrite, Extract, SafeGen, Invert };
enum class AttemptOutcome { Accepted, Retried, Exhausted };
enum class SuccessState { Succeeded, Failed, Skipped };
enum class SuccessMethod { Judge, Keyword, Manual };
enum class SampleLabel { Safe, Harmful };
enum class DetectorVerdict { Safe, Harmful, Abstain };
enum class Role { System, User, Assistant };
enum class AttackMode { Pipeline, Direct };

namespace detail {

template <typename E>
struct EnumNames;

template <> struct EnumNames<DatasetSource> {
    static constexpr std::pair<DatasetSource, const char*> values[] = {
        {DatasetSource::JailbreakBench, "JailbreakBench"},
        {DatasetSource::AdvBench, "AdvBench"},
        {DatasetSource::HarmBench, "HarmBench"},
        {DatasetSource::Custom, "Custom"},
    };
};
template <> struct EnumNames<Stage> {
    static constexpr std::pair<Stage, const char*> values[] = {
        {Stage::Rewrite, "Rewrite"},
        {Stage::Extract, "Extract"},
        {Stage::SafeGen, "SafeGen"},
        {Stage::Invert, "Invert"},
    };
};
template <> struct EnumNames<AttemptOutcome> {
    static constexpr std::pair<AttemptOutcome, const char*> values[] = {
        {AttemptOutcome::Accepted, "Accepted"},
        {AttemptOutcome::Retried, "Retried"},
        {AttemptOutcome::Exhausted, "Exhausted"},
    };
};
template <> struct EnumNames<SuccessState> {
    static constexpr std::pair<SuccessState, const char*> values[] = {
        {SuccessState::Succeeded, "Succeeded"},
        {SuccessState::Failed, "Failed"},
        {SuccessState::Skipped, "Skipped"},
    };
};
template <> struct EnumNames<SuccessMethod> {
    static constexpr std::pair<SuccessMethod, const char*> values[] = {
        {SuccessMethod::Judge, "Judge"},
        {SuccessMethod::Keyword, "Keyword"},
        {SuccessMethod::Manual, "Manual"},
    };
};
template <> struct EnumNames<SampleLabel> {
    static constexpr std::pair<SampleLabel, const char*> values[] = {
        {SampleLabel::Safe, "Safe"},
        {SampleLabel::Harmful, "Harmful"},
    };
};
template <> struct EnumNames<DetectorVerdict> {
    static constexpr std::pair<DetectorVerdict, const char*> values[] = {
        {DetectorVerdict::Safe, "Safe"},
        {DetectorVerdict::Harmful, "Harmful"},
        {DetectorVerdict::Abstain, "Abstain"},
    };
};
template <> struct EnumNames<Role> {
    static constexpr std::pair<Role, const char*> values[] = {
        {Role::System, "system"},
        {Role::User, "user"},
        {Role::Assistant, "assistant"},
    };
};
template <> struct EnumNames<AttackMode> {
    static constexpr std::pair<AttackMode, const char*> values[] = {
        {AttackMode::Pipeline, "pipeline"},
        {AttackMode::Direct, "direct"},
    };
};

}  // namespace detail

template <typename E>
std::string enum_to_string(E value) {
    for (const auto& [v, name] : detail::EnumNames<E>::values) {
        if (v == value) return name;
    }
    throw ConfigError("unknown enum value");
}

template <typename E>
E enum_from_string(const std::string& name) {
    for (const auto& [v, n] : detail::EnumNames<E>::values) {
        if (name == n) return v;
    }
    throw ConfigError("unrecognized enum string: \"" + name + "\"");
}

// ---------------------------------------------------------------------------
// Value types
// ---------------------------------------------------------------------------

struct AttackTask {
    std::string id;
    std::string q_harm;
    DatasetSource source = DatasetSource::Custom;
    std::optional<std::string> category;

    bool operator==(const AttackTask&) const = default;
};

struct SafeQuestion {
    std::string q_safe;
    std::optional<std::string> rationale;

    bool operator==(const SafeQuestion&) const = default;
};

struct TopicMapping {
    std::string t_harm;
    std::string t_safe;

    bool operator==(const TopicMapping&) const = default;
};

struct ChatMessage {
    Role role = Role::User;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatExchange {
    std::string backend_alias;
    std::vector<ChatMessage> request_messages;
    std::string response_text;
    std::optional<std::string> reasoning_text;
    std::int64_t reasoning_length = 0;  // characters of reasoning_text, 0 if absent
    std::chrono::milliseconds latency{0};
    int transport_retries = 0;
    std::vector<std::string> diagnostics;  // one entry per transport retry

    bool operator==(const ChatExchange&) const = default;
};

struct GateVerdict {
    std::string judge_alias;
    bool passed = false;
    std::string reason;  // must be non-empty when passed == false

    bool operator==(const GateVerdict&) const = default;
};

struct StageAttempt {
    Stage stage = Stage::Rewrite;
    int attempt_index = 1;  // 1-based within one stage run
    ChatExchange exchange;
    GateVerdict gate;
    AttemptOutcome outcome = AttemptOutcome::Retried;

    bool operator==(const StageAttempt&) const = default;
};

struct SuccessVerdict {
    SuccessState state = SuccessState::Skipped;
    SuccessMethod method = SuccessMethod::Judge;
    std::string detail;

    bool operator==(const SuccessVerdict&) const = default;
};

struct AttackRecord {
    std::string task_id;
    int attack_iteration = 1;  // iterations executed, 1-based
    std::vector<StageAttempt> stages;
    std::optional<SafeQuestion> q_safe;
    std::optional<TopicMapping> mapping;
    std::optional<std::string> r_safe;
    std::optional<std::string> r_harm;
    SuccessVerdict success;
    std::chrono::milliseconds wall_time{0};
    AttackMode mode = AttackMode::Pipeline;

    bool operator==(const AttackRecord&) const = default;
};

struct LabeledSample {
    std::string id;
    std::string response_text;
    SampleLabel label = SampleLabel::Safe;
    std::optional<std::string> source_method;
    std::optional<std::string> source_model;

    bool operator==(const LabeledSample&) const = default;
};

struct DetectorOutcome {
    std::string sample_id;
    DetectorVerdict verdict = DetectorVerdict::Abstain;

    bool operator==(const DetectorOutcome&) const = default;
};

// ---------------------------------------------------------------------------
// Canonical JSON (snake_case keys, durations in integer milliseconds,
// optional fields omitted when absent)
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void put_opt(json& j, const char* key, const std::optional<T>& value) {
    if (value.has_value()) j[key] = *value;
}

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->template get<T>();
}

}  // namespace detail

inline void to_json(json& j, const AttackTask& t) {
    j = json{{"id", t.id}, {"q_harm", t.q_harm}, {"source", enum_to_string(t.source)}};
    detail::put_opt(j, "category", t.category);
}
inline void from_json(const json& j, AttackTask& t) {
    t.id = j.at("id").get<std::string>();
    t.q_harm = j.at("q_harm").get<std::string>();
    t.source = enum_from_string<DatasetSource>(j.at("source").get<std::string>());
    t.category = detail::get_opt<std::string>(j, "category");
}

inline void to_json(json& j, const SafeQuestion& q) {
    j = json{{"q_safe", q.q_safe}};
    detail::put_opt(j, "rationale", q.rationale);
}
inline void from_json(const json& j, SafeQuestion& q) {
    q.q_safe = j.at("q_safe").get<std::string>();
    q.rationale = detail::get_opt<std::string>(j, "rationale");
}

inline void to_json(json& j, const TopicMapping& m) {
    j = json{{"t_harm", m.t_harm}, {"t_safe", m.t_safe}};
}
inline void from_json(const json& j, TopicMapping& m) {
    m.t_harm = j.at("t_harm").get<std::string>();
    m.t_safe = j.at("t_safe").get<std::string>();
}

inline void to_json(json& j, const ChatMessage& m) {
    j = json{{"role", enum_to_string(m.role)}, {"content", m.content}};
}
inline void from_json(const json& j, ChatMessage& m) {
    m.role = enum_from_string<Role>(j.at("role").get<std::string>());
    m.content = j.at("content").get<std::string>();
}

inline void to_json(json& j, const ChatExchange& e) {
    j = json{{"backend_alias", e.backend_alias},
             {"request_messages", e.request_messages},
             {"response_text", e.response_text}};
    detail::put_opt(j, "reasoning_text", e.reasoning_text);
    j["reasoning_length"] = e.reasoning_length;
    j["latency"] = e.latency.count();
    j["transport_retries"] = e.transport_retries;
    j["diagnostics"] = e.diagnostics;
}
inline void from_json(const json& j, ChatExchange& e) {
    e.backend_alias = j.at("backend_alias").get<std::string>();
    e.request_messages = j.at("request_messages").get<std::vector<ChatMessage>>();
    e.response_text = j.at("response_text").get<std::string>();
    e.reasoning_text = detail::get_opt<std::string>(j, "reasoning_text");
    e.reasoning_length = j.at("reasoning_length").get<std::int64_t>();
    e.latency = std::chrono::milliseconds(j.at("latency").get<std::int64_t>());
    e.transport_retries = j.value("transport_retries", 0);
    e.diagnostics = j.value("diagnostics", std::vector<std::string>{});
}

inline void to_json(json& j, const GateVerdict& g) {
    j = json{{"judge_alias", g.judge_alias}, {"passed", g.passed}, {"reason", g.reason}};
}
inline void from_json(const json& j, GateVerdict& g) {
    g.judge_alias = j.at("judge_alias").get<std::string>();
    g.passed = j.at("passed").get<bool>();
    g.reason = j.at("reason").get<std::string>();
}

inline void to_json(json& j, const StageAttempt& a) {
    j = json{{"stage", enum_to_string(a.stage)},
             {"attempt_index", a.attempt_index},
             {"exchange", a.exchange},
             {"gate", a.gate},
             {"outcome", enum_to_string(a.outcome)}};
}
inline void from_json(const json& j, StageAttempt& a) {
    a.stage = enum_from_string<Stage>(j.at("stage").get<std::string>());
    a.attempt_index = j.at("attempt_index").get<int>();
    a.exchange = j.at("exchange").get<ChatExchange>();
    a.gate = j.at("gate").get<GateVerdict>();
    a.outcome = enum_from_string<AttemptOutcome>(j.at("outcome").get<std::string>());
}

inline void to_json(json& j, const SuccessVerdict& s) {
    j = json{{"state", enum_to_string(s.state)},
             {"method", enum_to_string(s.method)},
             {"detail", s.detail}};
}
inline void from_json(const json& j, SuccessVerdict& s) {
    s.state = enum_from_string<SuccessState>(j.at("state").get<std::string>());
    s.method = enum_from_string<SuccessMethod>(j.at("method").get<std::string>());
    s.detail = j.at("detail").get<std::string>();
}

inline void to_json(json& j, const AttackRecord& r) {
    j = json{{"task_id", r.task_id}, {"attack_iteration", r.attack_iteration}};
    j["stages"] = r.stages;
    detail::put_opt(j, "q_safe", r.q_safe);
    detail::put_opt(j, "mapping", r.mapping);
    detail::put_opt(j, "r_safe", r.r_safe);
    detail::put_opt(j, "r_harm", r.r_harm);
    j["success"] = r.success;
    j["wall_time"] = r.wall_time.count();
    j["mode"] = enum_to_string(r.mode);
}
inline void from_json(const json& j, AttackRecord& r) {
    r.task_id = j.at("task_id").get<std::string>();
    r.attack_iteration = j.at("attack_iteration").get<int>();
    r.stages = j.at("stages").get<std::vector<StageAttempt>>();
    r.q_safe = detail::get_opt<SafeQuestion>(j, "q_safe");
    r.mapping = detail::get_opt<TopicMapping>(j, "mapping");
    r.r_safe = detail::get_opt<std::string>(j, "r_safe");
    r.r_harm = detail::get_opt<std::string>(j, "r_harm");
    r.success = j.at("success").get<SuccessVerdict>();
    r.wall_time = std::chrono::milliseconds(j.at("wall_time").get<std::int64_t>());
    r.mode = enum_from_string<AttackMode>(j.value("mode", "pipeline"));
}

inline void to_json(json& j, const LabeledSample& s) {
    j = json{{"id", s.id},
             {"response_text", s.response_text},
             {"label", enum_to_string(s.label)}};
    detail::put_opt(j, "source_method", s.source_method);
    detail::put_opt(j, "source_model", s.source_model);
}
inline void from_json(const json& j, LabeledSample& s) {
    s.id = j.at("id").get<std::string>();
    s.response_text = j.at("response_text").get<std::string>();
    s.label = enum_from_string<SampleLabel>(j.at("label").get<std::string>());
    s.source_method = detail::get_opt<std::string>(j, "source_method");
    s.source_model = detail::get_opt<std::string>(j, "source_model");
}

inline void to_json(json& j, const DetectorOutcome& o) {
    j = json{{"sample_id", o.sample_id}, {"verdict", enum_to_string(o.verdict)}};
}
inline void from_json(const json& j, DetectorOutcome& o) {
    o.sample_id = j.at("sample_id").get<std::string>();
    o.verdict = enum_from_string<DetectorVerdict>(j.at("verdict").get<std::string>());
}

// ---------------------------------------------------------------------------
// Record validation
// ---------------------------------------------------------------------------

inline constexpr int kDefaultPerStageRetries = 3;

namespace detail {

inline int stage_rank(Stage s) { return static_cast<int>(s); }

}  // namespace detail

// Checks every structural invariant of an AttackRecord. Violations are data,
// not failures: an empty list means the record is well formed. `budget` is
// the per-stage retry budget the record was (supposedly) produced under.
inline std::vector<std::string> validate_record(const AttackRecord& record,
                                                int budget = kDefaultPerStageRetries) {
    std::vector<std::string> violations;
    auto flag = [&](const std::string& v) { violations.push_back(v); };

    if (record.task_id.empty()) flag("empty task_id");
    if (record.attack_iteration < 1) flag("attack_iteration < 1");

    for (const auto& attempt : record.stages) {
        if (attempt.attempt_index < 1) flag("attempt_index < 1");
        if (attempt.attempt_index > 1 + budget) flag("attempt_index exceeds budget");
        if (!attempt.gate.passed && attempt.gate.reason.empty())
            flag("gate failure without reason");
        if (attempt.outcome == AttemptOutcome::Accepted && !attempt.gate.passed)
            flag("accepted attempt with failed gate");
        if (attempt.outcome != AttemptOutcome::Accepted && attempt.gate.passed)
            flag("non-accepted attempt with passing gate");

        const auto& ex = attempt.exchange;
        std::int64_t expected_len =
            ex.reasoning_text ? static_cast<std::int64_t>(ex.reasoning_text->size()) : 0;
        if (ex.reasoning_length != expected_len) flag("reasoning_length mismatch");
        if (ex.request_messages.empty()) {
            flag("empty request messages");
        } else if (ex.request_messages.front().role == Role::Assistant) {
            flag("first request role is assistant");
        }
    }

    // Pipeline ordering: attempts retry in place, advance on acceptance, and
    // restart from Rewrite after an exhausted stage.
    if (record.mode == AttackMode::Pipeline && !record.stages.empty()) {
        bool ordering_ok = true;
        Stage expected_stage = Stage::Rewrite;
        int expected_attempt = 1;
        bool done = false;
        int iterations = 0;
        bool open_group = false;
        for (const auto& attempt : record.stages) {
            if (done) {
                ordering_ok = false;
                break;
            }
            if (!open_group) {
                open_group = true;
                ++iterations;
            }
            if (attempt.stage != expected_stage || attempt.attempt_index != expected_attempt) {
                ordering_ok = false;
                break;
            }
            switch (attempt.outcome) {
                case AttemptOutcome::Accepted:
                    if (attempt.stage == Stage::Invert) {
                        done = true;
                    } else {
                        expected_stage =
                            static_cast<Stage>(detail::stage_rank(attempt.stage) + 1);
                        expected_attempt = 1;
                    }
                    break;
                case AttemptOutcome::Retried:
                    ++expected_attempt;
                    break;
                case AttemptOutcome::Exhausted:
                    expected_stage = Stage::Rewrite;
                    expected_attempt = 1;
                    open_group = false;
                    break;
            }
        }
        if (!ordering_ok) {
            flag("stage ordering violated");
        } else {
            if (!record.stages.empty() &&
                record.stages.back().outcome == AttemptOutcome::Retried)
                flag("dangling retried attempt");
            if (iterations != record.attack_iteration)
                flag("attack_iteration does not match attempt groups");
        }
    }

    if (record.mode == AttackMode::Pipeline && record.r_harm.has_value() &&
        (!record.r_safe.has_value() || !record.mapping.has_value()))
        flag("r_harm without r_safe or mapping");
    if (record.success.state == SuccessState::Succeeded && !record.r_harm.has_value())
        flag("success without r_harm");
    if (record.success.state == SuccessState::Skipped && record.r_harm.has_value())
        flag("skipped verdict with r_harm present");
    if (record.q_safe.has_value() &&
        normalize_whitespace(record.q_safe->q_safe).empty())
        flag("empty q_safe");
    if (record.mapping.has_value()) {
        if (record.mapping->t_harm.empty() || record.mapping->t_safe.empty() ||
            record.mapping->t_harm == record.mapping->t_safe)
            flag("degenerate mapping");
    }

    return violations;
}

// Serialization helpers used by stores and tests.

inline std::string to_canonical_json(const AttackRecord& record) {
    return json(record).dump();
}

inline AttackRecord record_from_json(const std::string& line) {
    return json::parse(line).get<AttackRecord>();
}

}  // namespace isoattack
