#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "isoattack/domain.hpp"
#include "support/helpers.hpp"

using namespace isoattack;

namespace {

ChatExchange make_exchange(const std::string& alias, const std::string& response,
                           std::optional<std::string> reasoning = std::nullopt) {
    ChatExchange e;
    e.backend_alias = alias;
    e.request_messages = {{Role::System, "sys"}, {Role::User, "user"}};
    e.response_text = response;
    e.reasoning_text = reasoning;
    e.reasoning_length = reasoning ? static_cast<std::int64_t>(reasoning->size()) : 0;
    e.latency = std::chrono::milliseconds(7);
    return e;
}

StageAttempt make_attempt(Stage stage, int index, AttemptOutcome outcome, bool gate_pass,
                          const std::string& reason) {
    StageAttempt a;
    a.stage = stage;
    a.attempt_index = index;
    a.exchange = make_exchange("backend", "output of " + enum_to_string(stage));
    a.gate = GateVerdict{"judge", gate_pass, reason};
    a.outcome = outcome;
    return a;
}

// A fully populated, well-formed four-stage record.
AttackRecord full_record() {
    AttackRecord r;
    r.task_id = "task-1";
    r.attack_iteration = 1;
    r.stages = {
        make_attempt(Stage::Rewrite, 1, AttemptOutcome::Accepted, true, "pass"),
        make_attempt(Stage::Extract, 1, AttemptOutcome::Accepted, true, "pass"),
        make_attempt(Stage::SafeGen, 1, AttemptOutcome::Accepted, true, "pass"),
        make_attempt(Stage::Invert, 1, AttemptOutcome::Accepted, true, "pass"),
    };
    r.q_safe = SafeQuestion{"how to run the training simulation", std::nullopt};
    r.mapping = TopicMapping{"flagged thing", "training thing"};
    r.r_safe = "a detailed safe response";
    r.r_harm = "a rewritten response";
    r.success = SuccessVerdict{SuccessState::Succeeded, SuccessMethod::Judge, "SUCCESS ok"};
    r.wall_time = std::chrono::milliseconds(123);
    return r;
}

template <typename T>
void check_round_trip(const T& value) {
    json j = value;
    T back = j.get<T>();
    CHECK(back == value);
    CHECK(json(back).dump() == j.dump());
}

}  // namespace

TEST_CASE("validate_record accepts a fully populated record", "[domain]") {
    CHECK(validate_record(full_record()).empty());
}

TEST_CASE("validate_record flags success without r_harm", "[domain]") {
    AttackRecord r = full_record();
    r.r_harm.reset();
    auto violations = validate_record(r);
    REQUIRE_FALSE(violations.empty());
    CHECK(std::find(violations.begin(), violations.end(), "success without r_harm") !=
          violations.end());
}

TEST_CASE("validate_record flags r_harm without prerequisites", "[domain]") {
    AttackRecord r = full_record();
    r.mapping.reset();
    auto violations = validate_record(r);
    CHECK(std::find(violations.begin(), violations.end(), "r_harm without r_safe or mapping") !=
          violations.end());
}

TEST_CASE("validate_record flags skipped verdict with r_harm", "[domain]") {
    AttackRecord r = full_record();
    r.success.state = SuccessState::Skipped;
    auto violations = validate_record(r);
    CHECK(std::find(violations.begin(), violations.end(),
                    "skipped verdict with r_harm present") != violations.end());
}

TEST_CASE("validate_record flags attempts past the budget", "[domain]") {
    AttackRecord r;
    r.task_id = "task-2";
    r.attack_iteration = 1;
    for (int attempt = 1; attempt <= 5; ++attempt) {
        r.stages.push_back(make_attempt(
            Stage::Rewrite, attempt,
            attempt < 5 ? AttemptOutcome::Retried : AttemptOutcome::Exhausted, false,
            "fail"));
    }
    r.success = SuccessVerdict{SuccessState::Failed, SuccessMethod::Judge, "exhausted"};
    auto violations = validate_record(r, 3);
    CHECK(violations == std::vector<std::string>{"attempt_index exceeds budget"});
    CHECK(validate_record(r, 4).empty());
}

TEST_CASE("validate_record flags gate failures without a reason", "[domain]") {
    AttackRecord r;
    r.task_id = "t";
    r.stages = {make_attempt(Stage::Rewrite, 1, AttemptOutcome::Exhausted, false, "")};
    r.success = SuccessVerdict{SuccessState::Failed, SuccessMethod::Judge, "x"};
    auto violations = validate_record(r);
    CHECK(std::find(violations.begin(), violations.end(), "gate failure without reason") !=
          violations.end());
}

TEST_CASE("validate_record flags reasoning_length mismatches", "[domain]") {
    AttackRecord r = full_record();
    r.stages[0].exchange.reasoning_text = "because";
    r.stages[0].exchange.reasoning_length = 3;  // wrong on purpose
    auto violations = validate_record(r);
    CHECK(std::find(violations.begin(), violations.end(), "reasoning_length mismatch") !=
          violations.end());
}

TEST_CASE("validate_record flags out-of-order stages", "[domain]") {
    AttackRecord r = full_record();
    std::swap(r.stages[0], r.stages[2]);
    auto violations = validate_record(r);
    CHECK(std::find(violations.begin(), violations.end(), "stage ordering violated") !=
          violations.end());
}

TEST_CASE("validate_record counts iteration groups", "[domain]") {
    AttackRecord r;
    r.task_id = "t";
    r.attack_iteration = 2;
    r.stages = {
        make_attempt(Stage::Rewrite, 1, AttemptOutcome::Retried, false, "fail"),
        make_attempt(Stage::Rewrite, 2, AttemptOutcome::Exhausted, false, "fail"),
        make_attempt(Stage::Rewrite, 1, AttemptOutcome::Accepted, true, "pass"),
        make_attempt(Stage::Extract, 1, AttemptOutcome::Exhausted, false, "fail"),
    };
    r.success = SuccessVerdict{SuccessState::Failed, SuccessMethod::Judge, "exhausted"};
    CHECK(validate_record(r, 1).empty());

    r.attack_iteration = 3;
    auto violations = validate_record(r, 1);
    CHECK(std::find(violations.begin(), violations.end(),
                    "attack_iteration does not match attempt groups") != violations.end());
}

TEST_CASE("domain types round-trip through canonical JSON", "[domain][serialization]") {
    check_round_trip(AttackTask{"id-1", "question text", DatasetSource::AdvBench, "cat"});
    check_round_trip(AttackTask{"id-2", "question", DatasetSource::Custom, std::nullopt});
    check_round_trip(SafeQuestion{"safe question", "principle preserved"});
    check_round_trip(TopicMapping{"harm topic", "safe topic"});
    check_round_trip(make_exchange("alias", "response", "thinking"));
    check_round_trip(make_exchange("alias", "response"));
    check_round_trip(GateVerdict{"judge", false, "too short"});
    check_round_trip(SuccessVerdict{SuccessState::Failed, SuccessMethod::Keyword, "matched"});
    check_round_trip(LabeledSample{"s1", "text", SampleLabel::Harmful, "m", "model"});
    check_round_trip(DetectorOutcome{"s1", DetectorVerdict::Abstain});
    check_round_trip(full_record());
}

TEST_CASE("randomized records round-trip", "[domain][serialization]") {
    std::mt19937 rng(20240817);
    auto pick = [&](int n) { return static_cast<int>(rng() % n); };
    for (int i = 0; i < 200; ++i) {
        AttackRecord r;
        r.task_id = "task-" + std::to_string(pick(1000));
        r.attack_iteration = 1 + pick(3);
        r.mode = pick(2) == 0 ? AttackMode::Pipeline : AttackMode::Direct;
        int n_stages = pick(5);
        for (int s = 0; s < n_stages; ++s) {
            StageAttempt a = make_attempt(static_cast<Stage>(pick(4)), 1 + pick(4),
                                          static_cast<AttemptOutcome>(pick(3)),
                                          pick(2) == 0, "r" + std::to_string(pick(10)));
            if (pick(2) == 0) {
                a.exchange.reasoning_text = std::string(pick(20), 'x');
                a.exchange.reasoning_length =
                    static_cast<std::int64_t>(a.exchange.reasoning_text->size());
            }
            a.exchange.transport_retries = pick(3);
            for (int d = 0; d < a.exchange.transport_retries; ++d)
                a.exchange.diagnostics.push_back("retry " + std::to_string(d));
            r.stages.push_back(std::move(a));
        }
        if (pick(2) == 0) r.q_safe = SafeQuestion{"q" + std::to_string(pick(10)), std::nullopt};
        if (pick(2) == 0) r.mapping = TopicMapping{"h", "s"};
        if (pick(2) == 0) r.r_safe = "safe";
        if (pick(2) == 0) r.r_harm = "harm";
        r.success = SuccessVerdict{static_cast<SuccessState>(pick(3)),
                                   static_cast<SuccessMethod>(pick(3)), "d"};
        r.wall_time = std::chrono::milliseconds(pick(100000));
        json j = r;
        CHECK(j.get<AttackRecord>() == r);
    }
}

TEST_CASE("enum strings reject unknown values", "[domain]") {
    CHECK_THROWS_AS(enum_from_string<SampleLabel>("Maybe"), ConfigError);
    CHECK(enum_to_string(SampleLabel::Harmful) == "Harmful");
}
