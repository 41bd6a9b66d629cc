#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>

#include "isoattack/backend.hpp"
#include "isoattack/config.hpp"
#include "isoattack/mock_backend.hpp"
#include "isoattack/pipeline.hpp"
#include "isoattack/prompts.hpp"

namespace testsupport {

inline std::filesystem::path source_dir() { return ISOATTACK_SOURCE_DIR; }
inline std::filesystem::path fixtures_dir() { return source_dir() / "fixtures"; }
inline std::filesystem::path templates_dir() { return source_dir() / "templates"; }
inline std::filesystem::path config_dir() { return source_dir() / "config"; }

// Fresh scratch directory per call, removed when the guard dies.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("isoattack_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline isoattack::BackendConfig mock_backend(const std::string& alias,
                                             isoattack::MockPolicy policy) {
    isoattack::BackendConfig config;
    config.alias = alias;
    config.kind = isoattack::BackendKind::Mock;
    config.mock_policy = std::move(policy);
    return config;
}

inline isoattack::MockPolicy catch_all(const std::string& reply) {
    isoattack::MockPolicy policy;
    policy.compliance_text = reply;
    return policy;
}

// Standard four-backend mock roster for pipeline tests: a scripted helper,
// a scripted target, a gate judge and a success judge.
struct MockRoster {
    isoattack::MockPolicy helper;
    isoattack::MockPolicy target;
    isoattack::MockPolicy gate = catch_all("PASS output meets the stage requirement");
    isoattack::MockPolicy success = catch_all("SUCCESS the response provides actionable detail");
};

inline isoattack::PipelineDeps make_deps(const MockRoster& roster) {
    isoattack::PipelineDeps deps;
    deps.backends.put(std::make_shared<isoattack::MockBackend>(mock_backend("helper", roster.helper)));
    deps.backends.put(std::make_shared<isoattack::MockBackend>(mock_backend("target", roster.target)));
    deps.backends.put(std::make_shared<isoattack::MockBackend>(mock_backend("gate", roster.gate)));
    deps.backends.put(std::make_shared<isoattack::MockBackend>(mock_backend("success", roster.success)));
    deps.templates = isoattack::load_template_pack(templates_dir());
    deps.refusal_lexicon = isoattack::load_refusal_lexicon(config_dir() / "refusal_lexicon.txt");
    return deps;
}

inline isoattack::PipelineConfig default_pipeline_config() {
    isoattack::PipelineConfig config;
    config.helper_backend = "helper";
    config.target_backend = "target";
    config.gate_judge_backend = "gate";
    config.success_judge_backend = "success";
    return config;
}

}  // namespace testsupport
