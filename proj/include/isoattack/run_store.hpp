#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "isoattack/domain.hpp"
#include "isoattack/errors.hpp"
#include "isoattack/util.hpp"

namespace isoattack {

inline std::vector<AttackRecord> read_transcript_file(
    const std::filesystem::path& transcript) {
    std::vector<AttackRecord> records;
    std::ifstream in(transcript);
    if (!in) throw IoError("no transcript at " + transcript.string());
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        records.push_back(record_from_json(line));
    }
    return records;
}

// Run directory layout:
//   run.json          resolved config snapshot
//   transcript.jsonl  one AttackRecord per line, in task order
//   manifest.json     final index, sorted by task id
//   exchanges/        one file per backend call
class RunStore {
public:
    explicit RunStore(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_ / "exchanges", ec);
        if (ec) throw IoError("cannot create run directory: " + dir_.string());
        auto probe = dir_ / ".write_probe";
        {
            std::ofstream out(probe);
            if (!out) throw IoError("run directory is not writable: " + dir_.string());
        }
        std::filesystem::remove(probe, ec);
    }

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path transcript_path() const { return dir_ / "transcript.jsonl"; }
    std::filesystem::path run_config_path() const { return dir_ / "run.json"; }
    std::filesystem::path manifest_path() const { return dir_ / "manifest.json"; }

    void write_run_config(const json& snapshot) {
        std::ofstream out(run_config_path(), std::ios::binary);
        if (!out) throw IoError("cannot write run.json in " + dir_.string());
        out << snapshot.dump(2) << "\n";
    }

    // Task ids already present in the transcript; used for --resume.
    std::set<std::string> completed_task_ids() const {
        std::set<std::string> ids;
        std::ifstream in(transcript_path());
        if (!in) return ids;
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            ids.insert(record_from_json(line).task_id);
        }
        return ids;
    }

    std::vector<AttackRecord> read_transcript() const {
        return read_transcript_file(transcript_path());
    }

    void append_record(const AttackRecord& record) {
        std::lock_guard<std::mutex> lock(mutex_);
        std::ofstream out(transcript_path(), std::ios::binary | std::ios::app);
        if (!out) throw IoError("cannot append to transcript in " + dir_.string());
        out << to_canonical_json(record) << "\n";
    }

    void write_exchange(const std::string& name, const ChatExchange& exchange) {
        auto path = dir_ / "exchanges" / (sanitize_filename(name) + ".json");
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write exchange file: " + path.string());
        out << json(exchange).dump(2) << "\n";
    }

    std::size_t exchange_file_count() const {
        std::size_t count = 0;
        for (const auto& entry : std::filesystem::directory_iterator(dir_ / "exchanges")) {
            if (entry.is_regular_file()) ++count;
        }
        return count;
    }

    // Rewrites manifest.json from the full transcript, externally sorted by
    // task id.
    void finalize_manifest() {
        auto records = read_transcript();
        std::sort(records.begin(), records.end(),
                  [](const AttackRecord& a, const AttackRecord& b) {
                      return a.task_id < b.task_id;
                  });
        json manifest = json::array();
        for (const auto& record : records) {
            manifest.push_back({{"task_id", record.task_id},
                                {"success", enum_to_string(record.success.state)},
                                {"attack_iteration", record.attack_iteration},
                                {"stage_attempts", record.stages.size()}});
        }
        std::ofstream out(manifest_path(), std::ios::binary);
        if (!out) throw IoError("cannot write manifest in " + dir_.string());
        out << manifest.dump(2) << "\n";
    }

private:
    std::filesystem::path dir_;
    std::mutex mutex_;
};

// Zeroes the volatile timing fields so transcripts from identical runs can
// be compared byte for byte.
inline json strip_volatile_fields(json record) {
    record["wall_time"] = 0;
    if (record.contains("stages")) {
        for (auto& stage : record["stages"]) {
            stage["exchange"]["latency"] = 0;
        }
    }
    return record;
}

inline std::string normalized_transcript(const std::filesystem::path& transcript) {
    std::ifstream in(transcript);
    if (!in) throw IoError("no transcript at " + transcript.string());
    std::string line;
    std::string out;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        out += strip_volatile_fields(json::parse(line)).dump();
        out += "\n";
    }
    return out;
}

}  // namespace isoattack
