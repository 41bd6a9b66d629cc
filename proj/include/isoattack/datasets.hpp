#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "isoattack/domain.hpp"
#include "isoattack/errors.hpp"
#include "isoattack/util.hpp"

namespace isoattack {

enum class FileFormat { Csv, Json, Jsonl };

namespace detail {
template <> struct EnumNames<FileFormat> {
    static constexpr std::pair<FileFormat, const char*> values[] = {
        {FileFormat::Csv, "csv"},
        {FileFormat::Json, "json"},
        {FileFormat::Jsonl, "jsonl"},
    };
};
}  // namespace detail

struct DatasetDescriptor {
    DatasetSource source = DatasetSource::Custom;
    std::filesystem::path path;
    FileFormat format = FileFormat::Jsonl;
};

class ParseError : public ConfigError {
public:
    ParseError(const std::filesystem::path& path, std::size_t line, const std::string& what)
        : ConfigError(path.string() + ":" + std::to_string(line) + ": " + what) {}
};

class EmptyDataset : public ConfigError {
public:
    explicit EmptyDataset(const std::filesystem::path& path)
        : ConfigError("dataset is empty: " + path.string()) {}
};

class CountMismatch : public ConfigError {
public:
    CountMismatch(std::size_t expected_safe, std::size_t expected_harmful,
                  std::size_t actual_safe, std::size_t actual_harmful)
        : ConfigError("label counts do not match expect_counts: expected {safe: " +
                      std::to_string(expected_safe) + ", harmful: " +
                      std::to_string(expected_harmful) + "}, got {safe: " +
                      std::to_string(actual_safe) + ", harmful: " +
                      std::to_string(actual_harmful) + "}") {}
};

inline FileFormat format_from_extension(const std::filesystem::path& path) {
    auto ext = to_lower(path.extension().string());
    if (ext == ".csv") return FileFormat::Csv;
    if (ext == ".json") return FileFormat::Json;
    if (ext == ".jsonl") return FileFormat::Jsonl;
    throw ConfigError("cannot infer dataset format from extension: " + path.string());
}

inline bool format_admissible(DatasetSource source, FileFormat format) {
    switch (source) {
        case DatasetSource::AdvBench:
        case DatasetSource::HarmBench:
            return format == FileFormat::Csv;
        case DatasetSource::JailbreakBench:
            return format == FileFormat::Csv || format == FileFormat::Json;
        case DatasetSource::Custom:
            return true;
    }
    return false;
}

namespace detail {

// RFC-4180-ish CSV: quoted fields, doubled quotes, newlines inside quotes.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool row_has_data = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
            row_has_data = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            row_has_data = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (row_has_data || !field.empty()) {
                row.push_back(std::move(field));
                field.clear();
                rows.push_back(std::move(row));
                row.clear();
                row_has_data = false;
            }
        } else {
            field.push_back(c);
            row_has_data = true;
        }
    }
    if (row_has_data || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline std::string make_task_id(DatasetSource source, std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04zu", index);
    return enum_to_string(source) + "-" + buf;
}

// Column lookup tolerant of header capitalization.
inline int find_column(const std::vector<std::string>& header,
                       const std::vector<std::string>& candidates) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        std::string name = to_lower(trim(header[i]));
        for (const auto& cand : candidates) {
            if (name == cand) return static_cast<int>(i);
        }
    }
    return -1;
}

}  // namespace detail

// Normalizes one benchmark behavior file into AttackTasks. Ids are
// `<source>-<zero-padded row index>`; duplicate questions are dropped with
// a warning through `warn`.
inline std::vector<AttackTask> ingest(
    const DatasetDescriptor& desc,
    const std::function<void(const std::string&)>& warn = {}) {
    std::string text = detail::read_file(desc.path);
    if (!format_admissible(desc.source, desc.format))
        throw ConfigError("format " + enum_to_string(desc.format) +
                          " is not admissible for source " + enum_to_string(desc.source));

    std::vector<AttackTask> tasks;

    auto add_csv_tasks = [&](const std::vector<std::string>& question_columns,
                             const std::vector<std::string>& category_columns) {
        auto rows = detail::parse_csv(text);
        if (rows.empty()) throw EmptyDataset(desc.path);
        int q_col = detail::find_column(rows[0], question_columns);
        if (q_col < 0)
            throw ParseError(desc.path, 1, "header has no question column");
        int c_col = detail::find_column(rows[0], category_columns);
        for (std::size_t r = 1; r < rows.size(); ++r) {
            const auto& row = rows[r];
            if (static_cast<int>(row.size()) <= q_col)
                throw ParseError(desc.path, r + 1, "row has too few columns");
            AttackTask task;
            task.source = desc.source;
            task.id = detail::make_task_id(desc.source, r);
            task.q_harm = trim(row[q_col]);
            if (task.q_harm.empty())
                throw ParseError(desc.path, r + 1, "empty question field");
            if (c_col >= 0 && static_cast<int>(row.size()) > c_col && !row[c_col].empty())
                task.category = row[c_col];
            tasks.push_back(std::move(task));
        }
    };

    switch (desc.format) {
        case FileFormat::Csv:
            switch (desc.source) {
                case DatasetSource::AdvBench:
                    add_csv_tasks({"goal"}, {});
                    break;
                case DatasetSource::HarmBench:
                    add_csv_tasks({"behavior"}, {"semanticcategory", "category"});
                    break;
                case DatasetSource::JailbreakBench:
                case DatasetSource::Custom:
                    add_csv_tasks({"goal", "behavior", "q_harm", "question"}, {"category"});
                    break;
            }
            break;
        case FileFormat::Json:
        case FileFormat::Jsonl: {
            std::vector<json> rows;
            if (desc.format == FileFormat::Json) {
                json doc;
                try {
                    doc = json::parse(text);
                } catch (const json::exception& e) {
                    throw ParseError(desc.path, 1, e.what());
                }
                if (!doc.is_array()) throw ParseError(desc.path, 1, "expected a JSON array");
                rows.assign(doc.begin(), doc.end());
            } else {
                std::istringstream lines(text);
                std::string line;
                std::size_t line_no = 0;
                while (std::getline(lines, line)) {
                    ++line_no;
                    if (trim(line).empty()) continue;
                    try {
                        rows.push_back(json::parse(line));
                    } catch (const json::exception& e) {
                        throw ParseError(desc.path, line_no, e.what());
                    }
                }
            }
            std::size_t index = 0;
            for (const auto& row : rows) {
                ++index;
                if (!row.is_object() || !row.contains("q_harm") ||
                    !row["q_harm"].is_string())
                    throw ParseError(desc.path, index, "row has no q_harm string");
                AttackTask task;
                task.source = desc.source;
                task.q_harm = row["q_harm"].get<std::string>();
                if (trim(task.q_harm).empty())
                    throw ParseError(desc.path, index, "empty q_harm");
                if (row.contains("id") && row["id"].is_string() &&
                    !row["id"].get<std::string>().empty()) {
                    task.id = row["id"].get<std::string>();
                } else {
                    task.id = detail::make_task_id(desc.source, index);
                }
                if (row.contains("category") && row["category"].is_string())
                    task.category = row["category"].get<std::string>();
                tasks.push_back(std::move(task));
            }
            break;
        }
    }

    if (tasks.empty()) throw EmptyDataset(desc.path);

    // Order-preserving dedup on the normalized question text.
    std::vector<AttackTask> unique;
    std::set<std::string> seen;
    for (auto& task : tasks) {
        std::string key = normalize_whitespace(task.q_harm);
        if (seen.count(key)) {
            if (warn) warn("dropping duplicate question at id " + task.id);
            continue;
        }
        seen.insert(key);
        unique.push_back(std::move(task));
    }
    return unique;
}

inline void write_custom_tasks(const std::filesystem::path& path,
                               const std::vector<AttackTask>& tasks) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path.string());
    for (const auto& task : tasks) {
        json j{{"id", task.id}, {"q_harm", task.q_harm}};
        if (task.category) j["category"] = *task.category;
        out << j.dump() << "\n";
    }
}

struct HarmEvalSet {
    std::vector<LabeledSample> samples;
    std::size_t safe_count = 0;
    std::size_t harmful_count = 0;
};

// Loads the labeled harmful-content evaluation set (jsonl of LabeledSample).
// If a sidecar `<path>.expect.json` with {"safe": N, "harmful": M} exists,
// the loaded class counts must match it exactly.
inline HarmEvalSet load_harm_eval(const std::filesystem::path& path) {
    std::string text = detail::read_file(path);
    HarmEvalSet set;
    std::istringstream lines(text);
    std::string line;
    std::size_t line_no = 0;
    std::set<std::string> ids;
    while (std::getline(lines, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        LabeledSample sample;
        try {
            sample = json::parse(line).get<LabeledSample>();
        } catch (const json::exception& e) {
            throw ParseError(path, line_no, e.what());
        } catch (const ConfigError& e) {
            throw ParseError(path, line_no, e.what());
        }
        if (sample.id.empty()) throw ParseError(path, line_no, "empty sample id");
        if (!ids.insert(sample.id).second)
            throw ParseError(path, line_no, "duplicate sample id " + sample.id);
        if (sample.label == SampleLabel::Safe) {
            ++set.safe_count;
        } else {
            ++set.harmful_count;
        }
        set.samples.push_back(std::move(sample));
    }
    if (set.samples.empty()) throw EmptyDataset(path);

    auto sidecar = path;
    sidecar += ".expect.json";
    if (std::filesystem::exists(sidecar)) {
        json expect = json::parse(detail::read_file(sidecar));
        auto expected_safe = expect.at("safe").get<std::size_t>();
        auto expected_harmful = expect.at("harmful").get<std::size_t>();
        if (expected_safe != set.safe_count || expected_harmful != set.harmful_count)
            throw CountMismatch(expected_safe, expected_harmful, set.safe_count,
                                set.harmful_count);
    }
    return set;
}

}  // namespace isoattack
