#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "isoattack/metrics.hpp"
#include "isoattack/util.hpp"

namespace isoattack {

enum class DocFormat { Markdown, Csv, Json };

namespace detail {
template <> struct EnumNames<DocFormat> {
    static constexpr std::pair<DocFormat, const char*> values[] = {
        {DocFormat::Markdown, "md"},
        {DocFormat::Csv, "csv"},
        {DocFormat::Json, "json"},
    };
};
}  // namespace detail

struct AsrCellKey {
    std::string model;
    std::string dataset;
    std::string mode;  // "answer" or "think"

    auto operator<=>(const AsrCellKey&) const = default;
};

namespace detail {

inline std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

// Benchmark datasets keep their customary order; anything else follows
// alphabetically.
inline std::vector<std::string> ordered_datasets(const std::set<std::string>& names) {
    static const std::vector<std::string> canonical = {"JailbreakBench", "AdvBench",
                                                       "HarmBench"};
    std::vector<std::string> out;
    for (const auto& name : canonical) {
        if (names.count(name)) out.push_back(name);
    }
    for (const auto& name : names) {
        if (std::find(canonical.begin(), canonical.end(), name) == canonical.end())
            out.push_back(name);
    }
    return out;
}

inline std::vector<std::string> ordered_modes(const std::set<std::string>& names) {
    std::vector<std::string> out;
    if (names.count("answer")) out.push_back("answer");
    if (names.count("think")) out.push_back("think");
    for (const auto& name : names) {
        if (name != "answer" && name != "think") out.push_back(name);
    }
    return out;
}

}  // namespace detail

// Rows are models, columns are dataset x mode, missing cells render as "-".
inline std::string emit_asr_table(const std::map<AsrCellKey, MetricsReport>& cells,
                                  DocFormat format) {
    if (cells.empty()) throw EmptyInput("emit_asr_table with no cells");

    std::set<std::string> models, datasets, modes;
    for (const auto& [key, _] : cells) {
        models.insert(key.model);
        datasets.insert(key.dataset);
        modes.insert(key.mode);
    }
    auto dataset_order = detail::ordered_datasets(datasets);
    auto mode_order = detail::ordered_modes(modes);

    auto cell_value = [&](const std::string& model, const std::string& dataset,
                          const std::string& mode) -> const MetricsReport* {
        auto it = cells.find(AsrCellKey{model, dataset, mode});
        return it == cells.end() ? nullptr : &it->second;
    };

    if (format == DocFormat::Json) {
        json rows = json::array();
        for (const auto& model : models) {
            for (const auto& dataset : dataset_order) {
                for (const auto& mode : mode_order) {
                    const MetricsReport* report = cell_value(model, dataset, mode);
                    if (report == nullptr) continue;
                    rows.push_back(
                        {{"model", model},
                         {"dataset", dataset},
                         {"mode", mode},
                         {"n_total", report->n_total},
                         {"n_success", report->n_success},
                         {"asr_percent",
                          round_percent2(report->n_success, report->n_total)}});
                }
            }
        }
        return rows.dump(2) + "\n";
    }

    std::vector<std::string> headers = {"Model"};
    for (const auto& dataset : dataset_order) {
        for (const auto& mode : mode_order) {
            std::string label = dataset + " (" + mode + ")";
            headers.push_back(label);
        }
    }

    std::ostringstream out;
    if (format == DocFormat::Markdown) {
        out << "|";
        for (const auto& h : headers) out << " " << h << " |";
        out << "\n|";
        for (std::size_t i = 0; i < headers.size(); ++i) out << " --- |";
        out << "\n";
        for (const auto& model : models) {
            out << "| " << model << " |";
            for (const auto& dataset : dataset_order) {
                for (const auto& mode : mode_order) {
                    const MetricsReport* report = cell_value(model, dataset, mode);
                    out << " "
                        << (report ? format_percent2(report->n_success, report->n_total)
                                   : "-")
                        << " |";
                }
            }
            out << "\n";
        }
    } else {
        for (std::size_t i = 0; i < headers.size(); ++i) {
            if (i > 0) out << ",";
            out << detail::csv_quote(headers[i]);
        }
        out << "\n";
        for (const auto& model : models) {
            out << detail::csv_quote(model);
            for (const auto& dataset : dataset_order) {
                for (const auto& mode : mode_order) {
                    const MetricsReport* report = cell_value(model, dataset, mode);
                    out << ",";
                    if (report) {
                        out << format_percent2(report->n_success, report->n_total);
                    } else {
                        out << detail::csv_quote("-");
                    }
                }
            }
            out << "\n";
        }
    }
    return out.str();
}

// Accuracy / FPR / FNR table, two decimals, one row per detector.
inline std::string emit_detector_table(
    const std::vector<std::pair<std::string, DetectorReport>>& reports, DocFormat format) {
    if (reports.empty()) throw EmptyInput("emit_detector_table with no reports");

    auto rounded = [](const DetectorReport& r) {
        struct Row {
            std::string accuracy, fpr, fnr;
        } row;
        row.accuracy = format_percent2(r.correct, r.n);
        if (r.convention == RateConvention::PaperTotalDenominator) {
            row.fpr = format_percent2(r.fp, r.n);
            row.fnr = format_percent2(r.fn, r.n);
        } else {
            row.fpr = r.n_safe_labels > 0 ? format_percent2(r.fp, r.n_safe_labels) : "0.00";
            row.fnr = r.n_harmful_labels > 0 ? format_percent2(r.fn, r.n_harmful_labels)
                                             : "0.00";
        }
        return row;
    };

    if (format == DocFormat::Json) {
        json rows = json::array();
        for (const auto& [name, report] : reports) {
            auto row = rounded(report);
            rows.push_back({{"method", name},
                            {"convention", enum_to_string(report.convention)},
                            {"n", report.n},
                            {"correct", report.correct},
                            {"fp", report.fp},
                            {"fn", report.fn},
                            {"abstain_or_other", report.abstain_or_other},
                            {"accuracy_percent", std::stod(row.accuracy)},
                            {"fpr_percent", std::stod(row.fpr)},
                            {"fnr_percent", std::stod(row.fnr)}});
        }
        return rows.dump(2) + "\n";
    }

    std::ostringstream out;
    if (format == DocFormat::Markdown) {
        out << "| Assessment Method | Accuracy (%) | FPR (%) | FNR (%) |\n";
        out << "| --- | --- | --- | --- |\n";
        for (const auto& [name, report] : reports) {
            auto row = rounded(report);
            out << "| " << name << " | " << row.accuracy << " | " << row.fpr << " | "
                << row.fnr << " |\n";
        }
    } else {
        out << detail::csv_quote("Assessment Method") << ","
            << detail::csv_quote("Accuracy (%)") << "," << detail::csv_quote("FPR (%)")
            << "," << detail::csv_quote("FNR (%)") << "\n";
        for (const auto& [name, report] : reports) {
            auto row = rounded(report);
            out << detail::csv_quote(name) << "," << row.accuracy << "," << row.fpr << ","
                << row.fnr << "\n";
        }
    }
    return out.str();
}

}  // namespace isoattack
