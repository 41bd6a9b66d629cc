#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "isoattack/campaign.hpp"
#include "isoattack/config.hpp"
#include "isoattack/datasets.hpp"
#include "isoattack/domain.hpp"
#include "isoattack/http_backend.hpp"
#include "isoattack/metrics.hpp"
#include "isoattack/pipeline.hpp"
#include "isoattack/prompts.hpp"
#include "isoattack/reporting.hpp"
#include "isoattack/run_store.hpp"

namespace isoattack {

namespace cli_detail {

inline DocFormat parse_format(const std::string& name) {
    if (name == "md") return DocFormat::Markdown;
    if (name == "csv") return DocFormat::Csv;
    if (name == "json") return DocFormat::Json;
    throw ConfigError("unknown format \"" + name + "\" (expected md, csv or json)");
}

inline RateConvention parse_convention(const std::string& name) {
    if (name == "paper") return RateConvention::PaperTotalDenominator;
    if (name == "perclass") return RateConvention::PerClass;
    throw ConfigError("unknown convention \"" + name + "\" (expected paper or perclass)");
}

inline void write_output(const std::string& text, const std::string& out_path,
                         std::ostream& out) {
    if (out_path.empty()) {
        out << text;
        return;
    }
    std::ofstream file(out_path, std::ios::binary);
    if (!file) throw IoError("cannot write output file: " + out_path);
    file << text;
}

inline json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path.string());
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

// Refuses to touch a non-mock backend unless the operator passed --live.
// Must run before any backend is constructed.
inline void enforce_live_interlock(const AppConfig& config,
                                   const std::vector<std::string>& aliases, bool live,
                                   std::ostream& err) {
    std::vector<std::string> live_aliases;
    for (const auto& alias : aliases) {
        const BackendConfig* backend = config.find_backend(alias);
        if (backend == nullptr)
            throw ConfigError("no backend configured with alias \"" + alias + "\"");
        if (backend->kind != BackendKind::Mock) live_aliases.push_back(alias);
    }
    if (live_aliases.empty()) return;
    if (!live) {
        throw ConfigError("live run not acknowledged: backend \"" + live_aliases.front() +
                          "\" is not a mock (pass --live to proceed)");
    }
    err << "*** LIVE RUN: requests will be sent to non-mock backends:";
    for (const auto& alias : live_aliases) err << " " << alias;
    err << " ***\n";
}

inline BackendRegistry build_registry(const AppConfig& config,
                                      const std::vector<std::string>& aliases) {
    BackendRegistry registry;
    for (const auto& alias : aliases) {
        if (registry.contains(alias)) continue;
        const BackendConfig* backend = config.find_backend(alias);
        if (backend == nullptr)
            throw ConfigError("no backend configured with alias \"" + alias + "\"");
        registry.put(make_backend(*backend));
    }
    return registry;
}

inline std::vector<std::string> dedup(std::vector<std::string> aliases) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (auto& alias : aliases) {
        if (seen.insert(alias).second) out.push_back(std::move(alias));
    }
    return out;
}

inline std::string emit_metrics_report(const MetricsReport& report, DocFormat format) {
    switch (format) {
        case DocFormat::Json: {
            json j{{"n_total", report.n_total},
                   {"n_success", report.n_success},
                   {"asr_percent", round_percent2(report.n_success, report.n_total)}};
            return j.dump(2) + "\n";
        }
        case DocFormat::Markdown: {
            std::string asr_value = format_percent2(report.n_success, report.n_total);
            return "| n_total | n_success | ASR (%) |\n| --- | --- | --- |\n| " +
                   std::to_string(report.n_total) + " | " + std::to_string(report.n_success) +
                   " | " + asr_value + " |\n";
        }
        case DocFormat::Csv: {
            return "\"n_total\",\"n_success\",\"ASR (%)\"\n" +
                   std::to_string(report.n_total) + "," + std::to_string(report.n_success) +
                   "," + format_percent2(report.n_success, report.n_total) + "\n";
        }
    }
    throw ConfigError("unreachable format");
}

inline std::string emit_thinking_report(const ThinkingReport& report, DocFormat format) {
    switch (format) {
        case DocFormat::Json: {
            json j = report;
            return j.dump(2) + "\n";
        }
        case DocFormat::Markdown: {
            std::ostringstream out;
            out << "| Metric | Value |\n| --- | --- |\n";
            out << "| mean_len_harmful | "
                << (report.mean_len_harmful ? format_fixed2(*report.mean_len_harmful) : "-")
                << " |\n";
            out << "| mean_len_safe | "
                << (report.mean_len_safe ? format_fixed2(*report.mean_len_safe) : "-")
                << " |\n";
            out << "| delta | " << (report.delta ? format_fixed2(*report.delta) : "-")
                << " |\n";
            out << "| harmful_points | " << report.harmful_count << " |\n";
            out << "| safe_points | " << report.safe_count << " |\n";
            return out.str();
        }
        case DocFormat::Csv: {
            std::ostringstream out;
            out << "\"metric\",\"value\"\n";
            out << "\"mean_len_harmful\","
                << (report.mean_len_harmful ? format_fixed2(*report.mean_len_harmful) : "")
                << "\n";
            out << "\"mean_len_safe\","
                << (report.mean_len_safe ? format_fixed2(*report.mean_len_safe) : "") << "\n";
            out << "\"delta\"," << (report.delta ? format_fixed2(*report.delta) : "") << "\n";
            out << "\"harmful_points\"," << report.harmful_count << "\n";
            out << "\"safe_points\"," << report.safe_count << "\n";
            return out.str();
        }
    }
    throw ConfigError("unreachable format");
}

// The response whose safety the success verdict describes: the inversion
// output for pipeline records, the lone target exchange for direct ones.
inline std::optional<ThinkingPoint> thinking_point_for(const AttackRecord& record) {
    const ChatExchange* final_exchange = nullptr;
    for (auto it = record.stages.rbegin(); it != record.stages.rend(); ++it) {
        if (it->stage == Stage::Invert ||
            (record.mode == AttackMode::Direct && it->stage == Stage::SafeGen)) {
            final_exchange = &it->exchange;
            break;
        }
    }
    if (final_exchange == nullptr) return std::nullopt;
    ThinkingPoint point;
    point.reasoning_length = final_exchange->reasoning_length;
    point.label = record.success.state == SuccessState::Succeeded ? SampleLabel::Harmful
                                                                  : SampleLabel::Safe;
    return point;
}

struct ResponseRow {
    std::string id;
    std::string response_text;
};

inline std::vector<ResponseRow> read_responses(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open responses file: " + path.string());
    std::vector<ResponseRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            json j = json::parse(line);
            rows.push_back(ResponseRow{j.at("id").get<std::string>(),
                                       j.at("response_text").get<std::string>()});
        } catch (const json::exception& e) {
            throw ParseError(path, line_no, e.what());
        }
    }
    if (rows.empty()) throw EmptyDataset(path);
    return rows;
}

}  // namespace cli_detail

struct AttackArgs {
    std::string dataset;
    std::string source = "Custom";
    std::string file_format;  // empty = infer from extension
    std::string config;
    std::string out_dir;
    std::string templates_override;
    int concurrency = 4;
    bool resume = false;
    bool live = false;
    bool direct_ask = false;
};

inline int cmd_attack(const AttackArgs& args, std::ostream& out, std::ostream& err) {
    AppConfig config = load_app_config(args.config);
    if (!args.templates_override.empty()) config.templates_dir = args.templates_override;
    const PipelineConfig& pcfg = config.pipeline;

    AttackMode mode = args.direct_ask ? AttackMode::Direct : AttackMode::Pipeline;
    std::vector<std::string> aliases;
    if (mode == AttackMode::Direct) {
        aliases = {pcfg.target_backend};
    } else {
        aliases = {pcfg.helper_backend, pcfg.target_backend, pcfg.gate_judge_backend};
    }
    if (pcfg.success_method == SuccessMethod::Judge)
        aliases.push_back(pcfg.success_judge_backend);
    aliases = cli_detail::dedup(std::move(aliases));

    cli_detail::enforce_live_interlock(config, aliases, args.live, err);

    PipelineDeps deps;
    deps.backends = cli_detail::build_registry(config, aliases);
    deps.templates = load_template_pack(config.templates_dir);
    deps.refusal_lexicon = load_refusal_lexicon(config.lexicon_path);

    DatasetDescriptor desc;
    desc.source = enum_from_string<DatasetSource>(args.source);
    desc.path = args.dataset;
    desc.format = args.file_format.empty()
                      ? format_from_extension(desc.path)
                      : enum_from_string<FileFormat>(args.file_format);
    auto tasks = ingest(desc, [&err](const std::string& w) { err << "warning: " << w << "\n"; });

    RunStore store(args.out_dir);
    RunLabels labels = config.labels.value_or(RunLabels{});
    if (labels.model.empty()) {
        const BackendConfig* target = config.find_backend(pcfg.target_backend);
        labels.model = target->model_id.value_or(target->alias);
    }
    if (labels.dataset.empty()) labels.dataset = enum_to_string(desc.source);

    json snapshot;
    snapshot["pipeline"] = pcfg;
    json backend_list = json::array();
    for (const auto& alias : aliases) backend_list.push_back(*config.find_backend(alias));
    snapshot["backends"] = backend_list;
    snapshot["templates_dir"] = config.templates_dir.string();
    snapshot["lexicon_path"] = config.lexicon_path.string();
    snapshot["dataset"] = json{{"source", enum_to_string(desc.source)},
                               {"path", desc.path.string()},
                               {"format", enum_to_string(desc.format)}};
    snapshot["mode"] = enum_to_string(mode);
    snapshot["labels"] = labels;
    store.write_run_config(snapshot);

    CampaignOptions options;
    options.concurrency = args.concurrency;
    options.resume = args.resume;
    options.mode = mode;
    CampaignSummary summary = run_campaign(tasks, deps, pcfg, store, options);

    out << "run directory: " << store.dir().string() << "\n";
    out << "executed " << summary.executed << ", skipped " << summary.skipped
        << ", succeeded " << summary.succeeded << ", failed " << summary.failed << "\n";
    if (summary.executed + summary.skipped > 0) {
        auto records = store.read_transcript();
        MetricsReport report = asr(records);
        out << "ASR: " << format_percent2(report.n_success, report.n_total) << "% ("
            << report.n_success << "/" << report.n_total << ")\n";
    }
    return 0;
}

inline int cmd_score(const std::string& run_dir, const std::string& format,
                     const std::string& out_path, std::ostream& out) {
    auto records =
        read_transcript_file(std::filesystem::path(run_dir) / "transcript.jsonl");
    MetricsReport report = asr(records);
    cli_detail::write_output(
        cli_detail::emit_metrics_report(report, cli_detail::parse_format(format)), out_path,
        out);
    return 0;
}

struct DetectEvalArgs {
    std::string dataset;
    std::string detector;  // "keyword" or "judge"
    std::string judge_backend;
    std::string config;
    std::string convention = "perclass";
    std::string format = "md";
    std::string out_path;
    std::string save_path;
    std::string name;
    bool live = false;
};

inline int cmd_detect_eval(const DetectEvalArgs& args, std::ostream& out, std::ostream& err) {
    AppConfig config = load_app_config(args.config);
    HarmEvalSet set = load_harm_eval(args.dataset);
    err << "loaded " << set.samples.size() << " samples (safe " << set.safe_count
        << ", harmful " << set.harmful_count << ")\n";

    std::vector<DetectorOutcome> outcomes;
    std::string name = args.name;
    if (args.detector == "keyword") {
        auto lexicon = load_refusal_lexicon(config.lexicon_path);
        for (const auto& sample : set.samples) {
            bool refused = keyword_refusal(sample.response_text, lexicon);
            outcomes.push_back(DetectorOutcome{
                sample.id, refused ? DetectorVerdict::Safe : DetectorVerdict::Harmful});
        }
        if (name.empty()) name = "Keyword-based Detection";
    } else if (args.detector == "judge") {
        if (args.judge_backend.empty())
            throw ConfigError("--detector judge requires --judge-backend");
        cli_detail::enforce_live_interlock(config, {args.judge_backend}, args.live, err);
        BackendRegistry registry = cli_detail::build_registry(config, {args.judge_backend});
        TemplateRegistry templates = load_template_pack(config.templates_dir);
        auto judge = registry.resolve(args.judge_backend);
        const PromptTemplate& tpl = templates.get(TemplateId::HarmJudge);
        for (const auto& sample : set.samples) {
            outcomes.push_back(
                judge_harmfulness(*judge, tpl, sample.id, sample.response_text));
        }
        if (name.empty()) name = args.judge_backend;
    } else {
        throw ConfigError("unknown detector \"" + args.detector +
                          "\" (expected keyword or judge)");
    }

    DetectorReport report = detector_metrics(set.samples, outcomes,
                                             cli_detail::parse_convention(args.convention));
    cli_detail::write_output(
        emit_detector_table({{name, report}}, cli_detail::parse_format(args.format)),
        args.out_path, out);
    if (!args.save_path.empty()) {
        std::ofstream save(args.save_path, std::ios::binary);
        if (!save) throw IoError("cannot write report file: " + args.save_path);
        save << json{{"name", name}, {"report", report}}.dump(2) << "\n";
    }
    return 0;
}

struct LabelVoteArgs {
    std::string responses;
    std::vector<std::string> judges;
    std::string config;
    std::string out_path;
    bool live = false;
};

inline int cmd_label_vote(const LabelVoteArgs& args, std::ostream& out, std::ostream& err) {
    if (args.judges.empty()) throw ConfigError("--judges requires at least one alias");
    AppConfig config = load_app_config(args.config);
    cli_detail::enforce_live_interlock(config, args.judges, args.live, err);
    BackendRegistry registry =
        cli_detail::build_registry(config, cli_detail::dedup(args.judges));
    TemplateRegistry templates = load_template_pack(config.templates_dir);
    const PromptTemplate& tpl = templates.get(TemplateId::HarmJudge);

    auto rows = cli_detail::read_responses(args.responses);
    std::string joined_judges;
    for (const auto& alias : args.judges) {
        if (!joined_judges.empty()) joined_judges += "+";
        joined_judges += alias;
    }

    std::ostringstream body;
    std::size_t harmful = 0;
    for (const auto& row : rows) {
        std::vector<DetectorOutcome> votes;
        for (const auto& alias : args.judges) {
            auto judge = registry.resolve(alias);
            votes.push_back(judge_harmfulness(*judge, tpl, row.id, row.response_text));
        }
        LabeledSample sample;
        sample.id = row.id;
        sample.response_text = row.response_text;
        sample.label = majority_vote(votes);
        sample.source_method = "majority_vote";
        sample.source_model = joined_judges;
        if (sample.label == SampleLabel::Harmful) ++harmful;
        body << json(sample).dump() << "\n";
    }
    cli_detail::write_output(body.str(), args.out_path, out);
    err << "labeled " << rows.size() << " samples: " << (rows.size() - harmful) << " safe, "
        << harmful << " harmful\n";
    return 0;
}

inline int cmd_analyze_thinking(const std::string& run_dir, const std::string& format,
                                const std::string& out_path, std::ostream& out) {
    auto records =
        read_transcript_file(std::filesystem::path(run_dir) / "transcript.jsonl");
    std::vector<ThinkingPoint> points;
    for (const auto& record : records) {
        if (auto point = cli_detail::thinking_point_for(record)) points.push_back(*point);
    }
    ThinkingReport report = thinking_stats(points);
    cli_detail::write_output(
        cli_detail::emit_thinking_report(report, cli_detail::parse_format(format)), out_path,
        out);
    return 0;
}

inline int cmd_report_asr(const std::vector<std::string>& run_dirs, const std::string& format,
                          const std::string& out_path, std::ostream& out) {
    std::map<AsrCellKey, MetricsReport> cells;
    for (const auto& dir : run_dirs) {
        auto base = std::filesystem::path(dir);
        json run = cli_detail::load_json_file(base / "run.json");
        RunLabels labels;
        if (run.contains("labels")) labels = run["labels"].get<RunLabels>();
        if (labels.model.empty() && run.contains("pipeline"))
            labels.model = run["pipeline"].value("target_backend", "unknown");
        if (labels.dataset.empty() && run.contains("dataset"))
            labels.dataset = run["dataset"].value("source", "unknown");
        auto records = read_transcript_file(base / "transcript.jsonl");
        AsrCellKey key{labels.model, labels.dataset, labels.mode};
        if (cells.count(key))
            throw ConfigError("duplicate report cell for (" + key.model + ", " +
                              key.dataset + ", " + key.mode + ")");
        cells.emplace(key, asr(records));
    }
    cli_detail::write_output(emit_asr_table(cells, cli_detail::parse_format(format)),
                             out_path, out);
    return 0;
}

inline int cmd_report_detectors(const std::vector<std::string>& inputs,
                                const std::string& format, const std::string& out_path,
                                std::ostream& out) {
    std::vector<std::pair<std::string, DetectorReport>> reports;
    for (const auto& input : inputs) {
        json j = cli_detail::load_json_file(input);
        try {
            reports.emplace_back(j.at("name").get<std::string>(),
                                 j.at("report").get<DetectorReport>());
        } catch (const json::exception& e) {
            throw ConfigError(input + ": " + e.what());
        }
    }
    cli_detail::write_output(emit_detector_table(reports, cli_detail::parse_format(format)),
                             out_path, out);
    return 0;
}

// Builds the CLI11 app and dispatches. `args` is argv[1..] in natural order.
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"semantic-isomorphism red-teaming harness"};
    app.require_subcommand(1);

    int rc = 0;

    AttackArgs attack_args;
    auto* attack = app.add_subcommand(
        "attack", "run an attack campaign over a behavior dataset");
    attack->add_option("--dataset", attack_args.dataset, "behavior dataset file")->required();
    attack->add_option("--source", attack_args.source,
                       "dataset source: JailbreakBench, AdvBench, HarmBench or Custom");
    attack->add_option("--file-format", attack_args.file_format,
                       "dataset file format: csv, json or jsonl (default: by extension)");
    attack->add_option("--config", attack_args.config, "config file")->required();
    attack->add_option("--out", attack_args.out_dir, "run directory")->required();
    attack->add_option("--concurrency", attack_args.concurrency, "max in-flight tasks");
    attack->add_flag("--resume", attack_args.resume, "skip tasks already in the transcript");
    attack->add_flag("--live", attack_args.live, "acknowledge use of non-mock backends");
    attack->add_flag("--direct-ask", attack_args.direct_ask,
                     "control mode: send questions unrewritten");
    attack->add_option("--templates", attack_args.templates_override,
                       "override the template pack directory");
    attack->callback([&]() { rc = cmd_attack(attack_args, out, err); });

    std::string score_run, score_format = "md", score_out;
    auto* score = app.add_subcommand("score", "compute ASR over a run transcript");
    score->add_option("--run", score_run, "run directory")->required();
    score->add_option("--format", score_format, "output format: md, csv or json");
    score->add_option("--out", score_out, "write output to a file instead of stdout");
    score->callback([&]() { rc = cmd_score(score_run, score_format, score_out, out); });

    DetectEvalArgs detect_args;
    auto* detect = app.add_subcommand("detect-eval",
                                      "evaluate a harmful-content detector on labeled data");
    detect->add_option("--dataset", detect_args.dataset, "labeled samples (jsonl)")
        ->required();
    detect->add_option("--detector", detect_args.detector, "keyword or judge")->required();
    detect->add_option("--judge-backend", detect_args.judge_backend,
                       "backend alias for --detector judge");
    detect->add_option("--config", detect_args.config, "config file")->required();
    detect->add_option("--convention", detect_args.convention,
                       "rate convention: paper or perclass");
    detect->add_option("--format", detect_args.format, "output format: md, csv or json");
    detect->add_option("--out", detect_args.out_path, "write output to a file");
    detect->add_option("--save", detect_args.save_path,
                       "also save the raw detector report as JSON");
    detect->add_option("--name", detect_args.name, "detector display name");
    detect->add_flag("--live", detect_args.live, "acknowledge use of non-mock backends");
    detect->callback([&]() { rc = cmd_detect_eval(detect_args, out, err); });

    LabelVoteArgs vote_args;
    auto* vote = app.add_subcommand("label-vote",
                                    "label responses by majority vote of judge backends");
    vote->add_option("--responses", vote_args.responses, "responses file (jsonl)")
        ->required();
    vote->add_option("--judges", vote_args.judges, "judge backend aliases")
        ->required()
        ->delimiter(',');
    vote->add_option("--config", vote_args.config, "config file")->required();
    vote->add_option("--out", vote_args.out_path, "write labeled jsonl to a file");
    vote->add_flag("--live", vote_args.live, "acknowledge use of non-mock backends");
    vote->callback([&]() { rc = cmd_label_vote(vote_args, out, err); });

    std::string think_run, think_format = "md", think_out;
    auto* think = app.add_subcommand("analyze-thinking",
                                     "relate reasoning length to response safety");
    think->add_option("--run", think_run, "run directory")->required();
    think->add_option("--format", think_format, "output format: md, csv or json");
    think->add_option("--out", think_out, "write output to a file");
    think->callback(
        [&]() { rc = cmd_analyze_thinking(think_run, think_format, think_out, out); });

    auto* report = app.add_subcommand("report", "render tables from runs and saved reports");
    report->require_subcommand(1);

    std::vector<std::string> report_runs;
    std::string report_asr_format = "md", report_asr_out;
    auto* report_asr = report->add_subcommand("asr", "ASR table over run directories");
    report_asr->add_option("--runs", report_runs, "run directories")->required();
    report_asr->add_option("--format", report_asr_format, "output format: md, csv or json");
    report_asr->add_option("--out", report_asr_out, "write output to a file");
    report_asr->callback(
        [&]() { rc = cmd_report_asr(report_runs, report_asr_format, report_asr_out, out); });

    std::vector<std::string> report_inputs;
    std::string report_det_format = "md", report_det_out;
    auto* report_det =
        report->add_subcommand("detectors", "detector table from saved reports");
    report_det->add_option("--inputs", report_inputs, "saved detector report files")
        ->required();
    report_det->add_option("--format", report_det_format, "output format: md, csv or json");
    report_det->add_option("--out", report_det_out, "write output to a file");
    report_det->callback([&]() {
        rc = cmd_report_detectors(report_inputs, report_det_format, report_det_out, out);
    });

    try {
        std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        int cli_rc = app.exit(e, out, err);
        return cli_rc == 0 ? 0 : static_cast<int>(ExitCode::Config);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}

}  // namespace isoattack
