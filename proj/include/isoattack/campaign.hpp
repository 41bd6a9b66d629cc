#pragma once

#include <algorithm>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "isoattack/pipeline.hpp"
#include "isoattack/run_store.hpp"

namespace isoattack {

struct CampaignOptions {
    int concurrency = 4;
    bool resume = false;
    AttackMode mode = AttackMode::Pipeline;
};

struct CampaignSummary {
    std::size_t executed = 0;
    std::size_t skipped = 0;
    std::size_t succeeded = 0;
    std::size_t failed = 0;
};

// Runs one attack per task with at most `concurrency` in flight. Transcript
// lines are appended in task order regardless of completion order, so equal
// inputs give byte-equal transcripts (after timing fields are stripped).
inline CampaignSummary run_campaign(const std::vector<AttackTask>& tasks,
                                    const PipelineDeps& deps, const PipelineConfig& config,
                                    RunStore& store, const CampaignOptions& options) {
    CampaignSummary summary;

    std::set<std::string> done = options.resume ? store.completed_task_ids()
                                                : std::set<std::string>{};
    std::vector<AttackTask> pending;
    for (const auto& task : tasks) {
        if (done.count(task.id)) {
            ++summary.skipped;
        } else {
            pending.push_back(task);
        }
    }

    std::mutex mutex;
    std::map<std::size_t, AttackRecord> completed;
    std::size_t next_to_write = 0;
    std::size_t next_to_claim = 0;
    std::exception_ptr first_error;

    ExchangeSink sink = [&store](const std::string& name, const ChatExchange& exchange) {
        store.write_exchange(name, exchange);
    };
    AttackPipeline pipeline(deps, config, sink);

    auto worker = [&]() {
        while (true) {
            std::size_t index;
            {
                std::lock_guard<std::mutex> lock(mutex);
                if (first_error || next_to_claim >= pending.size()) return;
                index = next_to_claim++;
            }
            AttackRecord record;
            try {
                record = options.mode == AttackMode::Direct
                             ? pipeline.run_direct(pending[index])
                             : pipeline.run_attack(pending[index]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
            std::lock_guard<std::mutex> lock(mutex);
            completed.emplace(index, std::move(record));
            while (!completed.empty() && completed.begin()->first == next_to_write) {
                store.append_record(completed.begin()->second);
                ++next_to_write;
                completed.erase(completed.begin());
            }
        }
    };

    int n_workers = pending.empty()
                        ? 0
                        : std::max(1, std::min<int>(options.concurrency,
                                                    static_cast<int>(pending.size())));
    std::vector<std::thread> workers;
    workers.reserve(n_workers);
    for (int i = 0; i < n_workers; ++i) workers.emplace_back(worker);
    for (auto& w : workers) w.join();

    if (first_error) std::rethrow_exception(first_error);

    for (const auto& record : store.read_transcript()) {
        if (done.count(record.task_id)) continue;
        ++summary.executed;
        if (record.success.state == SuccessState::Succeeded) {
            ++summary.succeeded;
        } else {
            ++summary.failed;
        }
    }
    store.finalize_manifest();
    return summary;
}

}  // namespace isoattack
