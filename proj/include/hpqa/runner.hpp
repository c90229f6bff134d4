#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "hpqa/config.hpp"
#include "hpqa/metrics.hpp"
#include "hpqa/stream.hpp"

namespace hpqa {

// Stream sources: "spec:k=v,k=v" inline spec, a *.jsonl stream file, or a
// path to a flat key=value spec file.
TaskStream resolve_stream(const std::string& source);

void cmd_gen_stream(const std::string& spec_path, const std::string& out_path);

struct RunResult {
    std::string dir;
    PerformanceMatrix matrix;
    nlohmann::json report;
};

// Full curriculum run: per-stage training, eval after every stage, checkpoint
// per stage, boundary fitting after the last one, report artifacts.
RunResult cmd_train(RunConfig cfg, const std::string& stream_source, const std::string& out_dir,
                    bool force = false, bool resume = false);

nlohmann::json cmd_eval(const std::string& ckpt_dir, const std::string& stream_source);

// Aggregates run directories; writes summary and plot series when out_dir is
// non-empty. ablation_table groups runs by (baseline, ablation set) instead
// of requiring identical configs.
nlohmann::json cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                          bool ablation_table = false);

}  // namespace hpqa
