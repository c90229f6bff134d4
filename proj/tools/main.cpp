#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hpqa/error.hpp"
#include "hpqa/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"lifelong QA laboratory: prompt pools, replay memory, open-world routing"};
    app.require_subcommand(1);

    std::string spec_path, out_path;
    auto* gen = app.add_subcommand("gen-stream", "generate a synthetic task stream file");
    gen->add_option("--spec", spec_path, "stream spec file (flat key=value)")->required();
    gen->add_option("--out", out_path, "output stream path (.jsonl)")->required();

    std::string config_path, stream_source, run_dir, baseline;
    std::vector<std::string> ablations;
    long long seed = -1, order_seed = -1, sampling_seed = -1;
    bool force = false, resume = false;
    auto* train = app.add_subcommand("train", "train over the task curriculum");
    train->add_option("--config", config_path, "run config file (flat key=value)");
    train->add_option("--stream", stream_source, "stream file, spec file, or spec:k=v,...")
        ->required();
    train->add_option("--out", run_dir, "run directory")->required();
    train->add_option("--seed", seed, "master seed override");
    train->add_option("--order-seed", order_seed, "curriculum/order seed override");
    train->add_option("--sampling-seed", sampling_seed, "sampling seed override");
    train->add_option("--ablate", ablations, "ablation switch, repeatable");
    train->add_option("--baseline", baseline, "diana | finetune | multitask");
    train->add_flag("--force", force, "overwrite an existing run directory");
    train->add_flag("--resume", resume, "continue an interrupted run");

    std::string ckpt_dir, eval_stream;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a stream");
    eval->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();
    eval->add_option("--stream", eval_stream, "stream file, spec file, or spec:k=v,...")
        ->required();

    std::vector<std::string> run_dirs;
    std::string report_out;
    bool ablation_table = false;
    auto* report = app.add_subcommand("report", "aggregate one or more run directories");
    report->add_option("dirs", run_dirs, "run directories")->required();
    report->add_option("--out", report_out, "directory for summary and plot series");
    report->add_flag("--ablation-table", ablation_table, "group runs by ablation switches");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            hpqa::cmd_gen_stream(spec_path, out_path);
            std::cout << "stream written to " << out_path << "\n";
        } else if (train->parsed()) {
            hpqa::RunConfig cfg;
            if (!config_path.empty()) cfg = hpqa::load_run_config(config_path);
            if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
            if (order_seed >= 0) cfg.order_seed = static_cast<std::uint64_t>(order_seed);
            if (sampling_seed >= 0) cfg.sampling_seed = static_cast<std::uint64_t>(sampling_seed);
            if (!baseline.empty()) cfg.baseline = hpqa::baseline_from_name(baseline);
            for (const auto& a : ablations)
                if (!cfg.apply_ablation(a))
                    throw hpqa::ValidationError("unknown ablation switch: " + a);
            auto result = hpqa::cmd_train(cfg, stream_source, run_dir, force, resume);
            std::cout << result.report["report_text"].get<std::string>();
            std::cout << "run directory: " << result.dir << "\n";
        } else if (eval->parsed()) {
            auto rep = hpqa::cmd_eval(ckpt_dir, eval_stream);
            std::cout << rep.dump(2) << "\n";
        } else if (report->parsed()) {
            auto rep = hpqa::cmd_report(run_dirs, report_out, ablation_table);
            std::cout << rep.dump(2) << "\n";
        }
    } catch (const hpqa::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
