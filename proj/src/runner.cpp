#include "hpqa/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hpqa/checkpoint.hpp"
#include "hpqa/error.hpp"
#include "hpqa/kv.hpp"

namespace hpqa {

using nlohmann::json;
namespace fs = std::filesystem;

TaskStream resolve_stream(const std::string& source) {
    if (source.rfind("spec:", 0) == 0) {
        std::string body = source.substr(5);
        std::replace(body.begin(), body.end(), ',', '\n');
        return gen_synthetic_stream(parse_stream_spec(body));
    }
    if (source.size() > 6 && source.substr(source.size() - 6) == ".jsonl")
        return load_stream(source);
    return gen_synthetic_stream(load_stream_spec(source));
}

void cmd_gen_stream(const std::string& spec_path, const std::string& out_path) {
    TaskStream stream = gen_synthetic_stream(load_stream_spec(spec_path));
    save_stream(stream, out_path);
}

namespace {

std::string column_name(int id, int n_seen) {
    return (id > n_seen ? "unseen" : "task") + std::to_string(id);
}

json detection_to_json(const DetectionReport& rep) {
    json j;
    j["open_world"] = rep.open_world;
    j["total"] = rep.total;
    j["accuracy"] = rep.accuracy;
    j["seen_macro_f1"] = rep.seen_macro_f1;
    j["unseen_f1"] = std::isnan(rep.unseen_f1) ? json(nullptr) : json(rep.unseen_f1);
    return j;
}

json step_to_json(const StepLog& s) {
    json j;
    j["stage"] = s.stage;
    j["task_id"] = s.task_id;
    j["step"] = s.step;
    j["eps_k"] = s.eps_k;
    j["qa_loss"] = s.qa_loss;
    j["task_loss"] = s.task_loss;
    j["meta_loss"] = s.meta_loss;
    j["memory_meta_loss"] = s.memory_meta_loss;
    j["n_gold"] = s.n_gold;
    j["n_inferred"] = s.n_inferred;
    j["n_unseen_branch"] = s.n_unseen_branch;
    j["n_negatives"] = s.n_negatives;
    return j;
}

void write_log(const Trainer& trainer, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFault("cannot write " + path.string());
    for (const auto& s : trainer.log()) out << step_to_json(s).dump() << "\n";
}

std::vector<std::pair<const Sample*, int>> labeled_eval_set(const TaskStream& stream) {
    std::vector<std::pair<const Sample*, int>> out;
    for (const auto& t : stream.seen)
        for (const auto& s : t.test) out.emplace_back(&s, t.id);
    for (const auto& t : stream.unseen)
        for (const auto& s : t.test) out.emplace_back(&s, 0);
    return out;
}

json build_report(Trainer& trainer, const TaskStream& stream, const PerformanceMatrix& matrix,
                  const std::vector<int>& curriculum) {
    const RunConfig& cfg = trainer.config();
    json rep;
    rep["baseline"] = baseline_name(cfg.baseline);
    json abl = json::array();
    const std::pair<const char*, bool> switches[] = {
        {"no_memory", cfg.no_memory},
        {"no_adb", cfg.no_adb},
        {"no_meta", cfg.no_meta},
        {"no_task_prompt", cfg.no_task_prompt},
        {"no_format_prompt", cfg.no_format_prompt},
        {"no_general_prompt", cfg.no_general_prompt},
        {"no_sched_sampling", cfg.no_sched_sampling},
        {"no_gt_identity", cfg.no_gt_identity},
        {"no_neg_samples", cfg.no_neg_samples},
        {"no_sample_div", cfg.no_sample_div},
        {"no_memory_div", cfg.no_memory_div},
        {"no_cluster", cfg.no_cluster},
    };
    for (const auto& [name, on] : switches)
        if (on) abl.push_back(name);
    rep["ablations"] = abl;
    rep["curriculum"] = curriculum;

    auto [a_seen, a_unseen] = avg_performance(matrix);
    rep["a_seen"] = a_seen;
    rep["a_unseen"] = std::isnan(a_unseen) ? json(nullptr) : json(a_unseen);
    json f = nullptr;
    if (matrix.n_seen >= 2 && static_cast<int>(matrix.rows.size()) == matrix.n_seen)
        f = avg_forget(matrix);
    rep["f_seen"] = f;

    json per_task = json::object();
    for (std::size_t j = 0; j < matrix.task_names.size(); ++j)
        per_task[matrix.task_names[j]] = matrix.rows.back()[j];
    rep["per_task_final"] = per_task;

    if (trainer.pool().task_count() > 0) {
        auto labeled = labeled_eval_set(stream);
        rep["detection_open"] = detection_to_json(detection_report(trainer, labeled, true));
        rep["detection_closed"] = detection_to_json(detection_report(trainer, labeled, false));
    } else {
        rep["detection_open"] = nullptr;
        rep["detection_closed"] = nullptr;
    }

    json div = json::object(), loc = json::object();
    auto mem_queries = trainer.memory().queries();
    for (int z : cfg.z_grid) {
        std::string key = std::to_string(z);
        if (!mem_queries.empty() && mem_queries.size() >= static_cast<std::size_t>(z))
            div[key] = diversity(trainer.pool().meta_key_matrix(), mem_queries, z);
        else
            div[key] = nullptr;
        if (!mem_queries.empty() && cfg.meta_count >= z)
            loc[key] = locality(trainer.pool().meta_key_matrix(), mem_queries, z);
        else
            loc[key] = nullptr;
    }
    rep["diversity"] = div;
    rep["locality"] = loc;
    rep["memory_size"] = trainer.memory().size();
    rep["steps"] = trainer.log().size();
    char fp[32];
    std::snprintf(fp, sizeof(fp), "%016llx",
                  static_cast<unsigned long long>(stream_fingerprint(stream)));
    rep["stream_fingerprint"] = fp;
    return rep;
}

std::string report_text(const json& rep) {
    std::ostringstream out;
    auto pct = [](const json& v) {
        if (v.is_null()) return std::string("-");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v.get<double>() * 100.0);
        return std::string(buf);
    };
    out << "baseline: " << rep["baseline"].get<std::string>() << "\n";
    out << "A_N (seen avg x100):   " << pct(rep["a_seen"]) << "\n";
    out << "A_N' (unseen avg):     " << pct(rep["a_unseen"]) << "\n";
    out << "F_N (avg forgetting):  " << pct(rep["f_seen"]) << "\n";
    if (!rep["detection_open"].is_null()) {
        out << "detection open-world:  " << pct(rep["detection_open"]["accuracy"]) << "\n";
        out << "detection closed:      " << pct(rep["detection_closed"]["accuracy"]) << "\n";
    }
    out << "per-task final scores:\n";
    for (const auto& [name, v] : rep["per_task_final"].items())
        out << "  " << name << ": " << pct(v) << "\n";
    out << "diversity by Z: ";
    for (const auto& [z, v] : rep["diversity"].items()) out << "Z=" << z << ":" << pct(v) << " ";
    out << "\nlocality by Z:  ";
    for (const auto& [z, v] : rep["locality"].items()) out << "Z=" << z << ":" << pct(v) << " ";
    out << "\n";
    return out.str();
}

}  // namespace

RunResult cmd_train(RunConfig cfg, const std::string& stream_source, const std::string& out_dir,
                    bool force, bool resume) {
    cfg.validate();
    fs::path run(out_dir);
    bool existing = fs::exists(run / "config.txt");
    if (existing && !force && !resume)
        throw ValidationError("run directory " + out_dir +
                              " already holds a run (use --force or --resume)");
    fs::create_directories(run);

    TaskStream stream;
    if (resume && fs::exists(run / "stream.jsonl")) {
        stream = load_stream((run / "stream.jsonl").string());
    } else {
        stream = resolve_stream(stream_source);
    }
    Vocab vocab = stream.make_vocab();

    std::vector<int> curriculum;
    for (const auto& t : stream.seen) curriculum.push_back(t.id);
    Rng crng(hash_combine(cfg.order_seed, 0xC0FFEEULL));
    crng.shuffle(curriculum);

    std::vector<int> columns = curriculum;
    for (const auto& t : stream.unseen) columns.push_back(t.id);

    if (resume && existing) {
        if (read_text_file((run / "config.txt").string()) != cfg.to_text())
            throw ValidationError("resume mismatch: config differs from the run directory");
    } else {
        write_text_file((run / "config.txt").string(), cfg.to_text());
        save_stream(stream, (run / "stream.jsonl").string());
    }

    PerformanceMatrix matrix;
    matrix.n_seen = stream.n_seen();
    matrix.n_unseen = stream.n_unseen();
    for (int id : columns) matrix.task_names.push_back(column_name(id, stream.n_seen()));

    std::unique_ptr<Trainer> owned;
    int done_stages = 0;
    if (resume) {
        int last = 0;
        for (int s = 1; s <= stream.n_seen(); ++s) {
            char name[32];
            std::snprintf(name, sizeof(name), "ckpt_stage_%02d", s);
            if (fs::exists(run / name / "manifest.json")) last = s;
        }
        if (last > 0) {
            char name[32];
            std::snprintf(name, sizeof(name), "ckpt_stage_%02d", last);
            auto loaded = load_checkpoint((run / name).string());
            if (loaded.config.to_text() != cfg.to_text())
                throw ValidationError("resume mismatch: checkpoint config differs");
            owned = std::move(loaded.trainer);
            matrix = matrix_from_csv(read_text_file((run / "matrix.csv").string()));
            done_stages = last;
        }
    }
    if (!owned) owned = std::make_unique<Trainer>(cfg, vocab);
    Trainer& trainer = *owned;

    auto eval_row = [&]() {
        std::vector<double> row;
        for (int id : columns) row.push_back(eval_task(trainer, stream.task_by_id(id)));
        return row;
    };
    bool can_adb = cfg.baseline != BaselineMode::Finetune && !cfg.no_memory && !cfg.no_adb;

    if (cfg.baseline == BaselineMode::Multitask) {
        std::vector<TaskDef> tasks;
        for (int id : curriculum) tasks.push_back(stream.task_by_id(id));
        trainer.train_joint(tasks);
        if (can_adb) trainer.fit_adb();
        matrix.rows.push_back(eval_row());
    } else {
        for (int stage = done_stages; stage < stream.n_seen(); ++stage) {
            int task_id = curriculum[static_cast<std::size_t>(stage)];
            trainer.train_task(stream.task_by_id(task_id));
            if (stage + 1 == stream.n_seen() && can_adb) trainer.fit_adb();
            matrix.rows.push_back(eval_row());
            write_text_file((run / "matrix.csv").string(), matrix_to_csv(matrix));
            write_log(trainer, run / "log.jsonl");
            char name[32];
            std::snprintf(name, sizeof(name), "ckpt_stage_%02d", stage + 1);
            save_checkpoint(trainer, (run / name).string());
        }
    }
    write_text_file((run / "matrix.csv").string(), matrix_to_csv(matrix));
    write_log(trainer, run / "log.jsonl");
    save_checkpoint(trainer, (run / "ckpt_final").string());

    json rep = build_report(trainer, stream, matrix, curriculum);
    write_text_file((run / "report.json").string(), rep.dump(2) + "\n");
    write_text_file((run / "report.txt").string(), report_text(rep));
    rep["report_text"] = report_text(rep);
    return {out_dir, std::move(matrix), std::move(rep)};
}

json cmd_eval(const std::string& ckpt_dir, const std::string& stream_source) {
    auto loaded = load_checkpoint(ckpt_dir);
    Trainer& trainer = *loaded.trainer;
    TaskStream stream = resolve_stream(stream_source);
    if (stream.vocab_size != loaded.vocab.word_count() ||
        stream.marker_count != loaded.vocab.marker_count())
        throw ValidationError("stream vocabulary incompatible with checkpoint");

    std::vector<int> columns;
    for (const auto& t : stream.seen) columns.push_back(t.id);
    for (const auto& t : stream.unseen) columns.push_back(t.id);
    PerformanceMatrix matrix;
    matrix.n_seen = stream.n_seen();
    matrix.n_unseen = stream.n_unseen();
    for (int id : columns) matrix.task_names.push_back(column_name(id, stream.n_seen()));
    std::vector<double> row;
    for (int id : columns) row.push_back(eval_task(trainer, stream.task_by_id(id)));
    matrix.rows.push_back(row);

    json rep = build_report(trainer, stream, matrix, columns);
    // forgetting needs the full training matrix, which lives next to the
    // checkpoint when the run directory is intact
    rep["f_seen"] = nullptr;
    fs::path sibling = fs::path(ckpt_dir).parent_path() / "matrix.csv";
    if (fs::exists(sibling)) {
        PerformanceMatrix full = matrix_from_csv(read_text_file(sibling.string()));
        if (full.n_seen >= 2 && static_cast<int>(full.rows.size()) == full.n_seen)
            rep["f_seen"] = avg_forget(full);
    }
    rep["report_text"] = report_text(rep);
    return rep;
}

json cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                bool ablation_table) {
    if (run_dirs.empty()) throw ValidationError("report: no run directories given");
    struct Run {
        std::string dir;
        RunConfig cfg;
        json report;
    };
    std::vector<Run> runs;
    for (const auto& dir : run_dirs) {
        Run r;
        r.dir = dir;
        r.cfg = parse_run_config(read_text_file((fs::path(dir) / "config.txt").string()));
        r.report = json::parse(read_text_file((fs::path(dir) / "report.json").string()));
        runs.push_back(std::move(r));
    }
    if (!ablation_table) {
        for (std::size_t i = 1; i < runs.size(); ++i) {
            std::vector<std::string> diffs;
            if (!config_compatible(runs[0].cfg, runs[i].cfg, diffs)) {
                std::string msg = "report: incompatible configs between " + runs[0].dir + " and " +
                                  runs[i].dir + "; differing fields:";
                for (const auto& d : diffs) msg += " " + d;
                throw ValidationError(msg);
            }
        }
    }

    auto mean_of = [](const std::vector<json>& reports, const char* key) -> json {
        double sum = 0.0;
        int n = 0;
        for (const auto& r : reports) {
            if (!r.contains(key) || r[key].is_null()) continue;
            sum += r[key].get<double>();
            ++n;
        }
        return n == 0 ? json(nullptr) : json(sum / n);
    };

    auto aggregate = [&](const std::vector<json>& reports) {
        json agg;
        agg["runs"] = reports.size();
        agg["a_seen"] = mean_of(reports, "a_seen");
        agg["a_unseen"] = mean_of(reports, "a_unseen");
        agg["f_seen"] = mean_of(reports, "f_seen");
        json per_task = json::object();
        if (!reports.empty()) {
            for (const auto& [name, _] : reports.front()["per_task_final"].items()) {
                double sum = 0.0;
                int n = 0;
                for (const auto& r : reports) {
                    if (!r["per_task_final"].contains(name)) continue;
                    sum += r["per_task_final"][name].get<double>();
                    ++n;
                }
                if (n) per_task[name] = sum / n;
            }
        }
        agg["per_task_final"] = per_task;
        for (const char* det : {"detection_open", "detection_closed"}) {
            double sum = 0.0;
            int n = 0;
            for (const auto& r : reports) {
                if (r[det].is_null()) continue;
                sum += r[det]["accuracy"].get<double>();
                ++n;
            }
            agg[std::string(det) + "_accuracy"] = n ? json(sum / n) : json(nullptr);
        }
        for (const char* grid : {"diversity", "locality"}) {
            json g = json::object();
            if (!reports.empty() && reports.front().contains(grid)) {
                for (const auto& [z, _] : reports.front()[grid].items()) {
                    double sum = 0.0;
                    int n = 0;
                    for (const auto& r : reports) {
                        if (!r[grid].contains(z) || r[grid][z].is_null()) continue;
                        sum += r[grid][z].get<double>();
                        ++n;
                    }
                    g[z] = n ? json(sum / n) : json(nullptr);
                }
            }
            agg[grid] = g;
        }
        return agg;
    };

    json out;
    if (ablation_table) {
        std::map<std::string, std::vector<json>> groups;
        for (const auto& r : runs) {
            std::string label = r.report["baseline"].get<std::string>();
            for (const auto& a : r.report["ablations"]) label += "+" + a.get<std::string>();
            groups[label].push_back(r.report);
        }
        json table = json::array();
        for (const auto& [label, reports] : groups) {
            json rowj = aggregate(reports);
            rowj["label"] = label;
            table.push_back(rowj);
        }
        out["table"] = table;
    } else {
        out = aggregate([&] {
            std::vector<json> reports;
            for (const auto& r : runs) reports.push_back(r.report);
            return reports;
        }());
        json per_run = json::array();
        for (const auto& r : runs) {
            json p;
            p["dir"] = r.dir;
            p["a_seen"] = r.report["a_seen"];
            p["a_unseen"] = r.report["a_unseen"];
            p["f_seen"] = r.report["f_seen"];
            per_run.push_back(p);
        }
        out["per_run"] = per_run;
    }

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text_file((fs::path(out_dir) / "summary.json").string(), out.dump(2) + "\n");
        std::ostringstream txt;
        txt << out.dump(2) << "\n";
        write_text_file((fs::path(out_dir) / "summary.txt").string(), txt.str());
        // schedule series: gold-branch frequency per 100-step bucket
        std::ofstream series(fs::path(out_dir) / "series_schedule.jsonl", std::ios::binary);
        for (std::size_t ri = 0; ri < runs.size(); ++ri) {
            fs::path logp = fs::path(runs[ri].dir) / "log.jsonl";
            if (!fs::exists(logp)) continue;
            std::ifstream in(logp, std::ios::binary);
            std::string line;
            std::map<std::pair<int, int>, std::array<double, 5>> buckets;  // (stage,bucket)
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                json j = json::parse(line);
                auto key = std::make_pair(j["stage"].get<int>(), j["step"].get<int>() / 100);
                auto& b = buckets[key];
                b[0] += j["n_gold"].get<double>();
                b[1] += j["n_inferred"].get<double>();
                b[2] += j["n_unseen_branch"].get<double>();
                b[3] += j["eps_k"].get<double>();
                b[4] += 1.0;
            }
            for (const auto& [key, b] : buckets) {
                double total = b[0] + b[1] + b[2];
                json rec;
                rec["run"] = runs[ri].dir;
                rec["stage"] = key.first;
                rec["bucket_start"] = key.second * 100;
                rec["eps_mean"] = b[4] > 0 ? b[3] / b[4] : 0.0;
                rec["gold_freq"] = total > 0 ? b[0] / total : 0.0;
                rec["inferred_freq"] = total > 0 ? b[1] / total : 0.0;
                rec["unseen_freq"] = total > 0 ? b[2] / total : 0.0;
                series << rec.dump() << "\n";
            }
        }
    }
    return out;
}

}  // namespace hpqa
