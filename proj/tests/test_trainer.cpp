#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "hpqa/checkpoint.hpp"
#include "hpqa/error.hpp"
#include "hpqa/metrics.hpp"
#include "hpqa/runner.hpp"
#include "hpqa/trainer.hpp"

using namespace hpqa;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.len_general = 4;
    cfg.len_format = 4;
    cfg.len_task = 4;
    cfg.len_meta = 2;
    cfg.meta_count = 6;
    cfg.meta_select = 2;
    cfg.memory_per_task = 6;
    cfg.query_dim = 16;
    cfg.epochs = 2;
    cfg.batch = 8;
    cfg.max_seq = 64;
    cfg.decode_max_len = 6;
    return cfg;
}

TaskStream tiny_stream(std::uint64_t seed = 5, int samples = 8) {
    StreamSpec spec;
    spec.n_seen = 3;
    spec.n_unseen = 1;
    spec.samples_per_split = samples;
    spec.vocab_size = 32;
    spec.seed = seed;
    return gen_synthetic_stream(spec);
}

Vec unit_axis(std::size_t dim, std::size_t axis) {
    Vec v(dim, 0.0);
    v[axis] = 1.0;
    return v;
}

}  // namespace

TEST_CASE("epsilon schedule") {
    CHECK(epsilon_schedule(0, 0.9, 3e-4) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(epsilon_schedule(3000, 0.9, 3e-4) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(epsilon_schedule(5000, 0.9, 3e-4) == 0.0);
    for (int k = 0; k < 64; ++k) CHECK(epsilon_schedule(k, 0.0, 1e-3) == 0.0);
    CHECK(epsilon_schedule(100, 0.9, 3e-4) == doctest::Approx(0.9 - 0.03).epsilon(1e-15));
}

TEST_CASE("choose_task_prompt branch logic") {
    PoolConfig pc;
    pc.query_dim = 8;
    pc.d_model = 8;
    PromptPool pool(pc, 1);
    Vec q = unit_axis(8, 0);

    // locate seeds whose first draw(s) force each branch
    auto first_two = [](std::uint64_t seed) {
        Rng r(seed);
        double zeta = r.uniform();
        double eps = r.uniform();
        return std::make_pair(zeta, eps);
    };
    std::uint64_t seed_unseen = 0, seed_gold = 0, seed_inferred = 0;
    for (std::uint64_t s = 1; s < 5000; ++s) {
        auto [zeta, eps] = first_two(s);
        if (!seed_unseen && zeta < 0.05) seed_unseen = s;
        if (!seed_gold && zeta >= 0.05 && eps < 0.5) seed_gold = s;
        if (!seed_inferred && zeta >= 0.05 && eps >= 0.5) seed_inferred = s;
    }
    REQUIRE(seed_unseen);
    REQUIRE(seed_gold);
    REQUIRE(seed_inferred);

    {
        Rng rng(seed_unseen);
        auto c = choose_task_prompt(3, Format::Abstractive, 0.5, 0.05, pool, q, rng);
        CHECK(c.kind == TaskChoiceKind::Unseen);
        CHECK(c.format == Format::Abstractive);
    }
    {
        Rng rng(seed_gold);
        auto c = choose_task_prompt(3, Format::Abstractive, 0.5, 0.05, pool, q, rng);
        CHECK(c.kind == TaskChoiceKind::Gold);
        CHECK(c.task_id == 3);
    }
    {
        // no task keys yet: inferred branch falls back to gold
        Rng rng(seed_inferred);
        auto c = choose_task_prompt(3, Format::Abstractive, 0.5, 0.05, pool, q, rng);
        CHECK(c.kind == TaskChoiceKind::Gold);
    }
    {
        pool.ensure_task(7, unit_axis(8, 1));
        Rng rng(seed_inferred);
        auto c = choose_task_prompt(3, Format::Abstractive, 0.5, 0.05, pool, q, rng);
        CHECK(c.kind == TaskChoiceKind::Inferred);
        CHECK(c.task_id == 7);
    }
}

TEST_CASE("memory selection matches exhaustive enumeration") {
    Rng rng(41);
    auto random_unit = [&](std::size_t dim) {
        Vec v(dim);
        for (auto& x : v) x = rng.gaussian();
        normalize_in_place(v);
        return v;
    };
    for (int fixture = 0; fixture < 20; ++fixture) {
        std::size_t n = 5 + rng.uniform_int(60);
        std::size_t m = 1 + rng.uniform_int(8);
        int capacity = 1 + static_cast<int>(rng.uniform_int(20));
        std::vector<Vec> queries;
        for (std::size_t i = 0; i < n; ++i) queries.push_back(random_unit(6));
        Matrix keys(m, 6);
        for (std::size_t j = 0; j < m; ++j) {
            Vec k = random_unit(6);
            std::copy(k.begin(), k.end(), keys.row(j));
        }

        // oracle: literal spec pipeline, nothing shared with the implementation
        std::size_t quota = static_cast<std::size_t>(
            std::ceil(static_cast<double>(capacity) / static_cast<double>(m)));
        std::map<std::size_t, double> best;
        for (std::size_t j = 0; j < m; ++j) {
            std::vector<std::pair<double, std::size_t>> d;
            for (std::size_t i = 0; i < n; ++i)
                d.emplace_back(cosine_distance(queries[i].data(), keys.row(j), 6), i);
            std::stable_sort(d.begin(), d.end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; });
            for (std::size_t r = 0; r < std::min(quota, n); ++r) {
                auto [dist, idx] = d[r];
                auto it = best.find(idx);
                if (it == best.end() || dist < it->second) best[idx] = dist;
            }
        }
        std::vector<std::pair<double, std::size_t>> ranked(best.size());
        std::transform(best.begin(), best.end(), ranked.begin(),
                       [](const auto& kv) { return std::make_pair(kv.second, kv.first); });
        std::sort(ranked.begin(), ranked.end());
        std::set<std::size_t> expected;
        for (std::size_t r = 0; r < std::min(ranked.size(), static_cast<std::size_t>(capacity)); ++r)
            expected.insert(ranked[r].second);

        auto got = select_memory_samples(queries, keys, capacity);
        std::set<std::size_t> got_set(got.begin(), got.end());
        CHECK(got_set == expected);
        CHECK(got.size() == std::min(ranked.size(), static_cast<std::size_t>(capacity)));
    }
}

TEST_CASE("memory selection keeps exactly E when candidates stay distinct") {
    // axis-aligned keys, each with a private cluster of samples: no dedup,
    // quota * M candidates >= E, so exactly E survive
    const std::size_t dim = 8;
    Matrix keys(4, dim);
    std::vector<Vec> queries;
    Rng rng(77);
    for (std::size_t j = 0; j < 4; ++j) {
        keys.at(j, j) = 1.0;
        for (int r = 0; r < 5; ++r) {
            Vec v(dim, 0.0);
            v[j] = 1.0;
            v[(j + 4) % dim] = 0.05 + 0.01 * static_cast<double>(r);
            normalize_in_place(v);
            queries.push_back(v);
        }
    }
    auto sel = select_memory_samples(queries, keys, 8);  // quota ceil(8/4)=2, 8 distinct picks
    CHECK(sel.size() == 8);
}

TEST_CASE("memory selection degenerate tie-break keeps stable order") {
    Vec q = unit_axis(4, 0);
    std::vector<Vec> queries(10, q);
    Matrix keys(1, 4);  // single key: quota == capacity
    Vec k = unit_axis(4, 1);
    std::copy(k.begin(), k.end(), keys.row(0));
    auto got = select_memory_samples(queries, keys, 4);
    CHECK(got == std::vector<std::size_t>{0, 1, 2, 3});
    // capacity beyond the task keeps everything
    auto all = select_memory_samples(queries, keys, 50);
    CHECK(all.size() == 10);
}

TEST_CASE("boundary fitting") {
    SUBCASE("all equal distances converge to that value") {
        std::vector<double> d(50, 0.42);
        CHECK(std::abs(fit_boundary(d, 0.02, 200) - 0.42) < 1e-3);
    }
    SUBCASE("three points move toward the median") {
        std::vector<double> d{0.1, 0.2, 0.3};
        double fitted = fit_boundary(d, 0.02, 200);
        // brute-force scan of the absolute-deviation objective
        double best = 0.0, best_v = 1e18;
        for (double x = 0.0; x <= 2.0; x += 1e-4) {
            double v = 0.0;
            for (double s : d) v += std::abs(s - x);
            if (v < best_v) {
                best_v = v;
                best = x;
            }
        }
        CHECK(std::abs(best - 0.2) < 1e-9);
        CHECK(std::abs(fitted - best) < 0.02);
    }
    SUBCASE("quantile mode: 100 evenly spaced values give 0.95") {
        std::vector<double> d;
        for (int i = 0; i < 100; ++i) d.push_back(static_cast<double>(i) / 99.0);
        CHECK(quantile95(d) == doctest::Approx(0.95).epsilon(1e-12));
    }
}

TEST_CASE("training a small curriculum end to end") {
    RunConfig cfg = tiny_config();
    TaskStream stream = tiny_stream();
    Vocab vocab = stream.make_vocab();
    Trainer trainer(cfg, vocab);

    CHECK_THROWS_AS(trainer.answer("m00 w01", "find w02"), RuntimeFault);

    QueryEncoder probe(cfg.encoder_seed, cfg.query_dim);
    Vec frozen_before = probe.encode("m00 w01 w02", "find w03").values;

    trainer.train_task(stream.seen[0]);
    std::size_t after_first = trainer.memory().size();
    SUBCASE("first stage has no negatives and no memory-meta loss") {
        for (const auto& rec : trainer.log()) {
            CHECK(rec.n_negatives == 0);
            CHECK(rec.memory_meta_loss == 0.0);
        }
        // per-key quota/dedup pipeline keeps at most E per task
        CHECK(after_first >= 1);
        CHECK(after_first <= 6);
    }

    trainer.train_task(stream.seen[1]);
    trainer.train_task(stream.seen[2]);
    CHECK(trainer.memory().size() <= 18);
    for (int id : {1, 2, 3}) CHECK(!trainer.memory().indices_for_task(id).empty());
    CHECK(trainer.learned() == std::vector<int>{1, 2, 3});
    CHECK_THROWS_AS(trainer.train_task(stream.seen[0]), RuntimeFault);

    SUBCASE("negatives appear from the second stage on") {
        int negs = 0;
        for (const auto& rec : trainer.log())
            if (rec.stage >= 2) negs += rec.n_negatives;
        CHECK(negs > 0);
    }
    SUBCASE("query encoder is frozen through training") {
        Vec frozen_after = probe.encode("m00 w01 w02", "find w03").values;
        CHECK(frozen_after == frozen_before);
        Vec via_trainer = trainer.encoder().encode("m00 w01 w02", "find w03").values;
        CHECK(via_trainer == frozen_before);
    }
    SUBCASE("task keys stay unit after training") {
        for (int id : trainer.pool().task_ids())
            CHECK(std::abs(norm2(trainer.pool().task_key(id)) - 1.0) < 1e-6);
        for (std::size_t i = 0; i < trainer.pool().meta_key_matrix().rows; ++i)
            CHECK(std::abs(norm2(trainer.pool().meta_key_matrix().row(i), 16) - 1.0) < 1e-6);
    }
    SUBCASE("boundary fitting and routing") {
        trainer.fit_adb();
        CHECK(trainer.boundaries().size() == 3);
        for (const auto& [id, d] : trainer.boundaries()) {
            CHECK(d > 0.0);
            CHECK(d < 2.0);
        }
        const Sample& s = stream.seen[1].test[0];
        auto [choice, sel] = trainer.detect_and_route(s.context, s.question);
        CHECK(sel.meta_indices.size() == 2);
        CHECK(choice.kind != TaskChoiceKind::Gold);
        std::string ans = trainer.answer(s.context, s.question);
        CHECK(ans == trainer.answer(s.context, s.question));  // deterministic
    }
    SUBCASE("eval_task scores lie in [0,1]") {
        double v = eval_task(trainer, stream.seen[0]);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("two identical runs produce bit-identical state") {
    RunConfig cfg = tiny_config();
    TaskStream stream = tiny_stream();
    Vocab vocab = stream.make_vocab();
    fs::path d1 = fs::temp_directory_path() / "hpqa_det_a";
    fs::path d2 = fs::temp_directory_path() / "hpqa_det_b";
    fs::remove_all(d1);
    fs::remove_all(d2);
    for (const auto& dir : {d1, d2}) {
        Trainer t(cfg, vocab);
        for (const auto& task : stream.seen) t.train_task(task);
        t.fit_adb();
        save_checkpoint(t, dir.string());
    }
    CHECK(checkpoint_digest(d1.string()) == checkpoint_digest(d2.string()));
}

TEST_CASE("gradient routing: each loss touches only its parameter group") {
    RunConfig cfg = tiny_config();
    TaskStream stream = tiny_stream();
    Vocab vocab = stream.make_vocab();
    Trainer trainer(cfg, vocab);
    PromptPool& pool = trainer.pool_mut();
    QueryEncoder enc(cfg.encoder_seed, cfg.query_dim);

    const Sample& s = stream.seen[0].train[0];
    Vec q = enc.encode(s).values;
    pool.ensure_task(1, q);
    auto meta_sel = pool.select_meta(q);
    auto composed = pool.compose(s.format, TaskChoice::gold(1), meta_sel);
    auto ser = serialize_sample(s, vocab);
    trainer.model().forward_loss(composed, ser.input, ser.target, 1.0);

    // QA loss reaches the model and the composed prompt rows only
    double key_grad_sum = 0.0;
    for (double g : pool.task_key_param(1).grad.data) key_grad_sum += std::abs(g);
    for (double g : pool.meta_keys_param().grad.data) key_grad_sum += std::abs(g);
    CHECK(key_grad_sum == 0.0);

    double selected_prompt_grad = 0.0, unselected_meta_grad = 0.0;
    pool.visit_params([&](Param& p) {
        bool selected = p.name == "pool.general" || p.name == "pool.format.0" ||
                        p.name == "pool.task_prompt.1";
        for (int idx : meta_sel)
            if (p.name == "pool.meta." + std::to_string(idx)) selected = true;
        if (p.name.rfind("pool.meta.", 0) == 0 && !selected)
            for (double g : p.grad.data) unselected_meta_grad += std::abs(g);
        if (selected)
            for (double g : p.grad.data) selected_prompt_grad += std::abs(g);
    });
    CHECK(unselected_meta_grad == 0.0);
    CHECK(selected_prompt_grad > 0.0);

    // key losses reach keys only
    trainer.model().visit_params([](Param& p) { p.zero_grad(); });
    pool.visit_params([](Param& p) { p.zero_grad(); });
    auto lt = task_key_loss(q, pool.task_key(1), nullptr, 1);
    CHECK(lt.grads.size() == 1);
    auto lm = meta_key_loss(pool.meta_key_matrix(), meta_sel, q, cfg.eta, cfg.gamma);
    for (const auto& [idx, g] : lm.grads) {
        bool in_sel = std::find(meta_sel.begin(), meta_sel.end(), idx) != meta_sel.end();
        CHECK(in_sel);
    }
}

TEST_CASE("scheduled sampling boundary configurations") {
    RunConfig cfg = tiny_config();
    cfg.omega = 0.0;
    TaskStream stream = tiny_stream();
    Vocab vocab = stream.make_vocab();

    SUBCASE("alpha=1, beta=0 never takes the inferred branch") {
        cfg.no_sched_sampling = true;  // forces alpha 1, beta 0
        Trainer t(cfg, vocab);
        t.train_task(stream.seen[0]);
        t.train_task(stream.seen[1]);
        for (const auto& rec : t.log()) {
            CHECK(rec.n_inferred == 0);
            CHECK(rec.n_unseen_branch == 0);
            CHECK(rec.eps_k == 1.0);
        }
    }
    SUBCASE("alpha=0 never takes the gold branch") {
        cfg.no_gt_identity = true;
        Trainer t(cfg, vocab);
        t.train_task(stream.seen[0]);
        t.train_task(stream.seen[1]);
        for (const auto& rec : t.log()) {
            CHECK(rec.n_gold == 0);
            CHECK(rec.eps_k == 0.0);
        }
    }
}

TEST_CASE("ablation switches change structure as advertised") {
    RunConfig base = tiny_config();
    TaskStream stream = tiny_stream();
    Vocab vocab = stream.make_vocab();

    SUBCASE("no_memory trains without replay, negatives, or boundaries") {
        RunConfig cfg = base;
        cfg.no_memory = true;
        Trainer t(cfg, vocab);
        t.train_task(stream.seen[0]);
        t.train_task(stream.seen[1]);
        CHECK(t.memory().size() == 0);
        for (const auto& rec : t.log()) {
            CHECK(rec.n_negatives == 0);
            CHECK(rec.memory_meta_loss == 0.0);
        }
        CHECK_THROWS_AS(t.fit_adb(), RuntimeFault);
        // fixed-boundary routing still works
        const Sample& s = stream.seen[0].test[0];
        CHECK_NOTHROW(t.answer(s.context, s.question));
    }
    SUBCASE("no_meta removes meta rows from composition") {
        RunConfig cfg = base;
        cfg.no_meta = true;
        Trainer t(cfg, vocab);
        t.train_task(stream.seen[0]);
        for (const auto& rec : t.log()) {
            CHECK(rec.meta_loss == 0.0);
        }
        auto composed = t.pool().compose(Format::Extractive, TaskChoice::gold(1), {});
        CHECK(composed.size() == 4 + 4 + 4);  // general + format + task rows only
    }
    SUBCASE("finetune trains a single shared prompt with no keys") {
        RunConfig cfg = base;
        cfg.baseline = BaselineMode::Finetune;
        Trainer t(cfg, vocab);
        t.train_task(stream.seen[0]);
        t.train_task(stream.seen[1]);
        CHECK(t.pool().task_count() == 0);
        CHECK(t.memory().size() == 0);
        const Sample& s = stream.seen[0].test[0];
        CHECK_NOTHROW(t.answer(s.context, s.question));
    }
    SUBCASE("multitask joint stage learns every task at once") {
        RunConfig cfg = base;
        cfg.baseline = BaselineMode::Multitask;
        Trainer t(cfg, vocab);
        std::vector<TaskDef> tasks(stream.seen.begin(), stream.seen.end());
        t.train_joint(tasks);
        CHECK(t.learned() == std::vector<int>{1, 2, 3});
        CHECK(t.memory().size() <= 18);
        for (int id : {1, 2, 3}) CHECK(!t.memory().indices_for_task(id).empty());
        CHECK(t.pool().task_count() == 3);
        CHECK_NOTHROW(t.fit_adb());
    }
}

TEST_CASE("detect_and_route boundary semantics") {
    RunConfig cfg = tiny_config();
    TaskStream stream = tiny_stream();
    Vocab vocab = stream.make_vocab();
    Trainer t(cfg, vocab);
    PromptPool& pool = t.pool_mut();

    std::string ctx = "m00 w01 w02";
    std::string q_text = "find w03 w04";
    Vec q = t.encoder().encode(ctx, q_text).values;

    pool.ensure_task(1, q);  // key exactly at the query
    pool.ensure_task(2, unit_axis(static_cast<std::size_t>(cfg.query_dim), 0));
    t.restore_learned({1, 2});

    SUBCASE("inside any fixed boundary routes to the nearest task") {
        auto [choice, sel] = t.detect_and_route(ctx, q_text);
        CHECK(choice.kind == TaskChoiceKind::Inferred);
        CHECK(choice.task_id == 1);
    }
    SUBCASE("outside every boundary routes to the unseen prompt of the format") {
        // move both keys to the antipode: distance 2 > 0.35
        for (int id : {1, 2}) {
            Param& kp = pool.task_key_param(id);
            for (std::size_t d = 0; d < kp.value.cols; ++d) kp.value.at(0, d) = -q[d];
        }
        auto [choice, sel] = t.detect_and_route(ctx, q_text);
        CHECK(choice.kind == TaskChoiceKind::Unseen);
        CHECK(choice.format == Format::Extractive);
    }
    SUBCASE("fixed boundary is strict: distance just above 0.35 is unseen") {
        // place keys at cosine 0.64 to q (distance 0.36)
        Vec other = unit_axis(static_cast<std::size_t>(cfg.query_dim), 1);
        double proj = dot(other, q);
        for (std::size_t d = 0; d < other.size(); ++d) other[d] -= proj * q[d];
        normalize_in_place(other);
        for (int id : {1, 2}) {
            Param& kp = pool.task_key_param(id);
            for (std::size_t d = 0; d < kp.value.cols; ++d)
                kp.value.at(0, d) = 0.64 * q[d] + std::sqrt(1.0 - 0.64 * 0.64) * other[d];
        }
        auto [choice, sel] = t.detect_and_route(ctx, q_text);
        CHECK(choice.kind == TaskChoiceKind::Unseen);
    }
    SUBCASE("adaptive boundaries override the fixed default") {
        t.restore_boundaries({{1, 0.001}, {2, 0.001}}, true);
        auto [choice, sel] = t.detect_and_route(ctx, q_text);
        CHECK(choice.kind == TaskChoiceKind::Inferred);
        t.restore_boundaries({{1, 1e-9}, {2, 1e-9}}, true);
        // push key 1 slightly off the query
        Param& kp = pool.task_key_param(1);
        kp.value.at(0, 0) += 0.01;
        normalize_in_place(kp.value.row(0), kp.value.cols);
        auto [choice2, sel2] = t.detect_and_route(ctx, q_text);
        CHECK(choice2.kind == TaskChoiceKind::Unseen);
    }
}

TEST_CASE("runner end to end with reports and resume guard") {
    RunConfig cfg = tiny_config();
    cfg.seed = 42;
    fs::path dir = fs::temp_directory_path() / "hpqa_run_a";
    fs::path dir2 = fs::temp_directory_path() / "hpqa_run_b";
    fs::remove_all(dir);
    fs::remove_all(dir2);
    std::string spec = "spec:n_seen=3,n_unseen=1,samples_per_split=8,vocab_size=32,seed=5";

    auto r1 = cmd_train(cfg, spec, dir.string());
    CHECK(fs::exists(dir / "config.txt"));
    CHECK(fs::exists(dir / "stream.jsonl"));
    CHECK(fs::exists(dir / "matrix.csv"));
    CHECK(fs::exists(dir / "log.jsonl"));
    CHECK(fs::exists(dir / "report.json"));
    CHECK(fs::exists(dir / "ckpt_final" / "manifest.json"));
    CHECK(r1.matrix.rows.size() == 3);
    CHECK(r1.matrix.task_names.size() == 4);
    CHECK(!r1.report["f_seen"].is_null());

    SUBCASE("rerunning the same directory without force fails") {
        CHECK_THROWS_WITH_AS(cmd_train(cfg, spec, dir.string()), doctest::Contains("force"),
                             ValidationError);
    }
    SUBCASE("identical second invocation is byte-identical") {
        auto r2 = cmd_train(cfg, spec, dir2.string());
        auto bytes = [](const fs::path& p) {
            std::ifstream in(p, std::ios::binary);
            return std::string((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
        };
        CHECK(bytes(dir / "matrix.csv") == bytes(dir2 / "matrix.csv"));
        CHECK(checkpoint_digest((dir / "ckpt_final").string()) ==
              checkpoint_digest((dir2 / "ckpt_final").string()));
    }
    SUBCASE("eval on the final checkpoint reproduces the report") {
        auto ev = cmd_eval((dir / "ckpt_final").string(), (dir / "stream.jsonl").string());
        CHECK(ev["a_seen"].get<double>() ==
              doctest::Approx(r1.report["a_seen"].get<double>()).epsilon(1e-12));
        CHECK(!ev["f_seen"].is_null());
    }
    SUBCASE("report aggregates a single run to itself") {
        auto rep = cmd_report({dir.string()}, "");
        CHECK(rep["a_seen"].get<double>() ==
              doctest::Approx(r1.report["a_seen"].get<double>()).epsilon(1e-12));
        CHECK(rep["runs"].get<int>() == 1);
    }
    SUBCASE("incompatible configs are rejected by report") {
        RunConfig other = cfg;
        other.lr = 1e-4;
        cmd_train(other, spec, dir2.string());
        CHECK_THROWS_WITH_AS(cmd_report({dir.string(), dir2.string()}, ""),
                             doctest::Contains("lr"), ValidationError);
    }
    SUBCASE("resume refuses a differing config") {
        RunConfig other = cfg;
        other.epochs = 1;
        CHECK_THROWS_WITH_AS(cmd_train(other, spec, dir.string(), false, true),
                             doctest::Contains("resume mismatch"), ValidationError);
    }
    SUBCASE("multitask produces a single-row matrix and no forgetting value") {
        RunConfig mt = cfg;
        mt.baseline = BaselineMode::Multitask;
        auto rm = cmd_train(mt, spec, dir2.string());
        CHECK(rm.matrix.rows.size() == 1);
        CHECK(rm.report["f_seen"].is_null());
    }
}
