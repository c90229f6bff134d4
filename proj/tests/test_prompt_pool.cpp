#include <doctest.h>

#include <cmath>

#include "hpqa/error.hpp"
#include "hpqa/prompt_pool.hpp"
#include "hpqa/rng.hpp"

using namespace hpqa;

namespace {
Vec unit_axis(std::size_t dim, std::size_t axis) {
    Vec v(dim, 0.0);
    v[axis] = 1.0;
    return v;
}
}  // namespace

TEST_CASE("pool initialization shape and determinism") {
    PoolConfig cfg;  // defaults: 20/40/40/20, M=30, M'=5
    PromptPool a(cfg, 7);
    PromptPool b(cfg, 7);
    PromptPool c(cfg, 8);
    CHECK(a.task_count() == 0);
    CHECK(a.meta_key_matrix().rows == 30);
    for (std::size_t i = 0; i < 30; ++i)
        CHECK(std::abs(norm2(a.meta_key_matrix().row(i), 64) - 1.0) < 1e-9);
    CHECK(a.meta_key_matrix().data == b.meta_key_matrix().data);
    CHECK(a.meta_key_matrix().data != c.meta_key_matrix().data);

    auto composed = a.compose(Format::Extractive, TaskChoice::unseen(Format::Extractive), {0, 1, 2, 3, 4});
    CHECK(composed.size() == 20 + 40 + 40 + 5 * 20);

    PoolConfig bad = cfg;
    bad.meta_select = 31;
    CHECK_THROWS_AS(PromptPool(bad, 1), ValidationError);
}

TEST_CASE("meta selection picks the M' nearest with index tie-break") {
    PoolConfig cfg;
    cfg.meta_count = 6;
    cfg.meta_select = 1;
    cfg.query_dim = 8;
    cfg.d_model = 8;
    PromptPool pool(cfg, 3);
    Param& keys = pool.meta_keys_param();
    for (std::size_t i = 0; i < 6; ++i) {
        Vec v = unit_axis(8, i);
        std::copy(v.begin(), v.end(), keys.value.row(i));
    }
    Vec q = unit_axis(8, 4);
    SUBCASE("exact hit") {
        auto sel = pool.select_meta(q);
        REQUIRE(sel.size() == 1);
        CHECK(sel[0] == 4);
    }
    SUBCASE("ties break to lowest index") {
        // all keys orthogonal to q -> equidistant
        Vec q2 = unit_axis(8, 7);
        std::vector<double> dists;
        auto sel = pool.select_meta(q2, &dists);
        REQUIRE(sel.size() == 1);
        CHECK(sel[0] == 0);
        CHECK(dists[0] == doctest::Approx(1.0));
    }
    SUBCASE("M' = M returns everything ascending") {
        PoolConfig all = cfg;
        all.meta_select = 6;
        PromptPool p2(all, 3);
        Vec q3 = unit_axis(8, 1);
        auto sel = p2.select_meta(q3);
        CHECK(sel == std::vector<int>{0, 1, 2, 3, 4, 5});
    }
}

TEST_CASE("task inference and lazy task keys") {
    PoolConfig cfg;
    cfg.query_dim = 8;
    cfg.d_model = 8;
    PromptPool pool(cfg, 5);
    CHECK_THROWS_AS(pool.infer_task(unit_axis(8, 0)), RuntimeFault);

    pool.ensure_task(1, unit_axis(8, 0));
    pool.ensure_task(2, unit_axis(8, 1));
    CHECK(pool.task_count() == 2);
    CHECK(pool.task_key(1) == unit_axis(8, 0));

    auto [id, d] = pool.infer_task(unit_axis(8, 1));
    CHECK(id == 2);
    CHECK(d == doctest::Approx(0.0).epsilon(1e-12));

    // distances 0.3 vs 0.6 -> task 1
    Vec q(8, 0.0);
    q[0] = 0.7;
    q[1] = 0.4;
    normalize_in_place(q);
    auto [id2, d2] = pool.infer_task(q);
    CHECK(id2 == 1);

    // equidistant -> lowest id
    Vec mid(8, 0.0);
    mid[0] = mid[1] = 1.0;
    normalize_in_place(mid);
    CHECK(pool.infer_task(mid).first == 1);

    // ensure_task is idempotent
    Vec before = pool.task_key(1);
    pool.ensure_task(1, unit_axis(8, 5));
    CHECK(pool.task_key(1) == before);
}

TEST_CASE("prompt composition layout") {
    PoolConfig cfg;
    cfg.d_model = 16;
    cfg.query_dim = 8;
    PromptPool pool(cfg, 11);
    pool.ensure_task(1, unit_axis(8, 0));

    SUBCASE("gold task rows come from the task prompt") {
        auto composed = pool.compose(Format::Abstractive, TaskChoice::gold(1), {2, 7});
        CHECK(composed.size() == 20 + 40 + 40 + 2 * 20);
        Matrix m = composed.materialize();
        CHECK(m.cols == 16);
    }
    SUBCASE("unseen choice splices the per-format unseen prompt at rows 60..99") {
        auto composed = pool.compose(Format::Extractive, TaskChoice::unseen(Format::Extractive), {});
        REQUIRE(composed.size() == 100);
        auto gold = pool.compose(Format::Extractive, TaskChoice::gold(1), {});
        bool differs = false;
        for (std::size_t r = 60; r < 100; ++r)
            if (composed.rows[r] != gold.rows[r]) differs = true;
        CHECK(differs);
        for (std::size_t r = 0; r < 60; ++r) CHECK(composed.rows[r] == gold.rows[r]);
    }
    SUBCASE("no meta indices means the 100-row prompt") {
        auto composed = pool.compose(Format::MultiChoice, TaskChoice::gold(1), {});
        CHECK(composed.size() == 100);
    }
    SUBCASE("missing task prompt errors") {
        CHECK_THROWS_AS(pool.compose(Format::Extractive, TaskChoice::gold(9), {}), RuntimeFault);
    }
    SUBCASE("meta indices must ascend") {
        CHECK_THROWS_AS(pool.compose(Format::Extractive, TaskChoice::gold(1), {3, 1}),
                        RuntimeFault);
    }
    SUBCASE("disabled tiers drop their rows") {
        PoolConfig ab = cfg;
        ab.use_meta = false;
        PromptPool p2(ab, 11);
        p2.ensure_task(1, unit_axis(8, 0));
        CHECK(p2.compose(Format::Extractive, TaskChoice::gold(1), {}).size() == 100);
        PoolConfig ab2 = cfg;
        ab2.use_general = false;
        ab2.use_format = false;
        PromptPool p3(ab2, 11);
        p3.ensure_task(1, unit_axis(8, 0));
        CHECK(p3.compose(Format::Extractive, TaskChoice::gold(1), {0}).size() == 40 + 20);
    }
}

TEST_CASE("composition aliases pool storage") {
    PoolConfig cfg;
    cfg.d_model = 8;
    cfg.query_dim = 8;
    cfg.meta_select = 2;
    PromptPool pool(cfg, 2);
    pool.ensure_task(3, unit_axis(8, 2));
    auto composed = pool.compose(Format::Extractive, TaskChoice::gold(3), {1, 5});
    // writing through grad_rows lands in the owning tensors' grad buffers
    for (std::size_t r = 0; r < composed.size(); ++r)
        for (int dcol = 0; dcol < 8; ++dcol) composed.grad_rows[r][dcol] += 1.0;
    std::size_t touched = 0;
    double total = 0.0;
    pool.visit_params([&](Param& p) {
        for (double g : p.grad.data) total += g;
        if (p.name == "pool.meta.2") {
            for (double g : p.grad.data) CHECK(g == 0.0);  // unselected meta prompt
            ++touched;
        }
        if (p.name == "pool.meta.1") {
            for (double g : p.grad.data) CHECK(g == 1.0);
            ++touched;
        }
    });
    CHECK(touched == 2);
    CHECK(total == doctest::Approx(8.0 * composed.size()));
}

TEST_CASE("key renormalization restores unit norms") {
    PoolConfig cfg;
    cfg.query_dim = 8;
    cfg.d_model = 8;
    PromptPool pool(cfg, 1);
    pool.ensure_task(1, unit_axis(8, 0));
    pool.meta_keys_param().value.at(0, 0) += 0.5;
    pool.task_key_param(1).value.at(0, 3) += 0.2;
    pool.renormalize_keys();
    CHECK(std::abs(norm2(pool.meta_keys_param().value.row(0), 8) - 1.0) < 1e-12);
    CHECK(std::abs(norm2(pool.task_key_param(1).value.row(0), 8) - 1.0) < 1e-12);
}
