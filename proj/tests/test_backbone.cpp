#include <doctest.h>

#include <cmath>

#include "hpqa/backbone.hpp"
#include "hpqa/config.hpp"
#include "hpqa/error.hpp"
#include "hpqa/rng.hpp"

using namespace hpqa;

namespace {

ComposedPrompt view_of(Param& p) {
    ComposedPrompt c;
    c.dim = static_cast<int>(p.value.cols);
    for (std::size_t r = 0; r < p.value.rows; ++r) {
        c.rows.push_back(p.value.row(r));
        c.grad_rows.push_back(p.grad.row(r));
    }
    return c;
}

}  // namespace

TEST_CASE("cross entropy closed forms") {
    Matrix logits(1, 16);
    CHECK(cross_entropy_mean(logits, {5}) == doctest::Approx(std::log(16.0)).epsilon(1e-12));
    Matrix two(1, 2);
    CHECK(cross_entropy_mean(two, {1}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    Matrix confident(1, 4);
    confident.at(0, 2) = 50.0;
    CHECK(cross_entropy_mean(confident, {2}) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("forward and decode are deterministic") {
    BackboneConfig cfg{16, 8, 2, 16, 64};
    Seq2SeqModel m(cfg, 5);
    Param prompt("p", 2, 8);
    auto pv = view_of(prompt);
    std::vector<int> input{3, 5, 7};
    std::vector<int> target{4, 2};
    auto l1 = m.eval_loss(pv, input, target);
    auto l2 = m.eval_loss(pv, input, target);
    CHECK(l1.value == l2.value);
    CHECK(l1.token_nll == l2.token_nll);
    auto d1 = m.greedy_decode(pv, input, 4);
    auto d2 = m.greedy_decode(pv, input, 4);
    CHECK(d1 == d2);
    CHECK(m.greedy_decode(pv, input, 1).size() == 1);

    CHECK_THROWS_AS(m.eval_loss(pv, input, {}), ValidationError);
    CHECK_THROWS_AS(m.eval_loss(pv, {99}, target), RuntimeFault);
}

TEST_CASE("backbone analytic gradients match finite differences") {
    BackboneConfig cfg{16, 8, 2, 16, 64};
    Seq2SeqModel m(cfg, 13);
    Param prompt("p", 2, 8);
    Rng rng(21);
    for (auto& v : prompt.value.data) v = rng.uniform(-0.2, 0.2);
    std::vector<int> input{3, 5};
    std::vector<int> target{4, 2};

    m.visit_params([](Param& p) { p.zero_grad(); });
    prompt.zero_grad();
    m.forward_loss(view_of(prompt), input, target, 1.0);

    const double h = 1e-5;
    double worst = 0.0;
    auto check_param = [&](Param& p) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < p.value.data.size(); ++i) {
            double keep = p.value.data[i];
            p.value.data[i] = keep + h;
            double up = m.eval_loss(view_of(prompt), input, target).value;
            p.value.data[i] = keep - h;
            double dn = m.eval_loss(view_of(prompt), input, target).value;
            p.value.data[i] = keep;
            double fd = (up - dn) / (2.0 * h);
            num += (fd - p.grad.data[i]) * (fd - p.grad.data[i]);
            den += fd * fd;
        }
        double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-10);
        worst = std::max(worst, rel);
    };
    m.visit_params(check_param);
    check_param(prompt);
    INFO("worst tensor relative gradient error: " << worst);
    CHECK(worst < 1e-3);
}

TEST_CASE("adamw step behavior") {
    Param p("x", 1, 1);
    p.value.at(0, 0) = 1.5;
    AdamConfig cfg;
    cfg.lr = 0.01;
    SUBCASE("zero gradient and zero weight decay leave parameters unchanged") {
        adamw_step(p, cfg);
        CHECK(p.value.at(0, 0) == 1.5);
    }
    SUBCASE("non-finite gradient aborts with the tensor name") {
        p.grad.at(0, 0) = std::nan("");
        CHECK_THROWS_WITH_AS(adamw_step(p, cfg), doctest::Contains("x"), RuntimeFault);
    }
    SUBCASE("quadratic fixture descends strictly for 100 steps") {
        p.value.at(0, 0) = 0.0;
        auto loss = [&] { return (p.value.at(0, 0) - 3.0) * (p.value.at(0, 0) - 3.0); };
        double prev = loss();
        for (int t = 0; t < 100; ++t) {
            p.zero_grad();
            p.grad.at(0, 0) = 2.0 * (p.value.at(0, 0) - 3.0);
            adamw_step(p, cfg);
            double cur = loss();
            CHECK(cur < prev);
            prev = cur;
        }
    }
}

TEST_CASE("overfit sanity: 16-sample fixture reaches loss < 0.05 within 500 steps at defaults") {
    RunConfig defaults;
    BackboneConfig cfg{24, defaults.d_model, defaults.n_heads, defaults.d_ff, 64};
    Seq2SeqModel m(cfg, 3);
    Param prompt("p", 4, static_cast<std::size_t>(defaults.d_model));
    Rng rng(4);
    for (auto& v : prompt.value.data) v = rng.uniform(-0.06, 0.06);

    std::vector<std::vector<int>> inputs, targets;
    for (int i = 0; i < 16; ++i) {
        std::vector<int> in;
        for (int t = 0; t < 6; ++t)
            in.push_back(3 + static_cast<int>(rng.uniform_int(21)));
        inputs.push_back(in);
        targets.push_back({3 + static_cast<int>(rng.uniform_int(21)), Vocab::kEos});
    }
    AdamConfig adam{defaults.lr, defaults.beta1, defaults.beta2, defaults.adam_eps,
                    defaults.weight_decay};
    double loss = 1e9;
    int step = 0;
    for (; step < 500 && loss >= 0.05; ++step) {
        loss = 0.0;
        for (int i = 0; i < 16; ++i)
            loss += m.forward_loss(view_of(prompt), inputs[static_cast<std::size_t>(i)],
                                   targets[static_cast<std::size_t>(i)], 1.0 / 16.0)
                        .value /
                    16.0;
        m.visit_params([&](Param& p) {
            adamw_step(p, adam);
            p.zero_grad();
        });
        adamw_step(prompt, adam);
        prompt.zero_grad();
    }
    INFO("overfit loss " << loss << " after " << step << " steps");
    CHECK(loss < 0.05);
}

TEST_CASE("prompt conditioning changes outputs after conflicting training") {
    BackboneConfig cfg{16, 16, 2, 32, 64};
    Seq2SeqModel m(cfg, 9);
    Param prompt_a("a", 2, 16), prompt_b("b", 2, 16);
    Rng rng(2);
    for (auto& v : prompt_a.value.data) v = rng.uniform(-0.1, 0.1);
    for (auto& v : prompt_b.value.data) v = rng.uniform(-0.1, 0.1);
    std::vector<int> input{5, 6, 7};
    std::vector<int> want_a{3, 2};
    std::vector<int> want_b{9, 2};
    AdamConfig adam{3e-3, 0.9, 0.999, 1e-8, 0.0};
    for (int step = 0; step < 300; ++step) {
        m.forward_loss(view_of(prompt_a), input, want_a, 0.5);
        m.forward_loss(view_of(prompt_b), input, want_b, 0.5);
        m.visit_params([&](Param& p) {
            adamw_step(p, adam);
            p.zero_grad();
        });
        adamw_step(prompt_a, adam);
        prompt_a.zero_grad();
        adamw_step(prompt_b, adam);
        prompt_b.zero_grad();
    }
    auto out_a = m.greedy_decode(view_of(prompt_a), input, 4);
    auto out_b = m.greedy_decode(view_of(prompt_b), input, 4);
    CHECK(out_a != out_b);
    CHECK(out_a == want_a);
    CHECK(out_b == want_b);
}
