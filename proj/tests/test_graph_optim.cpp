#include <catch2/catch_amalgamated.hpp>

#include "sfwm/gradcheck.hpp"
#include "sfwm/graph.hpp"
#include "sfwm/optim.hpp"
#include "sfwm/rng.hpp"

using namespace sfwm;

TEST_CASE("linear regression loss and gradient by hand") {
    // loss = mean((W*x - y)^2), W = [[1]], x = [2], y = [0] -> loss 4, dW = 8
    Graph<double> g;
    auto W = g.param("W", Mat<double>::scalar(1.0));
    auto x = g.input(Mat<double>::scalar(2.0));
    auto y = g.input(Mat<double>::scalar(0.0));
    auto loss = g.mean_sq(g.sub(g.matmul_op(W, x), y));
    REQUIRE(g.value(loss).v[0] == Catch::Approx(4.0));
    g.backward(loss);
    REQUIRE(g.collect_grads().at("W").v[0] == Catch::Approx(8.0));
}

TEST_CASE("loss constant in a parameter gives exactly zero gradient") {
    Graph<double> g;
    auto used = g.param("used", Mat<double>::scalar(3.0));
    auto unused = g.param("unused", Mat<double>::scalar(5.0));
    auto loss = g.mean_sq(used);
    g.backward(loss);
    auto grads = g.collect_grads();
    REQUIRE(grads.at("unused").v[0] == 0.0);
    REQUIRE(grads.at("used").v[0] == Catch::Approx(6.0));
    (void)unused;
}

TEST_CASE("random two-layer net matches central finite differences") {
    Rng rng(7);
    auto W1 = rng.normal_mat<double>(4, 8);
    auto b1 = rng.normal_mat<double>(1, 8);
    auto W2 = rng.normal_mat<double>(8, 3);
    auto x = rng.normal_mat<double>(5, 4);
    auto target = rng.normal_mat<double>(5, 3);

    auto build = [&](Graph<double>& g, const std::map<std::string, Mat<double>>& in) {
        auto w1 = g.param("W1", in.at("W1"));
        auto bb = g.param("b1", in.at("b1"));
        auto w2 = g.param("W2", in.at("W2"));
        auto h = g.gelu(g.add_rowvec(g.matmul_op(g.input(x), w1), bb));
        return g.mean_sq(g.sub(g.matmul_op(h, w2), g.input(target)));
    };
    std::map<std::string, Mat<double>> inputs{{"W1", W1}, {"b1", b1}, {"W2", W2}};
    const double worst = sfwm::detail::fd_check(build, inputs);
    REQUIRE(worst < 1e-4);
}

TEST_CASE("gradient suite passes for every primitive") {
    auto report = run_gradient_checks(123);
    for (const auto& e : report.entries) {
        INFO(e.name << " max rel err " << e.max_rel_err);
        CHECK(e.pass);
    }
    REQUIRE(report.all_pass);
}

TEST_CASE("corrupted gradient rule is caught and named") {
    auto report = run_gradient_checks(123, "matmul");
    bool matmul_failed = false;
    for (const auto& e : report.entries)
        if (e.name == "matmul" && !e.pass) matmul_failed = true;
    REQUIRE(matmul_failed);
    REQUIRE_FALSE(report.all_pass);
}

TEST_CASE("non-finite values are reported at the producing op") {
    Graph<float> g;
    auto a = g.input(Mat<float>::scalar(1e30f));
    REQUIRE_THROWS_AS(g.mul(a, a), NumericError);
}

TEST_CASE("adamw single-step recurrences") {
    SECTION("zero gradient, zero decay leaves parameters unchanged") {
        ParamStore<double> s;
        s.add("p", Mat<double>::scalar(1.25));
        std::map<std::string, Mat<double>> grads{{"p", Mat<double>::scalar(0.0)}};
        AdamWConfig cfg;
        cfg.weight_decay = 0.0;
        adamw_step(s, grads, 0.1, cfg);
        REQUIRE(s.params.at("p").v[0] == 1.25);
    }
    SECTION("first step with unit gradient") {
        // p=1, g=1, lr=0.1, wd=0: bias-corrected ratio is 1, p -> ~0.9
        ParamStore<double> s;
        s.add("p", Mat<double>::scalar(1.0));
        std::map<std::string, Mat<double>> grads{{"p", Mat<double>::scalar(1.0)}};
        AdamWConfig cfg;
        cfg.weight_decay = 0.0;
        adamw_step(s, grads, 0.1, cfg);
        REQUIRE(s.params.at("p").v[0] == Catch::Approx(1.0 - 0.1 * (1.0 / (1.0 + 1e-8))).epsilon(1e-12));
    }
    SECTION("decoupled decay with zero gradient") {
        ParamStore<double> s;
        s.add("p", Mat<double>::scalar(1.0));
        std::map<std::string, Mat<double>> grads{{"p", Mat<double>::scalar(0.0)}};
        AdamWConfig cfg;
        cfg.weight_decay = 1e-6;
        adamw_step(s, grads, 1.5e-4, cfg);
        REQUIRE(s.params.at("p").v[0] == Catch::Approx(1.0 - 1.5e-4 * 1e-6 * 1.0).epsilon(1e-15));
    }
    SECTION("shape mismatch is rejected") {
        ParamStore<double> s;
        s.add("p", Mat<double>(2, 2));
        std::map<std::string, Mat<double>> grads{{"p", Mat<double>(2, 3)}};
        REQUIRE_THROWS_AS(adamw_step(s, grads, 0.1), NumericError);
    }
}

TEST_CASE("adamw with zero decay reduces to adam") {
    Rng rng(11);
    ParamStore<double> a, b;
    a.add("w", rng.normal_mat<double>(3, 3));
    b.add("w", a.params.at("w"));
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    Rng gstream(5);
    for (int step = 0; step < 20; ++step) {
        std::map<std::string, Mat<double>> grads{{"w", gstream.normal_mat<double>(3, 3)}};
        adamw_step(a, grads, 1e-2, cfg);
        // plain adam reference
        const double b1 = cfg.beta1, b2 = cfg.beta2;
        b.step += 1;
        auto& p = b.params.at("w");
        auto& m = b.m.at("w");
        auto& v = b.v.at("w");
        for (size_t i = 0; i < p.v.size(); ++i) {
            m.v[i] = b1 * m.v[i] + (1 - b1) * grads.at("w").v[i];
            v.v[i] = b2 * v.v[i] + (1 - b2) * grads.at("w").v[i] * grads.at("w").v[i];
            const double mh = m.v[i] / (1 - std::pow(b1, b.step));
            const double vh = v.v[i] / (1 - std::pow(b2, b.step));
            p.v[i] -= 1e-2 * mh / (std::sqrt(vh) + cfg.eps);
        }
    }
    for (size_t i = 0; i < a.params.at("w").v.size(); ++i)
        REQUIRE(a.params.at("w").v[i] == Catch::Approx(b.params.at("w").v[i]).epsilon(1e-12));
}

TEST_CASE("learning rate schedule") {
    LrSchedule s;
    s.base_lr = 1.5e-4;
    s.warmup_steps = 500;
    s.total_steps = 3000;
    REQUIRE(lr_at(s, 0) == 0.0);
    REQUIRE(lr_at(s, 500) == Catch::Approx(1.5e-4));
    REQUIRE(lr_at(s, 3000) == Catch::Approx(0.0).margin(1e-18));
    // continuity at the warmup boundary
    const double before = lr_at(s, 499);
    const double at = lr_at(s, 500);
    const double after = lr_at(s, 501);
    REQUIRE(std::abs(at - before) < 1e-6);
    REQUIRE(std::abs(after - at) < 1e-6);
    REQUIRE(after < at);
}

TEST_CASE("seeded rng determinism and moments") {
    SECTION("same seed gives identical first draws") {
        Rng a(42), b(42);
        for (int i = 0; i < 1000; ++i) REQUIRE(a.normal() == b.normal());
    }
    SECTION("different seeds diverge within ten draws") {
        Rng a(1), b(2);
        bool differ = false;
        for (int i = 0; i < 10; ++i)
            if (a.uniform() != b.uniform()) differ = true;
        REQUIRE(differ);
    }
    SECTION("normal sample moments at one million draws") {
        Rng rng(9);
        const int n = 1000000;
        double sum = 0.0, sumsq = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = rng.normal();
            sum += x;
            sumsq += x * x;
        }
        const double mean = sum / n;
        const double var = sumsq / n - mean * mean;
        REQUIRE(std::abs(mean) < 0.01);
        REQUIRE(std::abs(var - 1.0) < 0.02);
    }
}
