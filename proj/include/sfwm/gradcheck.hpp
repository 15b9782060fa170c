#ifndef SFWM_GRADCHECK_HPP
#define SFWM_GRADCHECK_HPP

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sfwm/graph.hpp"
#include "sfwm/rng.hpp"

namespace sfwm {

// Finite-difference verification of the reverse-mode gradients, always in
// 64-bit. Central differences with h = 1e-5 against the analytic sweep.

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = 1e-4;
    bool all_pass = true;
};

namespace detail {

using DBuilder =
    std::function<Graph<double>::Var(Graph<double>&, const std::map<std::string, Mat<double>>&)>;

inline double loss_value(const DBuilder& build, const std::map<std::string, Mat<double>>& inputs) {
    Graph<double> g;
    auto loss = build(g, inputs);
    return g.value(loss).v[0];
}

// Max relative error between analytic and central-difference gradients over
// every entry of every input.
inline double fd_check(const DBuilder& build, std::map<std::string, Mat<double>> inputs,
                       double corrupt = 0.0) {
    Graph<double> g;
    auto loss = build(g, inputs);
    g.backward(loss);
    auto grads = g.collect_grads();

    const double h = 1e-5;
    double worst = 0.0;
    for (auto& [name, x] : inputs) {
        const Mat<double>& ga = grads.at(name);
        for (size_t i = 0; i < x.v.size(); ++i) {
            const double keep = x.v[i];
            x.v[i] = keep + h;
            const double lp = loss_value(build, inputs);
            x.v[i] = keep - h;
            const double lm = loss_value(build, inputs);
            x.v[i] = keep;
            const double fd = (lp - lm) / (2.0 * h);
            const double ad = ga.v[i] + corrupt;
            const double rel = std::abs(ad - fd) / std::max(1e-6, std::abs(fd));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace detail

// One randomly composed graph (at most 5 intermediate nodes) per seed.
inline double check_composite_graph(uint64_t seed) {
    Rng rng(seed);
    std::map<std::string, Mat<double>> inputs;
    inputs["a"] = rng.normal_mat<double>(3, 4);
    inputs["b"] = rng.normal_mat<double>(4, 3);
    inputs["c"] = rng.normal_mat<double>(1, 4);
    std::vector<int> ops;
    for (int i = 0; i < 4; ++i) ops.push_back(static_cast<int>(rng.index(8)));

    Mat<double> mix = rng.normal_mat<double>(3, 3);

    detail::DBuilder build = [ops, mix](Graph<double>& g, const std::map<std::string, Mat<double>>& in) {
        auto a = g.param("a", in.at("a"));
        auto b = g.param("b", in.at("b"));
        auto c = g.param("c", in.at("c"));
        auto x = g.matmul_op(a, b);  // 3x3
        auto y = g.matmul_op(x, g.transpose_op(g.matmul_op(g.repeat_rows(c, 3), b)));  // 3x3
        auto h = g.add(x, y);
        for (int op : ops) {
            switch (op) {
                case 0: h = g.tanh_op(h); break;
                case 1: h = g.gelu(h); break;
                case 2: h = g.sigmoid(h); break;
                case 3: h = g.silu(h); break;
                case 4: h = g.softmax(h); break;
                case 5: h = g.layer_norm(h); break;
                case 6: h = g.scale(h, 0.7); break;
                case 7: h = g.mul(h, h); break;
            }
        }
        // constant mix so row-normalizing ops cannot leave the loss flat
        return g.mean_sq(g.matmul_op(h, g.input(mix)));
    };
    return detail::fd_check(build, inputs);
}

// Every primitive gets its own small check; `corrupt_primitive` perturbs the
// analytic gradient of the named check (negative-control fixture).
inline GradCheckReport run_gradient_checks(uint64_t seed, const std::string& corrupt_primitive = "") {
    Rng rng(seed);
    GradCheckReport report;

    auto a23 = rng.normal_mat<double>(2, 3);
    auto b34 = rng.normal_mat<double>(3, 4);
    auto c23 = rng.normal_mat<double>(2, 3);
    auto r13 = rng.normal_mat<double>(1, 3);
    auto m33 = rng.normal_mat<double>(3, 3);

    using G = Graph<double>;
    struct Case {
        std::string name;
        detail::DBuilder build;
        std::map<std::string, Mat<double>> inputs;
    };

    auto P = [](G& g, const std::map<std::string, Mat<double>>& in, const char* k) {
        return g.param(k, in.at(k));
    };

    std::vector<Case> cases;
    cases.push_back({"matmul",
                     [P](G& g, const auto& in) { return g.mean_sq(g.matmul_op(P(g, in, "a"), P(g, in, "b"))); },
                     {{"a", a23}, {"b", b34}}});
    cases.push_back({"transpose",
                     [P](G& g, const auto& in) { return g.mean_sq(g.transpose_op(P(g, in, "a"))); },
                     {{"a", a23}}});
    cases.push_back({"add",
                     [P](G& g, const auto& in) { return g.mean_sq(g.add(P(g, in, "a"), P(g, in, "c"))); },
                     {{"a", a23}, {"c", c23}}});
    cases.push_back({"sub",
                     [P](G& g, const auto& in) { return g.mean_sq(g.sub(P(g, in, "a"), P(g, in, "c"))); },
                     {{"a", a23}, {"c", c23}}});
    cases.push_back({"mul",
                     [P](G& g, const auto& in) { return g.mean_sq(g.mul(P(g, in, "a"), P(g, in, "c"))); },
                     {{"a", a23}, {"c", c23}}});
    cases.push_back({"add_rowvec",
                     [P](G& g, const auto& in) { return g.mean_sq(g.add_rowvec(P(g, in, "a"), P(g, in, "r"))); },
                     {{"a", a23}, {"r", r13}}});
    cases.push_back({"mul_rowvec",
                     [P](G& g, const auto& in) { return g.mean_sq(g.mul_rowvec(P(g, in, "a"), P(g, in, "r"))); },
                     {{"a", a23}, {"r", r13}}});
    cases.push_back({"repeat_rows",
                     [P](G& g, const auto& in) { return g.mean_sq(g.repeat_rows(P(g, in, "r"), 4)); },
                     {{"r", r13}}});
    cases.push_back({"mean_rows",
                     [P](G& g, const auto& in) { return g.mean_sq(g.mean_rows(P(g, in, "a"))); },
                     {{"a", a23}}});
    cases.push_back({"scale",
                     [P](G& g, const auto& in) { return g.mean_sq(g.scale(P(g, in, "a"), -1.3)); },
                     {{"a", a23}}});
    cases.push_back({"add_const",
                     [P](G& g, const auto& in) { return g.mean_sq(g.add_const(P(g, in, "a"), 0.4)); },
                     {{"a", a23}}});
    cases.push_back({"tanh",
                     [P](G& g, const auto& in) { return g.mean_sq(g.tanh_op(P(g, in, "a"))); },
                     {{"a", a23}}});
    cases.push_back({"gelu",
                     [P](G& g, const auto& in) { return g.mean_sq(g.gelu(P(g, in, "a"))); },
                     {{"a", a23}}});
    cases.push_back({"sigmoid",
                     [P](G& g, const auto& in) { return g.mean_sq(g.sigmoid(P(g, in, "a"))); },
                     {{"a", a23}}});
    cases.push_back({"silu",
                     [P](G& g, const auto& in) { return g.mean_sq(g.silu(P(g, in, "a"))); },
                     {{"a", a23}}});
    cases.push_back({"softmax",
                     [P, m33](G& g, const auto& in) {
                         return g.mean_sq(g.matmul_op(g.softmax(P(g, in, "a")), g.input(m33)));
                     },
                     {{"a", a23}}});
    cases.push_back({"layer_norm",
                     [P, m33](G& g, const auto& in) {
                         return g.mean_sq(g.matmul_op(g.layer_norm(P(g, in, "a")), g.input(m33)));
                     },
                     {{"a", a23}}});
    cases.push_back({"slice_rows",
                     [P](G& g, const auto& in) { return g.mean_sq(g.slice_rows(P(g, in, "b"), 1, 3)); },
                     {{"b", b34}}});
    cases.push_back({"slice_cols",
                     [P](G& g, const auto& in) { return g.mean_sq(g.slice_cols(P(g, in, "b"), 1, 3)); },
                     {{"b", b34}}});
    cases.push_back({"concat_rows",
                     [P](G& g, const auto& in) {
                         return g.mean_sq(g.concat_rows(P(g, in, "a"), P(g, in, "c")));
                     },
                     {{"a", a23}, {"c", c23}}});
    cases.push_back({"concat_cols",
                     [P](G& g, const auto& in) {
                         return g.mean_sq(g.concat_cols(P(g, in, "a"), P(g, in, "c")));
                     },
                     {{"a", a23}, {"c", c23}}});
    cases.push_back({"mean_sq",
                     [P](G& g, const auto& in) { return g.scale(g.mean_sq(P(g, in, "a")), 2.0); },
                     {{"a", a23}}});

    for (auto& c : cases) {
        const double corrupt = (c.name == corrupt_primitive) ? 1e-2 : 0.0;
        GradCheckEntry e;
        e.name = c.name;
        e.max_rel_err = detail::fd_check(c.build, c.inputs, corrupt);
        e.pass = e.max_rel_err < report.tolerance;
        report.all_pass = report.all_pass && e.pass;
        report.entries.push_back(std::move(e));
    }

    GradCheckEntry comp;
    comp.name = "composite";
    comp.max_rel_err = check_composite_graph(seed);
    comp.pass = comp.max_rel_err < report.tolerance;
    report.all_pass = report.all_pass && comp.pass;
    report.entries.push_back(std::move(comp));
    return report;
}

}  // namespace sfwm

#endif
