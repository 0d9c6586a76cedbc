// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <doctest.h>

#include "nbfusion/errors.hpp"
#include "nbfusion/grad_check.hpp"
#include "nbfusion/rng.hpp"
#include "nbfusion/tape.hpp"

using namespace nbf;

TEST_SUITE_BEGIN("diffcore");

TEST_CASE("affine identity and direct arithmetic") {
    Tape t;
    auto x = t.input(Tensor::row({1.0, 2.0}));
    auto w_id = t.input(Tensor::matrix(2, 2, {1, 0, 0, 1}));
    auto b0 = t.input(Tensor({2}));
    const Tensor& y = t.value(t.affine(x, w_id, b0));
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 2.0);

    auto w = t.input(Tensor::matrix(2, 2, {1, 1, 0, 1}));
    auto b = t.input(Tensor::row({1.0, 0.0}));
    auto x2 = t.input(Tensor::row({1.0, 1.0}));
    const Tensor& y2 = t.value(t.affine(x2, w, b));
    CHECK(y2[0] == 3.0);
    CHECK(y2[1] == 1.0);
}

TEST_CASE("affine gradient wrt bias of summed output is all ones") {
    Tape t;
    auto x = t.input(Tensor::row({0.5, -1.5, 2.0}));
    auto w = t.param("w", Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    auto b = t.param("b", Tensor::row({0.0, 0.0}));
    auto loss = t.sum(t.affine(x, w, b));
    GradMap grads = t.backward(loss);
    for (double g : grads.at("b").vec()) CHECK(g == 1.0);
}

TEST_CASE("affine rejects shape mismatches") {
    Tape t;
    auto x = t.input(Tensor::row({1.0, 2.0, 3.0}));
    auto w = t.input(Tensor::matrix(2, 2, {1, 0, 0, 1}));
    auto b = t.input(Tensor({2}));
    CHECK_THROWS_AS(t.affine(x, w, b), ShapeError);
}

TEST_CASE("activations: definitions and algebraic identities") {
    Tape t;
    auto x = t.input(Tensor::row({0.0, -2.0, 3.0, std::log(3.0)}));
    const Tensor& s = t.value(t.sigmoid(x));
    CHECK(s[0] == 0.5);
    CHECK(s[3] == doctest::Approx(0.75).epsilon(1e-12));
    const Tensor& r = t.value(t.relu(x));
    CHECK(r[1] == 0.0);
    CHECK(r[2] == 3.0);
    for (double v : s.vec()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("softmax cross entropy: uniform, saturated, gradient oracle") {
    Tape t;
    auto uniform = t.input(Tensor::row({0.7, 0.7, 0.7}));
    CHECK(t.value(t.softmax_cross_entropy(uniform, 1))[0] ==
          doctest::Approx(std::log(3.0)).epsilon(1e-14));

    auto saturated = t.input(Tensor::row({30.0, 0.0, 0.0}));
    CHECK(t.value(t.softmax_cross_entropy(saturated, 0))[0] < 1e-9);
    CHECK(t.value(t.softmax_cross_entropy(saturated, 0))[0] >= 0.0);

    auto bad = t.input(Tensor::row({0.0, 1.0}));
    CHECK_THROWS_AS(t.softmax_cross_entropy(bad, 2), IndexError);

    // Analytic gradient vs central differences at random logits.
    Rng rng(99);
    Tensor logits({5});
    for (double& v : logits.vec()) v = rng.normal();
    const TapeFn fn = [](Tape& tape, const ParamMap& p) {
        return tape.softmax_cross_entropy(tape.param("logits", p.at("logits")), 2);
    };
    GradCheckOptions opts;
    opts.tolerance = 1e-6;
    const auto report = grad_check(fn, {{"logits", logits}}, opts);
    CHECK(report.pass);
}

TEST_CASE("cross entropy is nonnegative and matches -log p") {
    Rng rng(4242);
    for (int it = 0; it < 200; ++it) {
        const std::size_t k = 2 + rng.index(5);
        Tensor logits({k});
        for (double& v : logits.vec()) v = rng.normal(0.0, 3.0);
        const std::size_t label = rng.index(k);
        Tape t;
        const double loss = t.value(t.softmax_cross_entropy(t.input(logits), label))[0];
        CHECK(loss >= 0.0);
        double mx = logits[0];
        for (double v : logits.vec()) mx = std::max(mx, v);
        double sum = 0.0;
        for (double v : logits.vec()) sum += std::exp(v - mx);
        const double expected = -std::log(std::exp(logits[label] - mx) / sum);
        CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("affine linearity with zero bias") {
    Rng rng(7);
    Tensor w({4, 3});
    for (double& v : w.vec()) v = rng.normal();
    Tensor x1({3}), x2({3});
    for (double& v : x1.vec()) v = rng.normal();
    for (double& v : x2.vec()) v = rng.normal();
    const double a = 0.37, b = -1.91;

    Tape t;
    auto wv = t.input(w);
    auto zero = t.input(Tensor({4}));
    Tensor combo({3});
    for (std::size_t i = 0; i < 3; ++i) combo[i] = a * x1[i] + b * x2[i];
    const Tensor& lhs = t.value(t.affine(t.input(combo), wv, zero));
    const Tensor& y1 = t.value(t.affine(t.input(x1), wv, zero));
    const Tensor& y2 = t.value(t.affine(t.input(x2), wv, zero));
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(lhs[i] == doctest::Approx(a * y1[i] + b * y2[i]).epsilon(1e-12));
    }
}

TEST_CASE("forward passes are deterministic") {
    Rng rng(11);
    Tensor w({6, 6}), x({6});
    for (double& v : w.vec()) v = rng.normal();
    for (double& v : x.vec()) v = rng.normal();
    const auto run = [&]() {
        Tape t;
        auto h = t.sigmoid(t.affine(t.input(x), t.input(w), t.input(Tensor({6}))));
        return t.value(t.softmax_cross_entropy(h, 3))[0];
    };
    CHECK(run() == run());
}

TEST_CASE("grad_check known cases") {
    // d/dx sigmoid(0) = 0.25
    const TapeFn sig = [](Tape& t, const ParamMap& p) {
        return t.sigmoid(t.param("x", p.at("x")));
    };
    GradCheckOptions opts;
    opts.tolerance = 1e-6;
    const auto rep = grad_check(sig, {{"x", Tensor::scalar(0.0)}}, opts);
    CHECK(rep.pass);
    CHECK(rep.per_param[0].max_rel_err < 1e-6);

    // Constant function: gradients exactly zero.
    const TapeFn constant = [](Tape& t, const ParamMap& p) {
        t.param("unused", p.at("unused"));
        return t.input(Tensor::scalar(3.5));
    };
    Tape tape;
    auto v = tape.param("unused", Tensor::row({1.0, 2.0}));
    (void)v;
    const auto rep2 = grad_check(constant, {{"unused", Tensor::row({1.0, 2.0})}}, {});
    CHECK(rep2.pass);
    CHECK(rep2.max_rel_err == 0.0);
}

TEST_CASE("grad_check rejects bad inputs") {
    const TapeFn fn = [](Tape& t, const ParamMap& p) {
        return t.sum(t.param("x", p.at("x")));
    };
    GradCheckOptions opts;
    opts.eps = 0.0;
    CHECK_THROWS_AS(grad_check(fn, {{"x", Tensor::scalar(1.0)}}, opts), ValueError);

    const TapeFn nonfinite = [](Tape& t, const ParamMap& p) {
        t.param("x", p.at("x"));
        return t.input(Tensor::scalar(std::nan("")));
    };
    CHECK_THROWS_AS(grad_check(nonfinite, {{"x", Tensor::scalar(1.0)}}, {}), EvalError);
}

TEST_CASE("composite gradients through every batched primitive") {
    Rng rng(31337);
    ParamMap params;
    Tensor w({3, 4}), s({5}), table({6, 4}), v({3});
    for (double& x : w.vec()) x = rng.normal();
    for (double& x : s.vec()) x = rng.uniform(0.2, 1.5);
    for (double& x : table.vec()) x = rng.normal();
    for (double& x : v.vec()) x = rng.normal();
    params["w"] = w;
    params["s"] = s;
    params["table"] = table;
    params["v"] = v;
    Tensor input({5, 4});
    for (double& x : input.vec()) x = rng.normal();
    const std::vector<std::size_t> labels = {0, 2, 1, 0, 2};

    const TapeFn fn = [&](Tape& t, const ParamMap& p) {
        auto wv = t.param("w", p.at("w"));
        auto sv = t.param("s", p.at("s"));
        auto tab = t.param("table", p.at("table"));
        auto vv = t.param("v", p.at("v"));
        auto x = t.input(input);
        auto emb = t.embed_rows(tab, {1, 0, 5, 2, 4});           // [5 x 4]
        auto mixed = t.add_row_vector(t.add(x, emb), t.take_row(tab, 3));
        auto scaled = t.row_scale(mixed, sv);                    // [5 x 4]
        auto att = t.softmax_rows(t.matmul_nt(scaled, scaled));  // [5 x 5]
        auto ctx = t.matmul(att, scaled);                        // [5 x 4]
        auto logits = t.affine(ctx, wv, vv);                     // [5 x 3]
        auto sliced = t.concat_cols(t.slice_cols(logits, 0, 2), t.slice_cols(logits, 2, 1));
        auto ce = t.softmax_cross_entropy_mean(sliced, labels);
        return t.add(ce, t.scale(t.sum(t.one_minus(t.sigmoid(t.reshape(ctx, {20})))), 0.01));
    };
    const auto report = grad_check(fn, params, {});
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-4);
}

TEST_SUITE_END();
