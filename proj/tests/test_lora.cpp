// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>

#include <doctest.h>

#include "nbfusion/errors.hpp"
#include "nbfusion/grad_check.hpp"
#include "nbfusion/lora.hpp"
#include "nbfusion/optim.hpp"

#include "support/oracles.hpp"

using namespace nbf;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

LoraAdapter random_adapter(std::size_t d, std::size_t k, std::size_t r, Rng& rng) {
    Tensor w0({d, k});
    for (double& v : w0.vec()) v = rng.normal();
    LoraAdapter adapter = LoraAdapter::create(std::move(w0), r, rng);
    for (double& v : adapter.b.vec()) v = rng.normal(0.0, 0.5);
    for (double& v : adapter.a.vec()) v = rng.normal(0.0, 0.5);
    return adapter;
}

}  // namespace

TEST_SUITE_BEGIN("lora");

TEST_CASE("zero update factor reproduces the frozen weight exactly") {
    Rng rng(5);
    Tensor w0({3, 4});
    for (double& v : w0.vec()) v = rng.normal();
    LoraAdapter adapter = LoraAdapter::create(w0, 2, rng);  // B starts at zero
    Tensor x({4});
    for (double& v : x.vec()) v = rng.normal();

    const Tensor y = lora_apply(adapter, x);
    Tensor expected({3});
    for (std::size_t i = 0; i < 3; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 4; ++j) s += w0.at(i, j) * x[j];
        expected[i] = s;
    }
    CHECK(bitwise_equal(y, expected));
    CHECK(bitwise_equal(merge_adapter(adapter), w0));
}

TEST_CASE("rank-1 adapter direct arithmetic") {
    Rng rng(1);
    LoraAdapter adapter = LoraAdapter::create(Tensor::matrix(2, 2, {1, 0, 0, 1}), 1, rng);
    adapter.b = Tensor::matrix(2, 1, {1, 0});
    adapter.a = Tensor::matrix(1, 2, {0, 1});
    const Tensor y = lora_apply(adapter, Tensor::row({0.0, 1.0}));
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 1.0);
}

TEST_CASE("parameter count formula") {
    CHECK(lora_param_count(512, 512, 8) == std::pair<std::size_t, std::size_t>{8192, 262144});
    CHECK(lora_param_count(512, 512, 0) == std::pair<std::size_t, std::size_t>{0, 262144});
    CHECK(lora_param_count(768, 768, 4) == std::pair<std::size_t, std::size_t>{6144, 589824});
    CHECK_THROWS_AS(lora_param_count(4, 4, 5), ConfigError);
}

TEST_CASE("registry exposes exactly r(d+k) trainable scalars") {
    Rng rng(9);
    for (const auto& [d, k, r] : {std::tuple<std::size_t, std::size_t, std::size_t>{5, 7, 2},
                                  {8, 3, 3},
                                  {16, 16, 4}}) {
        LoraAdapter adapter = random_adapter(d, k, r, rng);
        Tape tape;
        LoraVars vars = bind_lora(tape, adapter, "ad");
        Tensor x({k});
        for (double& v : x.vec()) v = rng.normal();
        auto y = lora_apply(tape, vars, tape.input(x));
        GradMap grads = tape.backward(tape.sum(y));
        std::size_t trainable = 0;
        for (const auto& [name, g] : grads) trainable += g.size();
        CHECK(trainable == lora_param_count(d, k, r).first);
        CHECK(grads.count("ad.b") == 1);
        CHECK(grads.count("ad.a") == 1);
    }
}

TEST_CASE("rank-0 adapter refuses a trainable update") {
    Rng rng(3);
    LoraAdapter adapter = LoraAdapter::create(Tensor::matrix(2, 2, {1, 0, 0, 1}), 0, rng);
    CHECK_THROWS_AS(lora_apply(adapter, Tensor::row({1.0, 1.0})), ConfigError);
    CHECK(bitwise_equal(merge_adapter(adapter), Tensor::matrix(2, 2, {1, 0, 0, 1})));
}

TEST_CASE("lora_apply agrees with the dense-merge oracle") {
    Rng rng(1234);
    double worst = 0.0;
    for (int it = 0; it < 1000; ++it) {
        const std::size_t d = 1 + rng.index(12);
        const std::size_t k = 1 + rng.index(12);
        const std::size_t r = 1 + rng.index(std::min(d, k));
        LoraAdapter adapter = random_adapter(d, k, r, rng);
        Tensor x({k});
        for (double& v : x.vec()) v = rng.normal();
        const Tensor fast = lora_apply(adapter, x);
        const Tensor dense = merge_adapter(adapter);
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += dense.at(i, j) * x[j];
            worst = std::max(worst, std::fabs(fast[i] - s));
        }
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("merged factor product has rank at most r") {
    Rng rng(77);
    for (int it = 0; it < 20; ++it) {
        const std::size_t d = 3 + rng.index(6);  // <= 8
        const std::size_t k = 3 + rng.index(6);
        const std::size_t r = 1 + rng.index(std::min(d, k) - 1);
        LoraAdapter adapter = random_adapter(d, k, r, rng);
        // Singular values of B.A alone.
        Tensor update = merge_adapter(adapter);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < k; ++j) update.at(i, j) -= adapter.w0.at(i, j);
        }
        std::vector<std::vector<double>> m(d, std::vector<double>(k));
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < k; ++j) m[i][j] = update.at(i, j);
        }
        const std::vector<double> sv = oracles::singular_values(m);
        REQUIRE(sv[0] > 0.0);
        for (std::size_t i = r; i < sv.size(); ++i) CHECK(sv[i] < 1e-8 * sv[0]);
    }
}

TEST_CASE("merge of a merged-then-wrapped adapter is idempotent") {
    Rng rng(15);
    LoraAdapter adapter = random_adapter(4, 5, 2, rng);
    const Tensor merged = merge_adapter(adapter);
    LoraAdapter wrapped = LoraAdapter::create(merged, 2, rng);  // fresh zero B
    CHECK(bitwise_equal(merge_adapter(wrapped), merged));
}

TEST_CASE("frozen base weight is bitwise unchanged by optimizer steps") {
    Rng rng(21);
    LoraAdapter adapter = random_adapter(6, 6, 2, rng);
    const Tensor w0_before = adapter.w0;
    Tensor x({6}), target({6});
    for (double& v : x.vec()) v = rng.normal();
    for (double& v : target.vec()) v = rng.normal();

    Adam opt({1e-2, 0.9, 0.999, 1e-8});
    std::vector<ParamRef> params = {{"ad.b", ParamGroup::projection, &adapter.b},
                                    {"ad.a", ParamGroup::projection, &adapter.a}};
    for (int step = 0; step < 100; ++step) {
        Tape tape;
        LoraVars vars = bind_lora(tape, adapter, "ad");
        auto y = lora_apply(tape, vars, tape.input(x));
        auto diff = tape.add(y, tape.scale(tape.input(target), -1.0));
        auto loss = tape.sum(tape.square(diff));
        GradMap grads = tape.backward(loss);
        opt.step(params, grads, FreezeMask{});
    }
    CHECK(bitwise_equal(adapter.w0, w0_before));
    CHECK_FALSE(bitwise_equal(adapter.b, Tensor({6, 2})));  // factors did move
}

TEST_CASE("cross-modal attention closed forms") {
    Rng rng(8);
    CrossModalAttentionParams params = CrossModalAttentionParams::create(6, 2, 1, rng);

    // Single key: softmax over one column is 1, output row equals the V row.
    Tensor vis({2, 6}), txt({1, 6});
    for (double& v : vis.vec()) v = rng.normal();
    for (double& v : txt.vec()) v = rng.normal();
    const auto res = cross_modal_attention(params, vis, txt);
    const Tensor wv = merge_adapter(params.v);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
            double vrow = 0.0;
            for (std::size_t d = 0; d < 6; ++d) vrow += txt.at(0, d) * wv.at(j, d);
            CHECK(res.output.at(i, j) == doctest::Approx(vrow).epsilon(1e-9));
        }
    }
    CHECK(res.attn[0].at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

    // Identical key rows: uniform attention, output = mean of V rows.
    Tensor txt3({3, 6});
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t j = 0; j < 6; ++j) txt3.at(r, j) = txt.at(0, j);
    }
    const auto res3 = cross_modal_attention(params, vis, txt3);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
            CHECK(res3.output.at(i, j) == doctest::Approx(res.output.at(i, j)).epsilon(1e-9));
        }
    }

    // Attention rows sum to one.
    Tensor txt_big({5, 6});
    for (double& v : txt_big.vec()) v = rng.normal();
    const auto res5 = cross_modal_attention(params, vis, txt_big);
    for (std::size_t i = 0; i < 2; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 5; ++j) s += res5.attn[0].at(i, j);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("zero factors reproduce frozen-weight attention; multi-head splits evenly") {
    Rng rng(88);
    // B factors start at zero, so the adapted block must match the frozen one.
    CrossModalAttentionParams adapted = CrossModalAttentionParams::create(8, 2, 1, rng);
    Tensor vis({3, 8}), txt({4, 8});
    for (double& v : vis.vec()) v = rng.normal();
    for (double& v : txt.vec()) v = rng.normal();
    const auto res_a = cross_modal_attention(adapted, vis, txt);
    // Frozen-only: rank-0 adapters over the same bases.
    Rng rng2(0);
    CrossModalAttentionParams bare;
    bare.dim = 8;
    bare.heads = 1;
    bare.q = LoraAdapter::create(adapted.q.w0, 0, rng2);
    bare.k = LoraAdapter::create(adapted.k.w0, 0, rng2);
    bare.v = LoraAdapter::create(adapted.v.w0, 0, rng2);
    const auto res_b = cross_modal_attention(bare, vis, txt);
    for (std::size_t i = 0; i < res_a.output.size(); ++i) {
        CHECK(res_a.output[i] == doctest::Approx(res_b.output[i]).epsilon(1e-12));
    }

    CHECK_THROWS_AS(CrossModalAttentionParams::create(6, 1, 4, rng), ConfigError);
    CrossModalAttentionParams two_heads = CrossModalAttentionParams::create(8, 2, 2, rng);
    const auto res_mh = cross_modal_attention(two_heads, vis, txt);
    CHECK(res_mh.output.shape() == std::vector<std::size_t>{3, 8});
    CHECK(res_mh.attn.size() == 2);
}

TEST_CASE("empty text context is rejected") {
    // A zero-row tensor violates the shape invariant already.
    CHECK_THROWS_AS(Tensor({0, 6}), ShapeError);
}

TEST_CASE("gradients flow through adapted attention") {
    Rng rng(13);
    CrossModalAttentionParams params = CrossModalAttentionParams::create(4, 1, 1, rng);
    for (double& v : params.q.b.vec()) v = rng.normal(0.0, 0.3);
    for (double& v : params.k.b.vec()) v = rng.normal(0.0, 0.3);
    for (double& v : params.v.b.vec()) v = rng.normal(0.0, 0.3);
    Tensor vis({2, 4}), txt({3, 4});
    for (double& v : vis.vec()) v = rng.normal();
    for (double& v : txt.vec()) v = rng.normal();

    ParamMap pm = {{"cm.q.b", params.q.b}, {"cm.q.a", params.q.a}, {"cm.k.b", params.k.b},
                   {"cm.k.a", params.k.a}, {"cm.v.b", params.v.b}, {"cm.v.a", params.v.a}};
    const TapeFn fn = [&](Tape& tape, const ParamMap& p) {
        CrossModalVars vars = bind_cross_modal(tape, params, "cm", &p);
        auto out = cross_modal_attention(tape, vars, tape.input(vis), tape.input(txt));
        return tape.softmax_cross_entropy(tape.take_row(out, 0), 1);
    };
    const auto report = grad_check(fn, pm, {});
    CHECK(report.pass);
}

TEST_SUITE_END();
