// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors

#include <cmath>
#include <cstdint>
#include <vector>

#include <doctest.h>

#include "csipred/errors.hpp"
#include "csipred/netcore.hpp"
#include "csipred/rng.hpp"

using namespace csipred;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng64& rng, double lo = -1,
                     double hi = 1) {
    Matrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform(lo, hi);
    return m;
}

std::vector<Matrix> random_sequence(Eigen::Index d, Eigen::Index b, int t, Rng64& rng) {
    std::vector<Matrix> x;
    for (int s = 0; s < t; ++s) x.push_back(random_matrix(d, b, rng));
    return x;
}

// Sum over matched entries of a weight matrix and an output, the scalar loss
// used to drive finite-difference layer checks.
double weighted_sum(const Matrix& w, const Matrix& y) { return (w.array() * y.array()).sum(); }

} // namespace

TEST_CASE("glorot fill stays inside its bound and is seeded") {
    Matrix m(8, 12);
    Rng64 rng(3);
    glorot_fill(m, 12, 8, rng);
    const double limit = std::sqrt(6.0 / (12 + 8));
    CHECK(m.cwiseAbs().maxCoeff() <= limit);
    CHECK(m.cwiseAbs().maxCoeff() > 0.1 * limit);
    CHECK(m.minCoeff() < 0);

    Matrix m2(8, 12);
    Rng64 rng2(3);
    glorot_fill(m2, 12, 8, rng2);
    CHECK(m == m2);
}

TEST_CASE("lstm construction: shapes, forget bias, determinism") {
    Rng64 rng(5);
    const auto p = make_lstm(7, 4, rng);
    CHECK(p.W.rows() == 16);
    CHECK(p.W.cols() == 7);
    CHECK(p.U.rows() == 16);
    CHECK(p.U.cols() == 4);
    CHECK(p.b.rows() == 16);
    CHECK(p.b.cols() == 1);
    CHECK(p.hidden() == 4);
    CHECK(p.input_dim() == 7);
    // Bias blocks: [input; forget; candidate; output], forget block at 1.
    CHECK(p.b.block(0, 0, 4, 1).isZero(0.0));
    CHECK(p.b.block(4, 0, 4, 1) == Matrix::Ones(4, 1));
    CHECK(p.b.block(8, 0, 8, 1).isZero(0.0));

    Rng64 rng2(5);
    const auto q = make_lstm(7, 4, rng2);
    CHECK(p.W == q.W);
    CHECK(p.U == q.U);

    LstmParams bad = p;
    bad.U.resize(16, 5);
    CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("all-zero lstm parameters give zero hidden states") {
    LstmParams p;
    p.W = Matrix::Zero(12, 2);
    p.U = Matrix::Zero(12, 3);
    p.b = Matrix::Zero(12, 1);
    Rng64 rng(1);
    const auto cache = lstm_forward(p, random_sequence(2, 4, 5, rng));
    for (const auto& h : cache.h) CHECK(h.isZero(0.0));
}

TEST_CASE("lstm recurrence matches a hand-evaluated single unit") {
    // One unit, one input: W = 1 for every gate, U = -0.5, b = 0,
    // inputs 1 then 0.5.
    LstmParams p;
    p.W = Matrix::Ones(4, 1);
    p.U = Matrix::Constant(4, 1, -0.5);
    p.b = Matrix::Zero(4, 1);
    std::vector<Matrix> x{Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 0.5)};

    const auto cache = lstm_forward(p, x);
    REQUIRE(cache.h.size() == 2);
    CHECK(cache.h[0](0, 0) == doctest::Approx(0.36960635293570577).epsilon(1e-15));
    CHECK(cache.c[0](0, 0) == doctest::Approx(0.55676994114593974).epsilon(1e-15));
    CHECK(cache.h[1](0, 0) == doctest::Approx(0.26641284097313375).epsilon(1e-15));
    CHECK(cache.c[1](0, 0) == doctest::Approx(0.49832610009207059).epsilon(1e-15));

    // A length-1 sequence is exactly one cell application.
    const auto one = lstm_forward(p, {x[0]});
    CHECK(one.h.back() == cache.h[0]);
}

TEST_CASE("lstm_final_state agrees with the cached forward pass") {
    Rng64 rng(21);
    const auto p = make_lstm(3, 6, rng);
    const auto x = random_sequence(3, 5, 7, rng);
    const auto cache = lstm_forward(p, x);
    CHECK(lstm_final_state(p, x) == cache.h.back());
}

TEST_CASE("lstm backward: zero upstream gradient gives zero parameter gradients") {
    Rng64 rng(31);
    const auto p = make_lstm(2, 3, rng);
    const auto x = random_sequence(2, 4, 5, rng);
    const auto cache = lstm_forward(p, x);
    std::vector<Matrix> dh(5, Matrix::Zero(3, 4));
    const auto g = lstm_backward(p, cache, dh);
    CHECK(g.W.isZero(0.0));
    CHECK(g.U.isZero(0.0));
    CHECK(g.b.isZero(0.0));
}

TEST_CASE("lstm gradients match finite differences on randomized shapes") {
    for (int trial = 0; trial < 100; ++trial) {
        Rng64 rng(1000 + trial);
        const auto d = static_cast<Eigen::Index>(1 + rng.below(4));
        const auto hdim = static_cast<Eigen::Index>(1 + rng.below(5));
        const auto b = static_cast<Eigen::Index>(1 + rng.below(3));
        const int t = static_cast<int>(1 + rng.below(4));

        auto p = make_lstm(d, hdim, rng);
        // Flat x storage so the loss closure and the checker share entries.
        Matrix xflat = random_matrix(d, b * t, rng);
        std::vector<Matrix> upstream;
        for (int s = 0; s < t; ++s) upstream.push_back(random_matrix(hdim, b, rng));

        const auto unpack = [&] {
            std::vector<Matrix> x;
            for (int s = 0; s < t; ++s) x.push_back(xflat.middleCols(s * b, b));
            return x;
        };
        const auto loss = [&] {
            const auto cache = lstm_forward(p, unpack());
            double l = 0;
            for (int s = 0; s < t; ++s) l += weighted_sum(upstream[s], cache.h[s]);
            return l;
        };

        const auto cache = lstm_forward(p, unpack());
        std::vector<Matrix> dx;
        const auto g = lstm_backward(p, cache, upstream, &dx);
        Matrix dxflat(d, b * t);
        for (int s = 0; s < t; ++s) dxflat.middleCols(s * b, b) = dx[s];

        const auto report = gradient_check(
            {{"W", &p.W}, {"U", &p.U}, {"b", &p.b}, {"x", &xflat}},
            {&g.W, &g.U, &g.b, &dxflat}, loss, 1e-5);
        CAPTURE(trial);
        CAPTURE(report.to_string());
        REQUIRE(report.passed);
    }
}

TEST_CASE("lstm batch gradient is the sum of per-sample gradients") {
    Rng64 rng(77);
    const auto p = make_lstm(3, 4, rng);
    const int t = 4, b = 3;
    const auto x = random_sequence(3, b, t, rng);
    std::vector<Matrix> upstream;
    for (int s = 0; s < t; ++s) upstream.push_back(random_matrix(4, b, rng));

    const auto cache = lstm_forward(p, x);
    const auto batch_g = lstm_backward(p, cache, upstream);

    Matrix sum_w = Matrix::Zero(16, 3), sum_u = Matrix::Zero(16, 4),
           sum_b = Matrix::Zero(16, 1);
    for (int col = 0; col < b; ++col) {
        std::vector<Matrix> xs, us;
        for (int s = 0; s < t; ++s) {
            xs.push_back(x[s].col(col));
            us.push_back(upstream[s].col(col));
        }
        const auto c1 = lstm_forward(p, xs);
        const auto g1 = lstm_backward(p, c1, us);
        sum_w += g1.W;
        sum_u += g1.U;
        sum_b += g1.b;
    }
    CHECK((batch_g.W - sum_w).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((batch_g.U - sum_u).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((batch_g.b - sum_b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("affine layer basics") {
    FcParams id;
    id.W = Matrix::Identity(3, 3);
    id.b = Matrix::Zero(3, 1);
    Rng64 rng(9);
    const Matrix x = random_matrix(3, 5, rng);
    CHECK(fc_forward(id, x) == x);

    FcParams constant;
    constant.W = Matrix::Zero(2, 3);
    constant.b = Matrix::Constant(2, 1, 1.25);
    const Matrix y = fc_forward(constant, x);
    CHECK(y == Matrix::Constant(2, 5, 1.25));

    FcParams bad = id;
    CHECK_THROWS_AS(fc_forward(bad, random_matrix(4, 2, rng)), ShapeError);
}

TEST_CASE("affine gradients match finite differences tightly") {
    for (int trial = 0; trial < 100; ++trial) {
        Rng64 rng(2000 + trial);
        const auto in = static_cast<Eigen::Index>(1 + rng.below(5));
        const auto out = static_cast<Eigen::Index>(1 + rng.below(5));
        const auto b = static_cast<Eigen::Index>(1 + rng.below(4));
        auto p = make_fc(in, out, rng);
        Matrix x = random_matrix(in, b, rng);
        const Matrix upstream = random_matrix(out, b, rng);

        const auto loss = [&] { return weighted_sum(upstream, fc_forward(p, x)); };
        Matrix dx;
        const auto g = fc_backward(p, x, upstream, &dx);
        const auto report = gradient_check({{"W", &p.W}, {"b", &p.b}, {"x", &x}},
                                           {&g.W, &g.b, &dx}, loss, 1e-7);
        CAPTURE(report.to_string());
        REQUIRE(report.passed);
    }
}

TEST_CASE("softmax produces probability columns") {
    Rng64 rng(4);
    const Matrix logits = random_matrix(6, 9, rng, -30, 30);
    const Matrix probs = softmax(logits);
    CHECK(probs.minCoeff() >= 0.0);
    for (Eigen::Index c = 0; c < probs.cols(); ++c)
        CHECK(probs.col(c).sum() == doctest::Approx(1.0).epsilon(1e-12));

    const Matrix uniform = Matrix::Constant(5, 3, 2.5);
    CHECK((softmax(uniform) - Matrix::Constant(5, 3, 0.2)).cwiseAbs().maxCoeff() < 1e-15);

    // Shift invariance along columns.
    Matrix shifted = logits;
    shifted.array() += 17.0;
    CHECK((softmax(shifted) - probs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("softmax of log weights recovers the normalized weights") {
    Matrix logits(3, 1);
    logits << std::log(1.0), std::log(2.0), std::log(3.0);
    const Matrix probs = softmax(logits);
    CHECK(probs(0, 0) == doctest::Approx(1.0 / 6).epsilon(1e-14));
    CHECK(probs(1, 0) == doctest::Approx(2.0 / 6).epsilon(1e-14));
    CHECK(probs(2, 0) == doctest::Approx(3.0 / 6).epsilon(1e-14));
}

TEST_CASE("cross-entropy closed forms and gradient") {
    // Uniform logits over K classes: loss per column is ln K.
    const Matrix uniform = Matrix::Zero(4, 6);
    const std::vector<std::uint32_t> labels{0, 1, 2, 3, 0, 1};
    const auto res = softmax_xent(uniform, labels);
    CHECK(res.loss_sum == doctest::Approx(6.0 * std::log(4.0)).epsilon(1e-13));

    // Confident and correct: loss near zero.
    Matrix confident = Matrix::Zero(4, 2);
    confident(2, 0) = 60.0;
    confident(1, 1) = 60.0;
    const auto good = softmax_xent(confident, {2, 1});
    CHECK(good.loss_sum < 1e-12);

    // dlogits columns sum to zero (probs minus one-hot).
    Rng64 rng(14);
    const Matrix logits = random_matrix(5, 7, rng);
    const std::vector<std::uint32_t> ls{0, 4, 2, 2, 1, 3, 0};
    auto r = softmax_xent(logits, ls);
    for (Eigen::Index c = 0; c < 7; ++c)
        CHECK(r.dlogits.col(c).sum() == doctest::Approx(0.0).epsilon(1e-12));

    // Finite-difference check of the summed loss wrt logits.
    Matrix lg = logits;
    const auto loss = [&] { return softmax_xent(lg, ls).loss_sum; };
    const auto rep = gradient_check({{"logits", &lg}}, {&r.dlogits}, loss, 1e-6);
    CAPTURE(rep.to_string());
    CHECK(rep.passed);

    CHECK_THROWS_AS(softmax_xent(uniform, {0, 1}), ShapeError);
    CHECK_THROWS_AS(softmax_xent(uniform, {0, 1, 2, 3, 0, 9}), DomainError);
}

TEST_CASE("conv stack output length and degenerate input") {
    Rng64 rng(6);
    auto p = make_conv_stack(3, 6, 4, rng);
    const Matrix x = random_matrix(3, 10, rng); // one sample, T=10
    ConvStackCache cache;
    const Matrix y = conv_stack_forward(p, x, 10, &cache);
    CHECK(cache.out_len == 5); // 10 - 6 + 1
    CHECK(y.rows() == 4);
    CHECK(y.cols() == 1);

    CHECK_THROWS_AS(conv_stack_forward(p, random_matrix(3, 5, rng), 5), ShapeError);

    // Zero input, zero bias: pre-activations vanish and, with offset zero,
    // so does the pooled output.
    p.bias.setZero();
    ConvStackCache zc;
    const Matrix zy = conv_stack_forward(p, Matrix::Zero(3, 20), 10, &zc);
    CHECK(zc.pre_act.isZero(0.0));
    CHECK(zy.isZero(1e-15));
}

TEST_CASE("conv stack gradients match finite differences on randomized shapes") {
    for (int trial = 0; trial < 100; ++trial) {
        Rng64 rng(3000 + trial);
        const auto cin = static_cast<Eigen::Index>(1 + rng.below(3));
        const auto kernel = static_cast<Eigen::Index>(1 + rng.below(3));
        const auto len = kernel + static_cast<Eigen::Index>(rng.below(4));
        const auto filters = static_cast<Eigen::Index>(2 + rng.below(3));
        const auto b = static_cast<Eigen::Index>(1 + rng.below(3));

        auto p = make_conv_stack(cin, kernel, filters, rng);
        Matrix x = random_matrix(cin, b * len, rng);
        const Matrix upstream = random_matrix(filters, b, rng);

        const auto loss = [&] { return weighted_sum(upstream, conv_stack_forward(p, x, len)); };
        ConvStackCache cache;
        conv_stack_forward(p, x, len, &cache);
        Matrix dx;
        const auto g = conv_stack_backward(p, cache, upstream, &dx);

        const auto report = gradient_check(
            {{"filters", &p.filters}, {"bias", &p.bias}, {"gain", &p.ln_gain},
             {"offset", &p.ln_off}, {"x", &x}},
            {&g.filters, &g.bias, &g.ln_gain, &g.ln_off, &dx}, loss, 1e-5);
        CAPTURE(trial);
        CAPTURE(report.to_string());
        REQUIRE(report.passed);
    }
}

TEST_CASE("conv stack batch gradient is the sum of per-sample gradients") {
    Rng64 rng(41);
    auto p = make_conv_stack(2, 3, 4, rng);
    const Eigen::Index len = 6, b = 3;
    const Matrix x = random_matrix(2, b * len, rng);
    const Matrix upstream = random_matrix(4, b, rng);

    ConvStackCache cache;
    conv_stack_forward(p, x, len, &cache);
    const auto batch_g = conv_stack_backward(p, cache, upstream);

    ConvStackGrads sum;
    sum.filters = Matrix::Zero(4, 6);
    sum.bias = Matrix::Zero(4, 1);
    sum.ln_gain = Matrix::Zero(4, 1);
    sum.ln_off = Matrix::Zero(4, 1);
    for (Eigen::Index col = 0; col < b; ++col) {
        ConvStackCache c1;
        conv_stack_forward(p, x.middleCols(col * len, len), len, &c1);
        const auto g1 = conv_stack_backward(p, c1, upstream.col(col));
        sum.filters += g1.filters;
        sum.bias += g1.bias;
        sum.ln_gain += g1.ln_gain;
        sum.ln_off += g1.ln_off;
    }
    CHECK((batch_g.filters - sum.filters).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((batch_g.bias - sum.bias).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((batch_g.ln_gain - sum.ln_gain).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((batch_g.ln_off - sum.ln_off).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("adam: zero gradient is a fixed point at any step") {
    Rng64 rng(55);
    Matrix p1 = random_matrix(3, 3, rng), p2 = random_matrix(2, 1, rng);
    const Matrix p1_before = p1, p2_before = p2;
    const Matrix z1 = Matrix::Zero(3, 3), z2 = Matrix::Zero(2, 1);
    AdamState st;
    adam_step(st, {&p1, &p2}, {&z1, &z2}, 0.01);
    CHECK(p1 == p1_before);
    CHECK(p2 == p2_before);
    CHECK(st.step_count == 1);
}

TEST_CASE("adam: first step moves by about the learning rate") {
    Matrix p = Matrix::Zero(1, 1);
    const Matrix g = Matrix::Constant(1, 1, 0.5);
    AdamState st;
    adam_step(st, {&p}, {&g}, 0.005);
    CHECK(std::abs(std::abs(p(0, 0)) - 0.005) < 1e-9);
    CHECK(p(0, 0) < 0); // descends against the gradient
}

TEST_CASE("adam: identical state copies give identical updates") {
    Rng64 rng(66);
    Matrix pa = random_matrix(4, 2, rng);
    Matrix pb = pa;
    const Matrix g1 = random_matrix(4, 2, rng), g2 = random_matrix(4, 2, rng);
    AdamState sa;
    AdamState sb;
    adam_step(sa, {&pa}, {&g1}, 0.003);
    adam_step(sb, {&pb}, {&g1}, 0.003);
    adam_step(sa, {&pa}, {&g2}, 0.002);
    adam_step(sb, {&pb}, {&g2}, 0.002);
    CHECK(pa == pb);

    const Matrix bad = Matrix::Zero(3, 3);
    CHECK_THROWS_AS(adam_step(sa, {&pa}, {&bad}, 0.001), ShapeError);
}

TEST_CASE("learning-rate schedule") {
    CHECK(lr_at(0) == 0.005);
    CHECK(std::abs(lr_at(200) - 0.0025) < 1e-12);
    CHECK(lr_at(100) == doctest::Approx(0.0033333333333333333).epsilon(1e-15));
    double prev = lr_at(0);
    for (std::uint64_t n = 1; n <= 1000; ++n) {
        const double cur = lr_at(n);
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("gradient_check flags a corrupted backward pass") {
    Rng64 rng(71);
    auto p = make_fc(3, 2, rng);
    Matrix x = random_matrix(3, 4, rng);
    const Matrix upstream = random_matrix(2, 4, rng);
    const auto loss = [&] { return weighted_sum(upstream, fc_forward(p, x)); };
    auto g = fc_backward(p, x, upstream);
    g.W(1, 2) += 0.25; // deliberate corruption

    const auto report =
        gradient_check({{"W", &p.W}, {"b", &p.b}}, {&g.W, &g.b}, loss, 1e-5);
    CHECK_FALSE(report.passed);
    CHECK(report.failures > 0);
    CHECK(report.worst_block == "W");
    CHECK(report.worst_row == 1);
    CHECK(report.worst_col == 2);
    CHECK(report.to_string().find("W") != std::string::npos);

    // Same inputs, same report.
    const auto again =
        gradient_check({{"W", &p.W}, {"b", &p.b}}, {&g.W, &g.b}, loss, 1e-5);
    CHECK(again.max_rel_error == report.max_rel_error);
    CHECK(again.failures == report.failures);
}
