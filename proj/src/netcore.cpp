// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors

#include "csipred/netcore.hpp"

#include <cmath>
#include <sstream>

#include "csipred/errors.hpp"

namespace csipred {

namespace {

constexpr double kLayerNormEps = 1e-5;

Matrix sigmoid(const Matrix& x) {
    return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

} // namespace

void glorot_fill(Matrix& m, Eigen::Index fan_in, Eigen::Index fan_out, Rng64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            m(r, c) = rng.uniform(-limit, limit);
}

// ---------------------------------------------------------------- LSTM ----

void LstmParams::validate() const {
    const Eigen::Index h = U.cols();
    if (h <= 0 || W.rows() != 4 * h || U.rows() != 4 * h || b.rows() != 4 * h ||
        b.cols() != 1 || W.cols() <= 0)
        throw ShapeError("inconsistent LSTM parameter shapes");
}

LstmParams make_lstm(Eigen::Index input_dim, Eigen::Index hidden, Rng64& rng,
                     double forget_bias) {
    LstmParams p;
    p.W.resize(4 * hidden, input_dim);
    p.U.resize(4 * hidden, hidden);
    p.b = Matrix::Zero(4 * hidden, 1);
    // Per-gate Glorot blocks, gate order [i; f; g; o], W blocks then U blocks.
    for (int gate = 0; gate < 4; ++gate) {
        Matrix block(hidden, input_dim);
        glorot_fill(block, input_dim, hidden, rng);
        p.W.middleRows(gate * hidden, hidden) = block;
    }
    for (int gate = 0; gate < 4; ++gate) {
        Matrix block(hidden, hidden);
        glorot_fill(block, hidden, hidden, rng);
        p.U.middleRows(gate * hidden, hidden) = block;
    }
    p.b.block(hidden, 0, hidden, 1).setConstant(forget_bias);
    return p;
}

LstmCache lstm_forward(const LstmParams& params, const std::vector<Matrix>& x) {
    params.validate();
    if (x.empty()) throw ShapeError("empty input sequence");
    const Eigen::Index h = params.hidden();
    const Eigen::Index batch = x.front().cols();
    const std::size_t steps = x.size();

    LstmCache cache;
    cache.batch = batch;
    cache.x = x;
    cache.i.reserve(steps); cache.f.reserve(steps); cache.g.reserve(steps);
    cache.o.reserve(steps); cache.c.reserve(steps); cache.tanh_c.reserve(steps);
    cache.h.reserve(steps);

    Matrix h_prev = Matrix::Zero(h, batch);
    Matrix c_prev = Matrix::Zero(h, batch);
    for (std::size_t t = 0; t < steps; ++t) {
        if (x[t].rows() != params.input_dim() || x[t].cols() != batch)
            throw ShapeError("input step shape mismatch");
        Matrix a = params.W * x[t] + params.U * h_prev;
        a.colwise() += params.b.col(0);
        Matrix gi = sigmoid(a.topRows(h));
        Matrix gf = sigmoid(a.middleRows(h, h));
        Matrix gg = a.middleRows(2 * h, h).array().tanh().matrix();
        Matrix go = sigmoid(a.bottomRows(h));
        Matrix c = (gf.array() * c_prev.array() + gi.array() * gg.array()).matrix();
        Matrix tc = c.array().tanh().matrix();
        Matrix hn = (go.array() * tc.array()).matrix();
        cache.i.push_back(std::move(gi));
        cache.f.push_back(std::move(gf));
        cache.g.push_back(std::move(gg));
        cache.o.push_back(std::move(go));
        cache.c.push_back(c);
        cache.tanh_c.push_back(std::move(tc));
        cache.h.push_back(hn);
        c_prev = std::move(c);
        h_prev = std::move(hn);
    }
    return cache;
}

Matrix lstm_final_state(const LstmParams& params, const std::vector<Matrix>& x) {
    params.validate();
    if (x.empty()) throw ShapeError("empty input sequence");
    const Eigen::Index h = params.hidden();
    const Eigen::Index batch = x.front().cols();
    Matrix h_prev = Matrix::Zero(h, batch);
    Matrix c_prev = Matrix::Zero(h, batch);
    for (const Matrix& xt : x) {
        if (xt.rows() != params.input_dim() || xt.cols() != batch)
            throw ShapeError("input step shape mismatch");
        Matrix a = params.W * xt + params.U * h_prev;
        a.colwise() += params.b.col(0);
        const Matrix gi = sigmoid(a.topRows(h));
        const Matrix gf = sigmoid(a.middleRows(h, h));
        const Matrix gg = a.middleRows(2 * h, h).array().tanh().matrix();
        const Matrix go = sigmoid(a.bottomRows(h));
        c_prev = (gf.array() * c_prev.array() + gi.array() * gg.array()).matrix();
        h_prev = (go.array() * c_prev.array().tanh()).matrix();
    }
    return h_prev;
}

LstmGrads lstm_backward(const LstmParams& params, const LstmCache& cache,
                        const std::vector<Matrix>& dh_seq,
                        std::vector<Matrix>* dx) {
    params.validate();
    const std::size_t steps = cache.x.size();
    if (steps == 0 || cache.h.size() != steps)
        throw UsageError("LSTM cache does not match a forward pass");
    if (dh_seq.size() != steps)
        throw ShapeError("upstream gradient count does not match sequence length");
    const Eigen::Index h = params.hidden();
    const Eigen::Index batch = cache.batch;

    LstmGrads grads;
    grads.W = Matrix::Zero(params.W.rows(), params.W.cols());
    grads.U = Matrix::Zero(params.U.rows(), params.U.cols());
    grads.b = Matrix::Zero(params.b.rows(), 1);
    if (dx) dx->assign(steps, Matrix());

    Matrix dh_next = Matrix::Zero(h, batch);
    Matrix dc_next = Matrix::Zero(h, batch);
    Matrix da(4 * h, batch);
    for (std::size_t ti = steps; ti-- > 0;) {
        if (dh_seq[ti].rows() != h || dh_seq[ti].cols() != batch)
            throw ShapeError("upstream gradient shape mismatch");
        const Matrix dh = dh_seq[ti] + dh_next;
        const auto& i = cache.i[ti];
        const auto& f = cache.f[ti];
        const auto& g = cache.g[ti];
        const auto& o = cache.o[ti];
        const auto& tc = cache.tanh_c[ti];

        const Matrix d_o = (dh.array() * tc.array()).matrix();
        const Matrix dc =
            (dc_next.array() + dh.array() * o.array() * (1.0 - tc.array().square()))
                .matrix();
        const Matrix d_i = (dc.array() * g.array()).matrix();
        const Matrix d_g = (dc.array() * i.array()).matrix();
        Matrix c_prev = ti == 0 ? Matrix::Zero(h, batch) : cache.c[ti - 1];
        const Matrix d_f = (dc.array() * c_prev.array()).matrix();

        da.topRows(h) = (d_i.array() * i.array() * (1.0 - i.array())).matrix();
        da.middleRows(h, h) = (d_f.array() * f.array() * (1.0 - f.array())).matrix();
        da.middleRows(2 * h, h) = (d_g.array() * (1.0 - g.array().square())).matrix();
        da.bottomRows(h) = (d_o.array() * o.array() * (1.0 - o.array())).matrix();

        grads.W.noalias() += da * cache.x[ti].transpose();
        if (ti > 0) grads.U.noalias() += da * cache.h[ti - 1].transpose();
        grads.b.col(0) += da.rowwise().sum();
        if (dx) (*dx)[ti].noalias() = params.W.transpose() * da;
        dh_next.noalias() = params.U.transpose() * da;
        dc_next = (dc.array() * f.array()).matrix();
    }
    return grads;
}

// --------------------------------------------------------------- affine ----

FcParams make_fc(Eigen::Index in_dim, Eigen::Index out_dim, Rng64& rng) {
    FcParams p;
    p.W.resize(out_dim, in_dim);
    glorot_fill(p.W, in_dim, out_dim, rng);
    p.b = Matrix::Zero(out_dim, 1);
    return p;
}

Matrix fc_forward(const FcParams& p, const Matrix& x) {
    if (p.W.cols() != x.rows() || p.b.rows() != p.W.rows())
        throw ShapeError("affine layer shape mismatch");
    Matrix y = p.W * x;
    y.colwise() += p.b.col(0);
    return y;
}

FcGrads fc_backward(const FcParams& p, const Matrix& x, const Matrix& dy,
                    Matrix* dx) {
    if (dy.rows() != p.W.rows() || dy.cols() != x.cols() || p.W.cols() != x.rows())
        throw ShapeError("affine backward shape mismatch");
    FcGrads g;
    g.W.noalias() = dy * x.transpose();
    g.b = dy.rowwise().sum();
    if (dx) dx->noalias() = p.W.transpose() * dy;
    return g;
}

// -------------------------------------------------- softmax / cross-ent ----

Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const double m = logits.col(c).maxCoeff();
        Eigen::ArrayXd e = (logits.col(c).array() - m).exp();
        p.col(c) = (e / e.sum()).matrix();
    }
    return p;
}

XentResult softmax_xent(const Matrix& logits, const std::vector<std::uint32_t>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != logits.cols())
        throw ShapeError("one label per logit column required");
    XentResult r;
    r.probs = softmax(logits);
    r.dlogits = r.probs;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const std::uint32_t k = labels[static_cast<std::size_t>(c)];
        if (k >= logits.rows()) throw DomainError("class label out of range");
        r.loss_sum -= std::log(r.probs(k, c));
        r.dlogits(k, c) -= 1.0;
    }
    return r;
}

// ----------------------------------------------------- 1-D conv stack ----

void ConvStackParams::validate() const {
    if (in_channels <= 0 || kernel <= 0 || filters.rows() <= 0 ||
        filters.cols() != in_channels * kernel || bias.rows() != filters.rows() ||
        ln_gain.rows() != filters.rows() || ln_off.rows() != filters.rows())
        throw ShapeError("inconsistent convolution stack shapes");
}

ConvStackParams make_conv_stack(Eigen::Index in_channels, Eigen::Index kernel,
                                Eigen::Index num_filters, Rng64& rng) {
    ConvStackParams p;
    p.in_channels = in_channels;
    p.kernel = kernel;
    p.filters.resize(num_filters, in_channels * kernel);
    glorot_fill(p.filters, in_channels * kernel, num_filters, rng);
    p.bias = Matrix::Zero(num_filters, 1);
    p.ln_gain = Matrix::Ones(num_filters, 1);
    p.ln_off = Matrix::Zero(num_filters, 1);
    return p;
}

Matrix conv_stack_forward(const ConvStackParams& p, const Matrix& x,
                          Eigen::Index len, ConvStackCache* cache) {
    p.validate();
    if (len < p.kernel) throw ShapeError("sequence shorter than the filter");
    if (x.rows() != p.in_channels || x.cols() % len != 0)
        throw ShapeError("input is not a whole number of length-T samples");
    const Eigen::Index batch = x.cols() / len;
    const Eigen::Index out_len = len - p.kernel + 1;
    const Eigen::Index f = p.num_filters();

    Matrix cols(p.in_channels * p.kernel, out_len * batch);
    for (Eigen::Index b = 0; b < batch; ++b)
        for (Eigen::Index l = 0; l < out_len; ++l)
            for (Eigen::Index c = 0; c < p.in_channels; ++c)
                for (Eigen::Index w = 0; w < p.kernel; ++w)
                    cols(c * p.kernel + w, b * out_len + l) = x(c, b * len + l + w);

    Matrix pre = p.filters * cols;
    pre.colwise() += p.bias.col(0);
    Matrix act = pre.cwiseMax(0.0);

    Matrix norm(f, act.cols());
    Vector inv_std(act.cols());
    for (Eigen::Index c = 0; c < act.cols(); ++c) {
        const double mean = act.col(c).mean();
        const double var = (act.col(c).array() - mean).square().sum() / static_cast<double>(f);
        inv_std(c) = 1.0 / std::sqrt(var + kLayerNormEps);
        norm.col(c) = ((act.col(c).array() - mean) * inv_std(c)).matrix();
    }
    Matrix scaled = (norm.array().colwise() * p.ln_gain.col(0).array()).matrix();
    scaled.colwise() += p.ln_off.col(0);

    Matrix pooled(f, batch);
    for (Eigen::Index b = 0; b < batch; ++b)
        pooled.col(b) = scaled.middleCols(b * out_len, out_len).rowwise().mean();

    if (cache) {
        cache->cols = std::move(cols);
        cache->pre_act = std::move(pre);
        cache->act = std::move(act);
        cache->norm = std::move(norm);
        cache->inv_std = std::move(inv_std);
        cache->len = len;
        cache->out_len = out_len;
        cache->batch = batch;
    }
    return pooled;
}

ConvStackGrads conv_stack_backward(const ConvStackParams& p, const ConvStackCache& cache,
                                   const Matrix& dy, Matrix* dx) {
    p.validate();
    const Eigen::Index f = p.num_filters();
    if (dy.rows() != f || dy.cols() != cache.batch)
        throw ShapeError("pooled gradient shape mismatch");
    const Eigen::Index out_len = cache.out_len;

    // Pooling spreads each sample's gradient uniformly over its time steps.
    Matrix d_scaled(f, out_len * cache.batch);
    for (Eigen::Index b = 0; b < cache.batch; ++b)
        for (Eigen::Index l = 0; l < out_len; ++l)
            d_scaled.col(b * out_len + l) = dy.col(b) / static_cast<double>(out_len);

    ConvStackGrads g;
    g.ln_gain = (d_scaled.array() * cache.norm.array()).rowwise().sum().matrix();
    g.ln_off = d_scaled.rowwise().sum();

    Matrix d_act(f, d_scaled.cols());
    const double inv_f = 1.0 / static_cast<double>(f);
    for (Eigen::Index c = 0; c < d_scaled.cols(); ++c) {
        const Eigen::ArrayXd dnorm = d_scaled.col(c).array() * p.ln_gain.col(0).array();
        const Eigen::ArrayXd xhat = cache.norm.col(c).array();
        const double m1 = dnorm.sum() * inv_f;
        const double m2 = (dnorm * xhat).sum() * inv_f;
        d_act.col(c) = (cache.inv_std(c) * (dnorm - m1 - xhat * m2)).matrix();
    }

    const Matrix d_pre =
        (d_act.array() * (cache.pre_act.array() > 0.0).cast<double>()).matrix();
    g.filters.noalias() = d_pre * cache.cols.transpose();
    g.bias = d_pre.rowwise().sum();

    if (dx) {
        const Matrix d_cols = p.filters.transpose() * d_pre;
        dx->setZero(p.in_channels, cache.batch * cache.len);
        for (Eigen::Index b = 0; b < cache.batch; ++b)
            for (Eigen::Index l = 0; l < out_len; ++l)
                for (Eigen::Index c = 0; c < p.in_channels; ++c)
                    for (Eigen::Index w = 0; w < p.kernel; ++w)
                        (*dx)(c, b * cache.len + l + w) +=
                            d_cols(c * p.kernel + w, b * out_len + l);
    }
    return g;
}

// ----------------------------------------------------------------- Adam ----

void adam_step(AdamState& state, const std::vector<Matrix*>& params,
               const std::vector<const Matrix*>& grads, double lr) {
    if (params.size() != grads.size())
        throw ShapeError("parameter and gradient block counts differ");
    if (state.m.empty()) {
        state.m.reserve(params.size());
        state.v.reserve(params.size());
        for (const Matrix* p : params) {
            state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
            state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
        }
    }
    if (state.m.size() != params.size())
        throw ShapeError("optimizer state does not match parameter blocks");

    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k];
        const Matrix& g = *grads[k];
        if (g.rows() != p.rows() || g.cols() != p.cols() ||
            state.m[k].rows() != p.rows() || state.m[k].cols() != p.cols())
            throw ShapeError("gradient block shape mismatch");
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
        state.v[k] =
            (state.beta2 * state.v[k].array() + (1.0 - state.beta2) * g.array().square())
                .matrix();
        p.array() -= lr * (state.m[k].array() / bc1) /
                     ((state.v[k].array() / bc2).sqrt() + state.eps);
    }
}

double lr_at(std::uint64_t n_iter, double base) {
    return base / (1.0 + base * static_cast<double>(n_iter));
}

// -------------------------------------------------------- grad checking ----

std::string GradCheckReport::to_string() const {
    std::ostringstream os;
    os << (passed ? "PASS" : "FAIL") << ": " << checked << " coordinates, "
       << failures << " failures, max relative error " << max_rel_error;
    if (!worst_block.empty())
        os << " at " << worst_block << "(" << worst_row << "," << worst_col
           << ") analytic " << worst_analytic << " numeric " << worst_numeric;
    return os.str();
}

GradCheckReport gradient_check(const std::vector<NamedParam>& params,
                               const std::vector<const Matrix*>& grads,
                               const std::function<double()>& loss,
                               double tol) {
    if (params.size() != grads.size())
        throw ShapeError("parameter and gradient block counts differ");
    constexpr double kStep = 1e-6;
    constexpr double kFloor = 1e-8;

    GradCheckReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k].value;
        const Matrix& g = *grads[k];
        if (g.rows() != p.rows() || g.cols() != p.cols())
            throw ShapeError("gradient block shape mismatch");
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
            for (Eigen::Index r = 0; r < p.rows(); ++r) {
                const double saved = p(r, c);
                p(r, c) = saved + kStep;
                const double up = loss();
                p(r, c) = saved - kStep;
                const double down = loss();
                p(r, c) = saved;
                const double numeric = (up - down) / (2.0 * kStep);
                const double analytic = g(r, c);
                const double diff = std::abs(analytic - numeric);
                const double scale = std::max(std::abs(analytic), std::abs(numeric));
                const double rel = diff / std::max(scale, kFloor);
                report.checked += 1;
                if (diff > std::max(kFloor, tol * scale)) report.failures += 1;
                if (rel > report.max_rel_error) {
                    report.max_rel_error = rel;
                    report.worst_block = params[k].name;
                    report.worst_row = r;
                    report.worst_col = c;
                    report.worst_analytic = analytic;
                    report.worst_numeric = numeric;
                }
            }
        }
    }
    report.passed = report.failures == 0;
    return report;
}

} // namespace csipred
