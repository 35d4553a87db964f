// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors

#include "csipred/models.hpp"

#include <chrono>
#include <cmath>
#include <cstring>

#include "csipred/errors.hpp"
#include "csipred/io.hpp"
#include "csipred/rng.hpp"
#include "csipred/secrecy.hpp"

namespace csipred {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Seed streams carved out of the master seed.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kStage1EpochStream = 100;
constexpr std::uint64_t kStage2EpochStream = 200;

constexpr Eigen::Index kPredictChunk = 8192;

} // namespace

const char* kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::lstm_joint: return "lstm-j";
        case ModelKind::lstm_seq: return "lstm-s";
        case ModelKind::cnn_joint: return "cnn-j";
        case ModelKind::cnn_seq: return "cnn-s";
    }
    throw DomainError("unknown model kind");
}

ModelKind kind_from_name(const std::string& name) {
    if (name == "lstm-j") return ModelKind::lstm_joint;
    if (name == "lstm-s") return ModelKind::lstm_seq;
    if (name == "cnn-j") return ModelKind::cnn_joint;
    if (name == "cnn-s") return ModelKind::cnn_seq;
    throw ConfigError("unknown model kind '" + name +
                      "' (expected lstm-j, lstm-s, cnn-j or cnn-s)");
}

bool is_sequential(ModelKind k) {
    return k == ModelKind::lstm_seq || k == ModelKind::cnn_seq;
}

bool is_recurrent(ModelKind k) {
    return k == ModelKind::lstm_joint || k == ModelKind::lstm_seq;
}

void Hyperparams::validate() const {
    if (!(w > 0.0 && w < 1.0))
        throw DomainError("multi-task weight must lie strictly inside (0,1)");
    if (batch == 0 || epochs == 0 || t_hist == 0 || j_pred == 0)
        throw DomainError("batch, epochs and window lengths must be positive");
    if (hidden == 0 || filters == 0 || kernel == 0)
        throw DomainError("layer sizes must be positive");
    if (!(base_lr > 0.0)) throw DomainError("base learning rate must be positive");
}

std::vector<NamedParam> ModelParams::blocks() {
    std::vector<NamedParam> out;
    auto lstm = [&out](const char* prefix, LstmParams& p) {
        out.push_back({std::string(prefix) + ".W", &p.W});
        out.push_back({std::string(prefix) + ".U", &p.U});
        out.push_back({std::string(prefix) + ".b", &p.b});
    };
    auto conv = [&out](const char* prefix, ConvStackParams& p) {
        out.push_back({std::string(prefix) + ".filters", &p.filters});
        out.push_back({std::string(prefix) + ".bias", &p.bias});
        out.push_back({std::string(prefix) + ".ln_gain", &p.ln_gain});
        out.push_back({std::string(prefix) + ".ln_off", &p.ln_off});
    };
    const bool rec = is_recurrent(kind);
    if (rec) lstm("enc1", enc1_lstm); else conv("enc1", enc1_conv);
    out.push_back({"reg.W", &head_reg.W});
    out.push_back({"reg.b", &head_reg.b});
    if (is_sequential(kind)) {
        if (rec) lstm("enc2", enc2_lstm); else conv("enc2", enc2_conv);
    }
    out.push_back({"cls.W", &head_cls.W});
    out.push_back({"cls.b", &head_cls.b});
    return out;
}

std::vector<const Matrix*> ModelParams::block_values() const {
    auto self = const_cast<ModelParams*>(this);
    std::vector<const Matrix*> out;
    for (const NamedParam& np : self->blocks()) out.push_back(np.value);
    return out;
}

std::uint64_t ModelParams::param_count() const {
    std::uint64_t n = 0;
    for (const Matrix* m : block_values())
        n += static_cast<std::uint64_t>(m->size());
    return n;
}

ModelParams build_model(ModelKind kind, const TopologyConfig& topo,
                        const Hyperparams& hyp, std::uint64_t seed) {
    topo.validate();
    hyp.validate();
    ModelParams p;
    p.kind = kind;
    p.num_tx = topo.num_transmitters;
    p.num_ev = topo.num_eavesdroppers;
    p.t_hist = hyp.t_hist;
    p.j_pred = hyp.j_pred;

    const auto d = static_cast<Eigen::Index>(p.dim());
    const auto reg_out = d * static_cast<Eigen::Index>(hyp.j_pred);
    const auto cls_out =
        static_cast<Eigen::Index>(p.num_tx) * static_cast<Eigen::Index>(hyp.j_pred);

    Rng64 rng(seed);
    // Draw order mirrors blocks() order so initialization is reproducible.
    if (is_recurrent(kind)) {
        p.hidden = hyp.hidden;
        const auto h = static_cast<Eigen::Index>(hyp.hidden);
        p.enc1_lstm = make_lstm(d, h, rng);
        p.head_reg = make_fc(h, reg_out, rng);
        if (is_sequential(kind)) p.enc2_lstm = make_lstm(d, h, rng);
        p.head_cls = make_fc(h, cls_out, rng);
    } else {
        p.filters = hyp.filters;
        p.kernel = hyp.kernel;
        const auto f = static_cast<Eigen::Index>(hyp.filters);
        const auto wk = static_cast<Eigen::Index>(hyp.kernel);
        p.enc1_conv = make_conv_stack(d, wk, f, rng);
        p.head_reg = make_fc(f, reg_out, rng);
        if (is_sequential(kind)) p.enc2_conv = make_conv_stack(d, wk, f, rng);
        p.head_cls = make_fc(f, cls_out, rng);
    }
    return p;
}

// ------------------------------------------------------------------ loss ----

LossResult multi_task_loss(const Matrix& pred, const Matrix& target,
                           const Matrix& logits,
                           const std::vector<std::uint32_t>& labels, double w,
                           std::uint32_t num_tx, std::uint32_t j_pred) {
    if (!(w > 0.0 && w < 1.0))
        throw DomainError("multi-task weight must lie strictly inside (0,1)");
    if (j_pred == 0 || num_tx == 0) throw DomainError("J and K must be positive");
    const auto j = static_cast<Eigen::Index>(j_pred);
    const auto k = static_cast<Eigen::Index>(num_tx);
    const Eigen::Index batch = pred.cols();
    if (pred.rows() != target.rows() || pred.cols() != target.cols() ||
        pred.rows() % j != 0)
        throw ShapeError("prediction/target shape mismatch");
    if (logits.rows() != k * j || logits.cols() != batch)
        throw ShapeError("logit shape mismatch");
    if (static_cast<Eigen::Index>(labels.size()) != batch * j)
        throw ShapeError("one label per sample and step required");

    LossResult r;
    const Matrix diff = pred - target;
    const double scale = 1.0 / static_cast<double>(pred.rows());
    r.l_p = diff.squaredNorm() * scale;
    r.d_pred = (2.0 * w * scale) * diff;

    r.probs.resize(k * j, batch);
    r.d_logits.resize(k * j, batch);
    std::vector<std::uint32_t> step_labels(static_cast<std::size_t>(batch));
    for (Eigen::Index sj = 0; sj < j; ++sj) {
        for (Eigen::Index b = 0; b < batch; ++b)
            step_labels[static_cast<std::size_t>(b)] =
                labels[static_cast<std::size_t>(b * j + sj)];
        const XentResult x = softmax_xent(logits.middleRows(sj * k, k), step_labels);
        r.l_c += x.loss_sum;
        r.probs.middleRows(sj * k, k) = x.probs;
        r.d_logits.middleRows(sj * k, k) = (1.0 - w) * x.dlogits;
    }
    r.l_mt = w * r.l_p + (1.0 - w) * r.l_c;
    return r;
}

// ----------------------------------------------------- batch assembly ----

namespace {

// T history step matrices (D x B) for the given window ids.
std::vector<Matrix> history_steps(const WindowSet& ws,
                                  std::span<const std::uint32_t> wids) {
    const Eigen::Index d = ws.dim();
    const auto batch = static_cast<Eigen::Index>(wids.size());
    std::vector<Matrix> xs(ws.meta.t_hist, Matrix(d, batch));
    for (Eigen::Index b = 0; b < batch; ++b)
        for (std::uint32_t t = 0; t < ws.meta.t_hist; ++t)
            xs[t].col(b) = ws.train_col(wids[static_cast<std::size_t>(b)], t);
    return xs;
}

// Appends J step matrices taken from per-sample predicted columns
// (pred: (D*J) x B, step j in rows [j*D, (j+1)*D)).
void append_pred_steps(std::vector<Matrix>& xs, const Matrix& pred,
                       Eigen::Index d, std::uint32_t j_pred) {
    const Eigen::Index batch = pred.cols();
    for (std::uint32_t j = 0; j < j_pred; ++j) {
        Matrix step(d, batch);
        for (Eigen::Index b = 0; b < batch; ++b)
            step.col(b) = pred.col(b).segment(j * d, d);
        xs.push_back(std::move(step));
    }
}

// Sample-contiguous layout for the convolution stack: D x (B * len).
Matrix flat_input(const WindowSet& ws, std::span<const std::uint32_t> wids,
                  const Matrix* pred) {
    const Eigen::Index d = ws.dim();
    const std::uint32_t t = ws.meta.t_hist;
    const std::uint32_t j = ws.meta.j_pred;
    const auto batch = static_cast<Eigen::Index>(wids.size());
    const Eigen::Index len = t + (pred ? j : 0);
    Matrix x(d, batch * len);
    for (Eigen::Index b = 0; b < batch; ++b) {
        const std::uint32_t wid = wids[static_cast<std::size_t>(b)];
        for (std::uint32_t s = 0; s < t; ++s)
            x.col(b * len + s) = ws.train_col(wid, s);
        if (pred)
            for (std::uint32_t s = 0; s < j; ++s)
                x.col(b * len + t + s) = pred->col(b).segment(s * d, d);
    }
    return x;
}

Matrix gather_targets(const WindowSet& ws, std::span<const std::uint32_t> wids) {
    const Eigen::Index d = ws.dim();
    const std::uint32_t j = ws.meta.j_pred;
    const auto batch = static_cast<Eigen::Index>(wids.size());
    Matrix y(d * j, batch);
    for (Eigen::Index b = 0; b < batch; ++b)
        for (std::uint32_t s = 0; s < j; ++s)
            y.col(b).segment(s * d, d) =
                ws.target_col(wids[static_cast<std::size_t>(b)], s);
    return y;
}

std::vector<std::uint32_t> gather_labels0(const WindowSet& ws,
                                          std::span<const std::uint32_t> wids) {
    const std::uint32_t j = ws.meta.j_pred;
    std::vector<std::uint32_t> out;
    out.reserve(wids.size() * j);
    for (const std::uint32_t wid : wids)
        for (std::uint32_t s = 0; s < j; ++s)
            out.push_back(ws.label(wid, s) - 1);
    return out;
}

// Gathers the frozen stage-1 predictions for a batch out of the full table.
Matrix gather_pred(const Matrix& pred_all, std::span<const std::uint32_t> wids) {
    Matrix out(pred_all.rows(), static_cast<Eigen::Index>(wids.size()));
    for (Eigen::Index b = 0; b < out.cols(); ++b)
        out.col(b) = pred_all.col(wids[static_cast<std::size_t>(b)]);
    return out;
}

// Lowest index wins on exact ties.
std::uint32_t argmax_row(const Eigen::Ref<const Vector>& col) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < col.rows(); ++r)
        if (col(r) > col(best)) best = r;
    return static_cast<std::uint32_t>(best);
}

void check_dataset_matches(const ModelParams& p, const WindowSet& ws) {
    if (ws.meta.topology.num_transmitters != p.num_tx ||
        ws.meta.topology.num_eavesdroppers != p.num_ev ||
        ws.meta.t_hist != p.t_hist || ws.meta.j_pred != p.j_pred)
        throw ShapeError("dataset shapes do not match the model");
}

// Encoder-1 features without caches (inference).
Matrix enc1_features(const ModelParams& p, const WindowSet& ws,
                     std::span<const std::uint32_t> wids) {
    if (is_recurrent(p.kind))
        return lstm_final_state(p.enc1_lstm, history_steps(ws, wids));
    return conv_stack_forward(p.enc1_conv, flat_input(ws, wids, nullptr),
                              ws.meta.t_hist);
}

// Stage-1 regression output for every window, chunked.
Matrix stage1_predictions(const ModelParams& p, const WindowSet& ws) {
    const auto count = static_cast<Eigen::Index>(ws.count());
    Matrix pred_all(static_cast<Eigen::Index>(p.dim()) * p.j_pred, count);
    std::vector<std::uint32_t> wids;
    for (Eigen::Index s = 0; s < count; s += kPredictChunk) {
        const Eigen::Index e = std::min(count, s + kPredictChunk);
        wids.resize(static_cast<std::size_t>(e - s));
        for (Eigen::Index i = s; i < e; ++i)
            wids[static_cast<std::size_t>(i - s)] = static_cast<std::uint32_t>(i);
        pred_all.middleCols(s, e - s) =
            fc_forward(p.head_reg, enc1_features(p, ws, wids));
    }
    return pred_all;
}

std::vector<Matrix*> block_ptrs(std::vector<NamedParam>& blocks) {
    std::vector<Matrix*> out;
    out.reserve(blocks.size());
    for (NamedParam& np : blocks) out.push_back(np.value);
    return out;
}

struct IterRecord {
    double l_mt, l_p, l_c, lr;
};

void push_history(TrainHistory& h, const IterRecord& r, Clock::time_point t0) {
    h.l_mt.push_back(r.l_mt);
    h.l_p.push_back(r.l_p);
    h.l_c.push_back(r.l_c);
    h.lr.push_back(r.lr);
    h.wall_s.push_back(seconds_since(t0));
}

} // namespace

// ------------------------------------------------------------- training ----

namespace {

TrainResult train_joint(ModelKind kind, const WindowSet& ws, const Hyperparams& hyp) {
    TrainResult res;
    res.params = build_model(kind, ws.meta.topology, hyp, derive_seed(hyp.seed, kInitStream));
    ModelParams& p = res.params;

    auto blocks = p.blocks();
    const auto params_ptrs = block_ptrs(blocks);
    AdamState adam;
    const auto t0 = Clock::now();
    std::uint64_t n_iter = 0;

    for (std::uint32_t epoch = 0; epoch < hyp.epochs; ++epoch) {
        const auto batches = batch_indices(ws.count(), hyp.batch,
                                           derive_seed(hyp.seed, kStage1EpochStream + epoch));
        for (const auto& wids : batches) {
            const Matrix targets = gather_targets(ws, wids);
            const auto labels = gather_labels0(ws, wids);

            Matrix feat, pred, logits, dfeat;
            LstmCache lcache;
            ConvStackCache ccache;
            if (is_recurrent(kind)) {
                lcache = lstm_forward(p.enc1_lstm, history_steps(ws, wids));
                feat = lcache.h.back();
            } else {
                feat = conv_stack_forward(p.enc1_conv, flat_input(ws, wids, nullptr),
                                          ws.meta.t_hist, &ccache);
            }
            pred = fc_forward(p.head_reg, feat);
            logits = fc_forward(p.head_cls, feat);
            const LossResult loss =
                multi_task_loss(pred, targets, logits, labels, hyp.w, p.num_tx, p.j_pred);

            Matrix dfeat_reg, dfeat_cls;
            const FcGrads g_reg = fc_backward(p.head_reg, feat, loss.d_pred, &dfeat_reg);
            const FcGrads g_cls = fc_backward(p.head_cls, feat, loss.d_logits, &dfeat_cls);
            dfeat = dfeat_reg + dfeat_cls;

            std::vector<const Matrix*> grad_ptrs;
            LstmGrads lg;
            ConvStackGrads cg;
            if (is_recurrent(kind)) {
                std::vector<Matrix> dh(lcache.x.size(),
                                       Matrix::Zero(feat.rows(), feat.cols()));
                dh.back() = dfeat;
                lg = lstm_backward(p.enc1_lstm, lcache, dh);
                grad_ptrs = {&lg.W, &lg.U, &lg.b, &g_reg.W, &g_reg.b, &g_cls.W, &g_cls.b};
            } else {
                cg = conv_stack_backward(p.enc1_conv, ccache, dfeat);
                grad_ptrs = {&cg.filters, &cg.bias, &cg.ln_gain, &cg.ln_off,
                             &g_reg.W, &g_reg.b, &g_cls.W, &g_cls.b};
            }

            const double lr = lr_at(n_iter, hyp.base_lr);
            adam_step(adam, params_ptrs, grad_ptrs, lr);
            push_history(res.history, {loss.l_mt, loss.l_p, loss.l_c, lr}, t0);
            ++n_iter;
        }
    }
    res.history.total_s = seconds_since(t0);
    return res;
}

TrainResult train_sequential(ModelKind kind, const WindowSet& ws, const Hyperparams& hyp) {
    TrainResult res;
    res.params = build_model(kind, ws.meta.topology, hyp, derive_seed(hyp.seed, kInitStream));
    ModelParams& p = res.params;
    const bool rec = is_recurrent(kind);

    // Stage 1: regression network alone on the squared-error loss.
    auto all_blocks = p.blocks();
    std::vector<NamedParam> s1_blocks, s2_blocks;
    for (NamedParam& np : all_blocks) {
        const bool stage2 = np.name.rfind("enc2", 0) == 0 || np.name.rfind("cls", 0) == 0;
        (stage2 ? s2_blocks : s1_blocks).push_back(np);
    }
    const auto s1_ptrs = block_ptrs(s1_blocks);
    const auto s2_ptrs = block_ptrs(s2_blocks);

    const auto t0 = Clock::now();
    AdamState adam1;
    std::uint64_t n_iter = 0;
    const double reg_scale = 1.0 / static_cast<double>(p.dim() * p.j_pred);

    for (std::uint32_t epoch = 0; epoch < hyp.epochs; ++epoch) {
        const auto batches = batch_indices(ws.count(), hyp.batch,
                                           derive_seed(hyp.seed, kStage1EpochStream + epoch));
        for (const auto& wids : batches) {
            const Matrix targets = gather_targets(ws, wids);
            Matrix feat;
            LstmCache lcache;
            ConvStackCache ccache;
            if (rec) {
                lcache = lstm_forward(p.enc1_lstm, history_steps(ws, wids));
                feat = lcache.h.back();
            } else {
                feat = conv_stack_forward(p.enc1_conv, flat_input(ws, wids, nullptr),
                                          ws.meta.t_hist, &ccache);
            }
            const Matrix pred = fc_forward(p.head_reg, feat);
            const Matrix diff = pred - targets;
            const double l_p = diff.squaredNorm() * reg_scale;
            const Matrix d_pred = (2.0 * reg_scale) * diff;

            Matrix dfeat;
            const FcGrads g_reg = fc_backward(p.head_reg, feat, d_pred, &dfeat);
            std::vector<const Matrix*> grad_ptrs;
            LstmGrads lg;
            ConvStackGrads cg;
            if (rec) {
                std::vector<Matrix> dh(lcache.x.size(),
                                       Matrix::Zero(feat.rows(), feat.cols()));
                dh.back() = dfeat;
                lg = lstm_backward(p.enc1_lstm, lcache, dh);
                grad_ptrs = {&lg.W, &lg.U, &lg.b, &g_reg.W, &g_reg.b};
            } else {
                cg = conv_stack_backward(p.enc1_conv, ccache, dfeat);
                grad_ptrs = {&cg.filters, &cg.bias, &cg.ln_gain, &cg.ln_off,
                             &g_reg.W, &g_reg.b};
            }
            const double lr = lr_at(n_iter, hyp.base_lr);
            adam_step(adam1, s1_ptrs, grad_ptrs, lr);
            push_history(res.history, {l_p, l_p, 0.0, lr}, t0);
            ++n_iter;
        }
    }
    res.history.stage1_iters = n_iter;
    res.history.stage1_s = seconds_since(t0);

    // Stage 2: classifier on frozen stage-1 predictions appended to the
    // history (schedule restarts).
    const auto t1 = Clock::now();
    const Matrix pred_all = stage1_predictions(p, ws);
    AdamState adam2;
    std::uint64_t n_iter2 = 0;
    const Eigen::Index d = ws.dim();

    for (std::uint32_t epoch = 0; epoch < hyp.epochs; ++epoch) {
        const auto batches = batch_indices(ws.count(), hyp.batch,
                                           derive_seed(hyp.seed, kStage2EpochStream + epoch));
        for (const auto& wids : batches) {
            const auto labels = gather_labels0(ws, wids);
            const Matrix pred_b = gather_pred(pred_all, wids);

            Matrix feat;
            LstmCache lcache;
            ConvStackCache ccache;
            if (rec) {
                auto xs = history_steps(ws, wids);
                append_pred_steps(xs, pred_b, d, ws.meta.j_pred);
                lcache = lstm_forward(p.enc2_lstm, xs);
                feat = lcache.h.back();
            } else {
                feat = conv_stack_forward(p.enc2_conv, flat_input(ws, wids, &pred_b),
                                          ws.meta.t_hist + ws.meta.j_pred, &ccache);
            }
            const Matrix logits = fc_forward(p.head_cls, feat);

            // Cross-entropy per step block, batch-summed.
            double l_c = 0;
            Matrix d_logits(logits.rows(), logits.cols());
            const auto k = static_cast<Eigen::Index>(p.num_tx);
            std::vector<std::uint32_t> step_labels(wids.size());
            for (std::uint32_t sj = 0; sj < ws.meta.j_pred; ++sj) {
                for (std::size_t b = 0; b < wids.size(); ++b)
                    step_labels[b] = labels[b * ws.meta.j_pred + sj];
                const XentResult x = softmax_xent(logits.middleRows(sj * k, k), step_labels);
                l_c += x.loss_sum;
                d_logits.middleRows(sj * k, k) = x.dlogits;
            }

            Matrix dfeat;
            const FcGrads g_cls = fc_backward(p.head_cls, feat, d_logits, &dfeat);
            std::vector<const Matrix*> grad_ptrs;
            LstmGrads lg;
            ConvStackGrads cg;
            if (rec) {
                std::vector<Matrix> dh(lcache.x.size(),
                                       Matrix::Zero(feat.rows(), feat.cols()));
                dh.back() = dfeat;
                lg = lstm_backward(p.enc2_lstm, lcache, dh);
                grad_ptrs = {&lg.W, &lg.U, &lg.b, &g_cls.W, &g_cls.b};
            } else {
                cg = conv_stack_backward(p.enc2_conv, ccache, dfeat);
                grad_ptrs = {&cg.filters, &cg.bias, &cg.ln_gain, &cg.ln_off,
                             &g_cls.W, &g_cls.b};
            }
            const double lr = lr_at(n_iter2, hyp.base_lr);
            adam_step(adam2, s2_ptrs, grad_ptrs, lr);
            push_history(res.history, {l_c, 0.0, l_c, lr}, t0);
            ++n_iter2;
        }
    }
    res.history.stage2_s = seconds_since(t1);
    res.history.total_s = seconds_since(t0);
    return res;
}

} // namespace

TrainResult train(ModelKind kind, const WindowSet& ws, const Hyperparams& hyp) {
    hyp.validate();
    if (ws.meta.t_hist != hyp.t_hist || ws.meta.j_pred != hyp.j_pred)
        throw ShapeError("dataset window lengths do not match hyperparameters");
    if (ws.count() < hyp.batch)
        throw ShapeError("dataset holds fewer windows than one batch");
    if (is_sequential(kind)) return train_sequential(kind, ws, hyp);
    return train_joint(kind, ws, hyp);
}

// ------------------------------------------------------------ prediction ----

BatchPrediction predict_batch(const ModelParams& params, const WindowSet& ws,
                              std::span<const std::uint32_t> windows,
                              SeqClassifier cls) {
    check_dataset_matches(params, ws);
    const auto d = static_cast<Eigen::Index>(params.dim());
    const auto k = static_cast<Eigen::Index>(params.num_tx);
    const std::uint32_t j = params.j_pred;
    const auto total = static_cast<Eigen::Index>(windows.size());

    BatchPrediction out;
    out.pred.resize(d * j, total);
    out.probs.resize(k * j, total);
    out.idx.resize(windows.size() * j);

    for (Eigen::Index s = 0; s < total; s += kPredictChunk) {
        const Eigen::Index e = std::min(total, s + kPredictChunk);
        const auto wids = windows.subspan(static_cast<std::size_t>(s),
                                          static_cast<std::size_t>(e - s));

        const Matrix feat1 = enc1_features(params, ws, wids);
        const Matrix pred = fc_forward(params.head_reg, feat1);
        out.pred.middleCols(s, e - s) = pred;

        Matrix probs(k * j, e - s);
        if (cls == SeqClassifier::argmax_rule) {
            probs.setZero();
            for (Eigen::Index b = 0; b < e - s; ++b)
                for (std::uint32_t sj = 0; sj < j; ++sj) {
                    const Vector col = pred.col(b).segment(sj * d, d);
                    const std::span<const double> span(col.data(),
                                                       static_cast<std::size_t>(d));
                    const auto sel = select_transmitter(span, ws.meta.topology);
                    out.idx[static_cast<std::size_t>((s + b)) * j + sj] = sel.index;
                    probs(sj * k + sel.index - 1, b) = 1.0;
                }
        } else {
            Matrix feat2;
            if (is_sequential(params.kind)) {
                if (is_recurrent(params.kind)) {
                    auto xs = history_steps(ws, wids);
                    append_pred_steps(xs, pred, d, j);
                    feat2 = lstm_final_state(params.enc2_lstm, xs);
                } else {
                    feat2 = conv_stack_forward(params.enc2_conv,
                                               flat_input(ws, wids, &pred),
                                               ws.meta.t_hist + j);
                }
            } else {
                feat2 = feat1;
            }
            const Matrix logits = fc_forward(params.head_cls, feat2);
            for (std::uint32_t sj = 0; sj < j; ++sj) {
                probs.middleRows(sj * k, k) = softmax(logits.middleRows(sj * k, k));
                for (Eigen::Index b = 0; b < e - s; ++b)
                    out.idx[static_cast<std::size_t>((s + b)) * j + sj] =
                        argmax_row(probs.col(b).segment(sj * k, k)) + 1;
            }
        }
        out.probs.middleCols(s, e - s) = probs;
    }
    return out;
}

Prediction predict(const ModelParams& params, const Eigen::Ref<const Matrix>& h_train,
                   SeqClassifier cls, const TopologyConfig* topo) {
    const auto d = static_cast<Eigen::Index>(params.dim());
    const auto k = static_cast<Eigen::Index>(params.num_tx);
    const std::uint32_t j = params.j_pred;
    if (h_train.rows() != d || h_train.cols() != static_cast<Eigen::Index>(params.t_hist))
        throw ShapeError("input window shape does not match the model");
    if (cls == SeqClassifier::argmax_rule && topo == nullptr)
        throw UsageError("the argmax classifier needs a topology for its SNRs");

    std::vector<Matrix> xs;
    xs.reserve(params.t_hist + j);
    for (Eigen::Index t = 0; t < h_train.cols(); ++t) xs.push_back(h_train.col(t));

    Matrix feat1;
    if (is_recurrent(params.kind)) {
        feat1 = lstm_final_state(params.enc1_lstm, xs);
    } else {
        Matrix flat(d, h_train.cols());
        for (Eigen::Index t = 0; t < h_train.cols(); ++t) flat.col(t) = h_train.col(t);
        feat1 = conv_stack_forward(params.enc1_conv, flat, params.t_hist);
    }
    const Matrix pred = fc_forward(params.head_reg, feat1);

    Prediction out;
    out.csi.resize(d, j);
    for (std::uint32_t sj = 0; sj < j; ++sj)
        out.csi.col(sj) = pred.col(0).segment(sj * d, d);
    out.probs = Matrix::Zero(k, j);
    out.idx.resize(j);

    if (cls == SeqClassifier::argmax_rule) {
        for (std::uint32_t sj = 0; sj < j; ++sj) {
            const Vector col = out.csi.col(sj);
            const std::span<const double> span(col.data(), static_cast<std::size_t>(d));
            const auto sel = select_transmitter(span, *topo);
            out.idx[sj] = sel.index;
            out.probs(sel.index - 1, sj) = 1.0;
        }
        return out;
    }

    Matrix feat2;
    if (is_sequential(params.kind)) {
        if (is_recurrent(params.kind)) {
            append_pred_steps(xs, pred, d, j);
            feat2 = lstm_final_state(params.enc2_lstm, xs);
        } else {
            Matrix flat(d, params.t_hist + j);
            for (std::uint32_t t = 0; t < params.t_hist; ++t) flat.col(t) = h_train.col(t);
            for (std::uint32_t sj = 0; sj < j; ++sj)
                flat.col(params.t_hist + sj) = out.csi.col(sj);
            feat2 = conv_stack_forward(params.enc2_conv, flat, params.t_hist + j);
        }
    } else {
        feat2 = feat1;
    }
    const Matrix logits = fc_forward(params.head_cls, feat2);
    for (std::uint32_t sj = 0; sj < j; ++sj) {
        out.probs.col(sj) = softmax(logits.middleRows(sj * k, k));
        out.idx[sj] = argmax_row(out.probs.col(sj)) + 1;
    }
    return out;
}

// --------------------------------------------------------- grad checking ----

namespace {

GradCheckReport merge_reports(GradCheckReport a, const GradCheckReport& b) {
    a.checked += b.checked;
    a.failures += b.failures;
    if (b.max_rel_error > a.max_rel_error) {
        a.max_rel_error = b.max_rel_error;
        a.worst_block = b.worst_block;
        a.worst_row = b.worst_row;
        a.worst_col = b.worst_col;
        a.worst_analytic = b.worst_analytic;
        a.worst_numeric = b.worst_numeric;
    }
    a.passed = a.failures == 0;
    return a;
}

} // namespace

GradCheckReport model_gradient_check(ModelKind kind, std::uint64_t seed, double tol) {
    TopologyConfig topo;
    topo.num_transmitters = 2;
    topo.num_eavesdroppers = 1;
    ChannelConfig chan;
    chan.num_paths = 8;
    chan.num_samples = 16;
    Hyperparams hyp;
    hyp.w = 0.6;
    hyp.batch = 6;
    hyp.epochs = 1;
    hyp.hidden = 5;
    hyp.filters = 3;
    hyp.kernel = 2;
    hyp.t_hist = 4;
    hyp.j_pred = 1;
    hyp.seed = seed;

    const WindowSet ws = make_windows(
        build_scenario(topo, chan, derive_seed(seed, 42)), hyp.t_hist, hyp.j_pred);
    ModelParams p = build_model(kind, topo, hyp, derive_seed(seed, kInitStream));

    const std::vector<std::uint32_t> wids = {0, 2, 4, 6, 8, 10};
    const Matrix targets = gather_targets(ws, wids);
    const auto labels = gather_labels0(ws, wids);
    const bool rec = is_recurrent(kind);
    const Eigen::Index d = ws.dim();
    const auto k = static_cast<Eigen::Index>(p.num_tx);
    const double reg_scale = 1.0 / static_cast<double>(targets.rows());

    auto enc1_feat = [&]() {
        if (rec) return lstm_final_state(p.enc1_lstm, history_steps(ws, wids));
        return conv_stack_forward(p.enc1_conv, flat_input(ws, wids, nullptr), hyp.t_hist);
    };
    auto xent_sum = [&](const Matrix& logits, Matrix* d_logits) {
        double l_c = 0;
        if (d_logits) d_logits->resize(logits.rows(), logits.cols());
        std::vector<std::uint32_t> step_labels(wids.size());
        for (std::uint32_t sj = 0; sj < hyp.j_pred; ++sj) {
            for (std::size_t b = 0; b < wids.size(); ++b)
                step_labels[b] = labels[b * hyp.j_pred + sj];
            const XentResult x = softmax_xent(logits.middleRows(sj * k, k), step_labels);
            l_c += x.loss_sum;
            if (d_logits) d_logits->middleRows(sj * k, k) = x.dlogits;
        }
        return l_c;
    };

    if (!is_sequential(kind)) {
        auto blocks = p.blocks();
        Matrix feat;
        LstmCache lc;
        ConvStackCache cc;
        if (rec) {
            lc = lstm_forward(p.enc1_lstm, history_steps(ws, wids));
            feat = lc.h.back();
        } else {
            feat = conv_stack_forward(p.enc1_conv, flat_input(ws, wids, nullptr),
                                      hyp.t_hist, &cc);
        }
        const Matrix pred = fc_forward(p.head_reg, feat);
        const Matrix logits = fc_forward(p.head_cls, feat);
        const LossResult loss =
            multi_task_loss(pred, targets, logits, labels, hyp.w, p.num_tx, p.j_pred);
        Matrix dfeat_reg, dfeat_cls;
        const FcGrads g_reg = fc_backward(p.head_reg, feat, loss.d_pred, &dfeat_reg);
        const FcGrads g_cls = fc_backward(p.head_cls, feat, loss.d_logits, &dfeat_cls);
        const Matrix dfeat = dfeat_reg + dfeat_cls;
        std::vector<Matrix> grads;
        if (rec) {
            std::vector<Matrix> dh(lc.x.size(), Matrix::Zero(feat.rows(), feat.cols()));
            dh.back() = dfeat;
            const LstmGrads lg = lstm_backward(p.enc1_lstm, lc, dh);
            grads = {lg.W, lg.U, lg.b, g_reg.W, g_reg.b, g_cls.W, g_cls.b};
        } else {
            const ConvStackGrads cg = conv_stack_backward(p.enc1_conv, cc, dfeat);
            grads = {cg.filters, cg.bias, cg.ln_gain, cg.ln_off,
                     g_reg.W, g_reg.b, g_cls.W, g_cls.b};
        }
        std::vector<const Matrix*> gptrs;
        for (const Matrix& g : grads) gptrs.push_back(&g);
        auto loss_fn = [&]() {
            const Matrix f = enc1_feat();
            return multi_task_loss(fc_forward(p.head_reg, f), targets,
                                   fc_forward(p.head_cls, f), labels, hyp.w,
                                   p.num_tx, p.j_pred)
                .l_mt;
        };
        return gradient_check(blocks, gptrs, loss_fn, tol);
    }

    // Sequential: stage 1 (regression blocks, squared-error loss).
    auto all_blocks = p.blocks();
    std::vector<NamedParam> s1_blocks, s2_blocks;
    for (NamedParam& np : all_blocks) {
        const bool stage2 = np.name.rfind("enc2", 0) == 0 || np.name.rfind("cls", 0) == 0;
        (stage2 ? s2_blocks : s1_blocks).push_back(np);
    }

    GradCheckReport r1;
    {
        Matrix feat;
        LstmCache lc;
        ConvStackCache cc;
        if (rec) {
            lc = lstm_forward(p.enc1_lstm, history_steps(ws, wids));
            feat = lc.h.back();
        } else {
            feat = conv_stack_forward(p.enc1_conv, flat_input(ws, wids, nullptr),
                                      hyp.t_hist, &cc);
        }
        const Matrix pred = fc_forward(p.head_reg, feat);
        const Matrix d_pred = (2.0 * reg_scale) * (pred - targets);
        Matrix dfeat;
        const FcGrads g_reg = fc_backward(p.head_reg, feat, d_pred, &dfeat);
        std::vector<Matrix> grads;
        if (rec) {
            std::vector<Matrix> dh(lc.x.size(), Matrix::Zero(feat.rows(), feat.cols()));
            dh.back() = dfeat;
            const LstmGrads lg = lstm_backward(p.enc1_lstm, lc, dh);
            grads = {lg.W, lg.U, lg.b, g_reg.W, g_reg.b};
        } else {
            const ConvStackGrads cg = conv_stack_backward(p.enc1_conv, cc, dfeat);
            grads = {cg.filters, cg.bias, cg.ln_gain, cg.ln_off, g_reg.W, g_reg.b};
        }
        std::vector<const Matrix*> gptrs;
        for (const Matrix& g : grads) gptrs.push_back(&g);
        auto loss_fn = [&]() {
            return (fc_forward(p.head_reg, enc1_feat()) - targets).squaredNorm() *
                   reg_scale;
        };
        r1 = gradient_check(s1_blocks, gptrs, loss_fn, tol);
    }

    // Stage 2 (classifier blocks, cross-entropy on frozen stage-1 outputs).
    const Matrix pred_b = gather_pred(stage1_predictions(p, ws), wids);
    auto stage2_logits = [&]() {
        Matrix feat;
        if (rec) {
            auto xs = history_steps(ws, wids);
            append_pred_steps(xs, pred_b, d, hyp.j_pred);
            feat = lstm_final_state(p.enc2_lstm, xs);
        } else {
            feat = conv_stack_forward(p.enc2_conv, flat_input(ws, wids, &pred_b),
                                      hyp.t_hist + hyp.j_pred);
        }
        return fc_forward(p.head_cls, feat);
    };
    GradCheckReport r2;
    {
        Matrix feat;
        LstmCache lc;
        ConvStackCache cc;
        if (rec) {
            auto xs = history_steps(ws, wids);
            append_pred_steps(xs, pred_b, d, hyp.j_pred);
            lc = lstm_forward(p.enc2_lstm, xs);
            feat = lc.h.back();
        } else {
            feat = conv_stack_forward(p.enc2_conv, flat_input(ws, wids, &pred_b),
                                      hyp.t_hist + hyp.j_pred, &cc);
        }
        const Matrix logits = fc_forward(p.head_cls, feat);
        Matrix d_logits;
        xent_sum(logits, &d_logits);
        Matrix dfeat;
        const FcGrads g_cls = fc_backward(p.head_cls, feat, d_logits, &dfeat);
        std::vector<Matrix> grads;
        if (rec) {
            std::vector<Matrix> dh(lc.x.size(), Matrix::Zero(feat.rows(), feat.cols()));
            dh.back() = dfeat;
            const LstmGrads lg = lstm_backward(p.enc2_lstm, lc, dh);
            grads = {lg.W, lg.U, lg.b, g_cls.W, g_cls.b};
        } else {
            const ConvStackGrads cg = conv_stack_backward(p.enc2_conv, cc, dfeat);
            grads = {cg.filters, cg.bias, cg.ln_gain, cg.ln_off, g_cls.W, g_cls.b};
        }
        std::vector<const Matrix*> gptrs;
        for (const Matrix& g : grads) gptrs.push_back(&g);
        auto loss_fn = [&]() { return xent_sum(stage2_logits(), nullptr); };
        r2 = gradient_check(s2_blocks, gptrs, loss_fn, tol);
    }
    return merge_reports(r1, r2);
}

// ------------------------------------------------------------ checkpoints ----

namespace {
constexpr char kCkptMagic[5] = {'M', 'T', 'L', 'C', '1'};
constexpr std::uint32_t kCkptVersion = 1;
} // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    BinWriter out(path);
    out.bytes(kCkptMagic, sizeof kCkptMagic);
    out.u32(kCkptVersion);
    out.u32(static_cast<std::uint32_t>(params.kind));
    out.u32(params.num_tx);
    out.u32(params.num_ev);
    out.u32(params.t_hist);
    out.u32(params.j_pred);
    if (is_recurrent(params.kind)) {
        out.u32(params.hidden);
    } else {
        out.u32(params.filters);
        out.u32(params.kernel);
    }
    for (const Matrix* m : params.block_values())
        for (Eigen::Index c = 0; c < m->cols(); ++c)
            for (Eigen::Index r = 0; r < m->rows(); ++r)
                out.f64((*m)(r, c));
    out.close();
}

ModelParams load_checkpoint(const std::string& path, std::optional<ModelKind> expect) {
    BinReader in(path);
    char magic[5];
    in.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kCkptMagic, sizeof kCkptMagic) != 0)
        throw FormatError("not a checkpoint file: bad magic");
    const std::uint32_t version = in.u32();
    if (version != kCkptVersion)
        throw VersionError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t tag = in.u32();
    if (tag > static_cast<std::uint32_t>(ModelKind::cnn_seq))
        throw CorruptError("unknown architecture tag " + std::to_string(tag));
    const auto kind = static_cast<ModelKind>(tag);
    if (expect && *expect != kind)
        throw ShapeError(std::string("checkpoint holds a ") + kind_name(kind) +
                         " model, not " + kind_name(*expect));

    TopologyConfig topo;
    topo.num_transmitters = in.u32();
    topo.num_eavesdroppers = in.u32();
    Hyperparams hyp;
    hyp.t_hist = in.u32();
    hyp.j_pred = in.u32();
    if (is_recurrent(kind)) {
        hyp.hidden = in.u32();
    } else {
        hyp.filters = in.u32();
        hyp.kernel = in.u32();
    }
    ModelParams params;
    try {
        topo.validate();
        hyp.validate();
        params = build_model(kind, topo, hyp, 0);
    } catch (const DomainError& e) {
        throw CorruptError(std::string("checkpoint header invalid: ") + e.what());
    }
    for (NamedParam& np : params.blocks()) {
        Matrix& m = *np.value;
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                m(r, c) = in.f64();
    }
    if (!in.at_eof()) throw CorruptError("trailing bytes after parameter blocks");
    return params;
}

} // namespace csipred
