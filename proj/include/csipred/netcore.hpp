// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors
//
// Differentiable numeric core on 64-bit floats: batched LSTM with full
// backpropagation through time, affine layers, softmax/cross-entropy, a 1-D
// convolution stack, Adam, the training-rate schedule and a finite-difference
// gradient checker. Batches are stored column-wise: a batch of B vectors of
// dimension D is a D x B matrix.

#ifndef CSIPRED_NETCORE_HPP
#define CSIPRED_NETCORE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "csipred/rng.hpp"

namespace csipred {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Uniform Glorot fill over [-sqrt(6/(fan_in+fan_out)), +...].
void glorot_fill(Matrix& m, Eigen::Index fan_in, Eigen::Index fan_out, Rng64& rng);

// ---------------------------------------------------------------- LSTM ----

// Gate blocks are stacked along rows in the fixed order
// [input; forget; candidate; output], each block H rows.
struct LstmParams {
    Matrix W; // 4H x D_in
    Matrix U; // 4H x H
    Matrix b; // 4H x 1

    Eigen::Index hidden() const { return U.cols(); }
    Eigen::Index input_dim() const { return W.cols(); }
    void validate() const;
};

LstmParams make_lstm(Eigen::Index input_dim, Eigen::Index hidden, Rng64& rng,
                     double forget_bias = 1.0);

struct LstmGrads {
    Matrix W;
    Matrix U;
    Matrix b;
};

// Activations retained by the forward pass; owned copies so the backward
// pass cannot observe later mutation of the caller's buffers.
struct LstmCache {
    std::vector<Matrix> x;      // T of D_in x B
    std::vector<Matrix> i, f, g, o;
    std::vector<Matrix> c;      // post-update cell state per step
    std::vector<Matrix> tanh_c;
    std::vector<Matrix> h;      // hidden state per step
    Eigen::Index batch = 0;
};

// Runs the standard LSTM recurrence over a T-step batch (initial h, c zero).
// Returns the cache; cache.h.back() is the final hidden state.
LstmCache lstm_forward(const LstmParams& params, const std::vector<Matrix>& x);

// Final hidden state only, no activation cache (inference path).
Matrix lstm_final_state(const LstmParams& params, const std::vector<Matrix>& x);

// Exact reverse-mode gradients. dh_seq holds one upstream gradient per step
// (H x B each; pass zero matrices for steps without a loss contribution).
// dx, when non-null, receives gradients with respect to the inputs.
LstmGrads lstm_backward(const LstmParams& params, const LstmCache& cache,
                        const std::vector<Matrix>& dh_seq,
                        std::vector<Matrix>* dx = nullptr);

// --------------------------------------------------------------- affine ----

struct FcParams {
    Matrix W; // out x in
    Matrix b; // out x 1
};

FcParams make_fc(Eigen::Index in_dim, Eigen::Index out_dim, Rng64& rng);

struct FcGrads {
    Matrix W;
    Matrix b;
};

Matrix fc_forward(const FcParams& p, const Matrix& x);
// dy: out x B upstream gradient; x: the forward input. dx optional.
FcGrads fc_backward(const FcParams& p, const Matrix& x, const Matrix& dy,
                    Matrix* dx = nullptr);

// -------------------------------------------------- softmax / cross-ent ----

// Column-wise max-subtracted softmax.
Matrix softmax(const Matrix& logits);

struct XentResult {
    double loss_sum = 0; // summed over columns (batch-sum convention)
    Matrix probs;
    Matrix dlogits; // gradient of loss_sum wrt logits: probs - onehot
};

// labels are 0-based class indices, one per column.
XentResult softmax_xent(const Matrix& logits, const std::vector<std::uint32_t>& labels);

// ----------------------------------------------------- 1-D conv stack ----

// Valid convolution stride 1 over time, ReLU, per-time-step layer
// normalization across the F channels (learnable gain/offset, eps 1e-5),
// then a global average pool over time.
struct ConvStackParams {
    Matrix filters;  // F x (C_in * W_k); filter row f, column c*W_k + w
    Matrix bias;     // F x 1
    Matrix ln_gain;  // F x 1
    Matrix ln_off;   // F x 1
    Eigen::Index in_channels = 0;
    Eigen::Index kernel = 0;

    Eigen::Index num_filters() const { return filters.rows(); }
    void validate() const;
};

ConvStackParams make_conv_stack(Eigen::Index in_channels, Eigen::Index kernel,
                                Eigen::Index num_filters, Rng64& rng);

struct ConvStackGrads {
    Matrix filters;
    Matrix bias;
    Matrix ln_gain;
    Matrix ln_off;
};

struct ConvStackCache {
    Matrix cols;     // (C_in*W_k) x (L*B) im2col view of the input
    Matrix pre_act;  // F x (L*B) pre-ReLU
    Matrix act;      // F x (L*B) post-ReLU
    Matrix norm;     // F x (L*B) normalized activations (pre gain/offset)
    Vector inv_std;  // L*B
    Eigen::Index len = 0;   // T
    Eigen::Index out_len = 0; // L = T - W_k + 1
    Eigen::Index batch = 0;
};

// x: C_in x (B*T); sample b occupies columns [b*T, (b+1)*T). Output: F x B.
Matrix conv_stack_forward(const ConvStackParams& p, const Matrix& x,
                          Eigen::Index len, ConvStackCache* cache = nullptr);

// dy: F x B upstream gradient of the pooled output. dx optional (C_in x B*T).
ConvStackGrads conv_stack_backward(const ConvStackParams& p, const ConvStackCache& cache,
                                   const Matrix& dy, Matrix* dx = nullptr);

// ----------------------------------------------------------------- Adam ----

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step_count = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;
};

// Standard bias-corrected Adam over a set of parameter blocks. Accumulators
// are allocated on first use; afterwards block shapes must stay fixed.
void adam_step(AdamState& state, const std::vector<Matrix*>& params,
               const std::vector<const Matrix*>& grads, double lr);

// Harmonic decay schedule: base / (1 + base * n_iter).
double lr_at(std::uint64_t n_iter, double base = 0.005);

// -------------------------------------------------------- grad checking ----

struct NamedParam {
    std::string name;
    Matrix* value = nullptr;
};

struct GradCheckReport {
    bool passed = true;
    double max_rel_error = 0;
    std::uint64_t checked = 0;
    std::uint64_t failures = 0;
    std::string worst_block;
    Eigen::Index worst_row = 0;
    Eigen::Index worst_col = 0;
    double worst_analytic = 0;
    double worst_numeric = 0;

    std::string to_string() const;
};

// Central finite differences (step 1e-6) against the supplied analytic
// gradients. `loss` must recompute the scalar loss from current parameter
// values. A coordinate passes when |ga - gn| <= max(1e-8, tol*max(|ga|,|gn|)).
GradCheckReport gradient_check(const std::vector<NamedParam>& params,
                               const std::vector<const Matrix*>& grads,
                               const std::function<double()>& loss,
                               double tol = 1e-5);

} // namespace csipred

#endif
