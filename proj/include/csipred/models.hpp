// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors
//
// The four predictor architectures over the numeric core: joint two-headed
// networks (lstm-j, cnn-j) trained on a weighted regression+classification
// loss, and sequential pairs (lstm-s, cnn-s) where a regression network is
// trained first and a separate classifier is trained on its frozen outputs.

#ifndef CSIPRED_MODELS_HPP
#define CSIPRED_MODELS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csipred/dataset.hpp"
#include "csipred/netcore.hpp"

namespace csipred {

enum class ModelKind : std::uint32_t {
    lstm_joint = 0,
    lstm_seq = 1,
    cnn_joint = 2,
    cnn_seq = 3,
};

const char* kind_name(ModelKind k);
ModelKind kind_from_name(const std::string& name); // throws ConfigError

bool is_sequential(ModelKind k);
bool is_recurrent(ModelKind k);

struct Hyperparams {
    double w = 0.9;            // multi-task weight, open interval (0,1)
    std::uint32_t batch = 500;
    std::uint32_t epochs = 5;
    std::uint32_t hidden = 200;
    std::uint32_t filters = 50;
    std::uint32_t kernel = 6;
    std::uint32_t t_hist = 10;
    std::uint32_t j_pred = 1;
    std::uint64_t seed = 0;
    double base_lr = 0.005;

    void validate() const;
};

// All parameter blocks for one model. Unused blocks stay empty (0x0): joint
// kinds fill encoder 1 plus both heads; sequential kinds fill encoder 1 +
// regression head (network 1) and encoder 2 + classification head (network 2).
struct ModelParams {
    ModelKind kind = ModelKind::lstm_joint;
    std::uint32_t num_tx = 0;
    std::uint32_t num_ev = 0;
    std::uint32_t t_hist = 0;
    std::uint32_t j_pred = 0;
    std::uint32_t hidden = 0;  // lstm kinds
    std::uint32_t filters = 0; // cnn kinds
    std::uint32_t kernel = 0;  // cnn kinds

    LstmParams enc1_lstm, enc2_lstm;
    ConvStackParams enc1_conv, enc2_conv;
    FcParams head_reg; // D*J outputs
    FcParams head_cls; // K*J logits

    std::uint32_t dim() const { return num_tx * (1 + num_ev); }

    // Parameter blocks in the fixed checkpoint order (encoder 1 blocks,
    // regression head, then encoder 2 blocks if any, classification head).
    std::vector<NamedParam> blocks();
    std::vector<const Matrix*> block_values() const;
    std::uint64_t param_count() const;
};

ModelParams build_model(ModelKind kind, const TopologyConfig& topo,
                        const Hyperparams& hyp, std::uint64_t seed);

// ------------------------------------------------------------------ loss ----

struct LossResult {
    double l_mt = 0;
    double l_p = 0;
    double l_c = 0;
    Matrix probs;    // K*J x B, softmax applied per step block
    Matrix d_pred;   // gradient of l_mt wrt pred
    Matrix d_logits; // gradient of l_mt wrt logits
};

// pred/target: (D*J) x B with step j in rows [j*D, (j+1)*D); logits: (K*J) x B
// with step j in rows [j*K, (j+1)*K). labels: 0-based class per (sample, step),
// sample-major. l_p is the squared error summed over the batch and scaled by
// 1/(J*D); l_c is cross-entropy summed over batch and steps;
// l_mt = w*l_p + (1-w)*l_c, and the returned gradients are of l_mt.
LossResult multi_task_loss(const Matrix& pred, const Matrix& target,
                           const Matrix& logits,
                           const std::vector<std::uint32_t>& labels, double w,
                           std::uint32_t num_tx, std::uint32_t j_pred);

// ------------------------------------------------------------- training ----

struct TrainHistory {
    std::vector<double> l_mt, l_p, l_c; // per iteration (sequential kinds log
                                        // the active stage's loss in l_mt)
    std::vector<double> lr;
    std::vector<double> wall_s; // cumulative seconds at the end of each iter
    std::uint64_t stage1_iters = 0; // 0 for joint kinds
    double stage1_s = 0;
    double stage2_s = 0; // includes the frozen stage-1 prediction pass
    double total_s = 0;
};

struct TrainResult {
    ModelParams params;
    TrainHistory history;
};

// Trains `kind` on the window set. Joint kinds minimize the multi-task loss;
// sequential kinds train network 1 on the regression loss alone, precompute
// its predictions over every window, then train network 2 on cross-entropy
// with those frozen predictions appended to the input sequence. The learning
// rate schedule restarts at each stage.
TrainResult train(ModelKind kind, const WindowSet& ws, const Hyperparams& hyp);

// ------------------------------------------------------------ prediction ----

struct BatchPrediction {
    Matrix pred;                     // (D*J) x B predicted magnitudes
    Matrix probs;                    // (K*J) x B class probabilities
    std::vector<std::uint32_t> idx;  // B*J transmitter indices, 1-based,
                                     // sample-major; ties take the lowest index
};

// Classifier stand-in for sequential kinds: the trained network 2, or the
// deterministic secrecy-rate argmax applied to network 1's predictions.
enum class SeqClassifier { network, argmax_rule };

BatchPrediction predict_batch(const ModelParams& params, const WindowSet& ws,
                              std::span<const std::uint32_t> windows,
                              SeqClassifier cls = SeqClassifier::network);

struct Prediction {
    Matrix csi;                     // D x J
    Matrix probs;                   // K x J
    std::vector<std::uint32_t> idx; // J entries, 1-based
};

// Single-window forward pass. `topo` is required only for the argmax_rule
// classifier (it supplies the average SNRs).
Prediction predict(const ModelParams& params, const Eigen::Ref<const Matrix>& h_train,
                   SeqClassifier cls = SeqClassifier::network,
                   const TopologyConfig* topo = nullptr);

// Full-model finite-difference verification on a tiny built-in instance
// (K=2, N=1, T=4, H=5 / F=3, kernel=2, small seeded batch). Joint kinds check
// the multi-task gradient over every block; sequential kinds check stage 1's
// regression gradient and stage 2's classification gradient (frozen stage-1
// inputs) and merge the reports.
GradCheckReport model_gradient_check(ModelKind kind, std::uint64_t seed,
                                     double tol = 1e-5);

// ------------------------------------------------------------ checkpoints ----

// Versioned binary container ("MTLC1"); header carries the architecture tag
// and shape metadata, then the parameter blocks in `blocks()` order as
// little-endian column-major 64-bit floats.
void save_checkpoint(const ModelParams& params, const std::string& path);

// Throws FormatError / VersionError / CorruptError on malformed files and
// ShapeError when `expect` is given and the stored architecture differs.
ModelParams load_checkpoint(const std::string& path,
                            std::optional<ModelKind> expect = std::nullopt);

} // namespace csipred

#endif
