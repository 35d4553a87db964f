// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors
//
// Evaluation metrics (NMSE, selection accuracy, ergodic secrecy rates) and
// the parameter-sweep harness with CSV/JSON reporting.

#ifndef CSIPRED_EVAL_HPP
#define CSIPRED_EVAL_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csipred/models.hpp"

namespace csipred {

struct EvalReport {
    double nmse = 0;
    double selection_accuracy_pct = 0;
    double predicted_esr_bpcu = 0; // predicted CSI at the predicted index
    double realized_esr_bpcu = 0;  // actual CSI at the predicted index
    double perfect_esr_bpcu = 0;   // actual CSI at the true optimal index
    double train_time_s = 0;
    double test_time_s = 0;
    std::string model;
    double axis_value = 0;
    std::uint64_t seed = 0;
};

// Squared error energy over target energy, summed over windows and steps.
double nmse(const Matrix& preds, const Matrix& targets);

// 100 * matches / total.
double selection_accuracy(std::span<const std::uint32_t> pred_idx,
                          std::span<const std::uint32_t> true_idx);

// Mean clipped secrecy rate of choosing idx[w*J+j] under the CSI columns in
// `csi` ((D*J) x W, step-major rows). Feeding predicted magnitudes gives the
// predicted ESR; feeding actual magnitudes gives the realized ESR.
double esr_with_index(const Matrix& csi, std::span<const std::uint32_t> idx,
                      const TopologyConfig& topo, std::uint32_t j_pred);

double predicted_esr(const Matrix& preds, std::span<const std::uint32_t> pred_idx,
                     const TopologyConfig& topo, std::uint32_t j_pred);

double realized_esr(const Matrix& targets, std::span<const std::uint32_t> pred_idx,
                    const TopologyConfig& topo, std::uint32_t j_pred);

// Mean rate of the stored optimal index on the actual CSI.
double perfect_esr(const WindowSet& ws);

// Full test-set evaluation (inference wall-clock recorded in test_time_s;
// train_time_s is left for the caller).
EvalReport evaluate(const ModelParams& params, const WindowSet& ws,
                    SeqClassifier cls = SeqClassifier::network);

// -------------------------------------------------------------- sweeps ----

enum class SweepAxis { weight, speed, transmitters };

const char* axis_name(SweepAxis a);
SweepAxis axis_from_name(const std::string& name); // throws ConfigError

std::vector<double> default_grid(SweepAxis a);

struct SweepConfig {
    SweepAxis axis = SweepAxis::speed;
    std::vector<double> grid;           // empty -> default_grid(axis)
    TopologyConfig topo;                // base topology
    ChannelConfig chan;                 // base channel (speed overridden on the speed axis)
    std::uint64_t train_samples = 50000;
    std::uint64_t test_samples = 150000;
    Hyperparams hyp;                    // base training settings
    std::vector<ModelKind> kinds{ModelKind::lstm_joint};
    std::uint64_t seed = 0;
    std::uint32_t jobs = 1;

    void validate() const;
};

// Reference base settings for an axis: the topology and channel the
// comparison curves are defined at. The speed axis is defined at K=4; the
// weight and transmitter axes keep the global defaults (K=3, N=2, v=10).
SweepConfig default_sweep_config(SweepAxis a);

struct SweepRow {
    double axis_value = 0;
    ModelKind kind = ModelKind::lstm_joint;
    EvalReport report;
};

// For each grid point: regenerate train/test data under seeds derived from
// the master seed, train every requested kind, evaluate on the held-out test
// windows. Points may run on up to `jobs` threads; output order is fixed
// (grid-major, then kind) regardless of scheduling.
std::vector<SweepRow> run_sweep(const SweepConfig& cfg);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);
void write_sweep_json(const SweepConfig& cfg, const std::vector<SweepRow>& rows,
                      const std::string& path);

} // namespace csipred

#endif
