// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors
//
// Labeled sliding-window datasets over generated CSI: scenario assembly,
// windowing, mini-batch iteration and the versioned on-disk container.

#ifndef CSIPRED_DATASET_HPP
#define CSIPRED_DATASET_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "csipred/chansim.hpp"
#include "csipred/secrecy.hpp"

namespace csipred {

enum class Split : std::uint32_t { train = 0, test = 1 };

const char* split_name(Split s);

// Magnitudes of all K(1+N) links over time. Row layout: rows [0, K) are the
// destination links |h_D^(k)|; row K + k*N + n is eavesdropper link
// |h_E^(k,n)| (k outer, n inner). Column i is sample instant i / f_s.
struct CsiTensor {
    TopologyConfig topology;
    ChannelConfig channel; // num_samples == magnitudes.cols(), seed == master seed
    Eigen::MatrixXd magnitudes;
};

struct DatasetMeta {
    TopologyConfig topology;
    ChannelConfig channel;
    std::uint32_t t_hist = 10; // T
    std::uint32_t j_pred = 1;  // J
    Split split = Split::train;
    std::uint64_t seed = 0;
    std::uint64_t count = 0; // number of windows = S - T - J + 1
};

// One training set: T historical columns, J target columns, and the
// secrecy-optimal transmitter index (1-based) for each target column.
struct TrainingWindow {
    Eigen::Ref<const Eigen::MatrixXd> h_train;  // D x T
    Eigen::Ref<const Eigen::MatrixXd> h_target; // D x J
    std::vector<std::uint32_t> k_target;        // J entries in [1, K]
};

// Stride-1 window set backed by the source series; windows are views.
class WindowSet {
  public:
    DatasetMeta meta;
    Eigen::MatrixXd source;              // D x S
    std::vector<std::uint32_t> labels;   // count * J, window-major, 1-based

    std::uint64_t count() const { return meta.count; }
    Eigen::Index dim() const { return source.rows(); }

    // Column t of window w's historical block (absolute source column w + t).
    auto train_col(std::uint64_t w, std::uint32_t t) const {
        return source.col(static_cast<Eigen::Index>(w) + t);
    }
    // Column j of window w's target block.
    auto target_col(std::uint64_t w, std::uint32_t j) const {
        return source.col(static_cast<Eigen::Index>(w) + meta.t_hist + j);
    }
    std::uint32_t label(std::uint64_t w, std::uint32_t j) const {
        return labels[w * meta.j_pred + j];
    }

    TrainingWindow window(std::uint64_t w) const;
};

// Generates K(1+N) independent envelopes with per-link seeds derived from
// `seed` and stacks their magnitudes in the fixed row layout.
CsiTensor build_scenario(const TopologyConfig& topo, const ChannelConfig& chan,
                         std::uint64_t seed);

// One window per start offset (stride 1); labels derived per target column
// via select_transmitter. Throws DomainError when the series is shorter than
// T + J.
WindowSet make_windows(const CsiTensor& csi, std::uint32_t t_hist,
                       std::uint32_t j_pred, Split split = Split::train);

// Shuffled epoch order grouped into full batches of `batch_size` window
// indices; the final partial batch is dropped.
std::vector<std::vector<std::uint32_t>> batch_indices(std::uint64_t window_count,
                                                      std::uint32_t batch_size,
                                                      std::uint64_t epoch_seed);

inline std::vector<std::vector<std::uint32_t>> batch_iter(const WindowSet& ws,
                                                          std::uint32_t batch_size,
                                                          std::uint64_t epoch_seed) {
    return batch_indices(ws.count(), batch_size, epoch_seed);
}

// Versioned binary container ("CSIW1"); windows are expanded to contiguous
// records. A metadata CSV sidecar (path + ".meta.csv") carries the fields the
// binary header does not, notably the average SNRs the labels were built with.
void save_dataset(const WindowSet& ws, const std::string& path);

// Rebuilds the source series from the expanded records and validates that
// every record and label is consistent with it. Throws FormatError /
// VersionError / CorruptError / ShapeError on the corresponding defects.
WindowSet load_dataset(const std::string& path);

} // namespace csipred

#endif
