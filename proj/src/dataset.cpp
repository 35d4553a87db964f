// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors

#include "csipred/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <span>
#include <sstream>

#include "csipred/errors.hpp"
#include "csipred/io.hpp"
#include "csipred/rng.hpp"

namespace csipred {

namespace {

constexpr char kMagic[5] = {'C', 'S', 'I', 'W', '1'};
constexpr std::uint32_t kLayoutVersion = 1;

void validate_window_params(std::uint64_t num_samples, std::uint32_t t_hist,
                            std::uint32_t j_pred) {
    if (t_hist == 0 || j_pred == 0)
        throw DomainError("window lengths T and J must be positive");
    if (num_samples < static_cast<std::uint64_t>(t_hist) + j_pred)
        throw DomainError("series too short: need at least T + J samples");
}

std::vector<std::uint32_t> label_windows(const Eigen::MatrixXd& source,
                                         const TopologyConfig& topo,
                                         std::uint32_t t_hist, std::uint32_t j_pred,
                                         std::uint64_t count) {
    std::vector<std::uint32_t> labels;
    labels.reserve(count * j_pred);
    for (std::uint64_t w = 0; w < count; ++w) {
        for (std::uint32_t j = 0; j < j_pred; ++j) {
            const Eigen::Index col = static_cast<Eigen::Index>(w) + t_hist + j;
            const std::span<const double> column(source.col(col).data(),
                                                 static_cast<std::size_t>(source.rows()));
            labels.push_back(select_transmitter(column, topo).index);
        }
    }
    return labels;
}

std::string sidecar_path(const std::string& path) { return path + ".meta.csv"; }

} // namespace

const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

TrainingWindow WindowSet::window(std::uint64_t w) const {
    if (w >= meta.count) throw DomainError("window index out of range");
    const auto start = static_cast<Eigen::Index>(w);
    std::vector<std::uint32_t> k(labels.begin() + static_cast<std::ptrdiff_t>(w * meta.j_pred),
                                 labels.begin() + static_cast<std::ptrdiff_t>((w + 1) * meta.j_pred));
    return TrainingWindow{source.middleCols(start, meta.t_hist),
                          source.middleCols(start + meta.t_hist, meta.j_pred),
                          std::move(k)};
}

CsiTensor build_scenario(const TopologyConfig& topo, const ChannelConfig& chan,
                         std::uint64_t seed) {
    topo.validate();
    chan.validate();
    const auto dim = static_cast<Eigen::Index>(topo.dim());
    const auto samples = static_cast<Eigen::Index>(chan.num_samples);

    CsiTensor csi;
    csi.topology = topo;
    csi.channel = chan;
    csi.channel.seed = seed;
    csi.magnitudes.resize(dim, samples);
    for (Eigen::Index row = 0; row < dim; ++row) {
        const ComplexEnvelope env =
            generate_envelope(chan, derive_seed(seed, static_cast<std::uint64_t>(row)));
        for (Eigen::Index i = 0; i < samples; ++i)
            csi.magnitudes(row, i) = std::abs(env.samples[static_cast<std::size_t>(i)]);
    }
    return csi;
}

WindowSet make_windows(const CsiTensor& csi, std::uint32_t t_hist,
                       std::uint32_t j_pred, Split split) {
    csi.topology.validate();
    const auto samples = static_cast<std::uint64_t>(csi.magnitudes.cols());
    validate_window_params(samples, t_hist, j_pred);
    if (csi.magnitudes.rows() != static_cast<Eigen::Index>(csi.topology.dim()))
        throw ShapeError("CSI tensor row count does not match topology");

    WindowSet ws;
    ws.meta.topology = csi.topology;
    ws.meta.channel = csi.channel;
    ws.meta.t_hist = t_hist;
    ws.meta.j_pred = j_pred;
    ws.meta.split = split;
    ws.meta.seed = csi.channel.seed;
    ws.meta.count = samples - t_hist - j_pred + 1;
    ws.source = csi.magnitudes;
    ws.labels = label_windows(ws.source, ws.meta.topology, t_hist, j_pred, ws.meta.count);
    return ws;
}

std::vector<std::vector<std::uint32_t>> batch_indices(std::uint64_t window_count,
                                                      std::uint32_t batch_size,
                                                      std::uint64_t epoch_seed) {
    if (batch_size == 0) throw DomainError("batch size must be positive");
    std::vector<std::uint32_t> order(window_count);
    for (std::uint64_t i = 0; i < window_count; ++i)
        order[i] = static_cast<std::uint32_t>(i);
    Rng64 rng(epoch_seed);
    rng.shuffle(order);

    const std::uint64_t full = window_count / batch_size;
    std::vector<std::vector<std::uint32_t>> batches(full);
    for (std::uint64_t b = 0; b < full; ++b)
        batches[b].assign(order.begin() + static_cast<std::ptrdiff_t>(b * batch_size),
                          order.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch_size));
    return batches;
}

void save_dataset(const WindowSet& ws, const std::string& path) {
    const auto& m = ws.meta;
    const Eigen::Index dim = ws.source.rows();

    BinWriter out(path);
    out.bytes(kMagic, sizeof kMagic);
    out.u32(kLayoutVersion);
    out.u32(m.topology.num_transmitters);
    out.u32(m.topology.num_eavesdroppers);
    out.u32(m.t_hist);
    out.u32(m.j_pred);
    out.u64(m.count);
    out.u64(m.seed);
    out.f64(m.channel.carrier_freq_hz);
    out.f64(m.channel.speed_mps);
    out.f64(m.channel.sampling_freq_hz);
    out.u32(m.channel.num_paths);
    for (std::uint64_t w = 0; w < m.count; ++w) {
        for (Eigen::Index r = 0; r < dim; ++r)
            for (std::uint32_t t = 0; t < m.t_hist; ++t)
                out.f64(ws.train_col(w, t)(r));
        for (Eigen::Index r = 0; r < dim; ++r)
            for (std::uint32_t j = 0; j < m.j_pred; ++j)
                out.f64(ws.target_col(w, j)(r));
        for (std::uint32_t j = 0; j < m.j_pred; ++j)
            out.u32(ws.label(w, j));
    }
    out.close();

    std::ofstream meta(sidecar_path(path));
    if (!meta) throw Error("cannot write " + sidecar_path(path));
    meta.precision(17);
    meta << "key,value\n"
         << "split," << split_name(m.split) << "\n"
         << "avg_snr_dest_db," << m.topology.avg_snr_dest_db << "\n"
         << "avg_snr_eaves_db," << m.topology.avg_snr_eaves_db << "\n"
         << "num_transmitters," << m.topology.num_transmitters << "\n"
         << "num_eavesdroppers," << m.topology.num_eavesdroppers << "\n"
         << "t_hist," << m.t_hist << "\n"
         << "j_pred," << m.j_pred << "\n"
         << "window_count," << m.count << "\n"
         << "seed," << m.seed << "\n"
         << "carrier_freq_hz," << m.channel.carrier_freq_hz << "\n"
         << "speed_mps," << m.channel.speed_mps << "\n"
         << "sampling_freq_hz," << m.channel.sampling_freq_hz << "\n"
         << "num_paths," << m.channel.num_paths << "\n";
    if (!meta.good()) throw Error("failed writing " + sidecar_path(path));
}

namespace {

// Sidecar fields that the binary header does not carry. Missing sidecar falls
// back to the default topology SNRs.
struct SidecarFields {
    double snr_dest_db = TopologyConfig{}.avg_snr_dest_db;
    double snr_eaves_db = TopologyConfig{}.avg_snr_eaves_db;
    Split split = Split::train;
};

SidecarFields read_sidecar(const std::string& path) {
    SidecarFields f;
    std::ifstream in(sidecar_path(path));
    if (!in) return f;
    std::string line;
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        const std::string key = line.substr(0, comma);
        const std::string value = line.substr(comma + 1);
        if (key == "avg_snr_dest_db") f.snr_dest_db = std::stod(value);
        else if (key == "avg_snr_eaves_db") f.snr_eaves_db = std::stod(value);
        else if (key == "split" && value == "test") f.split = Split::test;
    }
    return f;
}

} // namespace

WindowSet load_dataset(const std::string& path) {
    BinReader in(path);

    char magic[5];
    in.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw FormatError("not a dataset file: bad magic");
    const std::uint32_t version = in.u32();
    if (version != kLayoutVersion)
        throw VersionError("unsupported dataset layout version " + std::to_string(version));

    WindowSet ws;
    auto& m = ws.meta;
    m.topology.num_transmitters = in.u32();
    m.topology.num_eavesdroppers = in.u32();
    m.t_hist = in.u32();
    m.j_pred = in.u32();
    m.count = in.u64();
    m.seed = in.u64();
    m.channel.carrier_freq_hz = in.f64();
    m.channel.speed_mps = in.f64();
    m.channel.sampling_freq_hz = in.f64();
    m.channel.num_paths = in.u32();
    m.channel.seed = m.seed;

    const SidecarFields side = read_sidecar(path);
    m.topology.avg_snr_dest_db = side.snr_dest_db;
    m.topology.avg_snr_eaves_db = side.snr_eaves_db;
    m.split = side.split;

    if (m.count == 0) throw CorruptError("dataset holds no windows");
    if (m.t_hist == 0 || m.j_pred == 0)
        throw CorruptError("dataset header has zero-length windows");
    try {
        m.topology.validate();
    } catch (const DomainError& e) {
        throw CorruptError(std::string("dataset header invalid: ") + e.what());
    }

    const auto dim = static_cast<Eigen::Index>(m.topology.dim());
    const std::uint64_t samples = m.count + m.t_hist + m.j_pred - 1;
    m.channel.num_samples = samples;
    ws.source.resize(dim, static_cast<Eigen::Index>(samples));
    ws.labels.resize(m.count * m.j_pred);

    // The source series is recovered from the expanded records: window w
    // contributes source column w (its first history column); the last window
    // contributes its remaining T + J - 1 columns. Every other value is
    // redundant and must agree with the columns already placed.
    Eigen::MatrixXd h_train(dim, m.t_hist);
    Eigen::MatrixXd h_target(dim, m.j_pred);
    for (std::uint64_t w = 0; w < m.count; ++w) {
        for (Eigen::Index r = 0; r < dim; ++r)
            for (std::uint32_t t = 0; t < m.t_hist; ++t)
                h_train(r, t) = in.f64();
        for (Eigen::Index r = 0; r < dim; ++r)
            for (std::uint32_t j = 0; j < m.j_pred; ++j)
                h_target(r, j) = in.f64();
        for (std::uint32_t j = 0; j < m.j_pred; ++j)
            ws.labels[w * m.j_pred + j] = in.u32();

        const auto start = static_cast<Eigen::Index>(w);
        if (w == 0) {
            ws.source.middleCols(0, m.t_hist) = h_train;
            ws.source.middleCols(m.t_hist, m.j_pred) = h_target;
            continue;
        }
        // Every history column and all but the last target column of window w
        // were already placed by earlier windows; the stored copies must agree.
        if (ws.source.middleCols(start, m.t_hist) != h_train)
            throw CorruptError("window " + std::to_string(w) +
                               " history disagrees with overlapping windows");
        ws.source.col(start + m.t_hist + m.j_pred - 1) = h_target.col(m.j_pred - 1);
        if (ws.source.middleCols(start + m.t_hist, m.j_pred) != h_target)
            throw CorruptError("window " + std::to_string(w) +
                               " target disagrees with overlapping windows");
    }
    if (!in.at_eof()) throw CorruptError("trailing bytes after final window");

    const std::vector<std::uint32_t> rederived =
        label_windows(ws.source, m.topology, m.t_hist, m.j_pred, m.count);
    if (rederived != ws.labels)
        throw CorruptError("stored labels disagree with stored CSI under the "
                           "dataset's average SNRs");
    return ws;
}

} // namespace csipred
