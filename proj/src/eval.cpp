// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors

#include "csipred/eval.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "csipred/errors.hpp"
#include "csipred/rng.hpp"

namespace csipred {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Matrix all_targets(const WindowSet& ws) {
    const Eigen::Index d = ws.dim();
    const std::uint32_t j = ws.meta.j_pred;
    Matrix y(d * j, static_cast<Eigen::Index>(ws.count()));
    for (std::uint64_t w = 0; w < ws.count(); ++w)
        for (std::uint32_t s = 0; s < j; ++s)
            y.col(static_cast<Eigen::Index>(w)).segment(s * d, d) = ws.target_col(w, s);
    return y;
}

} // namespace

double nmse(const Matrix& preds, const Matrix& targets) {
    if (preds.rows() != targets.rows() || preds.cols() != targets.cols())
        throw ShapeError("prediction/target shape mismatch");
    if (preds.size() == 0) throw DomainError("NMSE of an empty set");
    const double denom = targets.squaredNorm();
    if (denom == 0.0) throw DomainError("NMSE undefined: target energy is zero");
    return (preds - targets).squaredNorm() / denom;
}

double selection_accuracy(std::span<const std::uint32_t> pred_idx,
                          std::span<const std::uint32_t> true_idx) {
    if (pred_idx.size() != true_idx.size())
        throw ShapeError("index sequences differ in length");
    if (pred_idx.empty()) throw DomainError("accuracy of an empty set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred_idx.size(); ++i)
        if (pred_idx[i] == true_idx[i]) ++hits;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(pred_idx.size());
}

double esr_with_index(const Matrix& csi, std::span<const std::uint32_t> idx,
                      const TopologyConfig& topo, std::uint32_t j_pred) {
    topo.validate();
    if (j_pred == 0) throw DomainError("J must be positive");
    const auto d = static_cast<Eigen::Index>(topo.dim());
    const auto k = topo.num_transmitters;
    const auto n = topo.num_eavesdroppers;
    if (csi.rows() != d * j_pred)
        throw ShapeError("CSI rows do not match topology and J");
    const Eigen::Index windows = csi.cols();
    if (windows == 0) throw DomainError("ESR of an empty set");
    if (idx.size() != static_cast<std::size_t>(windows) * j_pred)
        throw ShapeError("one index per window and step required");

    const LinearSnr snr = linear_snrs(topo);
    double sum = 0;
    for (Eigen::Index w = 0; w < windows; ++w) {
        for (std::uint32_t j = 0; j < j_pred; ++j) {
            const std::uint32_t sel = idx[static_cast<std::size_t>(w) * j_pred + j];
            if (sel < 1 || sel > k)
                throw DomainError("transmitter index outside [1, K]");
            const auto col = csi.col(w).segment(j * d, d);
            const double g_d = snr_dest(col(sel - 1), snr.dest);
            const std::span<const double> eaves(col.data() + k + (sel - 1) * n, n);
            const double g_e = snr_eaves_mrc(eaves, snr.eaves);
            sum += secrecy_rate(g_d, g_e);
        }
    }
    return sum / (static_cast<double>(windows) * j_pred);
}

double predicted_esr(const Matrix& preds, std::span<const std::uint32_t> pred_idx,
                     const TopologyConfig& topo, std::uint32_t j_pred) {
    return esr_with_index(preds, pred_idx, topo, j_pred);
}

double realized_esr(const Matrix& targets, std::span<const std::uint32_t> pred_idx,
                    const TopologyConfig& topo, std::uint32_t j_pred) {
    return esr_with_index(targets, pred_idx, topo, j_pred);
}

double perfect_esr(const WindowSet& ws) {
    if (ws.count() == 0) throw DomainError("ESR of an empty set");
    return esr_with_index(all_targets(ws), ws.labels, ws.meta.topology, ws.meta.j_pred);
}

EvalReport evaluate(const ModelParams& params, const WindowSet& ws,
                    SeqClassifier cls) {
    std::vector<std::uint32_t> wids(ws.count());
    for (std::uint64_t i = 0; i < ws.count(); ++i)
        wids[i] = static_cast<std::uint32_t>(i);

    const auto t0 = Clock::now();
    const BatchPrediction bp = predict_batch(params, ws, wids, cls);
    const double test_s = seconds_since(t0);

    const Matrix targets = all_targets(ws);
    EvalReport r;
    r.model = kind_name(params.kind);
    r.test_time_s = test_s;
    r.nmse = nmse(bp.pred, targets);
    r.selection_accuracy_pct = selection_accuracy(bp.idx, ws.labels);
    r.predicted_esr_bpcu = predicted_esr(bp.pred, bp.idx, ws.meta.topology, ws.meta.j_pred);
    r.realized_esr_bpcu = realized_esr(targets, bp.idx, ws.meta.topology, ws.meta.j_pred);
    r.perfect_esr_bpcu = perfect_esr(ws);
    r.seed = ws.meta.seed;
    return r;
}

// -------------------------------------------------------------- sweeps ----

const char* axis_name(SweepAxis a) {
    switch (a) {
        case SweepAxis::weight: return "weight";
        case SweepAxis::speed: return "speed";
        case SweepAxis::transmitters: return "transmitters";
    }
    throw DomainError("unknown sweep axis");
}

SweepAxis axis_from_name(const std::string& name) {
    if (name == "weight") return SweepAxis::weight;
    if (name == "speed") return SweepAxis::speed;
    if (name == "transmitters") return SweepAxis::transmitters;
    throw ConfigError("unknown sweep axis '" + name +
                      "' (expected weight, speed or transmitters)");
}

std::vector<double> default_grid(SweepAxis a) {
    switch (a) {
        case SweepAxis::weight:
            return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
        case SweepAxis::speed:
            return {5, 10, 15, 20, 25, 30, 35, 40, 45, 50};
        case SweepAxis::transmitters:
            return {2, 3, 4, 5, 6};
    }
    throw DomainError("unknown sweep axis");
}

SweepConfig default_sweep_config(SweepAxis a) {
    SweepConfig cfg;
    cfg.axis = a;
    if (a == SweepAxis::speed) cfg.topo.num_transmitters = 4;
    return cfg;
}

void SweepConfig::validate() const {
    topo.validate();
    chan.validate();
    hyp.validate();
    if (kinds.empty()) throw ConfigError("no model kinds requested");
    if (jobs == 0) throw ConfigError("jobs must be at least 1");
    if (train_samples < hyp.t_hist + hyp.j_pred ||
        test_samples < hyp.t_hist + hyp.j_pred)
        throw ConfigError("sample counts shorter than one window");
    for (const double v : grid) {
        switch (axis) {
            case SweepAxis::weight:
                if (!(v > 0.0 && v < 1.0))
                    throw ConfigError("weight grid values must lie in (0,1)");
                break;
            case SweepAxis::speed:
                if (!(v > 0.0)) throw ConfigError("speed grid values must be positive");
                break;
            case SweepAxis::transmitters:
                if (v < 1.0 || v != std::floor(v))
                    throw ConfigError("transmitter grid values must be positive integers");
                break;
        }
    }
}

namespace {

// Seed streams under each grid point's derived seed.
constexpr std::uint64_t kTrainDataStream = 0;
constexpr std::uint64_t kTestDataStream = 1;
constexpr std::uint64_t kModelStreamBase = 2;

SweepRow run_point_kind(const SweepConfig& cfg, double axis_value,
                        std::uint64_t point_seed, ModelKind kind) {
    TopologyConfig topo = cfg.topo;
    ChannelConfig chan = cfg.chan;
    Hyperparams hyp = cfg.hyp;
    switch (cfg.axis) {
        case SweepAxis::weight: hyp.w = axis_value; break;
        case SweepAxis::speed: chan.speed_mps = axis_value; break;
        case SweepAxis::transmitters:
            topo.num_transmitters = static_cast<std::uint32_t>(axis_value);
            break;
    }

    ChannelConfig train_chan = chan;
    train_chan.num_samples = cfg.train_samples;
    ChannelConfig test_chan = chan;
    test_chan.num_samples = cfg.test_samples;

    const WindowSet train_ws =
        make_windows(build_scenario(topo, train_chan, derive_seed(point_seed, kTrainDataStream)),
                     hyp.t_hist, hyp.j_pred, Split::train);
    const WindowSet test_ws =
        make_windows(build_scenario(topo, test_chan, derive_seed(point_seed, kTestDataStream)),
                     hyp.t_hist, hyp.j_pred, Split::test);

    hyp.seed = derive_seed(point_seed,
                           kModelStreamBase + static_cast<std::uint64_t>(kind));
    const TrainResult tr = train(kind, train_ws, hyp);

    SweepRow row;
    row.axis_value = axis_value;
    row.kind = kind;
    row.report = evaluate(tr.params, test_ws);
    row.report.train_time_s = tr.history.total_s;
    row.report.axis_value = axis_value;
    row.report.seed = point_seed;
    return row;
}

} // namespace

std::vector<SweepRow> run_sweep(const SweepConfig& cfg_in) {
    SweepConfig cfg = cfg_in;
    if (cfg.grid.empty()) cfg.grid = default_grid(cfg.axis);
    cfg.validate();

    const std::size_t per_point = cfg.kinds.size();
    std::vector<SweepRow> rows(cfg.grid.size() * per_point);

    auto run_point = [&](std::size_t i) {
        const std::uint64_t point_seed = derive_seed(cfg.seed, i);
        for (std::size_t k = 0; k < per_point; ++k)
            rows[i * per_point + k] =
                run_point_kind(cfg, cfg.grid[i], point_seed, cfg.kinds[k]);
    };

    const std::size_t workers =
        std::min<std::size_t>(cfg.jobs, cfg.grid.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < cfg.grid.size(); ++i) run_point(i);
        return rows;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < cfg.grid.size();
                 i = next.fetch_add(1))
                run_point(i);
        });
    for (std::thread& t : pool) t.join();
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out.precision(17);
    out << "axis_value,model_kind,nmse,selection_accuracy_pct,predicted_esr,"
           "realized_esr,perfect_esr,train_time_s,test_time_s,seed\n";
    for (const SweepRow& r : rows)
        out << r.axis_value << ',' << kind_name(r.kind) << ',' << r.report.nmse
            << ',' << r.report.selection_accuracy_pct << ','
            << r.report.predicted_esr_bpcu << ',' << r.report.realized_esr_bpcu
            << ',' << r.report.perfect_esr_bpcu << ',' << r.report.train_time_s
            << ',' << r.report.test_time_s << ',' << r.report.seed << '\n';
    if (!out.good()) throw Error("failed writing " + path);
}

void write_sweep_json(const SweepConfig& cfg, const std::vector<SweepRow>& rows,
                      const std::string& path) {
    nlohmann::json j;
    j["axis"] = axis_name(cfg.axis);
    j["grid"] = cfg.grid;
    j["seed"] = cfg.seed;
    j["jobs"] = cfg.jobs;
    j["train_samples"] = cfg.train_samples;
    j["test_samples"] = cfg.test_samples;
    j["topology"] = {{"num_transmitters", cfg.topo.num_transmitters},
                     {"num_eavesdroppers", cfg.topo.num_eavesdroppers},
                     {"avg_snr_dest_db", cfg.topo.avg_snr_dest_db},
                     {"avg_snr_eaves_db", cfg.topo.avg_snr_eaves_db}};
    j["channel"] = {{"carrier_freq_hz", cfg.chan.carrier_freq_hz},
                    {"speed_mps", cfg.chan.speed_mps},
                    {"sampling_freq_hz", cfg.chan.sampling_freq_hz},
                    {"num_paths", cfg.chan.num_paths}};
    j["training"] = {{"w", cfg.hyp.w},           {"batch", cfg.hyp.batch},
                     {"epochs", cfg.hyp.epochs}, {"hidden", cfg.hyp.hidden},
                     {"filters", cfg.hyp.filters}, {"kernel", cfg.hyp.kernel},
                     {"t_hist", cfg.hyp.t_hist},   {"j_pred", cfg.hyp.j_pred},
                     {"base_lr", cfg.hyp.base_lr}};
    std::vector<std::string> kinds;
    for (const ModelKind k : cfg.kinds) kinds.emplace_back(kind_name(k));
    j["kinds"] = kinds;
    j["rows"] = nlohmann::json::array();
    for (const SweepRow& r : rows)
        j["rows"].push_back({{"axis_value", r.axis_value},
                             {"model_kind", kind_name(r.kind)},
                             {"nmse", r.report.nmse},
                             {"selection_accuracy_pct", r.report.selection_accuracy_pct},
                             {"predicted_esr", r.report.predicted_esr_bpcu},
                             {"realized_esr", r.report.realized_esr_bpcu},
                             {"perfect_esr", r.report.perfect_esr_bpcu},
                             {"train_time_s", r.report.train_time_s},
                             {"test_time_s", r.report.test_time_s},
                             {"seed", r.report.seed}});
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out.good()) throw Error("failed writing " + path);
}

} // namespace csipred
