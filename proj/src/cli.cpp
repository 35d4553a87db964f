// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors

#include "csipred/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "csipred/chansim.hpp"
#include "csipred/dataset.hpp"
#include "csipred/errors.hpp"
#include "csipred/eval.hpp"
#include "csipred/models.hpp"
#include "csipred/rng.hpp"
#include "csipred/secrecy.hpp"

namespace csipred {

namespace {

// Seed streams shared with the sweep harness so a lone `train` run and a
// sweep point with the same master seed agree.
constexpr std::uint64_t kTrainDataStream = 0;
constexpr std::uint64_t kModelStreamBase = 2;

struct RunConfig {
    TopologyConfig topo;
    ChannelConfig chan;
    Hyperparams hyp;
    std::uint64_t samples = 50000;
    std::uint64_t test_samples = 150000;
    std::uint64_t seed = 0;
    std::uint32_t jobs = 1;
    std::string split = "train";
    std::vector<std::string> models{"lstm-j"};
    std::string axis = "speed";
    std::string grid_text;
    std::string out;
    std::string dataset;
    std::string checkpoint;
    std::string seq_cls = "network";
    bool k_explicit = false; // K came from a flag or config file
};

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string normalize_key(std::string key) {
    for (char& c : key)
        if (c == '-') c = '_';
    return key;
}

// Flat key=value file; keys match the long flags. Unknown keys are refused.
void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected key=value");
        const std::string key = normalize_key(trim(line.substr(0, eq)));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "k") {
                cfg.topo.num_transmitters = std::stoul(value);
                cfg.k_explicit = true;
            }
            else if (key == "n") cfg.topo.num_eavesdroppers = std::stoul(value);
            else if (key == "snr_d_db") cfg.topo.avg_snr_dest_db = std::stod(value);
            else if (key == "snr_e_db") cfg.topo.avg_snr_eaves_db = std::stod(value);
            else if (key == "fc") cfg.chan.carrier_freq_hz = std::stod(value);
            else if (key == "speed") cfg.chan.speed_mps = std::stod(value);
            else if (key == "fs") cfg.chan.sampling_freq_hz = std::stod(value);
            else if (key == "paths") cfg.chan.num_paths = std::stoul(value);
            else if (key == "t_hist") cfg.hyp.t_hist = std::stoul(value);
            else if (key == "j_pred") cfg.hyp.j_pred = std::stoul(value);
            else if (key == "batch") cfg.hyp.batch = std::stoul(value);
            else if (key == "epochs") cfg.hyp.epochs = std::stoul(value);
            else if (key == "hidden") cfg.hyp.hidden = std::stoul(value);
            else if (key == "filters") cfg.hyp.filters = std::stoul(value);
            else if (key == "kernel") cfg.hyp.kernel = std::stoul(value);
            else if (key == "weight") cfg.hyp.w = std::stod(value);
            else if (key == "lr") cfg.hyp.base_lr = std::stod(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "samples") cfg.samples = std::stoull(value);
            else if (key == "test_samples") cfg.test_samples = std::stoull(value);
            else if (key == "jobs") cfg.jobs = std::stoul(value);
            else if (key == "split") cfg.split = value;
            else if (key == "model") cfg.models = {value};
            else if (key == "axis") cfg.axis = value;
            else if (key == "grid") cfg.grid_text = value;
            else if (key == "out") cfg.out = value;
            else if (key == "dataset") cfg.dataset = value;
            else if (key == "checkpoint") cfg.checkpoint = value;
            else if (key == "seq_cls") cfg.seq_cls = value;
            else
                throw ConfigError(path + ":" + std::to_string(lineno) +
                                  ": unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": bad value for '" + key + "'");
        } catch (const std::out_of_range&) {
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": value out of range for '" + key + "'");
        }
    }
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> grid;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            grid.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("bad grid value '" + item + "'");
        }
    }
    return grid;
}

std::string config_echo(const std::string& cmd, const RunConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "resolved: cmd=" << cmd << " k=" << cfg.topo.num_transmitters
       << " n=" << cfg.topo.num_eavesdroppers
       << " snr_d_db=" << cfg.topo.avg_snr_dest_db
       << " snr_e_db=" << cfg.topo.avg_snr_eaves_db
       << " fc=" << cfg.chan.carrier_freq_hz << " speed=" << cfg.chan.speed_mps
       << " fs=" << cfg.chan.sampling_freq_hz << " paths=" << cfg.chan.num_paths
       << " t_hist=" << cfg.hyp.t_hist << " j_pred=" << cfg.hyp.j_pred
       << " batch=" << cfg.hyp.batch << " epochs=" << cfg.hyp.epochs
       << " hidden=" << cfg.hyp.hidden << " filters=" << cfg.hyp.filters
       << " kernel=" << cfg.hyp.kernel << " weight=" << cfg.hyp.w
       << " lr=" << cfg.hyp.base_lr << " seed=" << cfg.seed
       << " samples=" << cfg.samples << " test_samples=" << cfg.test_samples
       << " jobs=" << cfg.jobs;
    if (!cfg.models.empty()) {
        os << " model=";
        for (std::size_t i = 0; i < cfg.models.size(); ++i)
            os << (i ? "," : "") << cfg.models[i];
    }
    if (!cfg.dataset.empty()) os << " dataset=" << cfg.dataset;
    if (!cfg.checkpoint.empty()) os << " checkpoint=" << cfg.checkpoint;
    if (!cfg.out.empty()) os << " out=" << cfg.out;
    return os.str();
}

std::string require_out(const RunConfig& cfg) {
    if (cfg.out.empty()) throw UsageError("--out is required for this command");
    return cfg.out;
}

ModelKind single_model(const RunConfig& cfg) {
    if (cfg.models.size() != 1)
        throw ConfigError("this command takes exactly one --model");
    return kind_from_name(cfg.models.front());
}

void write_history_csv(const std::string& path, const std::string& echo,
                       const TrainHistory& h) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out.precision(17);
    out << "# " << echo << "\n"
        << "iter,stage,l_mt,l_p,l_c,lr,wall_s\n";
    for (std::size_t i = 0; i < h.l_mt.size(); ++i) {
        const int stage = (h.stage1_iters != 0 && i >= h.stage1_iters) ? 2 : 1;
        out << i << ',' << stage << ',' << h.l_mt[i] << ',' << h.l_p[i] << ','
            << h.l_c[i] << ',' << h.lr[i] << ',' << h.wall_s[i] << '\n';
    }
    if (!out.good()) throw Error("failed writing " + path);
}

SeqClassifier seq_cls_from(const RunConfig& cfg) {
    if (cfg.seq_cls == "network") return SeqClassifier::network;
    if (cfg.seq_cls == "argmax") return SeqClassifier::argmax_rule;
    throw ConfigError("unknown --seq-cls '" + cfg.seq_cls +
                      "' (expected network or argmax)");
}

int cmd_generate(const RunConfig& cfg) {
    const std::string out = require_out(cfg);
    Split split;
    if (cfg.split == "train") split = Split::train;
    else if (cfg.split == "test") split = Split::test;
    else throw ConfigError("unknown --split '" + cfg.split + "' (train or test)");

    ChannelConfig chan = cfg.chan;
    chan.num_samples = cfg.samples;
    const CsiTensor csi = build_scenario(cfg.topo, chan, cfg.seed);
    const WindowSet ws = make_windows(csi, cfg.hyp.t_hist, cfg.hyp.j_pred, split);
    save_dataset(ws, out);
    std::cout << "generated " << ws.count() << " windows (" << split_name(split)
              << ", D=" << ws.dim() << ") -> " << out << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& echo) {
    const std::string out = require_out(cfg);
    const ModelKind kind = single_model(cfg);

    WindowSet ws;
    if (!cfg.dataset.empty()) {
        ws = load_dataset(cfg.dataset);
        std::cout << "loaded " << ws.count() << " windows from " << cfg.dataset
                  << "\n";
    } else {
        ChannelConfig chan = cfg.chan;
        chan.num_samples = cfg.samples;
        ws = make_windows(
            build_scenario(cfg.topo, chan, derive_seed(cfg.seed, kTrainDataStream)),
            cfg.hyp.t_hist, cfg.hyp.j_pred, Split::train);
        std::cout << "generated " << ws.count() << " training windows\n";
    }

    Hyperparams hyp = cfg.hyp;
    hyp.seed = derive_seed(cfg.seed,
                           kModelStreamBase + static_cast<std::uint64_t>(kind));
    const TrainResult tr = train(kind, ws, hyp);
    save_checkpoint(tr.params, out);
    write_history_csv(out + ".history.csv", echo, tr.history);

    std::cout.precision(10);
    std::cout << "trained " << kind_name(kind) << ": " << tr.history.l_mt.size()
              << " iterations, first loss " << tr.history.l_mt.front()
              << ", last loss " << tr.history.l_mt.back() << ", "
              << tr.history.total_s << " s\n"
              << "checkpoint -> " << out << "\nhistory   -> " << out
              << ".history.csv\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    if (cfg.checkpoint.empty()) throw UsageError("--checkpoint is required");
    if (cfg.dataset.empty()) throw UsageError("--dataset is required");
    const ModelParams params = load_checkpoint(cfg.checkpoint);
    const WindowSet ws = load_dataset(cfg.dataset);
    if (params.num_tx != ws.meta.topology.num_transmitters ||
        params.num_ev != ws.meta.topology.num_eavesdroppers ||
        params.t_hist != ws.meta.t_hist || params.j_pred != ws.meta.j_pred)
        throw ConfigError("checkpoint shapes (K,N,T,J) do not match the dataset");

    EvalReport r = evaluate(params, ws, seq_cls_from(cfg));
    std::cout.precision(10);
    std::cout << "model=" << r.model << "\n"
              << "nmse=" << r.nmse << "\n"
              << "selection_accuracy_pct=" << r.selection_accuracy_pct << "\n"
              << "predicted_esr_bpcu=" << r.predicted_esr_bpcu << "\n"
              << "realized_esr_bpcu=" << r.realized_esr_bpcu << "\n"
              << "perfect_esr_bpcu=" << r.perfect_esr_bpcu << "\n"
              << "test_time_s=" << r.test_time_s << "\n";
    if (!cfg.out.empty()) {
        nlohmann::json j{{"model", r.model},
                         {"nmse", r.nmse},
                         {"selection_accuracy_pct", r.selection_accuracy_pct},
                         {"predicted_esr_bpcu", r.predicted_esr_bpcu},
                         {"realized_esr_bpcu", r.realized_esr_bpcu},
                         {"perfect_esr_bpcu", r.perfect_esr_bpcu},
                         {"test_time_s", r.test_time_s},
                         {"dataset_seed", ws.meta.seed}};
        std::ofstream of(cfg.out);
        if (!of) throw Error("cannot write " + cfg.out);
        of << j.dump(2) << '\n';
        if (!of.good()) throw Error("failed writing " + cfg.out);
        std::cout << "report -> " << cfg.out << "\n";
    }
    return 0;
}

int cmd_sweep(const RunConfig& cfg) {
    const std::string out = require_out(cfg);
    SweepConfig sc;
    sc.axis = axis_from_name(cfg.axis);
    sc.grid = parse_grid(cfg.grid_text);
    sc.topo = cfg.topo;
    sc.chan = cfg.chan;
    sc.hyp = cfg.hyp;
    sc.train_samples = cfg.samples;
    sc.test_samples = cfg.test_samples;
    sc.kinds.clear();
    for (const std::string& m : cfg.models) sc.kinds.push_back(kind_from_name(m));
    sc.seed = cfg.seed;
    sc.jobs = cfg.jobs;

    const std::vector<SweepRow> rows = run_sweep(sc);
    write_sweep_csv(rows, out + ".csv");
    if (sc.grid.empty()) sc.grid = default_grid(sc.axis); // echo actual grid
    write_sweep_json(sc, rows, out + ".json");

    std::cout.precision(6);
    for (const SweepRow& r : rows)
        std::cout << axis_name(sc.axis) << "=" << r.axis_value << " "
                  << kind_name(r.kind) << ": nmse=" << r.report.nmse
                  << " acc=" << r.report.selection_accuracy_pct
                  << "% esr=" << r.report.predicted_esr_bpcu << "\n";
    std::cout << "table -> " << out << ".csv\nsummary -> " << out << ".json\n";
    return 0;
}

int cmd_gradcheck(const RunConfig& cfg) {
    bool all_pass = true;
    for (const ModelKind kind :
         {ModelKind::lstm_joint, ModelKind::lstm_seq, ModelKind::cnn_joint,
          ModelKind::cnn_seq}) {
        const GradCheckReport r = model_gradient_check(kind, cfg.seed);
        std::cout << kind_name(kind) << ": " << r.to_string() << "\n";
        all_pass = all_pass && r.passed;
    }
    if (!all_pass) {
        std::cerr << "error: gradient verification failed\n";
        return 6;
    }
    return 0;
}

} // namespace

int dispatch(const std::vector<std::string>& args) {
    RunConfig cfg;

    // The config file loads before flag parsing so flags override it.
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) {
                std::cerr << "error: --config needs a path\n";
                return 1;
            }
            try {
                apply_config_file(cfg, args[i + 1]);
            } catch (const ConfigError& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 2;
            }
        } else if (args[i].rfind("--config=", 0) == 0) {
            try {
                apply_config_file(cfg, args[i].substr(9));
            } catch (const ConfigError& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 2;
            }
        }
    }

    CLI::App app{"time-correlated fading CSI prediction and secrecy-aware "
                 "transmitter selection"};
    app.fallthrough();
    std::string config_path; // consumed above; declared so CLI11 accepts it
    app.add_option("--config", config_path, "flat key=value config file");
    auto* k_opt =
        app.add_option("--k", cfg.topo.num_transmitters,
                       "transmitters (speed sweeps default to 4)");
    app.add_option("--n", cfg.topo.num_eavesdroppers, "eavesdroppers per transmitter");
    app.add_option("--snr-d-db", cfg.topo.avg_snr_dest_db, "mean destination SNR (dB)");
    app.add_option("--snr-e-db", cfg.topo.avg_snr_eaves_db, "mean eavesdropper SNR (dB)");
    app.add_option("--fc", cfg.chan.carrier_freq_hz, "carrier frequency (Hz)");
    app.add_option("--speed", cfg.chan.speed_mps, "relative speed (m/s)");
    app.add_option("--fs", cfg.chan.sampling_freq_hz, "sampling frequency (Hz)");
    app.add_option("--paths", cfg.chan.num_paths, "propagation paths");
    app.add_option("--t-hist", cfg.hyp.t_hist, "history window length T");
    app.add_option("--j-pred", cfg.hyp.j_pred, "prediction horizon J");
    app.add_option("--batch", cfg.hyp.batch, "mini-batch size");
    app.add_option("--epochs", cfg.hyp.epochs, "training epochs");
    app.add_option("--hidden", cfg.hyp.hidden, "LSTM hidden units");
    app.add_option("--filters", cfg.hyp.filters, "convolution filters");
    app.add_option("--kernel", cfg.hyp.kernel, "convolution filter width");
    app.add_option("--weight", cfg.hyp.w, "multi-task weight w in (0,1)");
    app.add_option("--lr", cfg.hyp.base_lr, "base learning rate");
    app.add_option("--seed", cfg.seed, "master seed");
    app.add_option("--samples", cfg.samples, "generated series length");
    app.add_option("--test-samples", cfg.test_samples, "held-out series length (sweep)");
    app.add_option("--jobs", cfg.jobs, "parallel sweep workers");
    app.add_option("--split", cfg.split, "dataset split tag (train|test)");
    app.add_option("--model", cfg.models, "model kind(s): lstm-j|lstm-s|cnn-j|cnn-s");
    app.add_option("--axis", cfg.axis, "sweep axis: weight|speed|transmitters");
    app.add_option("--grid", cfg.grid_text, "comma-separated sweep grid");
    app.add_option("--out", cfg.out, "output path (or prefix)");
    app.add_option("--dataset", cfg.dataset, "dataset file");
    app.add_option("--checkpoint", cfg.checkpoint, "checkpoint file");
    app.add_option("--seq-cls", cfg.seq_cls,
                   "sequential classifier: network|argmax");

    auto* c_gen = app.add_subcommand("generate", "synthesize CSI and save a dataset");
    auto* c_train = app.add_subcommand("train", "train a model, save checkpoint + history");
    auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    auto* c_sweep = app.add_subcommand("sweep", "train/evaluate across a parameter grid");
    auto* c_grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    app.require_subcommand(1);

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("csipred");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        // 0 for --help/--version; anything else normalizes to the usage code.
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const std::string cmd = c_gen->parsed()     ? "generate"
                            : c_train->parsed() ? "train"
                            : c_eval->parsed()  ? "eval"
                            : c_sweep->parsed() ? "sweep"
                                                : "gradcheck";
    if (k_opt->count() > 0) cfg.k_explicit = true;
    try {
        if (c_sweep->parsed() && !cfg.k_explicit)
            cfg.topo.num_transmitters =
                default_sweep_config(axis_from_name(cfg.axis)).topo.num_transmitters;
        const std::string echo = config_echo(cmd, cfg);
        std::cout << echo << "\n";
        if (c_gen->parsed()) return cmd_generate(cfg);
        if (c_train->parsed()) return cmd_train(cfg, echo);
        if (c_eval->parsed()) return cmd_eval(cfg);
        if (c_sweep->parsed()) return cmd_sweep(cfg);
        return cmd_gradcheck(cfg);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    }
}

} // namespace csipred
