// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors

#include "csipred/secrecy.hpp"

#include <cmath>

namespace csipred {

void TopologyConfig::validate() const {
    if (num_transmitters < 1) throw DomainError("num_transmitters must be >= 1");
    if (num_eavesdroppers < 1) throw DomainError("num_eavesdroppers must be >= 1");
    if (!std::isfinite(avg_snr_dest_db) || !std::isfinite(avg_snr_eaves_db))
        throw DomainError("average SNRs must be finite");
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

LinearSnr linear_snrs(const TopologyConfig& topo) {
    return {db_to_linear(topo.avg_snr_dest_db), db_to_linear(topo.avg_snr_eaves_db)};
}

double snr_dest(double h_mag, double avg_snr_dest_linear) {
    return avg_snr_dest_linear * h_mag * h_mag;
}

double snr_eaves_mrc(std::span<const double> h_mags, double avg_snr_eaves_linear) {
    if (h_mags.empty()) throw DomainError("MRC over an empty set of links");
    double sum = 0.0;
    for (double m : h_mags) sum += m * m;
    return avg_snr_eaves_linear * sum;
}

double secrecy_rate(double gamma_dest, double gamma_eaves) {
    const double r = std::log2((1.0 + gamma_dest) / (1.0 + gamma_eaves));
    return r > 0.0 ? r : 0.0;
}

SelectionResult select_transmitter(std::span<const double> csi_column,
                                   const TopologyConfig& topo) {
    const std::uint32_t k_tx = topo.num_transmitters;
    const std::uint32_t n_ev = topo.num_eavesdroppers;
    if (csi_column.size() != topo.dim())
        throw ShapeError("CSI column length does not match K(1+N)");

    const LinearSnr snr = linear_snrs(topo);

    // The clip [.]^+ is monotone-irrelevant to the argmax of the log ratio,
    // so compare the unclipped ratios and clip only the winner's rate.
    std::uint32_t best_k = 0;
    double best_ratio = -1.0;
    for (std::uint32_t k = 0; k < k_tx; ++k) {
        const double gamma_d = snr_dest(csi_column[k], snr.dest);
        const double gamma_e =
            snr_eaves_mrc(csi_column.subspan(k_tx + static_cast<std::size_t>(k) * n_ev, n_ev),
                          snr.eaves);
        const double ratio = (1.0 + gamma_d) / (1.0 + gamma_e);
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best_k = k;
        }
    }
    const double rate = std::log2(best_ratio);
    return {best_k + 1, rate > 0.0 ? rate : 0.0};
}

double ergodic_secrecy_rate(std::span<const double> rates_bpcu) {
    if (rates_bpcu.empty()) throw DomainError("ESR of an empty sequence");
    double sum = 0.0;
    for (double r : rates_bpcu) sum += r;
    return sum / static_cast<double>(rates_bpcu.size());
}

} // namespace csipred
