// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors
//
// Instantaneous SNRs, secrecy rates, optimal transmitter selection and the
// ergodic secrecy rate for a K-transmitter system observed by N colluding
// (maximal-ratio-combining) eavesdroppers.

#ifndef CSIPRED_SECRECY_HPP
#define CSIPRED_SECRECY_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "csipred/errors.hpp"

namespace csipred {

// Network geometry reduced to SNR terms. Path loss, transmit power and noise
// powers are absorbed into the configured average SNRs.
struct TopologyConfig {
    std::uint32_t num_transmitters = 3; // K
    std::uint32_t num_eavesdroppers = 2; // N
    double avg_snr_dest_db = 30.0;  // gamma_bar_D
    double avg_snr_eaves_db = 10.0; // gamma_bar_E

    void validate() const;

    // Number of links = rows of a CSI column: K destination rows followed by
    // K*N eavesdropper rows (transmitter-major, eavesdropper-minor).
    std::uint32_t dim() const { return num_transmitters * (1 + num_eavesdroppers); }
};

// dB -> linear power ratio, applied once at configuration load.
double db_to_linear(double db);

// Average SNRs of a topology in linear form.
struct LinearSnr {
    double dest;
    double eaves;
};
LinearSnr linear_snrs(const TopologyConfig& topo);

struct SelectionResult {
    std::uint32_t index;  // selected transmitter, 1-based in [1, K]
    double rate_bpcu;     // clipped secrecy rate of the selected transmitter
};

// gamma_bar_D * |h|^2.
double snr_dest(double h_mag, double avg_snr_dest_linear);

// Maximal ratio combining across eavesdroppers: gamma_bar_E * sum |h_n|^2.
// Throws DomainError on an empty list.
double snr_eaves_mrc(std::span<const double> h_mags, double avg_snr_eaves_linear);

// max(0, log2((1 + gamma_D) / (1 + gamma_E))).
double secrecy_rate(double gamma_dest, double gamma_eaves);

// Argmax of (1 + gamma_D^(k)) / (1 + gamma_E^(k)) over k, ties broken by the
// lowest index. `csi_column` holds K(1+N) link magnitudes in the layout
// described at TopologyConfig::dim(). Throws ShapeError on length mismatch.
SelectionResult select_transmitter(std::span<const double> csi_column,
                                   const TopologyConfig& topo);

// Arithmetic mean of per-instant secrecy rates. Throws DomainError when empty.
double ergodic_secrecy_rate(std::span<const double> rates_bpcu);

} // namespace csipred

#endif
