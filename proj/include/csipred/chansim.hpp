// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors
//
// Time-correlated Rayleigh fading via Clarke's sum-of-sinusoids model, plus
// the second-order statistics used to validate generated envelopes.

#ifndef CSIPRED_CHANSIM_HPP
#define CSIPRED_CHANSIM_HPP

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "csipred/errors.hpp"

namespace csipred {

inline constexpr double kSpeedOfLight = 2.998e8; // m/s

// Physical parameters of one time-varying fading link.
struct ChannelConfig {
    double carrier_freq_hz = 2e9;
    double speed_mps = 10.0;
    double sampling_freq_hz = 1e3;
    std::uint32_t num_paths = 100;
    std::uint64_t num_samples = 1;
    std::uint64_t seed = 0;

    // Throws DomainError on non-physical values or an undersampled Doppler
    // process (f_s must exceed twice the maximum Doppler frequency).
    void validate() const;
};

// Complex channel gain sampled at t_i = i / f_s. Unit average power:
// E[|h|^2] = 1 over the ensemble.
struct ComplexEnvelope {
    std::vector<std::complex<double>> samples;
};

// Maximum Doppler frequency f_c * v / c.
double doppler_frequency(double carrier_freq_hz, double speed_mps);

// Coherence time 0.423 / f_d. Throws DomainError for f_d <= 0.
double coherence_time(double doppler_hz);

// Zero-order Bessel function of the first kind, |error| < 1e-8.
// Power series below the crossover, Hankel asymptotic expansion above.
double bessel_j0(double x);

// Theoretical envelope autocorrelation J0(2 pi f_d tau).
double theoretical_autocorrelation(double doppler_hz, double lag_s);

// Draws angles-of-arrival and initial phases once, then evaluates the
// sum-of-sinusoids at every sample instant. Pure function of (cfg, seed).
ComplexEnvelope generate_envelope(const ChannelConfig& cfg, std::uint64_t seed);

// Debug trace: sample_index, re, im.
void write_envelope_csv(const ComplexEnvelope& env, const std::string& path);

} // namespace csipred

#endif
