// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors

#include "csipred/chansim.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "csipred/rng.hpp"

namespace csipred {

namespace {
constexpr double kPi = std::numbers::pi;
}

void ChannelConfig::validate() const {
    if (!(carrier_freq_hz > 0)) throw DomainError("carrier_freq_hz must be positive");
    if (!(speed_mps >= 0)) throw DomainError("speed_mps must be non-negative");
    if (!(sampling_freq_hz > 0)) throw DomainError("sampling_freq_hz must be positive");
    if (num_paths < 1) throw DomainError("num_paths must be >= 1");
    if (num_samples < 1) throw DomainError("num_samples must be >= 1");
    const double fd = doppler_frequency(carrier_freq_hz, speed_mps);
    if (!(sampling_freq_hz > 2.0 * fd))
        throw DomainError("sampling_freq_hz must exceed twice the Doppler frequency");
}

double doppler_frequency(double carrier_freq_hz, double speed_mps) {
    return carrier_freq_hz * speed_mps / kSpeedOfLight;
}

double coherence_time(double doppler_hz) {
    if (!(doppler_hz > 0))
        throw DomainError("coherence time is unbounded for a static channel");
    return 0.423 / doppler_hz;
}

double bessel_j0(double x) {
    x = std::fabs(x);
    if (x < 12.0) {
        // Power series sum_k (-1)^k (x^2/4)^k / (k!)^2. Worst-case term growth
        // at the crossover still leaves ~12 significant digits in doubles.
        const double q = 0.25 * x * x;
        double term = 1.0;
        double sum = 1.0;
        for (int k = 1; k <= 60; ++k) {
            term *= -q / (static_cast<double>(k) * k);
            sum += term;
            if (std::fabs(term) < 1e-18 * std::fabs(sum)) break;
        }
        return sum;
    }
    // Hankel asymptotic expansion: P through x^-6 and Q through x^-7 keep the
    // truncation error below 1e-8 for x >= 12.
    const double ix2 = 1.0 / (x * x);
    const double p = 1.0 + ix2 * (-9.0 / 128.0 +
                     ix2 * (3675.0 / 32768.0 +
                     ix2 * (-2401245.0 / 4194304.0)));
    const double q = (1.0 / x) * (-1.0 / 8.0 +
                     ix2 * (75.0 / 1024.0 +
                     ix2 * (-59535.0 / 262144.0 +
                     ix2 * (405810405.0 / 234881024.0))));
    const double chi = x - 0.25 * kPi;
    return std::sqrt(2.0 / (kPi * x)) * (p * std::cos(chi) - q * std::sin(chi));
}

double theoretical_autocorrelation(double doppler_hz, double lag_s) {
    if (!(doppler_hz >= 0)) throw DomainError("doppler_hz must be non-negative");
    if (!(lag_s >= 0)) throw DomainError("lag_s must be non-negative");
    return bessel_j0(2.0 * kPi * doppler_hz * lag_s);
}

ComplexEnvelope generate_envelope(const ChannelConfig& cfg, std::uint64_t seed) {
    cfg.validate();

    const std::size_t m_paths = cfg.num_paths;
    const double fd = doppler_frequency(cfg.carrier_freq_hz, cfg.speed_mps);

    // Angle of arrival beta_m = (2 pi m + theta_m) / M and initial phase
    // phi_m, theta_m ~ U[-pi, pi], drawn once per realization.
    Rng64 rng(seed);
    std::vector<double> omega(m_paths); // 2 pi f_d cos(beta_m)
    std::vector<double> phi(m_paths);
    for (std::size_t m = 0; m < m_paths; ++m) {
        const double theta = rng.uniform(-kPi, kPi);
        const double beta = (2.0 * kPi * static_cast<double>(m + 1) + theta) /
                            static_cast<double>(m_paths);
        omega[m] = 2.0 * kPi * fd * std::cos(beta);
        phi[m] = rng.uniform(-kPi, kPi);
    }

    ComplexEnvelope env;
    env.samples.resize(cfg.num_samples);
    const double norm = 1.0 / std::sqrt(static_cast<double>(m_paths));
    for (std::uint64_t i = 0; i < cfg.num_samples; ++i) {
        const double t = static_cast<double>(i) / cfg.sampling_freq_hz;
        double yc = 0.0;
        double ys = 0.0;
        for (std::size_t m = 0; m < m_paths; ++m) {
            const double arg = omega[m] * t + phi[m];
            yc += std::cos(arg);
            ys += std::sin(arg);
        }
        env.samples[i] = {norm * yc, norm * ys};
    }
    return env;
}

void write_envelope_csv(const ComplexEnvelope& env, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path);
    out.precision(17);
    out << "sample_index,re,im\n";
    for (std::size_t i = 0; i < env.samples.size(); ++i)
        out << i << ',' << env.samples[i].real() << ',' << env.samples[i].imag() << '\n';
    if (!out) throw Error("write failed: " + path);
}

} // namespace csipred
