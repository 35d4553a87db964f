// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <doctest.h>

#include "csipred/rng.hpp"
#include "csipred/secrecy.hpp"

using namespace csipred;

namespace {

// Independent reference: compute every transmitter's clipped rate from the
// raw column and take the lowest-index argmax of the pre-clip log ratio.
SelectionResult brute_force_select(const std::vector<double>& col,
                                   const TopologyConfig& topo) {
    const auto [gd_bar, ge_bar] = linear_snrs(topo);
    const std::uint32_t k_count = topo.num_transmitters;
    const std::uint32_t n_count = topo.num_eavesdroppers;
    std::uint32_t best = 0;
    double best_ratio = -1;
    for (std::uint32_t k = 0; k < k_count; ++k) {
        const double gd = gd_bar * col[k] * col[k];
        double esum = 0;
        for (std::uint32_t n = 0; n < n_count; ++n) {
            const double m = col[k_count + k * n_count + n];
            esum += m * m;
        }
        const double ge = ge_bar * esum;
        const double ratio = (1.0 + gd) / (1.0 + ge);
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best = k;
        }
    }
    return {best + 1, std::max(0.0, std::log2(best_ratio))};
}

std::vector<double> random_column(const TopologyConfig& topo, Rng64& rng) {
    std::vector<double> col(topo.dim());
    for (auto& v : col) {
        // Rayleigh magnitude via inverse CDF of the unit-power distribution.
        const double u = rng.uniform();
        v = std::sqrt(-std::log(1.0 - u));
    }
    return col;
}

} // namespace

TEST_CASE("dB to linear conversion") {
    CHECK(db_to_linear(30.0) == doctest::Approx(1000.0).epsilon(1e-14));
    CHECK(db_to_linear(10.0) == doctest::Approx(10.0).epsilon(1e-14));
    CHECK(db_to_linear(0.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(db_to_linear(-10.0) == doctest::Approx(0.1).epsilon(1e-14));
}

TEST_CASE("topology validation") {
    TopologyConfig topo;
    CHECK_NOTHROW(topo.validate());
    CHECK(topo.dim() == 9); // K=3, N=2 default

    TopologyConfig bad = topo;
    bad.num_transmitters = 0;
    CHECK_THROWS_AS(bad.validate(), DomainError);
    bad = topo;
    bad.num_eavesdroppers = 0;
    CHECK_THROWS_AS(bad.validate(), DomainError);
    bad = topo;
    bad.avg_snr_dest_db = std::nan("");
    CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("destination SNR") {
    CHECK(snr_dest(0.0, 12345.0) == 0.0);
    CHECK(snr_dest(1.0, 1000.0) == 1000.0);
    CHECK(snr_dest(0.5, 1000.0) == 250.0);
}

TEST_CASE("eavesdropper MRC SNR") {
    const double one[] = {0.7};
    CHECK(snr_eaves_mrc(one, 42.0) == doctest::Approx(snr_dest(0.7, 42.0)).epsilon(1e-15));

    const double two[] = {1.0, std::sqrt(3.0)};
    CHECK(snr_eaves_mrc(two, 1.0) == doctest::Approx(4.0).epsilon(1e-14));

    const double zeros[] = {0.0, 0.0, 0.0};
    CHECK(snr_eaves_mrc(zeros, 99.0) == 0.0);

    CHECK_THROWS_AS(snr_eaves_mrc({}, 1.0), DomainError);
}

TEST_CASE("secrecy rate is the clipped log ratio") {
    CHECK(secrecy_rate(7.0, 7.0) == 0.0);
    CHECK(secrecy_rate(3.0, 1.0) == 1.0);
    CHECK(secrecy_rate(1.0, 3.0) == 0.0);
    CHECK(secrecy_rate(0.0, 0.0) == 0.0);
    // always non-negative and finite on a random sample
    Rng64 rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double r = secrecy_rate(rng.uniform(0, 1e4), rng.uniform(0, 1e4));
        CHECK(r >= 0.0);
        CHECK(std::isfinite(r));
    }
}

TEST_CASE("select_transmitter on a worked two-transmitter example") {
    // K=2, N=1, both average SNRs 1 (0 dB). Destination magnitudes [2, 1],
    // eavesdropper magnitudes [1, 2] give ratios 5/2 and 2/5.
    TopologyConfig topo;
    topo.num_transmitters = 2;
    topo.num_eavesdroppers = 1;
    topo.avg_snr_dest_db = 0.0;
    topo.avg_snr_eaves_db = 0.0;
    const double col[] = {2.0, 1.0, 1.0, 2.0};
    const auto sel = select_transmitter(col, topo);
    CHECK(sel.index == 1);
    CHECK(sel.rate_bpcu == doctest::Approx(1.3219280948873623).epsilon(1e-14));
}

TEST_CASE("select_transmitter trivial and error cases") {
    TopologyConfig topo;
    topo.num_transmitters = 1;
    topo.num_eavesdroppers = 2;
    const double col[] = {0.3, 1.1, 0.9};
    CHECK(select_transmitter(col, topo).index == 1);

    const double short_col[] = {0.3, 1.1};
    CHECK_THROWS_AS(select_transmitter(short_col, topo), ShapeError);
}

TEST_CASE("select_transmitter ties break to the lowest index") {
    TopologyConfig topo;
    topo.num_transmitters = 3;
    topo.num_eavesdroppers = 1;
    topo.avg_snr_dest_db = 0.0;
    topo.avg_snr_eaves_db = 0.0;
    // Identical (dest, eaves) pairs for transmitters 1 and 3; transmitter 2 worse.
    const double col[] = {1.5, 0.2, 1.5, 0.4, 1.0, 0.4};
    const auto sel = select_transmitter(col, topo);
    CHECK(sel.index == 1);
}

TEST_CASE("select_transmitter equals brute force on 10^4 random columns") {
    TopologyConfig topo; // K=3, N=2, 30/10 dB
    Rng64 rng(2024);
    for (int trial = 0; trial < 10000; ++trial) {
        const auto col = random_column(topo, rng);
        const auto got = select_transmitter(col, topo);
        const auto want = brute_force_select(col, topo);
        REQUIRE(got.index == want.index);
        REQUIRE(got.rate_bpcu == doctest::Approx(want.rate_bpcu).epsilon(1e-12));
    }
}

TEST_CASE("selection is invariant when both link groups scale together") {
    TopologyConfig topo;
    topo.num_transmitters = 4;
    topo.num_eavesdroppers = 2;
    Rng64 rng(555);
    for (int trial = 0; trial < 500; ++trial) {
        auto col = random_column(topo, rng);
        const double c = rng.uniform(0.1, 10.0);
        auto scaled = col;
        for (auto& v : scaled) v *= c;
        // Oracle equivalence still holds on the scaled input.
        CHECK(select_transmitter(scaled, topo).index ==
              brute_force_select(scaled, topo).index);
    }
}

TEST_CASE("raising the selected transmitter's destination gain keeps it selected") {
    TopologyConfig topo;
    topo.num_transmitters = 5;
    topo.num_eavesdroppers = 2;
    Rng64 rng(777);
    for (int trial = 0; trial < 500; ++trial) {
        auto col = random_column(topo, rng);
        const auto before = select_transmitter(col, topo);
        col[before.index - 1] *= 1.5;
        const auto after = select_transmitter(col, topo);
        CHECK(after.index == before.index);
        CHECK(after.rate_bpcu >= before.rate_bpcu);
    }
}

TEST_CASE("ergodic secrecy rate is the arithmetic mean") {
    const double constants[] = {1.75, 1.75, 1.75};
    CHECK(ergodic_secrecy_rate(constants) == doctest::Approx(1.75).epsilon(1e-15));

    const double pair[] = {0.0, 2.0};
    CHECK(ergodic_secrecy_rate(pair) == doctest::Approx(1.0).epsilon(1e-15));

    CHECK_THROWS_AS(ergodic_secrecy_rate({}), DomainError);
}

TEST_CASE("ergodic secrecy rate is permutation invariant") {
    Rng64 rng(11);
    std::vector<double> rates(4096);
    for (auto& r : rates) r = rng.uniform(0, 5);
    const double base = ergodic_secrecy_rate(rates);
    auto shuffled = rates;
    rng.shuffle(shuffled);
    CHECK(ergodic_secrecy_rate(shuffled) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("mean rate matches per-instant recomputation over many instants") {
    TopologyConfig topo;
    Rng64 rng(8);
    std::vector<double> rates;
    std::vector<std::vector<double>> cols;
    for (int i = 0; i < 100000; ++i) {
        cols.push_back(random_column(topo, rng));
        rates.push_back(select_transmitter(cols.back(), topo).rate_bpcu);
    }
    const double esr = ergodic_secrecy_rate(rates);
    double sum = 0;
    for (const auto& c : cols) sum += brute_force_select(c, topo).rate_bpcu;
    CHECK(esr == doctest::Approx(sum / 100000.0).epsilon(1e-12));
}
