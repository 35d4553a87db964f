// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "csipred/dataset.hpp"
#include "csipred/rng.hpp"

using namespace csipred;

namespace {

CsiTensor synthetic_tensor(const TopologyConfig& topo, Eigen::Index samples,
                           std::uint64_t seed) {
    CsiTensor csi;
    csi.topology = topo;
    csi.channel.num_samples = static_cast<std::uint64_t>(samples);
    csi.channel.seed = seed;
    csi.magnitudes.resize(topo.dim(), samples);
    Rng64 rng(seed);
    for (Eigen::Index c = 0; c < samples; ++c)
        for (Eigen::Index r = 0; r < csi.magnitudes.rows(); ++r)
            csi.magnitudes(r, c) = rng.uniform(0.0, 2.0);
    return csi;
}

double row_correlation(const Eigen::MatrixXd& m, Eigen::Index a, Eigen::Index b) {
    const auto ra = m.row(a).array() - m.row(a).mean();
    const auto rb = m.row(b).array() - m.row(b).mean();
    return (ra * rb).sum() / std::sqrt((ra * ra).sum() * (rb * rb).sum());
}

WindowSet small_saved_set(const std::string& path, double snr_e_db = 10.0) {
    TopologyConfig topo;
    topo.num_transmitters = 2;
    topo.num_eavesdroppers = 2;
    topo.avg_snr_eaves_db = snr_e_db;
    ChannelConfig chan;
    chan.num_samples = 60;
    chan.num_paths = 16;
    auto csi = build_scenario(topo, chan, 31);
    auto ws = make_windows(csi, 10, 2, Split::test);
    ws.meta.seed = 31;
    save_dataset(ws, path);
    return ws;
}

void patch_file(const std::string& path, long offset_from_start, unsigned char value) {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    REQUIRE(f.good());
    f.seekp(offset_from_start);
    const char b = static_cast<char>(value);
    f.write(&b, 1);
}

long file_size(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    REQUIRE(f.good());
    return static_cast<long>(f.tellg());
}

} // namespace

TEST_CASE("build_scenario stacks K(1+N) links and is deterministic") {
    TopologyConfig topo; // K=3, N=2
    ChannelConfig chan;
    chan.num_samples = 64;
    chan.num_paths = 16;
    const auto a = build_scenario(topo, chan, 7);
    CHECK(a.magnitudes.rows() == 9);
    CHECK(a.magnitudes.cols() == 64);
    CHECK((a.magnitudes.array() >= 0).all());

    const auto b = build_scenario(topo, chan, 7);
    CHECK(a.magnitudes == b.magnitudes);
    const auto c = build_scenario(topo, chan, 8);
    CHECK(a.magnitudes != c.magnitudes);
}

TEST_CASE("scenario rows are mutually decorrelated") {
    TopologyConfig topo;
    topo.num_transmitters = 2;
    topo.num_eavesdroppers = 1;
    ChannelConfig chan;
    chan.num_samples = 100000;
    chan.num_paths = 32;
    const auto csi = build_scenario(topo, chan, 12);
    REQUIRE(csi.magnitudes.rows() == 4);
    for (Eigen::Index a = 0; a < 4; ++a)
        for (Eigen::Index b = a + 1; b < 4; ++b)
            CHECK(std::abs(row_correlation(csi.magnitudes, a, b)) < 0.05);
}

TEST_CASE("window count law S - T - J + 1") {
    TopologyConfig topo;
    topo.num_transmitters = 2;
    topo.num_eavesdroppers = 1;

    const auto train_src = synthetic_tensor(topo, 50000, 1);
    CHECK(make_windows(train_src, 10, 1).count() == 49990);

    const auto test_src = synthetic_tensor(topo, 150000, 2);
    const auto test_ws = make_windows(test_src, 10, 1, Split::test);
    CHECK(test_ws.count() == 149990);
    CHECK(test_ws.meta.split == Split::test);

    const auto tiny = synthetic_tensor(topo, 11, 3);
    CHECK(make_windows(tiny, 10, 1).count() == 1);

    const auto too_short = synthetic_tensor(topo, 10, 4);
    CHECK_THROWS_AS(make_windows(too_short, 10, 1), DomainError);
}

TEST_CASE("windows are stride-1 views into the source") {
    TopologyConfig topo;
    topo.num_transmitters = 2;
    topo.num_eavesdroppers = 1;
    const auto csi = synthetic_tensor(topo, 40, 17);
    const auto ws = make_windows(csi, 10, 2);
    REQUIRE(ws.count() == 29);

    for (std::uint64_t w : {std::uint64_t{0}, std::uint64_t{13}, std::uint64_t{28}}) {
        const auto win = ws.window(w);
        CHECK(win.h_train == csi.magnitudes.middleCols(static_cast<Eigen::Index>(w), 10));
        CHECK(win.h_target ==
              csi.magnitudes.middleCols(static_cast<Eigen::Index>(w) + 10, 2));
        for (std::uint32_t t = 0; t < 10; ++t)
            CHECK(ws.train_col(w, t) == csi.magnitudes.col(static_cast<Eigen::Index>(w) + t));
        for (std::uint32_t j = 0; j < 2; ++j)
            CHECK(ws.target_col(w, j) ==
                  csi.magnitudes.col(static_cast<Eigen::Index>(w) + 10 + j));
    }
}

TEST_CASE("labels re-derive from target columns for every window") {
    TopologyConfig topo; // K=3, N=2
    ChannelConfig chan;
    chan.num_samples = 300;
    chan.num_paths = 16;
    const auto csi = build_scenario(topo, chan, 99);
    const auto ws = make_windows(csi, 10, 2);
    for (std::uint64_t w = 0; w < ws.count(); ++w) {
        for (std::uint32_t j = 0; j < 2; ++j) {
            const auto col = ws.target_col(w, j);
            const std::vector<double> v(col.data(), col.data() + col.size());
            CHECK(ws.label(w, j) == select_transmitter(v, topo).index);
        }
    }
}

TEST_CASE("batch iteration shuffles, fills and drops the partial tail") {
    const auto batches = batch_indices(49990, 500, 42);
    CHECK(batches.size() == 99);
    for (const auto& b : batches) CHECK(b.size() == 500);

    // Every index distinct and in range.
    std::vector<bool> seen(49990, false);
    for (const auto& b : batches)
        for (auto i : b) {
            REQUIRE(i < 49990);
            REQUIRE(!seen[i]);
            seen[i] = true;
        }

    const auto again = batch_indices(49990, 500, 42);
    CHECK(batches == again);
    const auto other = batch_indices(49990, 500, 43);
    CHECK(batches != other);

    CHECK(batch_indices(7, 1, 0).size() == 7);
    CHECK(batch_indices(499, 500, 0).empty());
}

TEST_CASE("dataset round-trip is exact") {
    const std::string path = "ds_roundtrip_test.bin";
    const auto ws = small_saved_set(path);
    const auto back = load_dataset(path);

    CHECK(back.meta.topology.num_transmitters == ws.meta.topology.num_transmitters);
    CHECK(back.meta.topology.num_eavesdroppers == ws.meta.topology.num_eavesdroppers);
    CHECK(back.meta.topology.avg_snr_dest_db == ws.meta.topology.avg_snr_dest_db);
    CHECK(back.meta.topology.avg_snr_eaves_db == ws.meta.topology.avg_snr_eaves_db);
    CHECK(back.meta.channel.carrier_freq_hz == ws.meta.channel.carrier_freq_hz);
    CHECK(back.meta.channel.speed_mps == ws.meta.channel.speed_mps);
    CHECK(back.meta.channel.sampling_freq_hz == ws.meta.channel.sampling_freq_hz);
    CHECK(back.meta.channel.num_paths == ws.meta.channel.num_paths);
    CHECK(back.meta.t_hist == ws.meta.t_hist);
    CHECK(back.meta.j_pred == ws.meta.j_pred);
    CHECK(back.meta.split == ws.meta.split);
    CHECK(back.meta.seed == ws.meta.seed);
    CHECK(back.meta.count == ws.meta.count);
    CHECK(back.source == ws.source);
    CHECK(back.labels == ws.labels);
    std::remove(path.c_str());
    std::remove((path + ".meta.csv").c_str());
}

TEST_CASE("dataset loader rejects defective files") {
    const std::string path = "ds_defects_test.bin";

    SUBCASE("corrupted magic") {
        small_saved_set(path);
        patch_file(path, 0, 'X');
        CHECK_THROWS_AS(load_dataset(path), FormatError);
    }
    SUBCASE("unsupported layout version") {
        small_saved_set(path);
        patch_file(path, 5, 0xFE); // version word follows the 5-byte magic
        CHECK_THROWS_AS(load_dataset(path), VersionError);
    }
    SUBCASE("truncated payload") {
        small_saved_set(path);
        const long size = file_size(path);
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes(static_cast<std::size_t>(size - 9));
        in.read(bytes.data(), static_cast<long>(bytes.size()));
        in.close();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<long>(bytes.size()));
        out.close();
        CHECK_THROWS_AS(load_dataset(path), CorruptError);
    }
    SUBCASE("trailing garbage") {
        small_saved_set(path);
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out.write("????", 4);
        out.close();
        CHECK_THROWS_AS(load_dataset(path), CorruptError);
    }
    SUBCASE("tampered label") {
        const auto ws = small_saved_set(path);
        // Final u32 of the file is the last window's last label.
        const std::uint32_t old_label = ws.labels.back();
        const std::uint32_t new_label =
            old_label % ws.meta.topology.num_transmitters + 1;
        REQUIRE(new_label != old_label);
        patch_file(path, file_size(path) - 4, static_cast<unsigned char>(new_label));
        CHECK_THROWS_AS(load_dataset(path), CorruptError);
    }
    SUBCASE("tampered sample data") {
        small_saved_set(path);
        patch_file(path, (file_size(path) * 3) / 5, 0x7F);
        CHECK_THROWS_AS(load_dataset(path), CorruptError);
    }
    std::remove(path.c_str());
    std::remove((path + ".meta.csv").c_str());
}

TEST_CASE("missing metadata sidecar falls back to default SNRs") {
    const std::string path = "ds_sidecar_test.bin";

    SUBCASE("labels built at default SNRs still verify") {
        small_saved_set(path); // default 30/10 dB
        std::remove((path + ".meta.csv").c_str());
        const auto back = load_dataset(path);
        CHECK(back.meta.topology.avg_snr_eaves_db == 10.0);
        CHECK(back.meta.split == Split::train); // split lives in the sidecar
    }
    SUBCASE("labels built at other SNRs are refused without the sidecar") {
        small_saved_set(path, -40.0); // eavesdroppers effectively silent
        std::remove((path + ".meta.csv").c_str());
        CHECK_THROWS_AS(load_dataset(path), CorruptError);
    }
    std::remove(path.c_str());
    std::remove((path + ".meta.csv").c_str());
}
