// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors

#include <doctest.h>

#include "csipred/chansim.hpp"
#include "csipred/cli.hpp"
#include "csipred/dataset.hpp"
#include "csipred/eval.hpp"
#include "csipred/models.hpp"

TEST_CASE("all modules link") {
    csipred::ChannelConfig chan;
    chan.num_samples = 32;
    const auto env = csipred::generate_envelope(chan, 1);
    CHECK(env.samples.size() == 32);
}
