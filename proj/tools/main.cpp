// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors

#include <vector>

#include "csipred/cli.hpp"

int main(int argc, char** argv) {
    return csipred::dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
