// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors
//
// Command-line front end: generate / train / eval / sweep / gradcheck.

#ifndef CSIPRED_CLI_HPP
#define CSIPRED_CLI_HPP

#include <string>
#include <vector>

namespace csipred {

// Runs one subcommand. `args` excludes the program name, e.g.
// {"train", "--k", "3", "--out", "model.ckpt"}. Returns the process exit
// status: 0 on success, and distinct codes per failure class (1 usage,
// 2 config/domain, 3 shape, 4 file format, 5 I/O, 6 verification failed).
int dispatch(const std::vector<std::string>& args);

} // namespace csipred

#endif
