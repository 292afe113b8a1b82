// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

#include <string>
#include <vector>

#include "channelkit/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return channelkit::cli::run_cli(std::move(args));
}
