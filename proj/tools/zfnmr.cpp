// Copyright 2026 The zfnmr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "zfnmr/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char **argv) {
    CLI::App app{"Zero-field NMR two-spin control simulator"};
    app.require_subcommand(1, 1);

    std::string config;
    zfnmr::cli::Overrides ov;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out;

    for (const char *name : {"fid", "scan", "rb", "tomo", "cnot"}) {
        auto *sub = app.add_subcommand(name);
        sub->add_option("--config", config, "JSON config file")->required();
        sub->add_option("--seed", seed, "master seed (overrides config and $ZFNMR_SEED)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", out, "output directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : zfnmr::cli::kExitConfig;
    }

    const auto *sub = app.get_subcommands().front();
    if (sub->count("--seed")) ov.seed = seed;
    if (sub->count("--threads")) ov.threads = threads;
    if (sub->count("--out")) ov.out_dir = out;
    return zfnmr::cli::run(sub->get_name(), config, ov, std::cerr);
}
