// Copyright 2026 The ScoreAD Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "scoread/pipeline.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    using namespace scoread;

    CLI::App app{"Score-based hyperspectral anomaly detection"};
    app.require_subcommand(1, 1);
    app.set_version_flag("--version", kVersion);

    std::optional<std::string> config_file;
    Overrides o;
    std::optional<std::string> window;
    std::optional<std::string> input, mask, model, output;

    for (const char* name : {"train", "detect", "eval", "synth"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_file, "JSON configuration file");
        sub->add_option("--profile", o.profile, "Dataset preset")->check(CLI::IsMember(profile_names()));
        sub->add_option("--input", input, "Input cube (train, detect) or map stem (eval)");
        sub->add_option("--mask", mask, "Ground-truth mask (eval)");
        sub->add_option("--model", model, "Model file");
        sub->add_option("--output", output, "Output stem or directory");
        sub->add_option("--t", o.t, "Diffusion time of the perturbations");
        sub->add_option("--k", o.k, "Perturbations per pixel");
        sub->add_option("--seed", o.seed, "Random seed");
        sub->add_option("--window", window, "Dual window WIN,WOUT");
        sub->add_flag("--no-context", o.no_context, "Disable the context input");
        sub->add_option("--n-tau", o.n_tau, "Number of thresholds");
        sub->add_option("--threads", o.threads, "Worker threads (default: SCOREAD_THREADS or 1)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    PipelineConfig config;
    try {
        if (input) o.input = *input;
        if (mask) o.mask = *mask;
        if (model) o.model = *model;
        if (output) o.output = *output;
        if (window) o.window = parse_window(*window);
        std::optional<std::filesystem::path> cfg;
        if (config_file) cfg = *config_file;
        config = resolve_config(cfg, o);
    } catch (const std::exception& e) {
        std::cerr << "scoread " << command << ": " << e.what() << '\n';
        return kExitConfig;
    }
    return run_command(command, config, std::cerr);
}
