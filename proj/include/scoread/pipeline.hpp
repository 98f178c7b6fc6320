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

#pragma once

#include "scoread/data_io.hpp"
#include "scoread/detector.hpp"
#include "scoread/eval.hpp"
#include "scoread/oracle.hpp"
#include "scoread/sgm.hpp"

#include "json.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace scoread {

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 1,
    kExitData = 2,
    kExitDiverged = 3,
    kExitSingleClass = 4,
};

/// Everything a subcommand needs. Paths are interpreted per subcommand:
///   train   input = cube, model = model file to write
///   detect  input = cube, model = trained model, output = map stem
///   eval    input = map stem, mask = ground truth, output = report directory
///   synth   output = scene directory
struct PipelineConfig {
    std::string profile;
    std::filesystem::path input;
    std::filesystem::path mask;
    std::filesystem::path model;
    std::filesystem::path output;

    SigmaSchedule schedule;
    Architecture network;  // bands and window are filled in from the data
    TrainConfig train;

    double t = 0.05;
    Index k = 100;
    std::uint64_t seed = 0;

    std::optional<DualWindow> window = DualWindow{};
    bool window_explicit = false;  // set by a profile, config file or flag

    Index n_tau = kDefaultThresholds;
    unsigned threads = 0;  // 0: SCOREAD_THREADS, else 1

    SceneRecipe synth;

    DetectorParams detector() const;
    Architecture architecture(Index bands) const;
    nlohmann::json to_json() const;
};

/// Command-line values; each one that is set wins over the config file.
struct Overrides {
    std::optional<std::string> profile;
    std::optional<std::filesystem::path> input;
    std::optional<std::filesystem::path> mask;
    std::optional<std::filesystem::path> model;
    std::optional<std::filesystem::path> output;
    std::optional<double> t;
    std::optional<Index> k;
    std::optional<std::uint64_t> seed;
    std::optional<DualWindow> window;
    bool no_context = false;
    std::optional<Index> n_tau;
    std::optional<unsigned> threads;
};

/// Names accepted by --profile.
std::vector<std::string> profile_names();

/// defaults < profile < config file < overrides. Throws InvalidArgument on
/// unknown keys, bad values or an unknown profile.
PipelineConfig resolve_config(const nlohmann::json& file, const Overrides& overrides);
PipelineConfig resolve_config(const std::optional<std::filesystem::path>& config_file, const Overrides& overrides);

/// Parses "WIN,WOUT".
DualWindow parse_window(const std::string& text);

/// Exit code for an exception escaping a subcommand.
int exit_code_for(const std::exception& e);

/// Each returns an ExitCode and writes a one-line diagnostic to `log` on failure.
int run_train(const PipelineConfig& config, std::ostream& log);
int run_detect(const PipelineConfig& config, std::ostream& log);
int run_eval(const PipelineConfig& config, std::ostream& log);
int run_synth(const PipelineConfig& config, std::ostream& log);

int run_command(const std::string& command, const PipelineConfig& config, std::ostream& log);

/// Paths written by the subcommands.
std::filesystem::path train_report_path(const std::filesystem::path& model);
CubeFiles map_files(const std::filesystem::path& output_stem);
std::filesystem::path map_pgm_path(const std::filesystem::path& output_stem);

}  // namespace scoread
