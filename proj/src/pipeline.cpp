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

#include "scoread/error.hpp"

#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace scoread {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads typed members of one JSON object and rejects keys nobody asked for.
class Section {
  public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) {
            throw InvalidArgument("config: '" + name_ + "' must be an object");
        }
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) {
            return;
        }
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw InvalidArgument("config: '" + name_ + "." + key + "' has the wrong type");
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& at(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) {
                throw InvalidArgument("config: unknown key '" + name_ + "." + item.key() + "'");
            }
        }
    }

  private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

std::optional<DualWindow> window_from_json(const json& j) {
    if (j.is_null()) {
        return std::nullopt;
    }
    if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
        throw InvalidArgument("config: 'window' must be [inner, outer] or null");
    }
    DualWindow w{j[0].get<Index>(), j[1].get<Index>()};
    w.validate();
    return w;
}

json window_to_json(const std::optional<DualWindow>& w) {
    return w ? json::array({w->inner, w->outer}) : json(nullptr);
}

void set_seed(PipelineConfig& c, std::uint64_t seed) {
    c.seed = seed;
    c.train.seed = seed;
    c.synth.seed = seed;
}

void apply_profile(PipelineConfig& c, const std::string& name) {
    if (name.empty()) {
        return;
    }
    // per-dataset settings of the experiments: t and the dual window
    static const std::map<std::string, std::pair<double, std::optional<DualWindow>>> profiles{
        {"hydice", {0.05, std::nullopt}},
        {"pavia", {0.05, DualWindow{3, 5}}},
        {"hyperion", {0.01, DualWindow{3, 5}}},
        {"salinas", {0.05, DualWindow{3, 5}}},
    };
    const auto it = profiles.find(name);
    if (it == profiles.end()) {
        throw InvalidArgument("unknown profile '" + name + "'");
    }
    c.profile = name;
    c.t = it->second.first;
    c.window = it->second.second;
    c.window_explicit = true;
}

Weighting weighting_from(const std::string& s) {
    if (s == "sigma_squared") {
        return Weighting::SigmaSquared;
    }
    if (s == "unit") {
        return Weighting::Unit;
    }
    throw InvalidArgument("config: weighting must be 'sigma_squared' or 'unit'");
}

void apply_file(PipelineConfig& c, const json& file) {
    Section top(file, "<root>");
    std::string input, mask, model, output;
    top.get("input", input);
    top.get("mask", mask);
    top.get("model", model);
    top.get("output", output);
    if (!input.empty()) c.input = input;
    if (!mask.empty()) c.mask = mask;
    if (!model.empty()) c.model = model;
    if (!output.empty()) c.output = output;
    top.get("profile", c.profile);  // already applied by resolve_config
    if (top.has("seed")) {
        std::uint64_t s = 0;
        top.get("seed", s);
        set_seed(c, s);
    }
    top.get("threads", c.threads);
    if (top.has("window")) {
        c.window = window_from_json(top.at("window"));
        c.window_explicit = true;
    }
    if (top.has("context")) {
        bool on = true;
        top.get("context", on);
        if (!on) {
            c.window.reset();
            c.window_explicit = true;
        } else if (!c.window) {
            c.window = DualWindow{};
            c.window_explicit = true;
        }
    }

    if (top.has("schedule")) {
        Section s(top.at("schedule"), "schedule");
        s.get("sigma", c.schedule.sigma_base);
        s.get("t_min", c.schedule.t_min);
        s.get("t_max", c.schedule.t_max);
        s.finish();
    }
    if (top.has("network")) {
        Section s(top.at("network"), "network");
        s.get("channels", c.network.channels);
        s.get("blocks", c.network.blocks);
        s.get("kernel_width", c.network.kernel_width);
        s.get("fourier_features", c.network.fourier_features);
        s.get("fourier_scale", c.network.fourier_scale);
        s.get("film_hidden", c.network.film_hidden);
        s.get("context_hidden", c.network.context_hidden);
        s.finish();
    }
    if (top.has("train")) {
        Section s(top.at("train"), "train");
        s.get("steps", c.train.steps);
        s.get("batch_size", c.train.batch_size);
        s.get("learning_rate", c.train.learning_rate);
        s.get("ema_decay", c.train.ema_decay);
        std::string w;
        s.get("weighting", w);
        if (!w.empty()) c.train.weighting = weighting_from(w);
        s.get("t_lo", c.train.t_lo);
        s.get("t_hi", c.train.t_hi);
        s.get("seed", c.train.seed);
        s.get("chunk", c.train.chunk);
        s.get("beta1", c.train.adam.beta1);
        s.get("beta2", c.train.adam.beta2);
        s.get("epsilon", c.train.adam.epsilon);
        s.finish();
    }
    if (top.has("detect")) {
        Section s(top.at("detect"), "detect");
        s.get("t", c.t);
        s.get("k", c.k);
        s.get("seed", c.seed);
        s.finish();
    }
    if (top.has("eval")) {
        Section s(top.at("eval"), "eval");
        s.get("n_tau", c.n_tau);
        s.finish();
    }
    if (top.has("synth")) {
        Section s(top.at("synth"), "synth");
        std::string preset;
        s.get("preset", preset);
        if (!preset.empty()) {
            if (preset != "a6") {
                throw InvalidArgument("config: unknown synth preset '" + preset + "'");
            }
            c.synth = SceneRecipe{};
        }
        s.get("height", c.synth.height);
        s.get("width", c.synth.width);
        s.get("bands", c.synth.bands);
        s.get("intrinsic", c.synth.intrinsic);
        s.get("anomalies", c.synth.anomalies);
        s.get("distance", c.synth.distance);
        s.get("seed", c.synth.seed);
        s.get("lambdas", c.synth.lambdas);
        s.get("mean_level", c.synth.mean_level);
        s.get("mean_slope", c.synth.mean_slope);
        s.finish();
    }
    top.finish();
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << text)) {
        throw IoError("cannot write " + path.string());
    }
}

void ensure_parent(const fs::path& path) {
    const fs::path parent = path.parent_path();
    if (!parent.empty()) {
        fs::create_directories(parent);
    }
}

void require_path(const fs::path& p, const char* what) {
    if (p.empty()) {
        throw InvalidArgument(std::string("missing ") + what + " path");
    }
}

json train_report_json(const TrainReport& r) {
    return {{"epoch_loss", r.epoch_loss},   {"final_loss", r.final_loss},
            {"wall_seconds", r.wall_seconds}, {"seed", r.seed},
            {"steps_completed", r.steps_completed}, {"diverged", r.diverged}};
}

template <typename Fn>
int guarded(const char* command, std::ostream& log, Fn&& fn) {
    try {
        fn();
        return kExitOk;
    } catch (const std::exception& e) {
        log << "scoread " << command << ": " << e.what() << '\n';
        return exit_code_for(e);
    }
}

}  // namespace

DetectorParams PipelineConfig::detector() const {
    DetectorParams p;
    p.t = t;
    p.k = k;
    p.window = window;
    p.seed = seed;
    p.threads = resolve_threads(threads);
    return p;
}

Architecture PipelineConfig::architecture(Index bands) const {
    Architecture a = network;
    a.bands = bands;
    a.window = window;
    return a;
}

json PipelineConfig::to_json() const {
    return {
        {"profile", profile},
        {"input", input.string()},
        {"mask", mask.string()},
        {"model", model.string()},
        {"output", output.string()},
        {"window", window_to_json(window)},
        {"schedule", {{"sigma", schedule.sigma_base}, {"t_min", schedule.t_min}, {"t_max", schedule.t_max}}},
        {"network",
         {{"channels", network.channels},
          {"blocks", network.blocks},
          {"kernel_width", network.kernel_width},
          {"fourier_features", network.fourier_features},
          {"fourier_scale", network.fourier_scale},
          {"film_hidden", network.film_hidden},
          {"context_hidden", network.context_hidden}}},
        {"train",
         {{"steps", train.steps},
          {"batch_size", train.batch_size},
          {"learning_rate", train.learning_rate},
          {"ema_decay", train.ema_decay},
          {"weighting", train.weighting == Weighting::Unit ? "unit" : "sigma_squared"},
          {"t_lo", train.t_lo},
          {"t_hi", train.t_hi},
          {"seed", train.seed},
          {"chunk", train.chunk},
          {"beta1", train.adam.beta1},
          {"beta2", train.adam.beta2},
          {"epsilon", train.adam.epsilon}}},
        {"detect", {{"t", t}, {"k", k}, {"seed", seed}}},
        {"eval", {{"n_tau", n_tau}}},
        {"synth",
         {{"height", synth.height},
          {"width", synth.width},
          {"bands", synth.bands},
          {"intrinsic", synth.intrinsic},
          {"anomalies", synth.anomalies},
          {"distance", synth.distance},
          {"seed", synth.seed},
          {"lambdas", synth.lambdas},
          {"mean_level", synth.mean_level},
          {"mean_slope", synth.mean_slope}}},
    };
}

std::vector<std::string> profile_names() { return {"hydice", "pavia", "hyperion", "salinas"}; }

DualWindow parse_window(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) {
        throw InvalidArgument("window must be WIN,WOUT, got '" + text + "'");
    }
    DualWindow w;
    try {
        std::size_t used_a = 0;
        std::size_t used_b = 0;
        const std::string a = text.substr(0, comma);
        const std::string b = text.substr(comma + 1);
        w.inner = std::stol(a, &used_a);
        w.outer = std::stol(b, &used_b);
        if (used_a != a.size() || used_b != b.size()) {
            throw std::invalid_argument("trailing");
        }
    } catch (const std::logic_error&) {
        throw InvalidArgument("window must be WIN,WOUT, got '" + text + "'");
    }
    w.validate();
    return w;
}

PipelineConfig resolve_config(const json& file, const Overrides& o) {
    PipelineConfig c;
    std::string profile;
    if (file.is_object() && file.contains("profile") && file["profile"].is_string()) {
        profile = file["profile"].get<std::string>();
    }
    if (o.profile) {
        profile = *o.profile;
    }
    apply_profile(c, profile);
    if (!file.is_null()) {
        apply_file(c, file);
    }
    c.profile = profile;

    if (o.input) c.input = *o.input;
    if (o.mask) c.mask = *o.mask;
    if (o.model) c.model = *o.model;
    if (o.output) c.output = *o.output;
    if (o.t) c.t = *o.t;
    if (o.k) c.k = *o.k;
    if (o.seed) set_seed(c, *o.seed);
    if (o.window) {
        o.window->validate();
        c.window = *o.window;
        c.window_explicit = true;
    }
    if (o.no_context) {
        c.window.reset();
        c.window_explicit = true;
    }
    if (o.n_tau) c.n_tau = *o.n_tau;
    if (o.threads) c.threads = *o.threads;

    c.schedule.validate();
    if (c.n_tau < 2) {
        throw InvalidArgument("n_tau must be >= 2");
    }
    c.detector().validate(c.schedule);
    return c;
}

PipelineConfig resolve_config(const std::optional<fs::path>& config_file, const Overrides& o) {
    json file;
    if (config_file) {
        const std::string text = read_text(*config_file);
        try {
            file = json::parse(text);
        } catch (const json::exception& e) {
            throw InvalidArgument("config " + config_file->string() + ": " + e.what());
        }
    }
    return resolve_config(file, o);
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const SingleClassMask*>(&e)) {
        return kExitSingleClass;
    }
    if (dynamic_cast<const TrainingDiverged*>(&e)) {
        return kExitDiverged;
    }
    if (dynamic_cast<const InvalidArgument*>(&e)) {
        return kExitConfig;
    }
    return kExitData;
}

fs::path train_report_path(const fs::path& model) { return fs::path(model.string() + ".report.json"); }

CubeFiles map_files(const fs::path& stem) { return CubeFiles::from(stem); }

fs::path map_pgm_path(const fs::path& stem) {
    fs::path p = CubeFiles::from(stem).header;
    return p.replace_extension(".pgm");
}

int run_train(const PipelineConfig& config, std::ostream& log) {
    return guarded("train", log, [&] {
        require_path(config.input, "input cube");
        require_path(config.model, "model");
        const HsiCube raw = load_cube(CubeFiles::from(config.input));
        const NormalizedCube norm = normalize_cube(raw);
        const SpectraMatrix spectra = flatten(norm.cube);

        const Architecture arch = config.architecture(raw.bands);
        TrainConfig tc = config.train;
        tc.threads = resolve_threads(config.threads);

        ContextIndex index;
        TrainingContexts ctx;
        if (arch.window) {
            index = build_context_index(raw.height, raw.width, *arch.window);
            ctx = {&spectra, &index};
        }
        auto write_report = [&](const TrainReport& report) {
            json j = train_report_json(report);
            j["version"] = kVersion;
            j["model"] = config.model.string();
            j["normalization"] = {{"offset", norm.offset}, {"scale", norm.scale}};
            j["config"] = config.to_json();
            ensure_parent(config.model);
            write_text(train_report_path(config.model), j.dump(2) + "\n");
        };
        try {
            TrainResult result = train(spectra, arch.window ? &ctx : nullptr, config.schedule, arch, tc);
            ensure_parent(config.model);
            save_model(result.model, config.model);
            write_report(result.report);
        } catch (const TrainingAborted& e) {
            write_report(e.report());
            throw;
        }
    });
}

int run_detect(const PipelineConfig& config, std::ostream& log) {
    return guarded("detect", log, [&] {
        require_path(config.input, "input cube");
        require_path(config.model, "model");
        require_path(config.output, "output");
        const ScoreNetwork net = load_model(config.model);
        const HsiCube raw = load_cube(CubeFiles::from(config.input));
        if (raw.bands != net.architecture().bands) {
            throw DataMismatch("model " + config.model.string() + " expects " +
                               std::to_string(net.architecture().bands) + " bands, cube " +
                               config.input.string() + " has " + std::to_string(raw.bands));
        }
        const NormalizedCube norm = normalize_cube(raw);
        DetectorParams params = config.detector();
        if (!config.window_explicit) {
            params.window = net.architecture().window;
        }
        params.validate(net.schedule());
        const AnomalyMap map = detect_map(norm.cube, net, params);

        HsiCube out(map.height, map.width, 1);
        out.values = map.strengths;
        json echo = config.to_json();
        echo["window"] = window_to_json(params.window);
        json sidecar{{"kind", "anomaly_map"},
                     {"version", kVersion},
                     {"t", params.t},
                     {"k", params.k},
                     {"seed", params.seed},
                     {"window", window_to_json(params.window)},
                     {"model", config.model.string()},
                     {"input", config.input.string()},
                     {"config", echo}};
        const CubeFiles files = map_files(config.output);
        ensure_parent(files.header);
        save_cube(out, files, sidecar.dump());
        save_pgm16(map.strengths, map.height, map.width, map_pgm_path(config.output));
    });
}

int run_eval(const PipelineConfig& config, std::ostream& log) {
    return guarded("eval", log, [&] {
        require_path(config.input, "input map");
        require_path(config.mask, "mask");
        require_path(config.output, "output");
        const HsiCube cube = load_cube(CubeFiles::from(config.input));
        if (cube.bands != 1) {
            throw DataMismatch("map " + config.input.string() + " has " + std::to_string(cube.bands) +
                               " bands, expected 1");
        }
        const GroundTruthMask gt = load_mask(config.mask);
        const AnomalyMap map{cube.height, cube.width, cube.values};
        const Evaluation e = evaluate(map, gt, config.n_tau);

        fs::create_directories(config.output);
        json extra{{"version", kVersion},
                   {"input", config.input.string()},
                   {"mask", config.mask.string()},
                   {"score_min", e.scores.min},
                   {"score_max", e.scores.max}};
        write_text(config.output / "report.json", report_json(e.report, extra.dump()));
        write_curves_csv(e.curves, config.output / "curves.csv");
        write_box_csv(e.box, config.output / "box.csv");
    });
}

int run_synth(const PipelineConfig& config, std::ostream& log) {
    return guarded("synth", log, [&] {
        require_path(config.output, "output");
        const SceneRecipe& r = config.synth;
        const SyntheticScene scene = r.generate();
        const json recipe = config.to_json()["synth"];

        json meta = json::parse(scene.metadata_json());
        meta["version"] = kVersion;
        meta["recipe"] = recipe;

        fs::create_directories(config.output);
        save_cube(scene.cube, CubeFiles::from(config.output / "cube"),
                  json{{"kind", "synthetic_scene"}, {"version", kVersion}, {"recipe", recipe}}.dump());
        save_mask_pgm(scene.mask, config.output / "mask.pgm");
        write_text(config.output / "metadata.json", meta.dump(2) + "\n");
    });
}

int run_command(const std::string& command, const PipelineConfig& config, std::ostream& log) {
    if (command == "train") return run_train(config, log);
    if (command == "detect") return run_detect(config, log);
    if (command == "eval") return run_eval(config, log);
    if (command == "synth") return run_synth(config, log);
    log << "scoread: unknown command '" << command << "'\n";
    return kExitConfig;
}

}  // namespace scoread
