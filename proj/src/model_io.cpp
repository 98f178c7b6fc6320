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

#include "scoread/error.hpp"
#include "scoread/sgm.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace scoread {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'S', 'C', 'A', 'D'};

template <class T>
void put_le(std::vector<char>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
    }
}

template <class T>
T get_le(const std::vector<char>& in, std::size_t& pos, const std::string& origin) {
    if (pos + sizeof(T) > in.size()) {
        throw FormatError(origin + ": truncated model file");
    }
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    }
    pos += sizeof(T);
    return v;
}

json describe(const ScoreNetwork& net) {
    const Architecture& a = net.architecture();
    json arch = {
        {"bands", a.bands},
        {"channels", a.channels},
        {"blocks", a.blocks},
        {"kernel_width", a.kernel_width},
        {"fourier_features", a.fourier_features},
        {"fourier_scale", a.fourier_scale},
        {"film_hidden", a.film_hidden},
        {"context", a.has_context()},
        {"context_hidden", a.context_hidden},
    };
    if (a.window) {
        arch["window"] = {a.window->inner, a.window->outer};
    }
    json tensors = json::array();
    for (const TensorInfo& t : net.tensors()) {
        tensors.push_back({{"name", t.name}, {"shape", t.shape}});
    }
    const SigmaSchedule& s = net.schedule();
    return {
        {"format", "scoread-model"},
        {"architecture", arch},
        {"schedule", {{"sigma", s.sigma_base}, {"t_min", s.t_min}, {"t_max", s.t_max}}},
        {"fourier_frequencies", std::vector<double>(net.frequencies().begin(), net.frequencies().end())},
        {"tensors", tensors},
        {"parameter_count", net.parameters().size()},
    };
}

}  // namespace

std::vector<char> serialize_model(const ScoreNetwork& net) {
    const std::string descriptor = describe(net).dump();
    std::vector<char> out(std::begin(kMagic), std::end(kMagic));
    put_le<std::uint32_t>(out, kModelFormatVersion);
    put_le<std::uint64_t>(out, descriptor.size());
    out.insert(out.end(), descriptor.begin(), descriptor.end());
    out.reserve(out.size() + net.parameters().size() * 4);
    for (double v : net.parameters()) {
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

ScoreNetwork deserialize_model(const std::vector<char>& bytes, const std::string& origin) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError(origin + ": not a ScoreAD model (bad magic)");
    }
    std::size_t pos = 4;
    const auto version = get_le<std::uint32_t>(bytes, pos, origin);
    if (version != kModelFormatVersion) {
        throw FormatError(origin + ": unsupported model format version " + std::to_string(version));
    }
    const auto len = get_le<std::uint64_t>(bytes, pos, origin);
    if (pos + len > bytes.size()) {
        throw FormatError(origin + ": truncated model descriptor");
    }
    json d;
    try {
        d = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                        bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
        const json& a = d.at("architecture");
        Architecture arch;
        arch.bands = a.at("bands").get<Index>();
        arch.channels = a.at("channels").get<Index>();
        arch.blocks = a.at("blocks").get<Index>();
        arch.kernel_width = a.at("kernel_width").get<Index>();
        arch.fourier_features = a.at("fourier_features").get<Index>();
        arch.fourier_scale = a.at("fourier_scale").get<double>();
        arch.film_hidden = a.at("film_hidden").get<Index>();
        arch.context_hidden = a.at("context_hidden").get<Index>();
        if (a.at("context").get<bool>()) {
            const auto w = a.at("window").get<std::vector<Index>>();
            if (w.size() != 2) {
                throw FormatError(origin + ": window must have two entries");
            }
            arch.window = DualWindow{w[0], w[1]};
        }
        const json& s = d.at("schedule");
        SigmaSchedule schedule{s.at("sigma").get<double>(), s.at("t_min").get<double>(), s.at("t_max").get<double>()};
        auto freqs = d.at("fourier_frequencies").get<std::vector<double>>();
        const auto count = d.at("parameter_count").get<std::size_t>();
        if (bytes.size() - pos != count * 4) {
            throw FormatError(origin + ": parameter payload size does not match parameter_count");
        }
        std::vector<double> params(count);
        for (double& v : params) {
            v = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos, origin));
        }
        ScoreNetwork net(arch, schedule, std::move(freqs), std::move(params));
        const json& tensors = d.at("tensors");
        if (tensors.size() != net.tensors().size()) {
            throw FormatError(origin + ": tensor list does not match the architecture");
        }
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            if (tensors[i].at("name").get<std::string>() != net.tensors()[i].name ||
                tensors[i].at("shape").get<std::vector<Index>>() != net.tensors()[i].shape) {
                throw FormatError(origin + ": tensor " + std::to_string(i) + " does not match the architecture");
            }
        }
        return net;
    } catch (const json::exception& e) {
        throw FormatError(origin + ": malformed model descriptor: " + e.what());
    } catch (const InvalidArgument& e) {
        throw FormatError(origin + ": " + e.what());
    }
}

void save_model(const ScoreNetwork& net, const std::filesystem::path& path) {
    const std::vector<char> bytes = serialize_model(net);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

ScoreNetwork load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return deserialize_model(bytes, path.string());
}

}  // namespace scoread
