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

#include "scoread/data_io.hpp"

#include "scoread/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

namespace scoread {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<char> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

Index positive_field(const json& header, const char* key, const fs::path& path) {
    if (!header.contains(key) || !header[key].is_number_integer()) {
        throw FormatError(path.string() + ": header field '" + key + "' missing or not an integer");
    }
    const auto v = header[key].get<std::int64_t>();
    if (v < 1) {
        throw FormatError(path.string() + ": header field '" + key + "' must be >= 1");
    }
    return static_cast<Index>(v);
}

void require_string(const json& header, const char* key, const char* expected, const fs::path& path) {
    if (!header.contains(key) || !header[key].is_string() || header[key].get<std::string>() != expected) {
        throw FormatError(path.string() + ": header field '" + key + "' must be \"" + expected + "\"");
    }
}

}  // namespace

HsiCube::HsiCube(Index h, Index w, Index c)
    : height(h), width(w), bands(c), values(static_cast<std::size_t>(h * w * c), 0.0) {}

Vector HsiCube::spectrum(Index n) const {
    Vector s(bands);
    const Index plane = height * width;
    for (Index b = 0; b < bands; ++b) {
        s[b] = values[static_cast<std::size_t>(b * plane + n)];
    }
    return s;
}

void HsiCube::validate() const {
    if (height < 1 || width < 1 || bands < 1) {
        throw InvalidArgument("HsiCube: height, width and bands must be >= 1");
    }
    if (static_cast<Index>(values.size()) != height * width * bands) {
        throw InvalidArgument("HsiCube: value count does not match H*W*C");
    }
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw InvalidArgument("HsiCube: non-finite value");
        }
    }
}

Index GroundTruthMask::anomalies() const {
    return static_cast<Index>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

void DualWindow::validate() const {
    if (inner < 1 || outer < 1 || inner % 2 == 0 || outer % 2 == 0 || inner >= outer) {
        throw InvalidArgument("DualWindow: need odd 1 <= w_in < w_out, got (" + std::to_string(inner) + ", " +
                              std::to_string(outer) + ")");
    }
}

CubeFiles CubeFiles::from(const fs::path& any) {
    fs::path stem = any;
    if (stem.extension() == ".json" || stem.extension() == ".raw") {
        stem.replace_extension();
    }
    fs::path header = stem;
    header += ".json";
    fs::path raw = stem;
    raw += ".raw";
    return {header, raw};
}

HsiCube load_cube(const fs::path& header_path, const fs::path& raw_path) {
    const std::vector<char> header_bytes = read_bytes(header_path);
    json header;
    try {
        header = json::parse(header_bytes.begin(), header_bytes.end());
    } catch (const json::parse_error& e) {
        throw FormatError(header_path.string() + ": invalid JSON header: " + e.what());
    }
    if (!header.is_object()) {
        throw FormatError(header_path.string() + ": header must be a JSON object");
    }
    HsiCube cube(positive_field(header, "height", header_path), positive_field(header, "width", header_path),
                 positive_field(header, "bands", header_path));
    require_string(header, "dtype", "f32le", header_path);
    require_string(header, "interleave", "bsq", header_path);

    const std::vector<char> raw = read_bytes(raw_path);
    const std::size_t expected = cube.values.size() * 4;
    if (raw.size() != expected) {
        throw FormatError(raw_path.string() + ": payload is " + std::to_string(raw.size()) + " bytes, header implies " +
                          std::to_string(expected));
    }
    for (std::size_t i = 0; i < cube.values.size(); ++i) {
        std::uint32_t bits = 0;
        for (int k = 0; k < 4; ++k) {
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * i + k])) << (8 * k);
        }
        const double v = std::bit_cast<float>(bits);
        if (!std::isfinite(v)) {
            throw FormatError(raw_path.string() + ": non-finite value at element " + std::to_string(i));
        }
        cube.values[i] = v;
    }
    return cube;
}

void save_cube(const HsiCube& cube, const fs::path& header_path, const fs::path& raw_path,
               const std::string& extra_json) {
    cube.validate();
    json header = json::parse(extra_json);
    if (!header.is_object()) {
        throw InvalidArgument("save_cube: sidecar metadata must be a JSON object");
    }
    header["height"] = cube.height;
    header["width"] = cube.width;
    header["bands"] = cube.bands;
    header["dtype"] = "f32le";
    header["interleave"] = "bsq";
    const std::string text = header.dump(2) + "\n";
    write_bytes(header_path, std::vector<char>(text.begin(), text.end()));

    std::vector<char> raw(cube.values.size() * 4);
    for (std::size_t i = 0; i < cube.values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(cube.values[i]));
        for (int k = 0; k < 4; ++k) {
            raw[4 * i + k] = static_cast<char>((bits >> (8 * k)) & 0xffu);
        }
    }
    write_bytes(raw_path, raw);
}

NormalizedCube normalize_cube(const HsiCube& cube) {
    cube.validate();
    const auto [lo_it, hi_it] = std::minmax_element(cube.values.begin(), cube.values.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) {
        throw DegenerateInput("normalize_cube: constant cube (max == min)");
    }
    NormalizedCube out{cube, lo, 1.0 / (hi - lo)};
    const double range = hi - lo;
    for (double& v : out.cube.values) {
        // the extremes land on exactly 0 and 1
        v = (v - lo) / range;
    }
    return out;
}

SpectraMatrix flatten(const HsiCube& cube) {
    const Index n = cube.pixels();
    SpectraMatrix out(n, cube.bands);
    for (Index b = 0; b < cube.bands; ++b) {
        const double* plane = cube.values.data() + b * n;
        for (Index p = 0; p < n; ++p) {
            out(p, b) = plane[p];
        }
    }
    return out;
}

HsiCube unflatten(const SpectraMatrix& spectra, Index height, Index width) {
    if (spectra.rows() != height * width) {
        throw InvalidArgument("unflatten: row count does not equal height * width");
    }
    HsiCube cube(height, width, spectra.cols());
    const Index n = cube.pixels();
    for (Index b = 0; b < cube.bands; ++b) {
        for (Index p = 0; p < n; ++p) {
            cube.values[static_cast<std::size_t>(b * n + p)] = spectra(p, b);
        }
    }
    return cube;
}

ContextIndex build_context_index(Index height, Index width, const DualWindow& window) {
    window.validate();
    const Index r_in = window.inner / 2;
    const Index r_out = window.outer / 2;
    ContextIndex index;
    index.count = window.context_count();
    index.neighbors.reserve(static_cast<std::size_t>(height * width * index.count));
    for (Index row = 0; row < height; ++row) {
        for (Index col = 0; col < width; ++col) {
            for (Index dy = -r_out; dy <= r_out; ++dy) {
                for (Index dx = -r_out; dx <= r_out; ++dx) {
                    if (std::abs(dy) <= r_in && std::abs(dx) <= r_in) {
                        continue;
                    }
                    const Index y = std::clamp<Index>(row + dy, 0, height - 1);
                    const Index x = std::clamp<Index>(col + dx, 0, width - 1);
                    index.neighbors.push_back(y * width + x);
                }
            }
        }
    }
    return index;
}

ContextSet gather_context(const SpectraMatrix& spectra, const ContextIndex& index, Index pixel) {
    if (pixel < 0 || pixel >= spectra.rows()) {
        throw InvalidArgument("gather_context: pixel index out of range");
    }
    ContextSet ctx(index.count, spectra.cols());
    const auto nb = index.of(pixel);
    for (Index m = 0; m < index.count; ++m) {
        ctx.row(m) = spectra.row(nb[static_cast<std::size_t>(m)]);
    }
    return ctx;
}

ContextSet extract_context(const HsiCube& cube, Index pixel, const DualWindow& window) {
    window.validate();
    if (pixel < 0 || pixel >= cube.pixels()) {
        throw InvalidArgument("extract_context: pixel index out of range");
    }
    const Index r_in = window.inner / 2;
    const Index r_out = window.outer / 2;
    const Index row = pixel / cube.width;
    const Index col = pixel % cube.width;
    ContextSet ctx(window.context_count(), cube.bands);
    Index m = 0;
    for (Index dy = -r_out; dy <= r_out; ++dy) {
        for (Index dx = -r_out; dx <= r_out; ++dx) {
            if (std::abs(dy) <= r_in && std::abs(dx) <= r_in) {
                continue;
            }
            const Index y = std::clamp<Index>(row + dy, 0, cube.height - 1);
            const Index x = std::clamp<Index>(col + dx, 0, cube.width - 1);
            for (Index b = 0; b < cube.bands; ++b) {
                ctx(m, b) = cube.at(y, x, b);
            }
            ++m;
        }
    }
    return ctx;
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(const std::vector<char>& bytes, std::size_t& pos, const fs::path& path) {
    while (pos < bytes.size()) {
        const auto c = static_cast<unsigned char>(bytes[pos]);
        if (c == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') {
                ++pos;
            }
        } else if (std::isspace(c)) {
            ++pos;
        } else {
            break;
        }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        tok.push_back(bytes[pos++]);
    }
    if (tok.empty()) {
        throw FormatError(path.string() + ": truncated PGM header");
    }
    return tok;
}

Index pgm_number(const std::string& tok, const fs::path& path) {
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
        throw FormatError(path.string() + ": malformed PGM header value '" + tok + "'");
    }
    return static_cast<Index>(std::stoll(tok));
}

}  // namespace

GroundTruthMask load_mask(const fs::path& path) {
    if (path.extension() == ".json") {
        const CubeFiles files = CubeFiles::from(path);
        const HsiCube cube = load_cube(files);
        if (cube.bands != 1) {
            throw FormatError(path.string() + ": mask container must have bands == 1");
        }
        GroundTruthMask mask{cube.height, cube.width, {}};
        mask.labels.reserve(cube.values.size());
        for (double v : cube.values) {
            mask.labels.push_back(v != 0.0 ? 1 : 0);
        }
        return mask;
    }
    const std::vector<char> bytes = read_bytes(path);
    std::size_t pos = 0;
    if (pgm_token(bytes, pos, path) != "P5") {
        throw FormatError(path.string() + ": not a binary PGM (P5)");
    }
    const Index w = pgm_number(pgm_token(bytes, pos, path), path);
    const Index h = pgm_number(pgm_token(bytes, pos, path), path);
    const Index maxval = pgm_number(pgm_token(bytes, pos, path), path);
    if (maxval != 255) {
        throw FormatError(path.string() + ": unsupported PGM maxval " + std::to_string(maxval) + " (need 255)");
    }
    if (w < 1 || h < 1) {
        throw FormatError(path.string() + ": PGM dimensions must be positive");
    }
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        throw FormatError(path.string() + ": missing separator after PGM header");
    }
    ++pos;
    const auto n = static_cast<std::size_t>(w * h);
    if (bytes.size() - pos != n) {
        throw FormatError(path.string() + ": PGM payload has " + std::to_string(bytes.size() - pos) +
                          " bytes, expected " + std::to_string(n));
    }
    GroundTruthMask mask{h, w, std::vector<std::uint8_t>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        mask.labels[i] = bytes[pos + i] != 0 ? 1 : 0;
    }
    return mask;
}

void save_mask_pgm(const GroundTruthMask& mask, const fs::path& path) {
    const std::string header = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
    std::vector<char> bytes(header.begin(), header.end());
    for (auto l : mask.labels) {
        bytes.push_back(l != 0 ? static_cast<char>(255) : 0);
    }
    write_bytes(path, bytes);
}

void save_pgm16(std::span<const double> values, Index height, Index width, const fs::path& path) {
    if (static_cast<Index>(values.size()) != height * width) {
        throw InvalidArgument("save_pgm16: value count does not match height * width");
    }
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
    std::vector<char> bytes(header.begin(), header.end());
    for (double v : values) {
        const double unit = range > 0.0 ? (v - lo) / range : 0.0;
        const auto q = static_cast<std::uint16_t>(std::lround(unit * 65535.0));
        bytes.push_back(static_cast<char>(q >> 8));
        bytes.push_back(static_cast<char>(q & 0xffu));
    }
    write_bytes(path, bytes);
}

}  // namespace scoread
