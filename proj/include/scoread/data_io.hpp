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

#include "scoread/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace scoread {

/// H x W x C reflectance cube stored band-sequential: all of band 0, then band 1, ...
struct HsiCube {
    Index height = 0;
    Index width = 0;
    Index bands = 0;
    std::vector<double> values;

    HsiCube() = default;
    HsiCube(Index h, Index w, Index c);

    Index pixels() const { return height * width; }
    double& at(Index row, Index col, Index band) { return values[static_cast<std::size_t>((band * height + row) * width + col)]; }
    double at(Index row, Index col, Index band) const {
        return values[static_cast<std::size_t>((band * height + row) * width + col)];
    }
    /// Spectrum of the pixel with row-major index n = row * W + col.
    Vector spectrum(Index n) const;

    void validate() const;
};

/// N x C, row n is pixel (n / W, n % W).
using SpectraMatrix = DenseMatrix;

struct GroundTruthMask {
    Index height = 0;
    Index width = 0;
    std::vector<std::uint8_t> labels;  // 1 = anomaly, row-major

    Index anomalies() const;
    Index background() const { return static_cast<Index>(labels.size()) - anomalies(); }
};

/// Inner exclusion window and outer context window, both odd, inner < outer.
struct DualWindow {
    Index inner = 3;
    Index outer = 5;

    void validate() const;
    Index context_count() const { return outer * outer - inner * inner; }
    bool operator==(const DualWindow&) const = default;
};

/// Context spectra, one per row, in row-major scan order of the outer window
/// with the inner window skipped.
using ContextSet = DenseMatrix;

/// Pixel indices (after border clamping) making up each pixel's context, N x M.
struct ContextIndex {
    Index count = 0;
    std::vector<Index> neighbors;

    std::span<const Index> of(Index pixel) const {
        return {neighbors.data() + pixel * count, static_cast<std::size_t>(count)};
    }
};

struct CubeFiles {
    std::filesystem::path header;
    std::filesystem::path raw;

    /// "<stem>.json" + "<stem>.raw" from either file or the bare stem.
    static CubeFiles from(const std::filesystem::path& any);
};

HsiCube load_cube(const std::filesystem::path& header_path, const std::filesystem::path& raw_path);
inline HsiCube load_cube(const CubeFiles& files) { return load_cube(files.header, files.raw); }

/// Writes f32 little-endian BSQ plus the JSON header. `extra` members are merged
/// into the header (sidecar metadata); the five container fields always win.
void save_cube(const HsiCube& cube, const std::filesystem::path& header_path, const std::filesystem::path& raw_path,
               const std::string& extra_json = "{}");
inline void save_cube(const HsiCube& cube, const CubeFiles& files, const std::string& extra_json = "{}") {
    save_cube(cube, files.header, files.raw, extra_json);
}

struct NormalizedCube {
    HsiCube cube;
    double offset = 0.0;  // original global min
    double scale = 1.0;   // 1 / (max - min)
};

/// One affine map for the whole cube: global min -> 0, global max -> 1.
NormalizedCube normalize_cube(const HsiCube& cube);

SpectraMatrix flatten(const HsiCube& cube);
HsiCube unflatten(const SpectraMatrix& spectra, Index height, Index width);

ContextIndex build_context_index(Index height, Index width, const DualWindow& window);
ContextSet extract_context(const HsiCube& cube, Index pixel, const DualWindow& window);
/// Same as extract_context, from flattened spectra and a prebuilt index.
ContextSet gather_context(const SpectraMatrix& spectra, const ContextIndex& index, Index pixel);

/// Binary PGM (P5, maxval 255) or a 1-band cube container (by .json extension).
GroundTruthMask load_mask(const std::filesystem::path& path);
void save_mask_pgm(const GroundTruthMask& mask, const std::filesystem::path& path);

/// 16-bit binary PGM (P5, maxval 65535, big-endian samples), min-max scaled.
void save_pgm16(std::span<const double> values, Index height, Index width, const std::filesystem::path& path);

}  // namespace scoread
