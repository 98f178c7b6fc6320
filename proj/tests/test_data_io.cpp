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

#include "doctest.h"
#include "support.hpp"

#include "scoread/data_io.hpp"
#include "scoread/error.hpp"

#include "json.hpp"

#include <algorithm>

using namespace scoread;
using scoread::testing::read_bytes;
using scoread::testing::TempDir;
using scoread::testing::write_bytes;
using scoread::testing::write_text;

namespace {

HsiCube random_cube(Index h, Index w, Index c, std::uint64_t seed) {
    SeededRng rng(seed, 0);
    HsiCube cube(h, w, c);
    for (double& v : cube.values) v = static_cast<float>(rng.uniform(-3.0, 5.0));
    return cube;
}

std::vector<unsigned char> f32le(std::initializer_list<float> values) {
    std::vector<unsigned char> out;
    for (float f : values) {
        const auto bits = std::bit_cast<std::uint32_t>(f);
        for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>(bits >> (8 * k)));
    }
    return out;
}

const char* kHeader221 = R"({"height": 2, "width": 2, "bands": 1, "dtype": "f32le", "interleave": "bsq"})";

}  // namespace

TEST_CASE("load_cube byte fixture") {
    TempDir dir("load");
    write_text(dir / "c.json", kHeader221);
    write_bytes(dir / "c.raw", f32le({1, 2, 3, 4}));
    const HsiCube cube = load_cube(dir / "c.json", dir / "c.raw");
    CHECK(cube.height == 2);
    CHECK(cube.width == 2);
    CHECK(cube.bands == 1);
    CHECK(cube.at(0, 0, 0) == 1.0);
    CHECK(cube.at(0, 1, 0) == 2.0);
    CHECK(cube.at(1, 0, 0) == 3.0);
    CHECK(cube.at(1, 1, 0) == 4.0);

    const HsiCube same = load_cube(CubeFiles::from(dir / "c"));
    CHECK(same.values == cube.values);
}

TEST_CASE("load_cube rejects malformed containers") {
    TempDir dir("bad");
    write_text(dir / "c.json", kHeader221);
    write_bytes(dir / "c.raw", f32le({1, 2, 3}));
    CHECK_THROWS_AS(load_cube(dir / "c.json", dir / "c.raw"), FormatError);

    write_bytes(dir / "c.raw", f32le({1, 2, 3, NAN}));
    CHECK_THROWS_AS(load_cube(dir / "c.json", dir / "c.raw"), FormatError);

    write_bytes(dir / "c.raw", f32le({1, 2, 3, 4}));
    write_text(dir / "c.json", R"({"height": 2, "width": 2, "bands": 1, "dtype": "f64le", "interleave": "bsq"})");
    CHECK_THROWS_AS(load_cube(dir / "c.json", dir / "c.raw"), FormatError);
    write_text(dir / "c.json", R"({"height": 2, "width": 2, "bands": 1, "dtype": "f32le", "interleave": "bip"})");
    CHECK_THROWS_AS(load_cube(dir / "c.json", dir / "c.raw"), FormatError);
    write_text(dir / "c.json", R"({"height": 2, "bands": 1, "dtype": "f32le", "interleave": "bsq"})");
    CHECK_THROWS_AS(load_cube(dir / "c.json", dir / "c.raw"), FormatError);
    write_text(dir / "c.json", R"({"height": 0, "width": 2, "bands": 1, "dtype": "f32le", "interleave": "bsq"})");
    CHECK_THROWS_AS(load_cube(dir / "c.json", dir / "c.raw"), FormatError);
    write_text(dir / "c.json", "{not json");
    CHECK_THROWS_AS(load_cube(dir / "c.json", dir / "c.raw"), FormatError);

    CHECK_THROWS_AS(load_cube(dir / "missing.json", dir / "c.raw"), IoError);
    try {
        load_cube(dir / "missing.json", dir / "c.raw");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("missing.json") != std::string::npos);
    }
}

TEST_CASE("save_cube bytes") {
    TempDir dir("save");
    HsiCube one(1, 1, 1);
    one.values = {0.0};
    save_cube(one, dir / "z.json", dir / "z.raw");
    CHECK(read_bytes(dir / "z.raw") == std::vector<char>(4, 0));

    // 2x2x2: band 0 = [[1, 2], [3, 4]], band 1 = [[-1, 0.5], [2, 8]]
    HsiCube c(2, 2, 2);
    c.at(0, 0, 0) = 1;
    c.at(0, 1, 0) = 2;
    c.at(1, 0, 0) = 3;
    c.at(1, 1, 0) = 4;
    c.at(0, 0, 1) = -1;
    c.at(0, 1, 1) = 0.5;
    c.at(1, 0, 1) = 2;
    c.at(1, 1, 1) = 8;
    save_cube(c, dir / "c.json", dir / "c.raw", R"({"note": "fixture", "bands": 99})");
    const std::vector<unsigned char> expect{
        0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0x40, 0x00, 0x00, 0x40, 0x40, 0x00, 0x00, 0x80, 0x40,
        0x00, 0x00, 0x80, 0xbf, 0x00, 0x00, 0x00, 0x3f, 0x00, 0x00, 0x00, 0x40, 0x00, 0x00, 0x00, 0x41,
    };
    const auto got = read_bytes(dir / "c.raw");
    REQUIRE(got.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(static_cast<unsigned char>(got[i]) == expect[i]);
    }
    const auto header = nlohmann::json::parse(read_bytes(dir / "c.json"));
    CHECK(header["bands"] == 2);
    CHECK(header["note"] == "fixture");
    CHECK(header["dtype"] == "f32le");
    CHECK(header["interleave"] == "bsq");
}

TEST_CASE("save then load is the identity") {
    TempDir dir("rt");
    const HsiCube c = random_cube(3, 5, 4, 11);
    save_cube(c, CubeFiles::from(dir / "r"));
    const HsiCube back = load_cube(CubeFiles::from(dir / "r.json"));
    CHECK(back.height == 3);
    CHECK(back.width == 5);
    CHECK(back.bands == 4);
    CHECK(back.values == c.values);
}

TEST_CASE("normalize_cube") {
    HsiCube c(1, 3, 1);
    c.values = {2, 4, 6};
    const NormalizedCube n = normalize_cube(c);
    CHECK(n.cube.values == std::vector<double>{0, 0.5, 1});
    CHECK(n.offset == 2.0);
    CHECK(n.scale == 0.25);

    HsiCube unit(1, 3, 1);
    unit.values = {0, 0.25, 1};
    CHECK(normalize_cube(unit).cube.values == unit.values);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const HsiCube r = random_cube(4, 3, 5, seed);
        const NormalizedCube nr = normalize_cube(r);
        CHECK(*std::min_element(nr.cube.values.begin(), nr.cube.values.end()) == 0.0);
        CHECK(*std::max_element(nr.cube.values.begin(), nr.cube.values.end()) == 1.0);

        HsiCube affine = r;
        for (double& v : affine.values) v = 3.5 * v - 7.0;
        const NormalizedCube na = normalize_cube(affine);
        for (std::size_t i = 0; i < r.values.size(); ++i) {
            CHECK(std::abs(na.cube.values[i] - nr.cube.values[i]) < 1e-14);
        }
    }

    HsiCube flat(2, 2, 1);
    flat.values = {3, 3, 3, 3};
    CHECK_THROWS_AS(normalize_cube(flat), DegenerateInput);
}

TEST_CASE("flatten and unflatten") {
    HsiCube c(2, 2, 3);
    for (std::size_t i = 0; i < c.values.size(); ++i) c.values[i] = static_cast<double>(i);
    const SpectraMatrix s = flatten(c);
    REQUIRE(s.rows() == 4);
    REQUIRE(s.cols() == 3);
    for (Index n = 0; n < 4; ++n) {
        for (Index b = 0; b < 3; ++b) {
            CHECK(s(n, b) == c.at(n / 2, n % 2, b));
        }
    }
    CHECK(s.row(3).transpose() == c.spectrum(3));
    CHECK(unflatten(s, 2, 2).values == c.values);
    CHECK_THROWS_AS(unflatten(s, 3, 2), InvalidArgument);

    HsiCube single(1, 1, 4);
    single.values = {1, 2, 3, 4};
    const SpectraMatrix one = flatten(single);
    CHECK(one.rows() == 1);
    CHECK(one.row(0).transpose() == single.spectrum(0));
}

TEST_CASE("dual window") {
    CHECK(DualWindow{1, 3}.context_count() == 8);
    CHECK(DualWindow{3, 5}.context_count() == 16);
    CHECK_THROWS_AS((DualWindow{2, 5}.validate()), InvalidArgument);
    CHECK_THROWS_AS((DualWindow{3, 4}.validate()), InvalidArgument);
    CHECK_THROWS_AS((DualWindow{5, 3}.validate()), InvalidArgument);
    CHECK_THROWS_AS((DualWindow{3, 3}.validate()), InvalidArgument);
    CHECK_NOTHROW((DualWindow{1, 3}.validate()));
}

TEST_CASE("context extraction") {
    // value of pixel (r, c) in band b is 100 r + 10 c + b
    HsiCube cube(5, 6, 2);
    for (Index r = 0; r < 5; ++r)
        for (Index c = 0; c < 6; ++c)
            for (Index b = 0; b < 2; ++b) cube.at(r, c, b) = 100.0 * r + 10.0 * c + b;

    SUBCASE("interior, window (1,3): the 8 neighbours in scan order") {
        const ContextSet ctx = extract_context(cube, 2 * 6 + 3, {1, 3});
        REQUIRE(ctx.rows() == 8);
        const std::vector<std::pair<int, int>> expect{{1, 2}, {1, 3}, {1, 4}, {2, 2}, {2, 4}, {3, 2}, {3, 3}, {3, 4}};
        for (Index m = 0; m < 8; ++m) {
            const auto [r, c] = expect[static_cast<std::size_t>(m)];
            CHECK(ctx(m, 0) == 100.0 * r + 10.0 * c);
            CHECK(ctx(m, 1) == 100.0 * r + 10.0 * c + 1);
        }
    }

    SUBCASE("window (3,5) has 16 members everywhere") {
        for (Index p = 0; p < cube.pixels(); ++p) {
            CHECK(extract_context(cube, p, {3, 5}).rows() == 16);
        }
    }

    SUBCASE("corner clamps to edge pixels") {
        const ContextSet ctx = extract_context(cube, 0, {1, 3});
        REQUIRE(ctx.rows() == 8);
        // scan order (-1,-1) (-1,0) (-1,1) (0,-1) (0,1) (1,-1) (1,0) (1,1) clamped
        const std::vector<std::pair<int, int>> expect{{0, 0}, {0, 0}, {0, 1}, {0, 0}, {0, 1}, {1, 0}, {1, 0}, {1, 1}};
        for (Index m = 0; m < 8; ++m) {
            const auto [r, c] = expect[static_cast<std::size_t>(m)];
            CHECK(ctx(m, 0) == 100.0 * r + 10.0 * c);
        }
    }

    SUBCASE("index path agrees with direct extraction") {
        const SpectraMatrix s = flatten(cube);
        const DualWindow w{3, 5};
        const ContextIndex idx = build_context_index(5, 6, w);
        CHECK(idx.count == 16);
        for (Index p = 0; p < cube.pixels(); ++p) {
            CHECK(gather_context(s, idx, p) == extract_context(cube, p, w));
        }
    }

    CHECK_THROWS_AS(extract_context(cube, 30, {1, 3}), InvalidArgument);
}

TEST_CASE("load_mask") {
    TempDir dir("mask");
    std::vector<unsigned char> pgm{'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 0, 255, 0, 0};
    write_bytes(dir / "m.pgm", pgm);
    const GroundTruthMask m = load_mask(dir / "m.pgm");
    CHECK(m.height == 2);
    CHECK(m.width == 2);
    CHECK(m.labels == std::vector<std::uint8_t>{0, 1, 0, 0});
    CHECK(m.anomalies() == 1);
    CHECK(m.background() == 3);

    const std::string commented = "P5\n# made by hand\n3 1\n255\n";
    std::vector<unsigned char> with_comment(commented.begin(), commented.end());
    with_comment.insert(with_comment.end(), {0, 0, 0});
    write_bytes(dir / "z.pgm", with_comment);
    const GroundTruthMask z = load_mask(dir / "z.pgm");
    CHECK(z.anomalies() == 0);
    CHECK(z.width == 3);

    std::vector<unsigned char> deep{'P', '5', '\n', '1', ' ', '1', '\n', '6', '5', '5', '3', '5', '\n', 0, 0};
    write_bytes(dir / "d.pgm", deep);
    CHECK_THROWS_AS(load_mask(dir / "d.pgm"), FormatError);
    std::vector<unsigned char> ascii{'P', '2', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', '0'};
    write_bytes(dir / "a.pgm", ascii);
    CHECK_THROWS_AS(load_mask(dir / "a.pgm"), FormatError);
    std::vector<unsigned char> short_payload{'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 0};
    write_bytes(dir / "s.pgm", short_payload);
    CHECK_THROWS_AS(load_mask(dir / "s.pgm"), FormatError);

    save_mask_pgm(m, dir / "again.pgm");
    CHECK(load_mask(dir / "again.pgm").labels == m.labels);

    HsiCube container(1, 3, 1);
    container.values = {0.0, 2.0, 0.0};
    save_cube(container, CubeFiles::from(dir / "mc"));
    const GroundTruthMask from_json = load_mask(dir / "mc.json");
    CHECK(from_json.labels == std::vector<std::uint8_t>{0, 1, 0});
    HsiCube two_band(1, 1, 2);
    two_band.values = {0.0, 1.0};
    save_cube(two_band, CubeFiles::from(dir / "tb"));
    CHECK_THROWS_AS(load_mask(dir / "tb.json"), FormatError);
}

TEST_CASE("save_pgm16") {
    TempDir dir("pgm16");
    save_pgm16(std::vector<double>{0.0, 10.0, 5.0}, 1, 3, dir / "a.pgm");
    const auto b = read_bytes(dir / "a.pgm");
    const std::string header = "P5\n3 1\n65535\n";
    REQUIRE(b.size() == header.size() + 6);
    CHECK(std::string(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(header.size())) == header);
    auto sample = [&](std::size_t i) {
        return (static_cast<unsigned>(static_cast<unsigned char>(b[header.size() + 2 * i])) << 8) |
               static_cast<unsigned char>(b[header.size() + 2 * i + 1]);
    };
    CHECK(sample(0) == 0u);
    CHECK(sample(1) == 65535u);
    CHECK(sample(2) == 32768u);
    CHECK_THROWS_AS(save_pgm16(std::vector<double>{1.0}, 1, 2, dir / "b.pgm"), InvalidArgument);
}
