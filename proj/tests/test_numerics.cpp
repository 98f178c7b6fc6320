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

#include "scoread/error.hpp"
#include "scoread/numerics.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numbers>

using namespace scoread;
using scoread::testing::random_matrix;
using scoread::testing::random_vector;

namespace {

// Direct-sum reference for the zero-padded convolution.
FeatureMap naive_conv(const FeatureMap& in, const std::vector<double>& w, const std::vector<double>& b,
                      const KernelShape& s) {
    const Index pad = s.width / 2;
    const Index L = in.segment;
    DenseMatrix out(s.out_channels, in.length());
    for (Index o = 0; o < s.out_channels; ++o) {
        for (Index p = 0; p < in.length(); ++p) {
            const Index seg0 = (p / L) * L;
            const Index i = p - seg0;
            double acc = b[static_cast<std::size_t>(o)];
            for (Index c = 0; c < s.in_channels; ++c) {
                for (Index j = 0; j < s.width; ++j) {
                    const Index src = i + j - pad;
                    if (src >= 0 && src < L) {
                        acc += w[static_cast<std::size_t>((o * s.in_channels + c) * s.width + j)] *
                               in.values(c, seg0 + src);
                    }
                }
            }
            out(o, p) = acc;
        }
    }
    return FeatureMap(out, L);
}

FeatureMap row(std::initializer_list<double> v) {
    DenseMatrix m(1, static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) m(0, i++) = x;
    return FeatureMap(m);
}

std::vector<double> flat(const DenseMatrix& m) { return {m.data(), m.data() + m.size()}; }

}  // namespace

TEST_CASE("conv1d_same hand cases") {
    const KernelShape s{1, 1, 3};
    const std::vector<double> zero{0.0};
    const FeatureMap x = row({1, 2, 3});

    const FeatureMap id = conv1d_same(x, std::vector<double>{0, 1, 0}, zero, s);
    CHECK(flat(id.values) == std::vector<double>{1, 2, 3});

    const FeatureMap box = conv1d_same(x, std::vector<double>{1, 1, 1}, zero, s);
    CHECK(flat(box.values) == std::vector<double>{3, 6, 5});

    // taps read input[i + j - 1]
    const FeatureMap left = conv1d_same(x, std::vector<double>{1, 0, 0}, zero, s);
    CHECK(flat(left.values) == std::vector<double>{0, 1, 2});
}

TEST_CASE("conv1d_same of zeros is the bias") {
    SeededRng rng(1, 0);
    const KernelShape s{3, 2, 5};
    const std::vector<double> w = random_vector(static_cast<std::size_t>(s.size()), rng);
    const std::vector<double> b{0.5, -1.0, 2.0};
    const FeatureMap out = conv1d_same(FeatureMap(DenseMatrix::Zero(2, 7)), w, b, s);
    for (Index o = 0; o < 3; ++o) {
        for (Index i = 0; i < 7; ++i) {
            CHECK(out.values(o, i) == b[static_cast<std::size_t>(o)]);
        }
    }
}

TEST_CASE("conv1d_same matches the direct sum and keeps segments apart") {
    SeededRng rng(2, 0);
    for (Index width : {1, 3, 5}) {
        const KernelShape s{4, 3, width};
        const FeatureMap x(random_matrix(3, 4 * 6, rng), 6);
        const std::vector<double> w = random_vector(static_cast<std::size_t>(s.size()), rng);
        const std::vector<double> b = random_vector(4, rng);
        const FeatureMap got = conv1d_same(x, w, b, s);
        const FeatureMap want = naive_conv(x, w, b, s);
        CHECK(got.segment == 6);
        CHECK((got.values - want.values).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("conv1d_same is linear") {
    SeededRng rng(3, 0);
    const KernelShape s{2, 2, 3};
    const std::vector<double> w = random_vector(static_cast<std::size_t>(s.size()), rng);
    const std::vector<double> zero(2, 0.0);
    const FeatureMap x(random_matrix(2, 10, rng), 5);
    const FeatureMap y(random_matrix(2, 10, rng), 5);
    const double a = 1.7;
    const double c = -0.4;
    const FeatureMap lhs = conv1d_same(FeatureMap(a * x.values + c * y.values, 5), w, zero, s);
    const DenseMatrix rhs = a * conv1d_same(x, w, zero, s).values + c * conv1d_same(y, w, zero, s).values;
    CHECK((lhs.values - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("conv1d_same rejects bad shapes") {
    const FeatureMap x = row({1, 2, 3});
    CHECK_THROWS_AS(conv1d_same(x, std::vector<double>{1, 1}, std::vector<double>{0}, {1, 1, 2}), InvalidArgument);
    CHECK_THROWS_AS(conv1d_same(x, std::vector<double>(6, 1.0), std::vector<double>{0}, {1, 2, 3}),
                    InvalidArgument);
    CHECK_THROWS_AS(conv1d_same(x, std::vector<double>{1, 1, 1}, std::vector<double>{0, 0}, {1, 1, 3}),
                    InvalidArgument);
}

TEST_CASE("conv1d_backward") {
    SeededRng rng(4, 0);
    const KernelShape s{2, 3, 3};
    const FeatureMap x(random_matrix(3, 2 * 5, rng), 5);
    const std::vector<double> w = random_vector(static_cast<std::size_t>(s.size()), rng);
    const std::vector<double> b = random_vector(2, rng);

    SUBCASE("zero upstream gives zero gradients") {
        const ConvGradients g = conv1d_backward(x, w, s, FeatureMap(DenseMatrix::Zero(2, 10), 5));
        CHECK(g.input.cwiseAbs().maxCoeff() == 0.0);
        for (double v : g.weights) CHECK(v == 0.0);
        for (double v : g.bias) CHECK(v == 0.0);
    }

    const FeatureMap up(random_matrix(2, 10, rng), 5);
    const ConvGradients g = conv1d_backward(x, w, s, up);

    SUBCASE("bias gradient is the channel sum of the upstream") {
        for (Index o = 0; o < 2; ++o) {
            CHECK(g.bias[static_cast<std::size_t>(o)] == doctest::Approx(up.values.row(o).sum()).epsilon(1e-14));
        }
    }

    // loss = <up, conv(x)>
    auto loss_of = [&](const FeatureMap& in, std::span<const double> wt, std::span<const double> bs) {
        return (conv1d_same(in, wt, bs, s).values.array() * up.values.array()).sum();
    };

    SUBCASE("weights and bias against finite differences") {
        const auto fw = finite_difference_gradient([&](std::span<const double> p) { return loss_of(x, p, b); }, w,
                                                   1e-5);
        CHECK(relative_error(g.weights, fw) <= 1e-6);
        const auto fb = finite_difference_gradient([&](std::span<const double> p) { return loss_of(x, w, p); }, b,
                                                   1e-5);
        CHECK(relative_error(g.bias, fb) <= 1e-6);
    }

    SUBCASE("input against finite differences") {
        const std::vector<double> x0 = flat(x.values);
        const auto fx = finite_difference_gradient(
            [&](std::span<const double> p) {
                DenseMatrix m = Eigen::Map<const DenseMatrix>(p.data(), 3, 10);
                return loss_of(FeatureMap(m, 5), w, b);
            },
            x0, 1e-5);
        CHECK(relative_error(flat(g.input), fx) <= 1e-6);
    }

    SUBCASE("accumulating form adds into existing buffers") {
        std::vector<double> gw(w.size(), 1.0);
        std::vector<double> gb(2, 1.0);
        DenseMatrix gi;
        conv1d_backward_accumulate(x, w, s, up, gw, gb, &gi);
        for (std::size_t i = 0; i < w.size(); ++i) CHECK(gw[i] == doctest::Approx(g.weights[i] + 1.0));
        for (std::size_t i = 0; i < 2; ++i) CHECK(gb[i] == doctest::Approx(g.bias[i] + 1.0));
        CHECK((gi - g.input).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("film_modulate") {
    const FeatureMap x = row({1, 2});
    CHECK(flat(film_modulate(x, std::vector<double>{3}, std::vector<double>{-1}).values) ==
          std::vector<double>{2, 5});
    CHECK(flat(film_modulate(x, std::vector<double>{1}, std::vector<double>{0}).values) ==
          std::vector<double>{1, 2});
    CHECK(flat(film_modulate(x, std::vector<double>{0}, std::vector<double>{4}).values) ==
          std::vector<double>{4, 4});
    CHECK_THROWS_AS(film_modulate(x, std::vector<double>{1, 1}, std::vector<double>{0}), InvalidArgument);
}

TEST_CASE("gaussian_fourier_embed") {
    const std::vector<double> f{1.0, 2.5, 16.0};
    const Vector at0 = gaussian_fourier_embed(0.0, f);
    REQUIRE(at0.size() == 6);
    for (int j = 0; j < 3; ++j) {
        CHECK(at0[2 * j] == 0.0);
        CHECK(at0[2 * j + 1] == 1.0);
    }
    const Vector q = gaussian_fourier_embed(0.25, std::vector<double>{1.0});
    CHECK(q[0] == doctest::Approx(std::sin(std::numbers::pi / 2)));
    CHECK(std::abs(q[1]) < 1e-15);
    SeededRng rng(5, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector e = gaussian_fourier_embed(rng.uniform(-5.0, 5.0), f);
        for (int j = 0; j < 3; ++j) {
            CHECK(e[2 * j] * e[2 * j] + e[2 * j + 1] * e[2 * j + 1] == doctest::Approx(1.0).epsilon(1e-14));
        }
    }
}

TEST_CASE("silu derivative") {
    for (double x : {-4.0, -0.3, 0.0, 0.7, 3.0}) {
        const double h = 1e-6;
        CHECK(silu_derivative(x) == doctest::Approx((silu(x + h) - silu(x - h)) / (2 * h)).epsilon(1e-8));
    }
}

TEST_CASE("adam_update") {
    SUBCASE("zero gradient leaves parameters in place") {
        std::vector<double> p{1.0, -2.0};
        AdamState st(2, AdamHyper{});
        adam_update(p, std::vector<double>{0.0, 0.0}, st);
        CHECK(p == std::vector<double>{1.0, -2.0});
        CHECK(st.step == 1);
    }
    SUBCASE("first step moves by about lr against the gradient") {
        std::vector<double> p{0.0, 0.0, 0.0};
        AdamState st(3, AdamHyper{0.01});
        adam_update(p, std::vector<double>{2.0, -0.5, 1e-3}, st);
        CHECK(p[0] < 0.0);
        CHECK(p[1] > 0.0);
        for (double v : p) {
            CHECK(std::abs(v) >= 0.99 * 0.01);
            CHECK(std::abs(v) <= 0.01);
        }
    }
    SUBCASE("two steps on (p - 3)^2 / 2 follow the hand trace") {
        std::vector<double> p{0.0};
        AdamState st(1, AdamHyper{0.1});
        adam_update(p, std::vector<double>{p[0] - 3.0}, st);
        CHECK(std::abs(p[0] - 0.09999999966666669) < 1e-12);
        adam_update(p, std::vector<double>{p[0] - 3.0}, st);
        CHECK(std::abs(p[0] - 0.19989729224944813) < 1e-12);
        CHECK(std::abs(st.first_moment[0] - -0.5600000000333332) < 1e-12);
        CHECK(std::abs(st.second_moment[0] - 0.01740100000193335) < 1e-12);
    }
    SUBCASE("non-finite gradient is rejected without touching state") {
        std::vector<double> p{1.0, 2.0};
        AdamState st(2, AdamHyper{});
        adam_update(p, std::vector<double>{0.1, 0.1}, st);
        const std::vector<double> before = p;
        const auto m = st.first_moment;
        CHECK_THROWS_AS(adam_update(p, std::vector<double>{0.1, std::nan("")}, st), TrainingDiverged);
        CHECK_THROWS_AS(adam_update(p, std::vector<double>{INFINITY, 0.0}, st), TrainingDiverged);
        CHECK(p == before);
        CHECK(st.first_moment == m);
        CHECK(st.step == 1);
    }
    CHECK_THROWS_AS(AdamState(1, AdamHyper{1e-3, 1.0}), InvalidArgument);
    CHECK_THROWS_AS(AdamState(1, AdamHyper{1e-3, 0.9, 0.999, 0.0}), InvalidArgument);
}

TEST_CASE("finite_difference_gradient") {
    const std::vector<double> p{0.3, -1.2, 2.0};
    const auto sq = finite_difference_gradient(
        [](std::span<const double> q) {
            double s = 0.0;
            for (double v : q) s += v * v;
            return s / 2.0;
        },
        p, 1e-4);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(sq[i] - p[i]) < 1e-9);

    const auto flat_loss = finite_difference_gradient([](std::span<const double>) { return 4.2; }, p, 1e-4);
    for (double g : flat_loss) CHECK(g == 0.0);

    const auto prod = finite_difference_gradient([](std::span<const double> q) { return q[0] * q[1]; },
                                                 std::vector<double>{2.0, 3.0}, 1e-5);
    CHECK(std::abs(prod[0] - 3.0) < 1e-8);
    CHECK(std::abs(prod[1] - 2.0) < 1e-8);
    CHECK_THROWS_AS(finite_difference_gradient([](std::span<const double>) { return 0.0; }, p, 0.0),
                    InvalidArgument);
}

TEST_CASE("relative_error") {
    CHECK(relative_error(std::vector<double>{1, 1}, std::vector<double>{1, 1}) == 0.0);
    CHECK(relative_error(std::vector<double>{3, 0}, std::vector<double>{0, 4}) == doctest::Approx(5.0 / 4.0));
}

TEST_CASE("parallel_for visits each index once") {
    for (unsigned threads : {1u, 2u, 3u, 8u}) {
        for (Index n : {0, 1, 7, 100}) {
            std::vector<std::atomic<int>> hits(static_cast<std::size_t>(n));
            parallel_for(n, threads, [&](Index b, Index e) {
                for (Index i = b; i < e; ++i) hits[static_cast<std::size_t>(i)]++;
            });
            for (auto& h : hits) CHECK(h.load() == 1);
        }
    }
    CHECK_THROWS_AS(parallel_for(10, 3,
                                 [](Index b, Index) {
                                     if (b > 0) throw DegenerateInput("boom");
                                 }),
                    DegenerateInput);
}

TEST_CASE("resolve_threads") {
    ::unsetenv("SCOREAD_THREADS");
    CHECK(resolve_threads(0) == 1);
    CHECK(resolve_threads(3) == 3);
    ::setenv("SCOREAD_THREADS", "4", 1);
    CHECK(resolve_threads(0) == 4);
    CHECK(resolve_threads(2) == 2);
    ::unsetenv("SCOREAD_THREADS");
}
