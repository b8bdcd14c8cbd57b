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

#include "zfnmr/benchmarking.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "test_util.hpp"
#include "zfnmr/csv.hpp"

using namespace zfnmr;
using zfnmr::testing::sigma;

namespace {

/// Signed Pauli image of sigma_a under conjugation, or 0 if not a Pauli.
int pauli_image(const Matrix2 &u, int a) {
    const Matrix2 img = u * sigma(a) * u.adjoint();
    for (int b = 1; b <= 3; ++b)
        for (int s : {+1, -1})
            if ((img - static_cast<double>(s) * sigma(b)).norm() < 1e-12) return s * b;
    return 0;
}

RBDataset synthetic(double d_if, double eps, std::size_t k, double noise, std::uint64_t seed) {
    RBDataset d;
    d.lengths = {1, 2, 4, 8, 16, 32, 64, 128, 256};
    d.k = k;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, noise);
    for (std::size_t m : d.lengths) {
        std::vector<double> row(k);
        for (auto &v : row) v = (1 - d_if) * std::pow(1 - 2 * eps, static_cast<double>(m)) + (noise > 0 ? g(rng) : 0.0);
        d.survivals.push_back(row);
    }
    return d;
}

}  // namespace

TEST(Clifford, PrintedProductsGiveTwelveElements) {
    const auto pc = pc_products();
    EXPECT_EQ(pc.size(), 48u);
    std::vector<Matrix2> distinct;
    for (const auto &e : pc) {
        bool seen = false;
        for (const auto &d : distinct) seen |= std::abs(std::abs((d.adjoint() * e.unitary).trace()) / 2 - 1) < 1e-9;
        if (!seen) distinct.push_back(e.unitary);
    }
    EXPECT_EQ(distinct.size(), 12u);
    for (const auto &d : distinct) EXPECT_GT(std::abs(std::abs(d.trace()) / 2 - 1), 1e-3);
}

TEST(Clifford, GroupHasTwentyFourDistinctElements) {
    const auto &g = clifford_group();
    ASSERT_EQ(g.size(), 24u);
    EXPECT_LT((g[0].unitary - Matrix2::Identity()).norm(), 1e-15);
    std::set<std::vector<int>> actions;
    for (const auto &e : g) {
        EXPECT_LT((e.unitary.adjoint() * e.unitary - Matrix2::Identity()).norm(), 1e-14);
        const std::vector<int> act = {pauli_image(e.unitary, 1), pauli_image(e.unitary, 2), pauli_image(e.unitary, 3)};
        for (int v : act) EXPECT_NE(v, 0);
        actions.insert(act);
    }
    // 24 distinct signed permutations of the axes with determinant +1.
    EXPECT_EQ(actions.size(), 24u);
}

TEST(Clifford, ProductTableIsAGroup) {
    const auto &t = clifford_product_table();
    for (std::size_t a = 0; a < 24; ++a) {
        std::set<int> row, col;
        for (std::size_t b = 0; b < 24; ++b) {
            row.insert(t[a][b]);
            col.insert(t[b][a]);
        }
        EXPECT_EQ(row.size(), 24u);
        EXPECT_EQ(col.size(), 24u);
        EXPECT_EQ(t[0][a], a);
        EXPECT_EQ(t[a][clifford_inverse(a)], 0);
    }
    const auto &g = clifford_group();
    EXPECT_EQ(find_clifford(g[5].unitary * g[17].unitary), t[5][17]);
    EXPECT_THROW(find_clifford(detail::spin_half_rotation(Axis::x, 0.3)), std::invalid_argument);
}

TEST(Clifford, CompiledElementsExactAtIdealRatio) {
    const SpinSystem sys = SpinSystem::idealized();
    for (const auto &e : clifford_group()) {
        const Operator u = schedule_propagator(sys, compile_clifford(sys, e), false);
        EXPECT_LE(phase_invariant_distance(u, e.embedded()), 1e-10);
    }
}

TEST(Clifford, QuarterTurnConvention) {
    // exp(+i pi/2 S_x)
    const auto e = detail::make_clifford(+1, std::nullopt, {{+1, Axis::x}});
    const Matrix2 ref = std::cos(std::numbers::pi / 4) * sigma(0) + Complex(0, std::sin(std::numbers::pi / 4)) * sigma(1);
    EXPECT_LT((e.unitary - ref).norm(), 1e-15);
}

TEST(Sequence, RecoveryInvertsProduct) {
    const auto &g = clifford_group();
    for (std::size_t m : {0u, 1u, 5u, 64u}) {
        const RBSequence s = generate_rb_sequence(m, 1234 + m);
        ASSERT_EQ(s.elements.size(), m);
        Matrix2 u = Matrix2::Identity();
        for (std::size_t e : s.elements) u = g[e].unitary * u;
        u = g[s.recovery].unitary * u;
        EXPECT_NEAR(std::abs(u.trace()) / 2, 1.0, 1e-12);
    }
}

TEST(Sequence, UniformSampling) {
    std::array<int, 24> counts{};
    const int n = 24000;
    const RBSequence s = generate_rb_sequence(n, 99);
    for (std::size_t e : s.elements) ++counts[e];
    double chi2 = 0;
    for (int c : counts) chi2 += std::pow(c - n / 24.0, 2) / (n / 24.0);
    // 23 degrees of freedom; 99.9th percentile is about 49.7.
    EXPECT_LT(chi2, 49.7);
    EXPECT_EQ(generate_rb_sequence(10, 5).elements, generate_rb_sequence(10, 5).elements);
}

TEST(Fit, NoiseFreeRoundTrip) {
    const RBFit f = fit_rb_decay(synthetic(0.0141, 0.004, 4, 0.0, 0));
    EXPECT_NEAR(f.eps_g, 0.004, 1e-8);
    EXPECT_NEAR(f.d_if, 0.0141, 1e-8);
    EXPECT_NEAR(f.average_fidelity(), 0.996, 1e-8);
    EXPECT_LT(f.rms_residual, 1e-10);
}

TEST(Fit, NoisyRoundTripWithinTwoStandardErrors) {
    int inside = 0;
    const int trials = 40;
    for (int s = 0; s < trials; ++s) {
        const RBFit f = fit_rb_decay(synthetic(0.0141, 0.004, 32, 0.01, 1000 + s));
        EXPECT_GT(f.stderr_eps_g, 0.0);
        if (std::abs(f.eps_g - 0.004) <= 2 * f.stderr_eps_g && std::abs(f.d_if - 0.0141) <= 2 * f.stderr_d_if) ++inside;
    }
    // Two-sigma coverage for both parameters; allow sampling slack.
    EXPECT_GE(inside, 32);
}

TEST(Fit, WeightedFitAlsoRecovers) {
    RBFitOptions opt;
    opt.weighted = true;
    const RBFit f = fit_rb_decay(synthetic(0.0141, 0.004, 32, 0.01, 7), opt);
    EXPECT_NEAR(f.eps_g, 0.004, 3 * f.stderr_eps_g);
}

TEST(Fit, GainInvariance) {
    RBDataset d = synthetic(0.02, 0.003, 8, 0.005, 3);
    const RBFit a = fit_rb_decay(d);
    for (auto &row : d.survivals)
        for (auto &v : row) v *= 3.7;
    const RBFit b = fit_rb_decay(d);
    EXPECT_NEAR(a.eps_g, b.eps_g, 1e-9);
    EXPECT_NEAR(b.amplitude / a.amplitude, 3.7, 1e-8);
}

TEST(Fit, RejectsDegenerateData) {
    RBDataset d = synthetic(0.0, 0.004, 2, 0.0, 0);
    d.lengths = {1, 1, 2, 2, 2, 2, 2, 2, 2};
    EXPECT_THROW(fit_rb_decay(d), std::invalid_argument);
    d = synthetic(0.0, 0.004, 2, 0.0, 0);
    for (auto &v : d.survivals[3]) v = -1.0;
    EXPECT_THROW(fit_rb_decay(d), std::invalid_argument);
    d.survivals.pop_back();
    EXPECT_THROW(fit_rb_decay(d), std::invalid_argument);
}

TEST(RunRb, IdealCompiledSurvivalIsOne) {
    const SpinSystem sys = SpinSystem::idealized();
    RBOptions opt;
    opt.lengths = {1, 4, 16};
    opt.k = 4;
    opt.execution = ExecutionOptions::compiler_verification();
    const RBDataset d = run_rb(sys, ErrorModel::ideal(), opt);
    // Roundoff on a 1e-5 deviation riding on the identity part.
    for (const auto &row : d.survivals)
        for (double v : row) EXPECT_NEAR(v, 1.0, 1e-7);
}

TEST(RunRb, DepolarizingChannelIsRecovered) {
    const SpinSystem sys = SpinSystem::idealized();
    ErrorModel m = ErrorModel::ideal();
    m.clifford_depolarizing = 0.004;
    RBOptions opt;
    opt.lengths = {1, 2, 4, 8, 16, 32, 64};
    opt.k = 4;
    opt.realization = CliffordRealization::abstract_unitary;
    opt.execution = ExecutionOptions::compiler_verification();
    const RBFit f = fit_rb_decay(run_rb(sys, m, opt));
    EXPECT_NEAR(f.eps_g, 0.004, 1e-8);
    // The recovery Clifford contributes one extra channel.
    EXPECT_NEAR(f.d_if, 0.008, 1e-8);
}

TEST(RunRb, ThreadCountDoesNotChangeResults) {
    const SpinSystem sys = SpinSystem::physical();
    ErrorModel m;
    m.amplitude_miscalibration = 0.01;
    RBOptions opt;
    opt.lengths = {1, 8, 32};
    opt.k = 6;
    opt.seed = 17;
    const RBDataset a = run_rb(sys, m, opt);
    opt.threads = 3;
    const RBDataset b = run_rb(sys, m, opt);
    EXPECT_EQ(a.survivals, b.survivals);
    EXPECT_EQ(a.seeds, b.seeds);
}

TEST(RunRb, DatasetJsonAndCsv) {
    const RBDataset d = synthetic(0.01, 0.004, 3, 0.01, 4);
    const nlohmann::json j = d;
    const RBDataset back = nlohmann::json::parse(j.dump()).get<RBDataset>();
    EXPECT_EQ(back.survivals, d.survivals);
    EXPECT_EQ(back.lengths, d.lengths);
    std::stringstream ss;
    write_csv(ss, d);
    const CsvTable t = read_csv(ss);
    const auto m = t.numeric_column("m");
    ASSERT_EQ(m.size(), d.lengths.size());
    const auto mean = t.numeric_column("mean");
    EXPECT_NEAR(mean[0], (d.survivals[0][0] + d.survivals[0][1] + d.survivals[0][2]) / 3, 1e-15);
    const nlohmann::json rep = fit_report(fit_rb_decay(d), d);
    EXPECT_TRUE(rep.contains("eps_g"));
    EXPECT_TRUE(rep.contains("stderr_d_if"));
}
