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

#include "zfnmr/tomography.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"
#include "zfnmr/csv.hpp"
#include "zfnmr/stateprep.hpp"

using namespace zfnmr;

namespace {

double max_deviation(const PauliVector &a, const PauliVector &b) {
    double m = 0;
    for (std::size_t i = 1; i < 16; ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

std::size_t idx(const char *label) { return PauliVector::index_of(label); }

}  // namespace

TEST(PauliVector, RoundTripAndLabels) {
    std::mt19937_64 rng(1);
    const Operator rho = Operator::hermitian(zfnmr::testing::random_density(rng, 0.1));
    const PauliVector v = PauliVector::from_operator(rho);
    EXPECT_NEAR(v[0], 1.0, 1e-15);
    EXPECT_LT(max_abs(v.to_operator() - rho), 1e-15);
    EXPECT_EQ(idx("IzSz"), 15u);
    EXPECT_EQ(idx("Sx"), 4u);
    EXPECT_THROW(idx("Qz"), std::invalid_argument);
}

TEST(PauliVector, JsonAndCsvRoundTrip) {
    PauliVector v;
    for (std::size_t i = 0; i < 16; ++i) v[i] = 0.1 * static_cast<double>(i) - 0.7;
    const nlohmann::json j = v;
    const PauliVector back = nlohmann::json::parse(j.dump()).get<PauliVector>();
    EXPECT_EQ(back.coefficients, v.coefficients);
    std::stringstream ss;
    write_csv(ss, v);
    const CsvTable t = read_csv(ss);
    const auto c = t.numeric_column("coefficient");
    ASSERT_EQ(c.size(), 16u);
    for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(c[i], v[i]);
    EXPECT_EQ(t.column("label")[15], "IzSz");
}

TEST(StateFidelity, Normalized) {
    PauliVector a, b;
    a[3] = 1.0;
    b[3] = 5.0;
    EXPECT_NEAR(state_fidelity(a, b), 1.0, 1e-15);
    b[3] = -2.0;
    EXPECT_NEAR(state_fidelity(a, b), -1.0, 1e-15);
    EXPECT_THROW(state_fidelity(a, PauliVector{}), std::invalid_argument);
}

TEST(TemporalAveraging, SeparatesIzAndSzAtIdealRatio) {
    const SpinSystem sys = SpinSystem::idealized();
    const Executor exec = Executor::ideal(sys);
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const Operator rho = Operator::hermitian(zfnmr::testing::random_density(rng, 0.01));
        const auto est = combine_readouts(sys, readout_signals(exec, rho));
        const double iz = (rho.matrix() * spin_operator(Spin::I, Axis::z).matrix()).trace().real();
        const double sz = (rho.matrix() * spin_operator(Spin::S, Axis::z).matrix()).trace().real();
        EXPECT_NEAR(est.iz, iz, 1e-12);
        EXPECT_NEAR(est.sz, sz, 1e-12);
    }
}

TEST(TemporalAveraging, CancelsLargeIzBackground) {
    // A pure I_z state reads zero S_z.
    const SpinSystem sys = SpinSystem::idealized();
    const Operator rho = Operator::hermitian(0.25 * Matrix4::Identity() + 1e-3 * spin_operator(Spin::I, Axis::z).matrix());
    EXPECT_LT(std::abs(temporal_average_Sz(sys, rho)), 1e-15);
}

TEST(TemporalAveraging, PhysicalRatioLeaksIz) {
    // At 3.976 the pi_Ix readout is imperfect, so some I_z leaks into S_z.
    const SpinSystem sys = SpinSystem::physical();
    const Operator rho = Operator::hermitian(0.25 * Matrix4::Identity() + 1e-3 * spin_operator(Spin::I, Axis::z).matrix());
    const double leak = std::abs(temporal_average_Sz(sys, rho)) / 2.5e-4;
    EXPECT_GT(leak, 1e-4);
    EXPECT_LT(leak, 0.05);
}

TEST(Design, FullRankAndTargetsMapToReadout) {
    const Eigen::MatrixXd a = tomography_design_matrix();
    EXPECT_EQ(a.rows(), 28);
    EXPECT_EQ(a.cols(), 15);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    EXPECT_GT(svd.singularValues()[14], 0.1);
    // Each single-target experiment reads its own Pauli term on I_z with weight 1/2.
    const auto &exps = tomography_experiments();
    for (std::size_t e = 1; e < exps.size(); ++e) {
        const std::size_t j = idx(exps[e].target.c_str()) - 1;
        const int row = static_cast<int>(2 * e + (exps[e].target[0] == 'S' ? 1 : 0));
        EXPECT_NEAR(std::abs(a(row, static_cast<Eigen::Index>(j))), 0.5, 1e-12) << exps[e].target;
    }
}

TEST(Tomography, IdentityOnPreparedStates) {
    const SpinSystem sys = SpinSystem::idealized();
    const Executor exec = Executor::ideal(sys);
    const PolarizationConfig pol = PolarizationConfig::thermal(sys);
    for (const Operator &rho : {sudden_state(pol), adiabatic_state(pol)}) {
        const PauliVector truth = PauliVector::from_operator(rho);
        const PauliVector est = state_tomography(exec, [&] { return rho; });
        EXPECT_LE(max_deviation(est, truth), 1e-8 * truth.deviation_norm());
    }
}

TEST(Tomography, RecoversRandomStates) {
    const SpinSystem sys = SpinSystem::idealized();
    const Executor exec = Executor::ideal(sys);
    std::mt19937_64 rng(5);
    const Operator rho = Operator::hermitian(zfnmr::testing::random_density(rng, 1e-5));
    const PauliVector truth = PauliVector::from_operator(rho);
    EXPECT_LE(max_deviation(state_tomography(exec, [&] { return rho; }), truth), 1e-8 * truth.deviation_norm());
}

TEST(Tomography, LinearInDeviation) {
    const SpinSystem sys = SpinSystem::physical();
    const Executor exec = Executor::ideal(sys);
    std::mt19937_64 rng(6);
    const Matrix4 d1 = zfnmr::testing::random_density(rng, 1e-5) - 0.25 * Matrix4::Identity();
    const Matrix4 d2 = zfnmr::testing::random_density(rng, 1e-5) - 0.25 * Matrix4::Identity();
    const auto tomo = [&](const Matrix4 &d) {
        const Operator rho = Operator::hermitian(0.25 * Matrix4::Identity() + d);
        return state_tomography(exec, [&] { return rho; });
    };
    const PauliVector a = tomo(d1), b = tomo(d2), ab = tomo(d1 + 2.0 * d2);
    for (std::size_t i = 1; i < 16; ++i) EXPECT_NEAR(ab[i], a[i] + 2.0 * b[i], 1e-14);
}

TEST(Tomography, CnotOnSuddenState) {
    const SpinSystem sys = SpinSystem::idealized();
    const Executor exec = Executor::ideal(sys);
    const PolarizationConfig pol = PolarizationConfig::thermal(sys);
    const Operator rho = exec.run(compile_cnot(sys), sudden_state(pol));
    const PauliVector est = state_tomography(exec, [&] { return rho; });
    const PauliVector in = PauliVector::from_operator(sudden_state(pol));
    // Control I_z is preserved, S_z becomes 2 I_z S_z.
    EXPECT_NEAR(est[idx("Iz")], in[idx("Iz")], 1e-8 * in.deviation_norm());
    EXPECT_NEAR(std::abs(est[idx("IzSz")]), std::abs(in[idx("Sz")]), 1e-8 * in.deviation_norm());
    for (std::size_t i = 1; i < 16; ++i)
        if (i != idx("Iz") && i != idx("IzSz")) EXPECT_LE(std::abs(est[i]), 1e-8 * in.deviation_norm()) << i;
}

TEST(Tomography, PhysicalRatioErrorIsBounded) {
    const SpinSystem sys = SpinSystem::physical();
    const Executor exec(sys, ErrorModel::ideal(), ExecutionOptions::experiment());
    const PolarizationConfig pol = PolarizationConfig::thermal(sys);
    for (const Operator &rho : {sudden_state(pol), adiabatic_state(pol)}) {
        const PauliVector est = state_tomography(exec, [&] { return rho; });
        const double f = state_fidelity(est, PauliVector::from_operator(rho));
        EXPECT_GT(f, 0.95);
        EXPECT_LT(f, 1.0);
    }
}

TEST(Tomography, DetectorNoiseIsSeeded) {
    const SpinSystem sys = SpinSystem::idealized();
    const Executor exec = Executor::ideal(sys);
    const Operator rho = sudden_state(PolarizationConfig::thermal(sys));
    DetectorNoise n1(1e-9, 42), n2(1e-9, 42);
    const PauliVector a = state_tomography(exec, [&] { return rho; }, &n1);
    const PauliVector b = state_tomography(exec, [&] { return rho; }, &n2);
    EXPECT_EQ(a.coefficients, b.coefficients);
}

TEST(PerturbDeviation, ScaleAndIdentityTerm) {
    PauliVector v;
    v[0] = 1.0;
    v[3] = 3.0;
    v[6] = 4.0;
    std::mt19937_64 rng(8);
    double sum2 = 0;
    const int n = 2000;
    for (int k = 0; k < n; ++k) {
        const PauliVector p = perturb_deviation(v, 0.1, rng);
        EXPECT_EQ(p[0], 1.0);
        sum2 += (p[1] - v[1]) * (p[1] - v[1]);
    }
    EXPECT_NEAR(std::sqrt(sum2 / n), 0.5, 0.05);
    EXPECT_EQ(perturb_deviation(v, 0.0, rng).coefficients, v.coefficients);
    EXPECT_THROW(perturb_deviation(v, -1.0, rng), std::invalid_argument);
}
