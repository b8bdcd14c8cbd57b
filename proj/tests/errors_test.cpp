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

#include "zfnmr/errors.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "zfnmr/stateprep.hpp"

using namespace zfnmr;

namespace {

constexpr double kPi = std::numbers::pi;

/// Ensemble-averaged S process fidelity of the calibrated S pi pulse, no J.
double pi_pulse_infidelity(double sigma_b, int order = 8) {
    const SpinSystem sys = SpinSystem::physical();
    ErrorModel m = ErrorModel::ideal();
    m.incoherent_enabled = true;
    m.inhomogeneity = sigma_b;
    m.ensemble_size = order;
    const Executor exec(sys, m, ExecutionOptions::compiler_verification());
    PulseSchedule s;
    s.segments = {calibrate_pi_pulse(sys, Spin::S, 50e-6)};
    const Matrix2 target = zfnmr::testing::sigma(1) * Complex(0, 1);  // exp(+i pi sigma_x / 2)
    double f = 0;
    for (std::size_t k = 0; k < exec.members().size(); ++k)
        f += exec.members()[k].weight * spin_process_fidelity(exec.member_propagator(s, k), target, Spin::S);
    return 1.0 - f;
}

}  // namespace

TEST(GaussHermite, IntegratesPolynomialMoments) {
    // E[X^2k] = (2k-1)!! for a standard normal; exact up to degree 2n-1.
    const auto nodes = gauss_hermite_normal(8);
    double m0 = 0, m1 = 0, m2 = 0, m4 = 0, m6 = 0, m14 = 0;
    for (const auto &n : nodes) {
        m0 += n.weight;
        m1 += n.weight * n.delta;
        m2 += n.weight * std::pow(n.delta, 2);
        m4 += n.weight * std::pow(n.delta, 4);
        m6 += n.weight * std::pow(n.delta, 6);
        m14 += n.weight * std::pow(n.delta, 14);
    }
    EXPECT_NEAR(m0, 1.0, 1e-13);
    EXPECT_NEAR(m1, 0.0, 1e-13);
    EXPECT_NEAR(m2, 1.0, 1e-12);
    EXPECT_NEAR(m4, 3.0, 1e-11);
    EXPECT_NEAR(m6, 15.0, 1e-10);
    EXPECT_NEAR(m14 / 135135.0, 1.0, 1e-10);
    EXPECT_THROW(gauss_hermite_normal(0), std::invalid_argument);
}

TEST(Ensemble, MembersFollowModel) {
    ErrorModel m;
    EXPECT_EQ(ensemble_members(m).size(), 8u);
    m.inhomogeneity = 0.0;
    EXPECT_EQ(ensemble_members(m).size(), 1u);
    m = ErrorModel{};
    m.sampling = EnsembleSampling::monte_carlo;
    m.ensemble_size = 64;
    const auto a = ensemble_members(m), b = ensemble_members(m);
    ASSERT_EQ(a.size(), 64u);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].delta, b[i].delta);
}

TEST(PulseError, AmplitudeAndTilt) {
    ErrorModel m = ErrorModel::ideal();
    m.unitary_enabled = true;
    m.amplitude_miscalibration = 0.01;
    m.misalignment_tilt = 0.02;
    const PulseSegment seg = PulseSegment::dc_pulse(Vec3::UnitX(), 1e-4, 1e-5);
    const PulseSegment out = apply_pulse_error(seg, m, EnsembleMember{});
    EXPECT_NEAR(out.amplitude_t, 1.01e-4, 1e-18);
    EXPECT_NEAR(std::acos(out.axis.dot(Vec3::UnitX())), 0.02, 1e-12);
    EXPECT_NEAR(out.axis.norm(), 1.0, 1e-15);
    EXPECT_THROW(apply_pulse_error(PulseSegment::delay(1e-3), m, EnsembleMember{}), std::invalid_argument);
}

TEST(Executor, IdealModelReproducesPropagator) {
    const SpinSystem sys = SpinSystem::physical();
    const Executor exec = Executor::ideal(sys);
    const PulseSchedule s = compile_cnot(sys);
    std::mt19937_64 rng(2);
    const Operator rho = Operator::hermitian(zfnmr::testing::random_density(rng));
    const Operator direct = evolve(rho, schedule_propagator(sys, s, false));
    EXPECT_LT(max_abs(exec.run(s, rho) - direct), 1e-15);
}

TEST(Executor, DecoherenceOnDelaysMakesScheduleNonUnitary) {
    const SpinSystem sys = SpinSystem::physical();
    const Executor exec(sys, ErrorModel{}, ExecutionOptions::experiment());
    EXPECT_FALSE(exec.is_unitary(compile_uzz(sys, kPi)));
    EXPECT_TRUE(exec.is_unitary(compile_selective_rotation(sys, Spin::S, Axis::x, kPi)));
    EXPECT_THROW(exec.member_propagator(compile_uzz(sys, kPi), 0), std::logic_error);
}

TEST(Decohere, DampsCoherencesOnly) {
    ErrorModel m = ErrorModel::ideal();
    m.decoherence_enabled = true;
    std::mt19937_64 rng(7);
    const Operator rho = Operator::hermitian(zfnmr::testing::random_density(rng, 0.1));
    const Operator out = decohere(rho, 2.0, m);
    const Matrix4 a = rho.in_basis(Basis::coupled).matrix(), b = out.in_basis(Basis::coupled).matrix();
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            const Complex expect = i == j ? a(i, j) : a(i, j) * std::exp(-2.0 / m.t2_s);
            EXPECT_LT(std::abs(b(i, j) - expect), 1e-15);
        }
    EXPECT_TRUE(out.is_hermitian());
}

TEST(Decohere, SingletRelaxationIsSemigroupAndTracePreserving) {
    ErrorModel m = ErrorModel::ideal();
    m.decoherence_enabled = true;
    m.singlet_relaxation_enabled = true;
    std::mt19937_64 rng(9);
    const Operator rho = Operator::hermitian(zfnmr::testing::random_density(rng, 0.1));
    const Operator once = decohere(rho, 3.0, m);
    const Operator twice = decohere(decohere(rho, 1.0, m), 2.0, m);
    EXPECT_LT(max_abs(once - twice), 1e-15);
    EXPECT_NEAR(std::abs(once.trace() - rho.trace()), 0.0, 1e-15);
    // Long times equalize the four populations.
    const Matrix4 late = decohere(rho, 1e4, m).in_basis(Basis::coupled).matrix();
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(late(i, i).real(), 0.25, 1e-12);
    // Singlet excess decays at 1/T1.
    const auto excess = [](const Operator &r) {
        const Matrix4 c = r.in_basis(Basis::coupled).matrix();
        return c(3, 3).real() - (c(0, 0).real() + c(1, 1).real() + c(2, 2).real()) / 3.0;
    };
    EXPECT_NEAR(excess(once) / excess(rho), std::exp(-3.0 / m.t1_singlet_s), 1e-12);
}

TEST(Depolarize, AverageInfidelityOfChannel) {
    // A pure state of S loses 2 eps of its polarization: <Sz> -> (1 - 2 eps) <Sz>.
    const Operator rho = Operator::hermitian(0.25 * Matrix4::Identity() + spin_operator(Spin::S, Axis::z).matrix());
    const Operator out = depolarize_spin(rho, Spin::S, 0.01);
    const auto sz = [](const Operator &r) { return (r.matrix() * spin_operator(Spin::S, Axis::z).matrix()).trace().real(); };
    const double sz0 = sz(rho), sz1 = sz(out);
    EXPECT_NEAR(sz1 / sz0, 0.98, 1e-14);
    EXPECT_EQ(depolarize_spin(rho, Spin::S, 0.0).matrix(), rho.matrix());
    // The I part is untouched.
    const Operator ri = Operator::hermitian(0.25 * Matrix4::Identity() + spin_operator(Spin::I, Axis::x).matrix());
    EXPECT_LT(max_abs(depolarize_spin(ri, Spin::S, 0.2) - ri), 1e-15);
}

TEST(ProcessFidelity, ProductUnitariesDependOnTargetSpinOnly) {
    const Matrix2 b = zfnmr::testing::sigma(2) * Complex(0, -1);
    const Matrix4 u = zfnmr::testing::kron2(zfnmr::testing::sigma(1) * Complex(0, -1), b);
    EXPECT_NEAR(spin_process_fidelity(Operator::unitary(u), b, Spin::S), 1.0, 1e-14);
    EXPECT_NEAR(spin_process_fidelity(Operator::unitary(u), Matrix2::Identity(), Spin::S), 0.0, 1e-14);
    EXPECT_NEAR(spin_process_fidelity(cnot_matrix(), Matrix2::Identity(), Spin::S), 0.5, 1e-14);
}

TEST(IncoherentError, PiPulseInfidelityMatchesGaussianAverage) {
    // Each member rotates by pi (1 + d), infidelity sin^2(pi d / 2); averaging
    // over d ~ N(0, s^2) gives (1 - exp(-pi^2 s^2 / 2)) / 2.
    for (double s : {0.001, 0.002, 0.004}) {
        const double expect = 0.5 * (1.0 - std::exp(-kPi * kPi * s * s / 2.0));
        EXPECT_NEAR(pi_pulse_infidelity(s) / expect, 1.0, 1e-6) << s;
    }
    const double f = pi_pulse_infidelity(0.002);
    EXPECT_GT(f, 1e-5 / 3);
    EXPECT_LT(f, 3e-5);
}

TEST(IncoherentError, QuadraticScaling) {
    const double s1 = 0.001, s2 = 0.004;
    const double slope = std::log(pi_pulse_infidelity(s2) / pi_pulse_infidelity(s1)) / std::log(s2 / s1);
    EXPECT_NEAR(slope, 2.0, 0.01);
}

TEST(ErrorModelJson, RoundTripAndValidation) {
    ErrorModel m;
    m.amplitude_miscalibration = 0.013;
    m.sampling = EnsembleSampling::monte_carlo;
    m.singlet_relaxation_enabled = true;
    const nlohmann::json j = m;
    const ErrorModel back = nlohmann::json::parse(j.dump()).get<ErrorModel>();
    EXPECT_EQ(nlohmann::json(back), j);
    ErrorModel bad;
    bad.t2_s = 0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = ErrorModel{};
    bad.clifford_depolarizing = 0.7;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}
