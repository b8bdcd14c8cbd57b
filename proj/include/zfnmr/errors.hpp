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

#pragma once

/// Error models and the noisy schedule executor.
///
/// Three categories are modelled:
///  * unitary: systematic amplitude miscalibration and a fixed axis tilt;
///  * incoherent: a static fractional field spread over the sample, sampled
///    either on Gauss-Hermite nodes or by Monte Carlo;
///  * decoherent: T2 damping of every coherence in the zero-field eigenbasis,
///    plus optional singlet-triplet population exchange (T1_singlet).
///
/// All defaults live in `ErrorModel` below.

#include "zfnmr/pulses.hpp"

#include <json.hpp>

#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace zfnmr {

enum class EnsembleSampling { gauss_hermite, monte_carlo };

struct ErrorModel {
    // unitary
    bool unitary_enabled = true;
    double amplitude_miscalibration = 0.0;  ///< fractional, delta_A
    double misalignment_tilt = 0.0;         ///< rad
    double misalignment_azimuth = 0.0;      ///< rad

    // incoherent
    bool incoherent_enabled = true;
    double inhomogeneity = 0.002;  ///< fractional field spread sigma_B
    int ensemble_size = 8;
    EnsembleSampling sampling = EnsembleSampling::gauss_hermite;
    std::uint64_t ensemble_seed = 1;  ///< Monte Carlo only

    // decoherent
    bool decoherence_enabled = true;
    double t2_s = 10.3;
    bool singlet_relaxation_enabled = false;
    double t1_singlet_s = 16.7;
    bool decohere_during_pulses = false;  ///< strict mode

    // Artificial single-spin depolarizing strength per Clifford (RB studies).
    double clifford_depolarizing = 0.0;

    /// Everything off: executions reproduce the ideal propagators bit for bit.
    static ErrorModel ideal() {
        ErrorModel m;
        m.unitary_enabled = false;
        m.incoherent_enabled = false;
        m.decoherence_enabled = false;
        m.singlet_relaxation_enabled = false;
        return m;
    }

    void validate() const {
        auto finite = [](double v) { return std::isfinite(v); };
        if (!finite(amplitude_miscalibration) || !finite(misalignment_tilt) || !finite(misalignment_azimuth))
            throw std::invalid_argument("unitary error parameters must be finite");
        if (!(inhomogeneity >= 0) || !finite(inhomogeneity)) throw std::invalid_argument("inhomogeneity must be >= 0");
        if (ensemble_size < 1) throw std::invalid_argument("ensemble size must be >= 1");
        if (!(t2_s > 0)) throw std::invalid_argument("T2 must be positive");
        if (!(t1_singlet_s > 0)) throw std::invalid_argument("T1_singlet must be positive");
        if (!(clifford_depolarizing >= 0 && clifford_depolarizing <= 0.5))
            throw std::invalid_argument("clifford_depolarizing must lie in [0, 0.5]");
    }
};

/// One voxel of the sample: its fractional field offset and quadrature weight.
struct EnsembleMember {
    double delta = 0.0;
    double weight = 1.0;
};

/// Gauss-Hermite rule for a standard normal variable (Golub-Welsch).
/// Returns nodes x_k and weights w_k with sum w_k f(x_k) ~ E[f(X)], X ~ N(0,1).
inline std::vector<EnsembleMember> gauss_hermite_normal(int n) {
    if (n < 1) throw std::invalid_argument("quadrature order must be >= 1");
    if (n == 1) return {{0.0, 1.0}};
    // Probabilists' Hermite recurrence: Jacobi matrix with off-diagonal sqrt(k).
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) jac(k, k - 1) = jac(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jac);
    std::vector<EnsembleMember> out(n);
    for (int k = 0; k < n; ++k) {
        const double v0 = eig.eigenvectors()(0, k);
        out[k] = {eig.eigenvalues()[k], v0 * v0};
    }
    return out;
}

inline std::vector<EnsembleMember> ensemble_members(const ErrorModel &model) {
    if (!model.incoherent_enabled || model.inhomogeneity == 0.0) return {{0.0, 1.0}};
    const int n = model.ensemble_size;
    std::vector<EnsembleMember> out;
    if (model.sampling == EnsembleSampling::gauss_hermite) {
        out = gauss_hermite_normal(n);
        for (auto &m : out) m.delta *= model.inhomogeneity;
    } else {
        std::mt19937_64 rng(model.ensemble_seed);
        std::normal_distribution<double> normal(0.0, model.inhomogeneity);
        out.resize(n);
        for (auto &m : out) m = {normal(rng), 1.0 / n};
    }
    return out;
}

namespace detail {

/// Unit vector obtained by tilting `a` by `tilt` towards azimuth `azimuth`
/// measured in a fixed frame (u, v) orthogonal to a.
inline Vec3 tilt_axis(const Vec3 &a, double tilt, double azimuth) {
    if (tilt == 0.0) return a;
    Vec3 u = a.cross(Vec3::UnitZ());
    if (u.norm() < 1e-9) u = a.cross(Vec3::UnitX());
    u.normalize();
    const Vec3 v = a.cross(u);
    const Vec3 out = std::cos(tilt) * a + std::sin(tilt) * (std::cos(azimuth) * u + std::sin(azimuth) * v);
    return out.normalized();
}

}  // namespace detail

/// Field actually delivered for a requested dc pulse in one ensemble member.
inline PulseSegment apply_pulse_error(const PulseSegment &seg, const ErrorModel &model, const EnsembleMember &member) {
    if (!seg.is_pulse()) throw std::invalid_argument("apply_pulse_error expects a dc_pulse segment");
    PulseSegment out = seg;
    if (model.unitary_enabled) {
        out.amplitude_t *= 1.0 + model.amplitude_miscalibration;
        out.axis = detail::tilt_axis(seg.axis, model.misalignment_tilt, model.misalignment_azimuth);
    }
    if (model.incoherent_enabled) out.amplitude_t *= 1.0 + member.delta;
    return out;
}

inline PulseSegment apply_pulse_error(const PulseSegment &seg, const ErrorModel &model, std::size_t ensemble_member) {
    const auto members = ensemble_members(model);
    if (ensemble_member >= members.size()) throw std::out_of_range("ensemble member index");
    return apply_pulse_error(seg, model, members[ensemble_member]);
}

/// Relaxation for a time t, applied in the coupled basis {T+1, T0, T-1, S0}.
///
/// Every coherence is multiplied by exp(-t/T2). With singlet relaxation on, the
/// populations follow singlet<->triplet exchange at rate k = 1/(4 T1) per
/// channel, so the singlet excess over the triplet mean decays as exp(-t/T1);
/// coherences then pick up the matching exp(-(G_j + G_k) t / 2) factors
/// (G_S = 3k, G_T = k), which keeps the map a Lindblad semigroup.
inline Operator decohere(const Operator &rho, double t, const ErrorModel &model) {
    if (!(t >= 0)) throw std::invalid_argument("decohere: t must be >= 0");
    if (!model.decoherence_enabled || t == 0.0) return rho;
    const Basis original = rho.basis();
    Matrix4 c = rho.in_basis(Basis::coupled).matrix();

    const double coh = std::exp(-t / model.t2_s);
    std::array<double, 4> out_rate{0, 0, 0, 0};
    if (model.singlet_relaxation_enabled) {
        const double k = 1.0 / (4.0 * model.t1_singlet_s);
        out_rate = {k, k, k, 3 * k};
        const double ps = c(3, 3).real();
        const double mean_t = (c(0, 0).real() + c(1, 1).real() + c(2, 2).real()) / 3.0;
        const double total = ps + 3 * mean_t;
        const double excess = (ps - mean_t) * std::exp(-t / model.t1_singlet_s);
        const double new_mean_t = (total - excess) / 4.0;
        const double within = std::exp(-k * t);
        for (int i = 0; i < 3; ++i) c(i, i) = new_mean_t + (c(i, i).real() - mean_t) * within;
        c(3, 3) = (total + 3 * excess) / 4.0;
    }
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (i != j) c(i, j) *= coh * std::exp(-0.5 * (out_rate[i] + out_rate[j]) * t);

    Operator out(c, Basis::coupled, rho.is_hermitian() ? OperatorKind::hermitian : OperatorKind::general);
    return out.in_basis(original);
}

/// rho -> (1 - 2 eps) rho + 2 eps Tr_spin(rho) (x) 1/2 on the chosen spin.
/// A Clifford followed by this channel has average gate infidelity eps.
inline Operator depolarize_spin(const Operator &rho, Spin spin, double eps) {
    if (eps == 0.0) return rho;
    const Matrix4 m = rho.in_basis(Basis::computational).matrix();
    Matrix4 twirled = Matrix4::Zero();
    for (int a = 0; a <= 3; ++a) {
        const Matrix4 p = embed(spin, detail::pauli(a)).matrix();
        twirled += p * m * p;
    }
    twirled *= 0.25;
    const Matrix4 out = (1 - 2 * eps) * m + 2 * eps * twirled;
    return Operator::hermitian(0.5 * (out + out.adjoint())).in_basis(rho.basis());
}

/// Weighted mean over ensemble members.
template <typename T>
T ensemble_average(std::span<const T> results, std::span<const double> weights) {
    if (results.empty()) throw std::invalid_argument("ensemble_average: empty ensemble");
    if (results.size() != weights.size()) throw std::invalid_argument("ensemble_average: weight count mismatch");
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    T acc = (weights[0] / total) * results[0];
    for (std::size_t i = 1; i < results.size(); ++i) acc = acc + (weights[i] / total) * results[i];
    return acc;
}

inline Operator ensemble_average(std::span<const Operator> results, std::span<const double> weights) {
    if (results.empty()) throw std::invalid_argument("ensemble_average: empty ensemble");
    if (results.size() != weights.size()) throw std::invalid_argument("ensemble_average: weight count mismatch");
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    Matrix4 acc = Matrix4::Zero();
    for (std::size_t i = 0; i < results.size(); ++i) acc += (weights[i] / total) * results[i].matrix();
    const bool herm = std::all_of(results.begin(), results.end(), [](const Operator &o) { return o.is_hermitian(); });
    if (herm) return Operator::hermitian(0.5 * (acc + acc.adjoint()), results[0].basis());
    return Operator(acc, results[0].basis());
}

/// Process fidelity of the single-spin channel seen by `spin` when the other
/// spin starts maximally mixed: sum_jk |Tr(target^dagger K_jk)|^2 / 4 with
/// Kraus operators K_jk = <j|U|k>_other / sqrt(2). For a product U = A (x) B
/// this is |Tr(target^dagger B)/2|^2 regardless of A.
inline double spin_process_fidelity(const Operator &u, const Matrix2 &target, Spin spin) {
    const Matrix4 m = u.in_basis(Basis::computational).matrix();
    double f = 0.0;
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
            Matrix2 kraus;
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b)
                    kraus(a, b) = spin == Spin::S ? m(2 * j + a, 2 * k + b) : m(2 * a + j, 2 * b + k);
            f += std::norm((target.adjoint() * kraus).trace()) / 2.0;
        }
    return f / 4.0;
}

struct ExecutionOptions {
    bool include_j_during_pulses = true;

    static ExecutionOptions compiler_verification() { return {false}; }
    static ExecutionOptions experiment() { return {true}; }
};

/// Runs pulse schedules on density operators under an error model.
///
/// Each ensemble member sees the same field offset for the whole protocol, so
/// a protocol must be executed member by member and averaged at the end.
class Executor {
   public:
    Executor(SpinSystem sys, ErrorModel model = ErrorModel::ideal(), ExecutionOptions opts = {})
        : sys_(sys), model_(std::move(model)), opts_(opts), members_(ensemble_members(model_)) {
        sys_.validate();
        model_.validate();
    }

    /// Ideal reference: no errors, no J during pulses.
    static Executor ideal(const SpinSystem &sys) {
        return Executor(sys, ErrorModel::ideal(), ExecutionOptions::compiler_verification());
    }

    const SpinSystem &system() const { return sys_; }
    const ErrorModel &model() const { return model_; }
    const ExecutionOptions &options() const { return opts_; }
    const std::vector<EnsembleMember> &members() const { return members_; }

    /// Propagator of the member's schedule when it is unitary (no relaxation
    /// inside it); otherwise throws.
    Operator member_propagator(const PulseSchedule &sched, std::size_t member) const {
        const auto &mem = members_.at(member);
        Operator u = Operator::identity();
        for (const auto &seg : sched.segments) {
            if (relaxes_during(seg)) throw std::logic_error("schedule is not unitary under this error model");
            u = segment_unitary(seg, mem) * u;
        }
        return u;
    }

    bool is_unitary(const PulseSchedule &sched) const {
        return std::none_of(sched.segments.begin(), sched.segments.end(),
                            [&](const PulseSegment &s) { return relaxes_during(s); });
    }

    /// Runs one member through the schedule.
    Operator run_member(const PulseSchedule &sched, const Operator &rho, std::size_t member) const {
        const auto &mem = members_.at(member);
        Operator out = rho;
        for (const auto &seg : sched.segments) {
            out = evolve(out, segment_unitary(seg, mem));
            if (relaxes_during(seg)) out = decohere(out, seg.duration_s, model_);
        }
        return out;
    }

    /// Average of a per-member protocol result over the ensemble.
    template <typename Fn>
    auto run_protocol(Fn &&per_member) const {
        using R = std::decay_t<decltype(per_member(std::size_t{0}))>;
        std::vector<R> results;
        std::vector<double> weights;
        results.reserve(members_.size());
        for (std::size_t m = 0; m < members_.size(); ++m) {
            results.push_back(per_member(m));
            weights.push_back(members_[m].weight);
        }
        return ensemble_average(std::span<const R>(results), std::span<const double>(weights));
    }

    /// Ensemble-averaged output state.
    Operator run(const PulseSchedule &sched, const Operator &rho) const {
        return run_protocol([&](std::size_t m) { return run_member(sched, rho, m); });
    }

   private:
    bool relaxes_during(const PulseSegment &seg) const {
        if (!model_.decoherence_enabled || seg.duration_s == 0.0) return false;
        return !seg.is_pulse() || model_.decohere_during_pulses;
    }

    Operator segment_unitary(const PulseSegment &seg, const EnsembleMember &mem) const {
        if (!seg.is_pulse()) return segment_propagator(sys_, seg, opts_.include_j_during_pulses);
        return segment_propagator(sys_, apply_pulse_error(seg, model_, mem), opts_.include_j_during_pulses);
    }

    SpinSystem sys_;
    ErrorModel model_;
    ExecutionOptions opts_;
    std::vector<EnsembleMember> members_;
};

// JSON config: every field optional, missing ones keep the defaults above.

inline void to_json(nlohmann::json &j, const ErrorModel &m) {
    j = nlohmann::json{{"unitary_enabled", m.unitary_enabled},
                       {"amplitude_miscalibration", m.amplitude_miscalibration},
                       {"misalignment_tilt", m.misalignment_tilt},
                       {"misalignment_azimuth", m.misalignment_azimuth},
                       {"incoherent_enabled", m.incoherent_enabled},
                       {"inhomogeneity", m.inhomogeneity},
                       {"ensemble_size", m.ensemble_size},
                       {"sampling", m.sampling == EnsembleSampling::gauss_hermite ? "gauss_hermite" : "monte_carlo"},
                       {"ensemble_seed", m.ensemble_seed},
                       {"decoherence_enabled", m.decoherence_enabled},
                       {"t2_s", m.t2_s},
                       {"singlet_relaxation_enabled", m.singlet_relaxation_enabled},
                       {"t1_singlet_s", m.t1_singlet_s},
                       {"decohere_during_pulses", m.decohere_during_pulses},
                       {"clifford_depolarizing", m.clifford_depolarizing}};
}

inline void from_json(const nlohmann::json &j, ErrorModel &m) {
    ErrorModel d = m;
    d.unitary_enabled = j.value("unitary_enabled", d.unitary_enabled);
    d.amplitude_miscalibration = j.value("amplitude_miscalibration", d.amplitude_miscalibration);
    d.misalignment_tilt = j.value("misalignment_tilt", d.misalignment_tilt);
    d.misalignment_azimuth = j.value("misalignment_azimuth", d.misalignment_azimuth);
    d.incoherent_enabled = j.value("incoherent_enabled", d.incoherent_enabled);
    d.inhomogeneity = j.value("inhomogeneity", d.inhomogeneity);
    d.ensemble_size = j.value("ensemble_size", d.ensemble_size);
    if (j.contains("sampling")) {
        const auto s = j.at("sampling").get<std::string>();
        if (s == "gauss_hermite")
            d.sampling = EnsembleSampling::gauss_hermite;
        else if (s == "monte_carlo")
            d.sampling = EnsembleSampling::monte_carlo;
        else
            throw std::invalid_argument("unknown ensemble sampling '" + s + "'");
    }
    d.ensemble_seed = j.value("ensemble_seed", d.ensemble_seed);
    d.decoherence_enabled = j.value("decoherence_enabled", d.decoherence_enabled);
    d.t2_s = j.value("t2_s", d.t2_s);
    d.singlet_relaxation_enabled = j.value("singlet_relaxation_enabled", d.singlet_relaxation_enabled);
    d.t1_singlet_s = j.value("t1_singlet_s", d.t1_singlet_s);
    d.decohere_during_pulses = j.value("decohere_during_pulses", d.decohere_during_pulses);
    d.clifford_depolarizing = j.value("clifford_depolarizing", d.clifford_depolarizing);
    d.validate();
    m = d;
}

}  // namespace zfnmr
