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

/// Temporal-averaging readout and Pauli-basis state tomography.
///
/// The detector only reports the scalar M = gamma_I <I_z> + gamma_S <S_z>.
/// Four readout operations {none, pi_S^z, pi_I^x, pi_S^z then pi_I^x} act on
/// that scalar as
///
///     readout      I_z   S_z
///     none          +     +
///     pi_S^z        +     +
///     pi_I^x        -     +
///     pi_S^z-pi_I^x -     +
///
/// so summing the four signals with weights (+,+,+,+) / (4 gamma_S) isolates
/// <S_z> and (+,+,-,-) / (4 gamma_I) isolates <I_z>. The pi_S^z readouts add
/// nothing for ideal gates; they average out residual transverse S terms left
/// by imperfect pi_I^x pulses.

#include "zfnmr/stateprep.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <ostream>
#include <random>

namespace zfnmr {

/// rho = (1/4) sum_i c_i P_i with unit Pauli products P_i, c_i = Tr[rho P_i].
struct PauliVector {
    std::array<double, 16> coefficients{};

    static PauliVector from_operator(const Operator &rho) { return {pauli_coefficients(rho)}; }
    Operator to_operator() const { return pauli_synthesis(coefficients); }

    static const std::array<std::string, 16> &labels() { return pauli_labels(); }

    double operator[](std::size_t i) const { return coefficients[i]; }
    double &operator[](std::size_t i) { return coefficients[i]; }

    /// Euclidean norm of the 15 non-identity coefficients.
    double deviation_norm() const {
        double s = 0;
        for (std::size_t i = 1; i < 16; ++i) s += coefficients[i] * coefficients[i];
        return std::sqrt(s);
    }

    /// Index of a label such as "IzSz"; throws for unknown labels.
    static std::size_t index_of(std::string_view label) {
        const auto &l = labels();
        for (std::size_t i = 0; i < l.size(); ++i)
            if (l[i] == label) return i;
        throw std::invalid_argument("unknown Pauli label '" + std::string(label) + "'");
    }
};

inline double measure_observable(const Operator &rho, const Operator &observable) {
    return (rho.in_basis(Basis::computational).matrix() * observable.in_basis(Basis::computational).matrix())
        .trace()
        .real();
}

/// Normalized overlap of the non-identity parts, in [-1, 1].
inline double state_fidelity(const PauliVector &a, const PauliVector &b) {
    const double na = a.deviation_norm(), nb = b.deviation_norm();
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("state fidelity needs non-zero deviations");
    double dot = 0;
    for (std::size_t i = 1; i < 16; ++i) dot += a[i] * b[i];
    return dot / (na * nb);
}

enum class ReadoutOp { none, pi_sz, pi_ix, pi_sz_pi_ix };

inline constexpr std::array<ReadoutOp, 4> kReadoutOps = {ReadoutOp::none, ReadoutOp::pi_sz, ReadoutOp::pi_ix,
                                                         ReadoutOp::pi_sz_pi_ix};

/// Weights applied to the four readout signals (in kReadoutOps order).
inline constexpr std::array<double, 4> kSzReadoutSigns = {+1, +1, +1, +1};
inline constexpr std::array<double, 4> kIzReadoutSigns = {+1, +1, -1, -1};

inline std::string_view to_string(ReadoutOp op) {
    switch (op) {
        case ReadoutOp::none: return "NoOp";
        case ReadoutOp::pi_sz: return "piSz";
        case ReadoutOp::pi_ix: return "piIx";
        case ReadoutOp::pi_sz_pi_ix: return "piSz-piIx";
    }
    return "?";
}

inline PulseSchedule readout_schedule(const SpinSystem &sys, ReadoutOp op, const CompilerConfig &cfg = {}) {
    PulseSchedule s;
    s.label = std::string(to_string(op));
    if (op == ReadoutOp::pi_sz || op == ReadoutOp::pi_sz_pi_ix)
        s.append(compile_selective_rotation(sys, Spin::S, Axis::z, std::numbers::pi, cfg));
    if (op == ReadoutOp::pi_ix || op == ReadoutOp::pi_sz_pi_ix)
        s.append(compile_selective_rotation(sys, Spin::I, Axis::x, std::numbers::pi, cfg));
    return s;
}

/// Additive white Gaussian noise on every detector reading.
class DetectorNoise {
   public:
    DetectorNoise(double sigma, std::uint64_t seed) : sigma_(sigma), rng_(seed) {
        if (!(sigma >= 0)) throw std::invalid_argument("detector noise sigma must be >= 0");
    }
    double operator()() { return sigma_ > 0 ? std::normal_distribution<double>(0.0, sigma_)(rng_) : 0.0; }
    double sigma() const { return sigma_; }

   private:
    double sigma_;
    std::mt19937_64 rng_;
};

/// The four detector readings after each readout operation, ensemble-averaged.
inline std::array<double, 4> readout_signals(const Executor &exec, const Operator &rho, DetectorNoise *noise = nullptr,
                                             const CompilerConfig &cfg = {}) {
    std::array<double, 4> out{};
    for (std::size_t k = 0; k < 4; ++k) {
        const Operator after = exec.run(readout_schedule(exec.system(), kReadoutOps[k], cfg), rho);
        out[k] = magnetization_z(exec.system(), after) + (noise ? (*noise)() : 0.0);
    }
    return out;
}

struct SpinZEstimate {
    double iz = 0.0;
    double sz = 0.0;
};

inline SpinZEstimate combine_readouts(const SpinSystem &sys, const std::array<double, 4> &signals) {
    SpinZEstimate e;
    for (std::size_t k = 0; k < 4; ++k) {
        e.iz += kIzReadoutSigns[k] * signals[k];
        e.sz += kSzReadoutSigns[k] * signals[k];
    }
    e.iz /= 4.0 * sys.gamma_i;
    e.sz /= 4.0 * sys.gamma_s;
    return e;
}

/// Temporal-averaging estimate of <S_z>.
inline double temporal_average_Sz(const Executor &exec, const Operator &rho, DetectorNoise *noise = nullptr,
                                  const CompilerConfig &cfg = {}) {
    return combine_readouts(exec.system(), readout_signals(exec, rho, noise, cfg)).sz;
}

inline double temporal_average_Sz(const SpinSystem &sys, const Operator &rho) {
    return temporal_average_Sz(Executor::ideal(sys), rho);
}

/// One element of a tomography pre-rotation.
struct TomoStep {
    enum class Kind { rotation, uzz } kind = Kind::rotation;
    Spin spin = Spin::I;
    Axis axis = Axis::x;
    double angle = 0.0;

    static TomoStep rot(Spin s, Axis a, double angle) { return {Kind::rotation, s, a, angle}; }
    static TomoStep zz() { return {Kind::uzz, Spin::I, Axis::z, std::numbers::pi}; }
};

/// A pre-rotation followed by the I_z and S_z temporal-averaging readouts.
struct TomoExperiment {
    std::string target;  ///< Pauli label this experiment was chosen for
    std::vector<TomoStep> steps;
};

/// Pre-rotation table. Measuring I_z after rotation R reads R^dagger I_z R, so
/// each entry maps its target Pauli term onto I_z (or S_z):
///   * I_z, S_z: no rotation.
///   * I_x / I_y: pi/2 about y / x on I; S_x / S_y likewise on S.
///   * I_a S_b: local pi/2 rotations taking I_y -> I_a and S_z -> S_b, then
///     U_zz(pi) (which turns 2 I_y S_z into I_x), then pi/2 about y on I.
/// Where two equally short choices exist the x rotation comes first.
inline const std::vector<TomoExperiment> &tomography_experiments() {
    static const std::vector<TomoExperiment> table = [] {
        constexpr double h = std::numbers::pi / 2;
        std::vector<TomoExperiment> t;
        t.push_back({"Iz Sz", {}});
        t.push_back({"Ix", {TomoStep::rot(Spin::I, Axis::y, h)}});
        t.push_back({"Iy", {TomoStep::rot(Spin::I, Axis::x, h)}});
        t.push_back({"Sx", {TomoStep::rot(Spin::S, Axis::y, h)}});
        t.push_back({"Sy", {TomoStep::rot(Spin::S, Axis::x, h)}});
        const char names[3] = {'x', 'y', 'z'};
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                TomoExperiment e;
                e.target = std::string("I") + names[a] + "S" + names[b];
                if (a == 0) e.steps.push_back(TomoStep::rot(Spin::I, Axis::z, h));
                if (a == 2) e.steps.push_back(TomoStep::rot(Spin::I, Axis::x, h));
                if (b == 0) e.steps.push_back(TomoStep::rot(Spin::S, Axis::y, h));
                if (b == 1) e.steps.push_back(TomoStep::rot(Spin::S, Axis::x, h));
                e.steps.push_back(TomoStep::zz());
                e.steps.push_back(TomoStep::rot(Spin::I, Axis::y, h));
                t.push_back(std::move(e));
            }
        return t;
    }();
    return table;
}

inline PulseSchedule compile_steps(const SpinSystem &sys, const std::vector<TomoStep> &steps,
                                   const CompilerConfig &cfg = {}) {
    PulseSchedule s;
    s.label = "tomo";
    for (const auto &st : steps) {
        if (st.kind == TomoStep::Kind::uzz)
            s.append(compile_uzz(sys, st.angle, cfg));
        else
            s.append(compile_selective_rotation(sys, st.spin, st.axis, st.angle, cfg));
    }
    return s;
}

inline Operator ideal_steps_unitary(const std::vector<TomoStep> &steps) {
    Operator u = Operator::identity();
    for (const auto &st : steps)
        u = (st.kind == TomoStep::Kind::uzz ? ideal_uzz(st.angle) : ideal_rotation(st.spin, st.axis, st.angle)) * u;
    return u;
}

/// Rows of the tomography design matrix: for each experiment the Pauli
/// coefficients of R^dagger I_z R and R^dagger S_z R (ideal rotations), using
/// <O> = (1/4) sum_j c_j Tr[P_j O]. The identity term drops out since O is
/// traceless.
inline Eigen::MatrixXd tomography_design_matrix() {
    const auto &exps = tomography_experiments();
    const auto &basis = pauli_product_basis();
    Eigen::MatrixXd a(2 * exps.size(), 15);
    for (std::size_t e = 0; e < exps.size(); ++e) {
        const Operator r = ideal_steps_unitary(exps[e].steps);
        for (int which = 0; which < 2; ++which) {
            const Operator o = spin_operator(which == 0 ? Spin::I : Spin::S, Axis::z);
            const Matrix4 pulled = r.matrix().adjoint() * o.matrix() * r.matrix();
            for (int j = 1; j < 16; ++j)
                a(2 * e + which, j - 1) = 0.25 * (basis[j].matrix() * pulled).trace().real();
        }
    }
    return a;
}

/// Replayable state source; each call must produce the same preparation.
using Preparation = std::function<Operator()>;

struct TomographyResult {
    PauliVector state;
    double condition_number = 0.0;
    Eigen::VectorXd measurements;  ///< <I_z>, <S_z> per experiment
};

/// Full deviation tomography: every experiment re-runs the preparation, the
/// pre-rotation and the four readouts; the 15 coefficients are the least
/// squares solution of the stacked <I_z>/<S_z> estimates.
inline TomographyResult state_tomography_detailed(const Executor &exec, const Preparation &prepare,
                                                  DetectorNoise *noise = nullptr, const CompilerConfig &cfg = {}) {
    const auto &exps = tomography_experiments();
    const Eigen::MatrixXd a = tomography_design_matrix();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto &sv = svd.singularValues();
    if (sv[sv.size() - 1] < 1e-10 * sv[0]) throw std::runtime_error("tomography design matrix is singular");

    Eigen::VectorXd y(2 * exps.size());
    for (std::size_t e = 0; e < exps.size(); ++e) {
        const PulseSchedule pre = compile_steps(exec.system(), exps[e].steps, cfg);
        std::array<double, 4> signals{};
        for (std::size_t k = 0; k < 4; ++k) {
            PulseSchedule full = pre;
            full.append(readout_schedule(exec.system(), kReadoutOps[k], cfg));
            const Operator after = exec.run(full, prepare());
            signals[k] = magnetization_z(exec.system(), after) + (noise ? (*noise)() : 0.0);
        }
        const SpinZEstimate est = combine_readouts(exec.system(), signals);
        y[2 * e] = est.iz;
        y[2 * e + 1] = est.sz;
    }
    const Eigen::VectorXd c = svd.solve(y);

    TomographyResult out;
    out.state.coefficients[0] = 1.0;
    for (int j = 0; j < 15; ++j) out.state.coefficients[j + 1] = c[j];
    out.condition_number = sv[0] / sv[sv.size() - 1];
    out.measurements = y;
    return out;
}

inline PauliVector state_tomography(const Executor &exec, const Preparation &prepare, DetectorNoise *noise = nullptr,
                                    const CompilerConfig &cfg = {}) {
    return state_tomography_detailed(exec, prepare, noise, cfg).state;
}

/// Adds independent Gaussian noise of standard deviation
/// relative_sigma * deviation_norm() to each of the 15 deviation coefficients.
inline PauliVector perturb_deviation(const PauliVector &v, double relative_sigma, std::mt19937_64 &rng) {
    if (!(relative_sigma >= 0)) throw std::invalid_argument("noise level must be non-negative");
    PauliVector out = v;
    if (relative_sigma == 0.0) return out;
    const double scale = relative_sigma * v.deviation_norm();
    std::normal_distribution<double> g(0.0, scale);
    for (std::size_t i = 1; i < 16; ++i) out[i] += g(rng);
    return out;
}

// Export: JSON {labels, coefficients} and CSV "label,coefficient".

inline void to_json(nlohmann::json &j, const PauliVector &v) {
    j = nlohmann::json{{"labels", PauliVector::labels()}, {"coefficients", v.coefficients}};
}

inline void from_json(const nlohmann::json &j, PauliVector &v) {
    const auto labels = j.at("labels").get<std::vector<std::string>>();
    const auto coeffs = j.at("coefficients").get<std::vector<double>>();
    if (labels.size() != 16 || coeffs.size() != 16) throw std::invalid_argument("PauliVector needs 16 entries");
    for (std::size_t i = 0; i < 16; ++i) v[PauliVector::index_of(labels[i])] = coeffs[i];
}

inline void write_csv(std::ostream &os, const PauliVector &v) {
    os << "label,coefficient\n";
    os.precision(17);
    for (std::size_t i = 0; i < 16; ++i) os << PauliVector::labels()[i] << ',' << v[i] << '\n';
}

}  // namespace zfnmr
