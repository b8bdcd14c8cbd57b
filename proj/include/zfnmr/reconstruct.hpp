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

/// Gate reconstruction: find the unitary that best maps measured input
/// deviation matrices onto measured output deviation matrices.

#include "zfnmr/benchmarking.hpp"

#include <json.hpp>

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace zfnmr {

/// Tomographic estimates before and after the gate.
struct TomographyPair {
    PauliVector input;
    PauliVector output;
    double weight = 1.0;
};

/// Traceless part of the state, scaled to unit Frobenius norm.
inline Matrix4 normalized_deviation(const PauliVector &v) {
    PauliVector d = v;
    d[0] = 0.0;
    Matrix4 m = d.to_operator().matrix();
    const double n = m.norm();
    if (n == 0.0) throw std::invalid_argument("state has no deviation from the identity");
    return m / n;
}

// Minimizer.

struct BfgsOptions {
    int max_iterations = 500;
    double gradient_tolerance = 1e-9;
    double relative_tolerance = 1e-15;
    double fd_step = 1e-6;
};

struct BfgsResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Central-difference gradient.
inline Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd &)> &f, const Eigen::VectorXd &x,
                                        double h) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd y = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double step = h * std::max(1.0, std::abs(x[i]));
        y[i] = x[i] + step;
        const double fp = f(y);
        y[i] = x[i] - step;
        const double fm = f(y);
        y[i] = x[i];
        g[i] = (fp - fm) / (2 * step);
    }
    return g;
}

/// BFGS with Armijo backtracking and finite-difference gradients.
inline BfgsResult minimize_bfgs(const std::function<double(const Eigen::VectorXd &)> &f, Eigen::VectorXd x,
                                const BfgsOptions &opt = {}) {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
    double fx = f(x);
    Eigen::VectorXd g = numeric_gradient(f, x, opt.fd_step);
    BfgsResult r;
    for (int it = 0; it < opt.max_iterations; ++it) {
        r.iterations = it + 1;
        if (g.norm() <= opt.gradient_tolerance) {
            r.converged = true;
            break;
        }
        Eigen::VectorXd dir = -hinv * g;
        if (dir.dot(g) >= 0) {
            hinv.setIdentity();
            dir = -g;
        }
        double t = 1.0;
        double ft = f(x + t * dir);
        const double slope = g.dot(dir);
        while (ft > fx + 1e-4 * t * slope && t > 1e-14) {
            t *= 0.5;
            ft = f(x + t * dir);
        }
        if (ft > fx) {
            // No descent along a finite-difference direction: we are at noise level.
            r.converged = g.norm() <= 1e3 * opt.gradient_tolerance || fx <= 1e-20;
            break;
        }
        const Eigen::VectorXd s = t * dir;
        x += s;
        const Eigen::VectorXd g_new = numeric_gradient(f, x, opt.fd_step);
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-300) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(n, n);
            hinv = (ident - rho * s * y.transpose()) * hinv * (ident - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        const double df = fx - ft;
        fx = ft;
        g = g_new;
        if (df <= opt.relative_tolerance * std::max(std::abs(fx), 1e-300) || fx <= 1e-24) {
            r.converged = true;
            break;
        }
    }
    r.x = x;
    r.value = fx;
    return r;
}

// Parametrization.

/// U = exp(-i H), H = sum_k x_k P_k / 2 over the 16 Pauli products.
inline Matrix4 unitary_from_parameters(const Eigen::VectorXd &x) {
    if (x.size() != 16) throw std::invalid_argument("unitary parametrization needs 16 values");
    static const auto basis = pauli_product_basis();
    Matrix4 h = Matrix4::Zero();
    for (int k = 0; k < 16; ++k) h += (0.5 * x[k]) * basis[static_cast<std::size_t>(k)].matrix();
    Eigen::SelfAdjointEigenSolver<Matrix4> es(0.5 * (h + h.adjoint()));
    const Eigen::Vector4cd phases = (-Complex(0, 1) * es.eigenvalues().cast<Complex>()).array().exp();
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

enum class ReconstructionNorm { frobenius_squared, l1 };

struct ReconstructOptions {
    int restarts = 20;
    std::uint64_t seed = 1;
    ReconstructionNorm norm = ReconstructionNorm::frobenius_squared;
    double l1_smoothing = 1e-9;
    std::vector<Matrix4> initial_guesses;  ///< tried in addition to the random restarts
    double gauge_tolerance = 0.25;         ///< relative size of an input coherence that links two levels
    BfgsOptions bfgs{};
    int threads = 1;
};

/// sum_k || U D_k U^dagger - D'_k || under the chosen norm.
inline double reconstruction_objective(const Matrix4 &u, const std::vector<Matrix4> &in, const std::vector<Matrix4> &out,
                                       ReconstructionNorm norm = ReconstructionNorm::frobenius_squared,
                                       double l1_smoothing = 1e-9) {
    double total = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k) {
        const Matrix4 r = u * in[k] * u.adjoint() - out[k];
        if (norm == ReconstructionNorm::frobenius_squared) {
            total += r.squaredNorm();
        } else {
            for (Eigen::Index i = 0; i < 16; ++i)
                total += std::sqrt(std::norm(r.data()[i]) + l1_smoothing * l1_smoothing) - l1_smoothing;
        }
    }
    return total;
}

/// Principal Hermitian logarithm parameters of a unitary: x with
/// unitary_from_parameters(x) == u.
inline Eigen::VectorXd parameters_from_unitary(const Matrix4 &u) {
    // The Schur form of a normal matrix is diagonal with a unitary basis.
    Eigen::ComplexSchur<Matrix4> schur(u);
    const Matrix4 &q = schur.matrixU();
    Eigen::Vector4cd theta;
    for (int i = 0; i < 4; ++i) theta[i] = -std::arg(schur.matrixT()(i, i));
    const Matrix4 h = q * theta.asDiagonal() * q.adjoint();
    const auto basis = pauli_product_basis();
    Eigen::VectorXd x(16);
    for (int k = 0; k < 16; ++k) x[k] = 0.5 * (basis[static_cast<std::size_t>(k)].matrix() * h).trace().real();
    return x;
}

// Gauge.

/// Column whose entry is pinned real and non-negative by the gauge: columns
/// 1, 2, 3, 4 pin entries (1,1), (2,2), (4,3), (3,4).
inline constexpr std::array<int, 4> kGaugeRow = {0, 1, 3, 2};

/// Levels linked by a coherence in any input deviation share one gauge phase.
inline std::vector<std::vector<int>> gauge_groups(const std::vector<Matrix4> &inputs, double rel_tol) {
    std::array<int, 4> parent = {0, 1, 2, 3};
    std::function<int(int)> root = [&](int i) { return parent[i] == i ? i : parent[i] = root(parent[i]); };
    for (const auto &d : inputs) {
        const double scale = d.cwiseAbs().maxCoeff();
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j)
                if (std::abs(d(i, j)) > rel_tol * scale) parent[root(i)] = root(j);
    }
    std::vector<std::vector<int>> groups;
    std::array<int, 4> slot = {-1, -1, -1, -1};
    for (int i = 0; i < 4; ++i) {
        const int r = root(i);
        if (slot[r] < 0) {
            slot[r] = static_cast<int>(groups.size());
            groups.emplace_back();
        }
        groups[static_cast<std::size_t>(slot[r])].push_back(i);
    }
    return groups;
}

/// Right-multiplies U by one phase per group so that the pinned entries of
/// the group sum to a non-negative real. Levels sharing a group share a phase,
/// so their pinned entries can only be made real together when the data
/// allow it; the largest remaining |arg| is returned.
inline double fix_gauge(Matrix4 &u, const std::vector<std::vector<int>> &groups) {
    for (const auto &g : groups) {
        Complex sum = 0.0;
        for (int c : g) sum += u(kGaugeRow[c], c);
        if (std::abs(sum) == 0.0) continue;
        const Complex phase = std::conj(sum) / std::abs(sum);
        for (int c : g) u.col(c) *= phase;
    }
    double residual = 0.0;
    for (int c = 0; c < 4; ++c) {
        const Complex z = u(kGaugeRow[c], c);
        if (std::abs(z) > 0) residual = std::max(residual, std::abs(std::arg(z)));
    }
    return residual;
}

/// Sign constraints: every pinned entry has a non-negative real part.
inline bool gauge_constraints_hold(const Matrix4 &u, double tol = 1e-12) {
    for (int c = 0; c < 4; ++c)
        if (u(kGaugeRow[c], c).real() < -tol) return false;
    return true;
}

struct GateFidelity {
    double transpose_convention = 0.0;  ///< Re Tr(U_ideal^T U) / 4 (plain transpose)
    double phase_invariant = 0.0;   ///< |Tr(U_ideal^dagger U)| / 4
};

inline GateFidelity gate_fidelity(const Matrix4 &u, const Matrix4 &ideal) {
    return {((ideal.transpose() * u).trace() / 4.0).real(), std::abs((ideal.adjoint() * u).trace()) / 4.0};
}

/// Complex dimension of the set of matrices commuting with every input. Any
/// unitary in it maps the inputs to themselves, so U is determined only up to
/// right multiplication by it.
inline int commutant_dimension(const std::vector<Matrix4> &inputs, double tol = 1e-9) {
    Eigen::MatrixXcd a(16 * static_cast<Eigen::Index>(inputs.size()), 16);
    for (std::size_t k = 0; k < inputs.size(); ++k)
        for (int e = 0; e < 16; ++e) {
            Matrix4 x = Matrix4::Zero();
            x(e / 4, e % 4) = 1.0;
            const Matrix4 c = inputs[k] * x - x * inputs[k];
            a.block(16 * static_cast<Eigen::Index>(k), e, 16, 1) = Eigen::Map<const Eigen::VectorXcd>(c.data(), 16);
        }
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a);
    const auto &sv = svd.singularValues();
    int zero = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] <= tol * std::max(1.0, sv[0])) ++zero;
    return zero;
}

struct Reconstruction {
    Matrix4 unitary = Matrix4::Identity();
    double objective = 0.0;
    GateFidelity fidelity{};
    int restarts = 0;
    bool converged = false;
    bool constraints_satisfied = false;
    double constraint_phase_residual = 0.0;  ///< max |arg| of the pinned entries, rad
    std::vector<std::string> warnings;
};

/// Best unitary over random restarts plus the supplied initial guesses.
inline Reconstruction reconstruct_unitary(const std::vector<TomographyPair> &pairs, const Matrix4 &ideal,
                                          const ReconstructOptions &opt = {}) {
    if (pairs.size() < 2) throw std::invalid_argument("reconstruction needs at least two input/output pairs");
    if (opt.restarts < 0) throw std::invalid_argument("restarts must be non-negative");
    std::vector<Matrix4> in, out;
    for (const auto &p : pairs) {
        if (!(p.weight > 0)) throw std::invalid_argument("pair weights must be positive");
        // ||U (w D) U^dagger - w D'||^2 = w^2 ||...||^2; sqrt keeps the weight linear.
        const double w = opt.norm == ReconstructionNorm::frobenius_squared ? std::sqrt(p.weight) : p.weight;
        in.push_back(w * normalized_deviation(p.input));
        out.push_back(w * normalized_deviation(p.output));
    }
    const auto objective = [&](const Eigen::VectorXd &x) {
        return reconstruction_objective(unitary_from_parameters(x), in, out, opt.norm, opt.l1_smoothing);
    };

    std::vector<Eigen::VectorXd> starts;
    for (const auto &g : opt.initial_guesses) starts.push_back(parameters_from_unitary(g));
    for (int r = 0; r < opt.restarts; ++r) {
        std::mt19937_64 rng(derive_seed(opt.seed, static_cast<std::uint64_t>(r)));
        std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
        Eigen::VectorXd x(16);
        for (int k = 0; k < 16; ++k) x[k] = angle(rng);
        starts.push_back(x);
    }
    if (starts.empty()) throw std::invalid_argument("reconstruction has no starting points");

    std::vector<BfgsResult> results(starts.size());
    parallel_for(starts.size(), opt.threads, [&](std::size_t i) { results[i] = minimize_bfgs(objective, starts[i], opt.bfgs); });

    std::size_t best = 0;
    for (std::size_t i = 1; i < results.size(); ++i)
        if (results[i].value < results[best].value) best = i;

    Reconstruction rec;
    rec.unitary = unitary_from_parameters(results[best].x);
    rec.objective = results[best].value;
    rec.converged = results[best].converged;
    rec.restarts = static_cast<int>(starts.size());
    const auto groups = gauge_groups(in, opt.gauge_tolerance);
    rec.constraint_phase_residual = fix_gauge(rec.unitary, groups);
    rec.constraints_satisfied = gauge_constraints_hold(rec.unitary);
    rec.fidelity = gate_fidelity(rec.unitary, ideal);
    if (commutant_dimension(in) > static_cast<int>(groups.size()))
        rec.warnings.push_back("input states do not determine U up to column phases; solution is not unique");
    if (!rec.converged) rec.warnings.push_back("optimizer did not converge; reporting best point found");
    return rec;
}

inline nlohmann::json report_json(const Reconstruction &r) {
    nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
    for (int i = 0; i < 4; ++i) {
        nlohmann::json rr = nlohmann::json::array(), ii = nlohmann::json::array();
        for (int j = 0; j < 4; ++j) {
            rr.push_back(r.unitary(i, j).real());
            ii.push_back(r.unitary(i, j).imag());
        }
        re.push_back(rr);
        im.push_back(ii);
    }
    return nlohmann::json{{"U_real", re},
                          {"U_imag", im},
                          {"objective", r.objective},
                          {"fidelity_transpose_convention", r.fidelity.transpose_convention},
                          {"fidelity_phase_invariant", r.fidelity.phase_invariant},
                          {"restarts", r.restarts},
                          {"converged", r.converged},
                          {"constraints_satisfied", r.constraints_satisfied},
                          {"constraint_phase_residual", r.constraint_phase_residual},
                          {"warnings", r.warnings}};
}

}  // namespace zfnmr
