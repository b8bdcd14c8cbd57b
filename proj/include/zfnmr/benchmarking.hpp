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

/// Single-spin (13C) Clifford randomized benchmarking.

#include "zfnmr/parallel.hpp"
#include "zfnmr/tomography.hpp"

#include <json.hpp>

#include <optional>
#include <ostream>
#include <random>
#include <vector>

namespace zfnmr {

/// Thrown when an iterative fit or optimizer fails to converge.
class ConvergenceError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// exp(i sign (pi/2) S_axis).
struct QuarterTurn {
    int sign = +1;
    Axis axis = Axis::x;
};

/// Clifford element P * C_n ... C_1 on spin S, with P = exp(i p_sign pi V)
/// (V = identity when p_axis is empty) and a word of quarter turns C_k applied
/// first. Words of length one are the P*C products; the empty word and
/// two-turn words complete the group.
struct CliffordElement {
    int p_sign = +1;
    std::optional<Axis> p_axis;
    std::vector<QuarterTurn> c_word;
    Matrix2 unitary = Matrix2::Identity();

    Operator embedded() const { return Operator::unitary(embed(Spin::S, unitary).matrix()); }
};

namespace detail {

inline Matrix2 spin_half_rotation(Axis axis, double angle) {
    // exp(-i angle sigma/2)
    const Matrix2 s = pauli(static_cast<int>(axis) + 1);
    return std::cos(angle / 2) * Matrix2::Identity() - Complex(0, std::sin(angle / 2)) * s;
}

inline Matrix2 clifford_unitary(int p_sign, std::optional<Axis> p_axis, const std::vector<QuarterTurn> &word) {
    Matrix2 u = Matrix2::Identity();
    for (const auto &q : word) u = spin_half_rotation(q.axis, -q.sign * std::numbers::pi / 2) * u;
    if (p_axis) u = spin_half_rotation(*p_axis, -p_sign * std::numbers::pi) * u;
    return u;
}

inline bool same_up_to_phase(const Matrix2 &a, const Matrix2 &b, double tol = 1e-9) {
    return std::abs(std::abs((a.adjoint() * b).trace()) / 2.0 - 1.0) <= tol;
}

inline CliffordElement make_clifford(int p_sign, std::optional<Axis> p_axis, std::vector<QuarterTurn> word) {
    CliffordElement e{p_sign, p_axis, std::move(word), Matrix2::Identity()};
    e.unitary = clifford_unitary(e.p_sign, e.p_axis, e.c_word);
    return e;
}

}  // namespace detail

/// The 4 * 2 * 3 * 2 = 48 products exp(+-i pi V) exp(+-i pi/2 Q) with
/// V in {1, S_x, S_y, S_z} and Q in {S_x, S_y, S_z}. Only 12 of them are
/// distinct up to phase: they form the cosets of the axis transpositions and
/// miss the identity and the axis 3-cycles.
inline std::vector<CliffordElement> pc_products() {
    std::vector<CliffordElement> out;
    const std::array<std::optional<Axis>, 4> vs = {std::nullopt, Axis::x, Axis::y, Axis::z};
    for (int ps : {+1, -1})
        for (const auto &v : vs)
            for (int cs : {+1, -1})
                for (Axis q : {Axis::x, Axis::y, Axis::z}) out.push_back(detail::make_clifford(ps, v, {{cs, q}}));
    return out;
}

/// The 24 phase-distinct single-qubit Cliffords. Enumeration order: Paulis
/// (identity first), then the distinct P*C products, then P times two quarter
/// turns about different axes.
inline const std::vector<CliffordElement> &clifford_group() {
    static const std::vector<CliffordElement> group = [] {
        std::vector<CliffordElement> g;
        auto add = [&](CliffordElement e) {
            for (const auto &x : g)
                if (detail::same_up_to_phase(x.unitary, e.unitary)) return;
            g.push_back(std::move(e));
        };
        const std::array<std::optional<Axis>, 4> vs = {std::nullopt, Axis::x, Axis::y, Axis::z};
        for (const auto &v : vs) add(detail::make_clifford(+1, v, {}));
        for (auto &e : pc_products()) add(std::move(e));
        for (const auto &v : vs)
            for (Axis q1 : {Axis::x, Axis::y, Axis::z})
                for (Axis q2 : {Axis::x, Axis::y, Axis::z})
                    if (q1 != q2) add(detail::make_clifford(+1, v, {{+1, q1}, {+1, q2}}));
        if (g.size() != 24) throw std::logic_error("Clifford enumeration did not close");
        return g;
    }();
    return group;
}

/// Index of the group element equal to u up to phase.
inline std::size_t find_clifford(const Matrix2 &u) {
    const auto &g = clifford_group();
    for (std::size_t i = 0; i < g.size(); ++i)
        if (detail::same_up_to_phase(g[i].unitary, u)) return i;
    throw std::invalid_argument("matrix is not a single-qubit Clifford");
}

/// table[a][b] = index of g_a * g_b.
inline const std::array<std::array<std::uint8_t, 24>, 24> &clifford_product_table() {
    static const auto table = [] {
        std::array<std::array<std::uint8_t, 24>, 24> t{};
        const auto &g = clifford_group();
        for (std::size_t a = 0; a < 24; ++a)
            for (std::size_t b = 0; b < 24; ++b)
                t[a][b] = static_cast<std::uint8_t>(find_clifford(g[a].unitary * g[b].unitary));
        return t;
    }();
    return table;
}

inline std::size_t clifford_inverse(std::size_t a) {
    const auto &t = clifford_product_table();
    for (std::size_t b = 0; b < 24; ++b)
        if (t[b][a] == 0) return b;
    throw std::logic_error("Clifford without inverse");
}

/// Selective-S composite pulses realizing the element (quarter turns first).
inline PulseSchedule compile_clifford(const SpinSystem &sys, const CliffordElement &e, const CompilerConfig &cfg = {}) {
    PulseSchedule s;
    s.label = "clifford";
    for (const auto &q : e.c_word)
        s.append(compile_selective_rotation(sys, Spin::S, q.axis, -q.sign * std::numbers::pi / 2, cfg));
    if (e.p_axis) s.append(compile_selective_rotation(sys, Spin::S, *e.p_axis, -e.p_sign * std::numbers::pi, cfg));
    return s;
}

struct RBSequence {
    std::vector<std::size_t> elements;  ///< indices into clifford_group(), in application order
    std::size_t recovery = 0;
};

/// m uniform draws plus the recovery element that undoes their product.
inline RBSequence generate_rb_sequence(std::size_t m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, 23);
    const auto &t = clifford_product_table();
    RBSequence seq;
    seq.elements.reserve(m);
    std::size_t cumulative = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t g = pick(rng);
        seq.elements.push_back(g);
        cumulative = t[g][cumulative];
    }
    seq.recovery = clifford_inverse(cumulative);
    return seq;
}

/// Amplitude miscalibration that puts the simulated physical-ratio RB
/// experiment at an error per Clifford of about 0.004.
inline constexpr double kCalibratedAmplitudeMiscalibration = 0.022;

enum class CliffordRealization { compiled, abstract_unitary };

struct RBOptions {
    std::vector<std::size_t> lengths = {1, 2, 4, 8, 16, 32, 64, 128, 256};
    std::size_t k = 32;
    std::uint64_t seed = 1;
    CliffordRealization realization = CliffordRealization::compiled;
    ExecutionOptions execution = ExecutionOptions::experiment();
    CompilerConfig compiler{};
    PolarizationConfig polarization{};  ///< p_I, p_S = 0 means "thermal defaults"
    int threads = 1;
};

struct RBDataset {
    std::vector<std::size_t> lengths;
    std::vector<std::vector<double>> survivals;  ///< [length][sequence], normalized to m = 0
    std::vector<std::vector<std::uint64_t>> seeds;
    double reference = 0.0;  ///< raw <S_z> estimate at m = 0
    std::size_t k = 0;

    void validate() const {
        if (lengths.size() != survivals.size()) throw std::invalid_argument("RB dataset: length/survival mismatch");
        for (const auto &row : survivals)
            if (row.empty()) throw std::invalid_argument("RB dataset: empty length bucket");
    }
};

namespace detail {

/// Per-member state propagation for RB; caches propagators whenever the
/// channel of a schedule is unitary.
class RBRunner {
   public:
    RBRunner(const Executor &exec, const RBOptions &opt) : exec_(exec) {
        const auto &sys = exec.system();
        const auto &group = clifford_group();
        for (const auto &e : group) clifford_schedules_.push_back(compile_clifford(sys, e, opt.compiler));
        for (ReadoutOp op : kReadoutOps) readout_schedules_.push_back(readout_schedule(sys, op, opt.compiler));
        const std::size_t members = exec.members().size();
        cliff_cache_.resize(members);
        readout_cache_.resize(members);
        for (std::size_t m = 0; m < members; ++m) {
            for (std::size_t g = 0; g < group.size(); ++g) {
                if (opt.realization == CliffordRealization::abstract_unitary)
                    cliff_cache_[m].push_back(group[g].embedded());
                else if (exec.is_unitary(clifford_schedules_[g]))
                    cliff_cache_[m].push_back(exec.member_propagator(clifford_schedules_[g], m));
            }
            for (const auto &r : readout_schedules_)
                if (exec.is_unitary(r)) readout_cache_[m].push_back(exec.member_propagator(r, m));
        }
    }

    Operator apply_clifford(std::size_t g, const Operator &rho, std::size_t member) const {
        const auto &cache = cliff_cache_[member];
        Operator out = cache.size() == 24 ? evolve(rho, cache[g]) : exec_.run_member(clifford_schedules_[g], rho, member);
        return depolarize_spin(out, Spin::S, exec_.model().clifford_depolarizing);
    }

    double read_sz(const Operator &rho, std::size_t member) const {
        std::array<double, 4> signals{};
        const auto &cache = readout_cache_[member];
        for (std::size_t k = 0; k < 4; ++k) {
            const Operator after =
                cache.size() == 4 ? evolve(rho, cache[k]) : exec_.run_member(readout_schedules_[k], rho, member);
            signals[k] = magnetization_z(exec_.system(), after);
        }
        return combine_readouts(exec_.system(), signals).sz;
    }

    double run_sequence(const RBSequence &seq, const Operator &rho0) const {
        return exec_.run_protocol([&](std::size_t member) {
            Operator rho = rho0;
            for (std::size_t g : seq.elements) rho = apply_clifford(g, rho, member);
            if (!seq.elements.empty()) rho = apply_clifford(seq.recovery, rho, member);
            return read_sz(rho, member);
        });
    }

   private:
    const Executor &exec_;
    std::vector<PulseSchedule> clifford_schedules_;
    std::vector<PulseSchedule> readout_schedules_;
    std::vector<std::vector<Operator>> cliff_cache_;
    std::vector<std::vector<Operator>> readout_cache_;
};

}  // namespace detail

/// Simulated RB experiment on the sudden state. Each (length, sequence) pair
/// has its own seed derived from the master seed, so results do not depend on
/// the thread count.
inline RBDataset run_rb(const Executor &exec, const RBOptions &opt) {
    if (opt.k < 1) throw std::invalid_argument("RB needs k >= 1 sequences per length");
    if (opt.lengths.empty()) throw std::invalid_argument("RB needs at least one sequence length");
    PolarizationConfig pol = opt.polarization;
    if (pol.p_i == 0.0 && pol.p_s == 0.0) pol = PolarizationConfig::thermal(exec.system(), pol.bp_t, pol.temperature_k);
    const Operator rho0 = sudden_state(pol);
    const detail::RBRunner runner(exec, opt);

    RBDataset data;
    data.lengths = opt.lengths;
    data.k = opt.k;
    data.reference = runner.run_sequence(RBSequence{}, rho0);
    if (data.reference == 0.0) throw std::runtime_error("RB reference signal is zero");
    data.survivals.assign(opt.lengths.size(), std::vector<double>(opt.k));
    data.seeds.assign(opt.lengths.size(), std::vector<std::uint64_t>(opt.k));
    for (std::size_t li = 0; li < opt.lengths.size(); ++li)
        for (std::size_t j = 0; j < opt.k; ++j) data.seeds[li][j] = derive_seed(opt.seed, li, j);

    parallel_for(opt.lengths.size() * opt.k, opt.threads, [&](std::size_t task) {
        const std::size_t li = task / opt.k, j = task % opt.k;
        const RBSequence seq = generate_rb_sequence(opt.lengths[li], data.seeds[li][j]);
        data.survivals[li][j] = runner.run_sequence(seq, rho0) / data.reference;
    });
    return data;
}

inline RBDataset run_rb(const SpinSystem &sys, const ErrorModel &model, const RBOptions &opt) {
    return run_rb(Executor(sys, model, opt.execution), opt);
}

struct RBFit {
    double eps_g = 0.0;
    double d_if = 0.0;
    double amplitude = 1.0;  ///< A = 1 - d_if
    double decay = 1.0;      ///< p = 1 - 2 eps_g
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();  ///< of (eps_g, d_if)
    double stderr_eps_g = 0.0;
    double stderr_d_if = 0.0;
    double rms_residual = 0.0;
    int iterations = 0;

    double average_fidelity() const { return 1.0 - eps_g; }
};

struct RBFitOptions {
    bool weighted = false;  ///< inverse per-length sample variance
    int max_iterations = 200;
};

/// Gauss-Newton fit of A p^m to every individual survival, started from a
/// log-linear fit of the per-length means.
inline RBFit fit_rb_decay(const RBDataset &data, const RBFitOptions &opt = {}) {
    data.validate();
    std::vector<std::size_t> distinct = data.lengths;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3) throw std::invalid_argument("RB fit needs at least 3 distinct lengths");

    std::vector<double> ms, ys, ws;
    std::vector<double> mean_m, mean_log;
    for (std::size_t li = 0; li < data.lengths.size(); ++li) {
        const auto &row = data.survivals[li];
        double mean = 0;
        for (double v : row) mean += v;
        mean /= static_cast<double>(row.size());
        double var = 0;
        for (double v : row) var += (v - mean) * (v - mean);
        var = row.size() > 1 ? var / static_cast<double>(row.size() - 1) : 0.0;
        if (!(mean > 0)) throw std::invalid_argument("RB fit: non-positive mean survival (degenerate data)");
        mean_m.push_back(static_cast<double>(data.lengths[li]));
        mean_log.push_back(std::log(mean));
        for (double v : row) {
            ms.push_back(static_cast<double>(data.lengths[li]));
            ys.push_back(v);
            ws.push_back(opt.weighted && var > 0 ? 1.0 / var : 1.0);
        }
    }

    // log-linear start
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double nm = static_cast<double>(mean_m.size());
    for (std::size_t i = 0; i < mean_m.size(); ++i) {
        sx += mean_m[i];
        sy += mean_log[i];
        sxx += mean_m[i] * mean_m[i];
        sxy += mean_m[i] * mean_log[i];
    }
    const double slope = (nm * sxy - sx * sy) / (nm * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / nm;
    double a = std::exp(intercept), p = std::exp(slope);

    const std::size_t n = ys.size();
    auto rss_at = [&](double aa, double pp) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = ys[i] - aa * std::pow(pp, ms[i]);
            s += ws[i] * r * r;
        }
        return s;
    };

    RBFit fit;
    double rss = rss_at(a, p);
    bool converged = false;
    Eigen::Matrix2d normal;
    for (int it = 0; it < opt.max_iterations; ++it) {
        normal.setZero();
        Eigen::Vector2d grad = Eigen::Vector2d::Zero();
        for (std::size_t i = 0; i < n; ++i) {
            const double pm = std::pow(p, ms[i]);
            const Eigen::Vector2d jrow(pm, ms[i] == 0 ? 0.0 : a * ms[i] * std::pow(p, ms[i] - 1));
            normal += ws[i] * jrow * jrow.transpose();
            grad += ws[i] * jrow * (ys[i] - a * pm);
        }
        const Eigen::Vector2d step = normal.ldlt().solve(grad);
        double lambda = 1.0;
        double new_rss = rss_at(a + step[0], p + step[1]);
        while (new_rss > rss && lambda > 1e-12) {
            lambda *= 0.5;
            new_rss = rss_at(a + lambda * step[0], p + lambda * step[1]);
        }
        fit.iterations = it + 1;
        if (new_rss <= rss) {
            a += lambda * step[0];
            p += lambda * step[1];
        }
        const bool small_step = std::abs(lambda * step[0]) <= 1e-15 * std::max(1.0, std::abs(a)) &&
                                std::abs(lambda * step[1]) <= 1e-15 * std::max(1.0, std::abs(p));
        const bool stalled = new_rss >= rss && rss <= 1e-28 * static_cast<double>(n);
        const bool flat = std::abs(rss - new_rss) <= 1e-15 * std::max(rss, 1e-300);
        rss = std::min(rss, new_rss);
        if (small_step || stalled || (flat && it > 2)) {
            converged = true;
            break;
        }
    }
    if (!converged || !std::isfinite(a) || !std::isfinite(p)) throw ConvergenceError("RB decay fit did not converge");

    // Covariance of (A, p) from the final Jacobian.
    normal.setZero();
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector2d jrow(std::pow(p, ms[i]), ms[i] == 0 ? 0.0 : a * ms[i] * std::pow(p, ms[i] - 1));
        normal += ws[i] * jrow * jrow.transpose();
    }
    const double dof = static_cast<double>(n) - 2.0;
    const double s2 = dof > 0 ? rss / dof : 0.0;
    const Eigen::Matrix2d cov_ap = (opt.weighted ? 1.0 : s2) * normal.inverse();

    fit.amplitude = a;
    fit.decay = p;
    fit.eps_g = (1.0 - p) / 2.0;
    fit.d_if = 1.0 - a;
    // (eps, d_if) = (-(p - 1)/2, -(A - 1))
    fit.covariance(0, 0) = cov_ap(1, 1) / 4.0;
    fit.covariance(1, 1) = cov_ap(0, 0);
    fit.covariance(0, 1) = fit.covariance(1, 0) = cov_ap(0, 1) / 2.0;
    fit.stderr_eps_g = std::sqrt(fit.covariance(0, 0));
    fit.stderr_d_if = std::sqrt(fit.covariance(1, 1));
    double unweighted = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ys[i] - a * std::pow(p, ms[i]);
        unweighted += r * r;
    }
    fit.rms_residual = std::sqrt(unweighted / static_cast<double>(n));
    return fit;
}

// Persistence.

inline void to_json(nlohmann::json &j, const RBDataset &d) {
    j = nlohmann::json{{"lengths", d.lengths}, {"k", d.k},     {"reference", d.reference},
                       {"seeds", d.seeds},     {"survivals", d.survivals}};
}

inline void from_json(const nlohmann::json &j, RBDataset &d) {
    d.lengths = j.at("lengths").get<std::vector<std::size_t>>();
    d.survivals = j.at("survivals").get<std::vector<std::vector<double>>>();
    d.seeds = j.value("seeds", std::vector<std::vector<std::uint64_t>>{});
    d.reference = j.value("reference", 1.0);
    d.k = j.value("k", d.survivals.empty() ? std::size_t{0} : d.survivals.front().size());
    d.validate();
}

inline nlohmann::json fit_report(const RBFit &fit, const RBDataset &d) {
    return nlohmann::json{{"eps_g", fit.eps_g},
                          {"d_if", fit.d_if},
                          {"stderr_eps_g", fit.stderr_eps_g},
                          {"stderr_d_if", fit.stderr_d_if},
                          {"k", d.k},
                          {"lengths", d.lengths},
                          {"average_gate_fidelity", fit.average_fidelity()},
                          {"rms_residual", fit.rms_residual}};
}

/// "m,mean,stderr" with the standard error of the mean per length.
inline void write_csv(std::ostream &os, const RBDataset &d) {
    os << "m,mean,stderr\n";
    os.precision(17);
    for (std::size_t li = 0; li < d.lengths.size(); ++li) {
        const auto &row = d.survivals[li];
        double mean = 0;
        for (double v : row) mean += v;
        mean /= static_cast<double>(row.size());
        double var = 0;
        for (double v : row) var += (v - mean) * (v - mean);
        const double se = row.size() > 1 ? std::sqrt(var / static_cast<double>(row.size() - 1) / static_cast<double>(row.size())) : 0.0;
        os << d.lengths[li] << ',' << mean << ',' << se << '\n';
    }
}

}  // namespace zfnmr
