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

/// Initial states, the magnetization detector, FID synthesis and spectra.

#include "zfnmr/errors.hpp"

#include <unsupported/Eigen/FFT>

#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace zfnmr {

inline constexpr double kHbar = 1.054571817e-34;      // J s
inline constexpr double kBoltzmann = 1.380649e-23;    // J / K

/// Prepolarization conditions and the resulting dimensionless polarizations
/// p = hbar gamma B_p / (k_B T).
struct PolarizationConfig {
    double bp_t = 1.8;
    double temperature_k = 298.0;
    double bg_t = 3e-5;  ///< guiding field; recorded, not used by the limiting states
    double p_i = 0.0;
    double p_s = 0.0;

    static PolarizationConfig thermal(const SpinSystem &sys, double bp_t = 1.8, double temperature_k = 298.0) {
        if (!(bp_t >= 0) || !(temperature_k > 0)) throw std::invalid_argument("invalid polarization conditions");
        PolarizationConfig c;
        c.bp_t = bp_t;
        c.temperature_k = temperature_k;
        const double scale = kHbar * bp_t / (kBoltzmann * temperature_k);
        c.p_i = sys.gamma_i * scale;
        c.p_s = sys.gamma_s * scale;
        return c;
    }
};

/// 1/4 (1 + p_I I_z + p_S S_z): populations frozen at the high-field values.
inline Operator sudden_state(const PolarizationConfig &cfg) {
    const Matrix4 m = 0.25 * (Matrix4::Identity() + cfg.p_i * spin_operator(Spin::I, Axis::z).matrix() +
                              cfg.p_s * spin_operator(Spin::S, Axis::z).matrix());
    return Operator::hermitian(m);
}

/// 1/4 + (p_I + p_S)/8 (I_z + S_z) - (p_I - p_S)/4 (I_x S_x + I_y S_y):
/// high-field populations carried onto the zero-field eigenstates.
inline Operator adiabatic_state(const PolarizationConfig &cfg) {
    const Matrix4 fz = total_spin(Axis::z).matrix();
    const Matrix4 flip = spin_operator(Spin::I, Axis::x).matrix() * spin_operator(Spin::S, Axis::x).matrix() +
                         spin_operator(Spin::I, Axis::y).matrix() * spin_operator(Spin::S, Axis::y).matrix();
    const Matrix4 m = 0.25 * Matrix4::Identity() + ((cfg.p_i + cfg.p_s) / 8.0) * fz - ((cfg.p_i - cfg.p_s) / 4.0) * flip;
    return Operator::hermitian(0.5 * (m + m.adjoint()));
}

/// gamma_I I_z + gamma_S S_z.
inline Operator magnetization_operator(const SpinSystem &sys) {
    return sys.gamma_i * spin_operator(Spin::I, Axis::z) + sys.gamma_s * spin_operator(Spin::S, Axis::z);
}

/// Tr[rho (gamma_I I_z + gamma_S S_z)]: unit-gain detector reading.
inline double magnetization_z(const SpinSystem &sys, const Operator &rho) {
    const Operator r = rho.in_basis(Basis::computational);
    return (r.matrix() * magnetization_operator(sys).matrix()).trace().real();
}

/// Complex amplitude a of the J line: under free evolution the detector reads
/// const + Re(a exp(i 2 pi J t)). Re(a) is the in-phase (cosine) amplitude.
inline Complex j_line_amplitude(const SpinSystem &sys, const Operator &rho) {
    const Matrix4 r = rho.in_basis(Basis::coupled).matrix();
    const Matrix4 m = magnetization_operator(sys).in_basis(Basis::coupled).matrix();
    // T0 is index 1, S0 index 3; rho_{S0,T0} rotates as exp(+i 2 pi J t).
    return 2.0 * r(3, 1) * m(1, 3);
}

struct FIDRecord {
    std::vector<double> samples;  ///< <M_z>, gamma-weighted units
    double dt = 0.0;
    std::string state_label;
    std::string schedule_label;

    double time(std::size_t k) const { return static_cast<double>(k) * dt; }

    void validate() const {
        if (samples.size() < 2) throw std::invalid_argument("FID needs at least two samples");
        if (!(dt > 0)) throw std::invalid_argument("FID sample interval must be positive");
    }
};

struct FidOptions {
    double duration_s = 60.0;
    double dt_s = 1e-3;
    double t2_s = 10.3;
    bool singlet_relaxation = false;
    double t1_singlet_s = 16.7;
    double noise_sigma = 0.0;  ///< additive white Gaussian detector noise
    std::uint64_t noise_seed = 1;
};

/// Samples the detector during free zero-field evolution with relaxation.
inline FIDRecord simulate_fid(const SpinSystem &sys, const Operator &rho0, const FidOptions &opt) {
    if (!(opt.duration_s > 0)) throw std::invalid_argument("FID duration must be positive");
    if (!(opt.dt_s > 0) || !(opt.dt_s < 1.0 / (2.0 * sys.j_hz)))
        throw std::invalid_argument("FID sample interval violates the Nyquist limit 1/(2J)");
    const auto n = static_cast<std::size_t>(std::floor(opt.duration_s / opt.dt_s + 1e-9)) + 1;
    if (n < 2) throw std::invalid_argument("FID duration shorter than one sample interval");

    ErrorModel relax = ErrorModel::ideal();
    relax.decoherence_enabled = true;
    relax.t2_s = opt.t2_s;
    relax.singlet_relaxation_enabled = opt.singlet_relaxation;
    relax.t1_singlet_s = opt.t1_singlet_s;

    // Free evolution and relaxation are both diagonal in the coupled basis, so
    // each sample is computed in closed form from rho0 rather than by stepping.
    const Operator h = zero_field_hamiltonian(sys);
    const Operator m = magnetization_operator(sys);
    FIDRecord out;
    out.dt = opt.dt_s;
    out.samples.resize(n);
    std::mt19937_64 rng(opt.noise_seed);
    std::normal_distribution<double> noise(0.0, opt.noise_sigma > 0 ? opt.noise_sigma : 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * opt.dt_s;
        const Operator rt = decohere(evolve(rho0, propagator(h, t)), t, relax);
        out.samples[k] = (rt.matrix() * m.matrix()).trace().real();
        if (opt.noise_sigma > 0) out.samples[k] += noise(rng);
    }
    return out;
}

struct Spectrum {
    double df = 0.0;
    std::vector<double> frequency_hz;
    std::vector<double> amplitude;  ///< |DFT|
};

/// Mean-removed, zero-padded DFT magnitude up to the Nyquist frequency.
inline Spectrum compute_spectrum(const FIDRecord &fid, int pad_factor = 8) {
    fid.validate();
    if (pad_factor < 1) throw std::invalid_argument("pad factor must be >= 1");
    std::size_t nfft = 1;
    while (nfft < fid.samples.size() * static_cast<std::size_t>(pad_factor)) nfft <<= 1;
    double mean = 0.0;
    for (double v : fid.samples) mean += v;
    mean /= static_cast<double>(fid.samples.size());
    std::vector<double> padded(nfft, 0.0);
    for (std::size_t k = 0; k < fid.samples.size(); ++k) padded[k] = fid.samples[k] - mean;

    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<Complex> bins;
    fft.fwd(bins, padded);

    Spectrum s;
    s.df = 1.0 / (static_cast<double>(nfft) * fid.dt);
    const std::size_t half = nfft / 2 + 1;
    s.frequency_hz.resize(half);
    s.amplitude.resize(half);
    for (std::size_t k = 0; k < half; ++k) {
        s.frequency_hz[k] = static_cast<double>(k) * s.df;
        s.amplitude[k] = std::abs(bins[k]);
    }
    return s;
}

struct PeakEstimate {
    double frequency_hz = 0.0;  ///< three-point parabolic interpolation of |X|
    double fwhm_hz = 0.0;       ///< Lorentzian fit to |X|^2
    double height = 0.0;
    std::size_t bin = 0;
    int fit_points = 0;
};

/// Strongest line within [f_lo, f_hi]. The power spectrum of an exponentially
/// damped cosine is Lorentzian, so 1/|X|^2 is fitted by a parabola over the
/// bins above half power; FWHM = 2 sqrt(min / curvature).
inline PeakEstimate analyze_peak(const Spectrum &s, double f_lo, double f_hi) {
    if (s.amplitude.size() < 3) throw std::invalid_argument("spectrum too short");
    std::size_t best = 0;
    double best_val = -1.0;
    for (std::size_t k = 1; k + 1 < s.amplitude.size(); ++k) {
        const double f = s.frequency_hz[k];
        if (f < f_lo || f > f_hi) continue;
        if (s.amplitude[k] > best_val) {
            best_val = s.amplitude[k];
            best = k;
        }
    }
    if (best == 0) throw std::runtime_error("no spectral peak in the search window");

    PeakEstimate p;
    p.bin = best;
    const double a = s.amplitude[best - 1], b = s.amplitude[best], c = s.amplitude[best + 1];
    const double denom = a - 2 * b + c;
    const double shift = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
    p.frequency_hz = (static_cast<double>(best) + shift) * s.df;
    p.height = b - 0.25 * (a - c) * shift;

    // Half-power core of the line.
    const double peak_power = b * b;
    std::size_t lo = best, hi = best;
    while (lo > 1 && s.amplitude[lo - 1] * s.amplitude[lo - 1] >= 0.5 * peak_power) --lo;
    while (hi + 2 < s.amplitude.size() && s.amplitude[hi + 1] * s.amplitude[hi + 1] >= 0.5 * peak_power) ++hi;
    if (hi - lo < 2) {
        lo = best - 1;
        hi = best + 1;
    }
    const int n = static_cast<int>(hi - lo + 1);
    Eigen::MatrixXd design(n, 3);
    Eigen::VectorXd rhs(n);
    const double f0 = s.frequency_hz[best];
    for (int i = 0; i < n; ++i) {
        const std::size_t k = lo + static_cast<std::size_t>(i);
        const double x = s.frequency_hz[k] - f0;
        design(i, 0) = x * x;
        design(i, 1) = x;
        design(i, 2) = 1.0;
        rhs[i] = peak_power / (s.amplitude[k] * s.amplitude[k]);
    }
    const Eigen::Vector3d q = design.colPivHouseholderQr().solve(rhs);
    const double vmin = q[2] - q[1] * q[1] / (4 * q[0]);
    p.fwhm_hz = q[0] > 0 && vmin > 0 ? 2.0 * std::sqrt(vmin / q[0]) : 0.0;
    p.fit_points = n;
    return p;
}

enum class ScanMode { collective, selective_i, selective_s };

inline std::string_view to_string(ScanMode m) {
    switch (m) {
        case ScanMode::collective: return "collective";
        case ScanMode::selective_i: return "selective_I";
        case ScanMode::selective_s: return "selective_S";
    }
    return "?";
}

struct ScanOptions {
    double pulse_duration_s = 50e-6;  ///< tau in theta = gamma B tau
    CompilerConfig compiler{};
};

/// Rotation angle on the addressed spin for a scan amplitude.
inline double scan_angle(const SpinSystem &sys, ScanMode mode, double b_dc, const ScanOptions &opt) {
    return sys.gamma(mode == ScanMode::selective_i ? Spin::I : Spin::S) * b_dc * opt.pulse_duration_s;
}

/// Pulse used at one scan point: the bare DC pulse in collective mode, the
/// compiled selective rotation by theta = gamma B tau otherwise.
inline PulseSchedule scan_schedule(const SpinSystem &sys, const Vec3 &axis, double b_dc, ScanMode mode,
                                   const ScanOptions &opt) {
    if (mode == ScanMode::collective) {
        PulseSchedule s;
        s.label = "collective";
        if (b_dc != 0.0)
            s.segments.push_back(PulseSegment::dc_pulse(b_dc > 0 ? axis : Vec3(-axis), std::abs(b_dc), opt.pulse_duration_s));
        return s;
    }
    const Spin target = mode == ScanMode::selective_i ? Spin::I : Spin::S;
    return compile_selective_rotation(sys, target, axis, scan_angle(sys, mode, b_dc, opt), opt.compiler);
}

/// In-phase J-line amplitude after each scan pulse.
inline std::vector<double> amplitude_scan(const Executor &exec, const Operator &rho0, const Vec3 &axis,
                                          const std::vector<double> &amplitudes, ScanMode mode,
                                          const ScanOptions &opt = {}) {
    std::vector<double> out;
    out.reserve(amplitudes.size());
    for (double b : amplitudes) {
        const Operator rho = exec.run(scan_schedule(exec.system(), axis, b, mode, opt), rho0);
        out.push_back(j_line_amplitude(exec.system(), rho).real());
    }
    return out;
}

/// Model shape for each mode: cos(theta_S) - cos(theta_I), cos(theta_S) - 1,
/// 1 - cos(theta_I), with theta = gamma B tau.
inline double scan_model_shape(const SpinSystem &sys, ScanMode mode, double b_dc, const ScanOptions &opt) {
    const double ts = sys.gamma_s * b_dc * opt.pulse_duration_s;
    const double ti = sys.gamma_i * b_dc * opt.pulse_duration_s;
    switch (mode) {
        case ScanMode::collective: return std::cos(ts) - std::cos(ti);
        case ScanMode::selective_s: return std::cos(ts) - 1.0;
        case ScanMode::selective_i: return 1.0 - std::cos(ti);
    }
    return 0.0;
}

struct ScanFit {
    double amplitude = 0.0;          ///< A in signal = A * shape
    double relative_residual = 0.0;  ///< ||signal - A shape|| / ||signal||
};

inline ScanFit fit_scan(const SpinSystem &sys, ScanMode mode, const std::vector<double> &amplitudes,
                        const std::vector<double> &signal, const ScanOptions &opt = {}) {
    if (amplitudes.size() != signal.size() || amplitudes.empty()) throw std::invalid_argument("scan fit: size mismatch");
    double sff = 0, sfy = 0, syy = 0;
    std::vector<double> shape(amplitudes.size());
    for (std::size_t i = 0; i < amplitudes.size(); ++i) {
        shape[i] = scan_model_shape(sys, mode, amplitudes[i], opt);
        sff += shape[i] * shape[i];
        sfy += shape[i] * signal[i];
        syy += signal[i] * signal[i];
    }
    ScanFit fit;
    fit.amplitude = sff > 0 ? sfy / sff : 0.0;
    double rss = 0;
    for (std::size_t i = 0; i < amplitudes.size(); ++i) {
        const double r = signal[i] - fit.amplitude * shape[i];
        rss += r * r;
    }
    fit.relative_residual = syy > 0 ? std::sqrt(rss / syy) : 0.0;
    return fit;
}

// CSV exports.

inline void write_csv(std::ostream &os, const FIDRecord &fid) {
    os << "t_s,Mz\n";
    os.precision(17);
    for (std::size_t k = 0; k < fid.samples.size(); ++k) os << fid.time(k) << ',' << fid.samples[k] << '\n';
}

inline void write_csv(std::ostream &os, const Spectrum &s) {
    os << "f_Hz,amplitude\n";
    os.precision(17);
    for (std::size_t k = 0; k < s.amplitude.size(); ++k) os << s.frequency_hz[k] << ',' << s.amplitude[k] << '\n';
}

}  // namespace zfnmr
