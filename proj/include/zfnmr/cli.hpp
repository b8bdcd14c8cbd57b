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

/// Experiment drivers behind the `zfnmr` command-line tool.
///
/// A run is described by one JSON file. Every section and key is optional;
/// unknown keys are rejected. The whole config is parsed and validated before
/// any computation, and nothing is written when validation fails.

#include "zfnmr/csv.hpp"
#include "zfnmr/reconstruct.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>

namespace zfnmr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNonConvergence = 3;

class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

inline const std::set<std::string> &subcommands() {
    static const std::set<std::string> s = {"fid", "scan", "rb", "tomo", "cnot"};
    return s;
}

/// Command-line overrides. Seed precedence: --seed, then the config's "seed",
/// then $ZFNMR_SEED, then 1. Threads: --threads, then "threads", then the
/// machine's hardware concurrency. Output directory: --out, then
/// "output_dir", then ".".
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> out_dir;
};

namespace detail {

inline void check_keys(const nlohmann::json &j, const std::set<std::string> &allowed, const std::string &where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto &item : j.items())
        if (!allowed.count(item.key())) throw ConfigError(where + ": unknown key '" + item.key() + "'");
}

inline nlohmann::json section(const nlohmann::json &cfg, const std::string &name) {
    return cfg.contains(name) ? cfg.at(name) : nlohmann::json::object();
}

template <typename T>
T get(const nlohmann::json &j, const std::string &key, T fallback, const std::string &where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception &) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

inline std::uint64_t parse_seed_text(const std::string &text, const std::string &what) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
        throw ConfigError(what + " must be a non-negative integer, got '" + text + "'");
    return v;
}

inline Vec3 parse_axis(const nlohmann::json &j, const std::string &where) {
    std::vector<double> v;
    try {
        v = j.get<std::vector<double>>();
    } catch (const nlohmann::json::exception &) {
        throw ConfigError(where + ": axis must be an array of 3 numbers");
    }
    if (v.size() != 3) throw ConfigError(where + ": axis must have 3 components");
    const Vec3 a(v[0], v[1], v[2]);
    if (!a.allFinite() || a.norm() == 0.0) throw ConfigError(where + ": axis must be finite and nonzero");
    return a.normalized();
}

}  // namespace detail

/// Settings shared by every subcommand.
struct CommonConfig {
    std::string subcommand;
    std::uint64_t seed = 1;
    int threads = 1;
    std::filesystem::path out_dir = ".";
    SpinSystem system = SpinSystem::physical();
    PolarizationConfig polarization{};
    ErrorModel error_model{};
    ExecutionOptions execution = ExecutionOptions::experiment();
    CompilerConfig compiler{};
};

inline SpinSystem parse_system(const nlohmann::json &j) {
    detail::check_keys(j, {"preset", "gamma_i", "gamma_s", "j_hz"}, "system");
    const auto preset = detail::get<std::string>(j, "preset", "physical", "system");
    SpinSystem s;
    if (preset == "physical")
        s = SpinSystem::physical();
    else if (preset == "idealized")
        s = SpinSystem::idealized();
    else
        throw ConfigError("system.preset must be 'physical' or 'idealized'");
    s.gamma_i = detail::get(j, "gamma_i", s.gamma_i, "system");
    s.gamma_s = detail::get(j, "gamma_s", s.gamma_s, "system");
    s.j_hz = detail::get(j, "j_hz", s.j_hz, "system");
    try {
        s.validate();
    } catch (const std::invalid_argument &e) {
        throw ConfigError(std::string("system: ") + e.what());
    }
    return s;
}

/// p_i and p_s default to the thermal values at (bp_t, temperature_k).
inline PolarizationConfig parse_polarization(const nlohmann::json &j, const SpinSystem &sys) {
    detail::check_keys(j, {"bp_t", "temperature_k", "bg_t", "p_i", "p_s"}, "polarization");
    const double bp = detail::get(j, "bp_t", 1.8, "polarization");
    const double temp = detail::get(j, "temperature_k", 298.0, "polarization");
    PolarizationConfig p;
    try {
        p = PolarizationConfig::thermal(sys, bp, temp);
    } catch (const std::invalid_argument &e) {
        throw ConfigError(std::string("polarization: ") + e.what());
    }
    p.bg_t = detail::get(j, "bg_t", p.bg_t, "polarization");
    p.p_i = detail::get(j, "p_i", p.p_i, "polarization");
    p.p_s = detail::get(j, "p_s", p.p_s, "polarization");
    if (!std::isfinite(p.p_i) || !std::isfinite(p.p_s) || (p.p_i == 0.0 && p.p_s == 0.0))
        throw ConfigError("polarization: p_i and p_s must be finite and not both zero");
    return p;
}

inline ErrorModel parse_error_model(const nlohmann::json &j, ErrorModel defaults = {}) {
    static const std::set<std::string> keys = [] {
        std::set<std::string> k;
        const nlohmann::json defaults_json = ErrorModel{};
        for (const auto &item : defaults_json.items()) k.insert(item.key());
        k.insert("preset");
        return k;
    }();
    detail::check_keys(j, keys, "error_model");
    const auto preset = detail::get<std::string>(j, "preset", "default", "error_model");
    if (preset == "ideal")
        defaults = ErrorModel::ideal();
    else if (preset != "default")
        throw ConfigError("error_model.preset must be 'default' or 'ideal'");
    nlohmann::json body = j;
    body.erase("preset");
    try {
        body.get_to(defaults);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("error_model: ") + e.what());
    } catch (const std::invalid_argument &e) {
        throw ConfigError(std::string("error_model: ") + e.what());
    }
    return defaults;
}

inline CommonConfig parse_common(const nlohmann::json &cfg, const std::string &subcommand, const Overrides &ov,
                                 const std::set<std::string> &extra_sections, ErrorModel model_defaults = {}) {
    std::set<std::string> top = {"subcommand", "seed",         "threads",   "output_dir", "system",
                                 "polarization", "error_model", "execution", "compiler"};
    top.insert(extra_sections.begin(), extra_sections.end());
    detail::check_keys(cfg, top, "config");

    CommonConfig c;
    c.subcommand = detail::get<std::string>(cfg, "subcommand", subcommand, "config");
    if (c.subcommand != subcommand)
        throw ConfigError("config is for subcommand '" + c.subcommand + "' but '" + subcommand + "' was requested");

    if (ov.seed) {
        c.seed = *ov.seed;
    } else if (cfg.contains("seed")) {
        if (!cfg.at("seed").is_number_unsigned()) throw ConfigError("config.seed must be a non-negative integer");
        c.seed = cfg.at("seed").get<std::uint64_t>();
    } else if (const char *env = std::getenv("ZFNMR_SEED"); env && *env) {
        c.seed = detail::parse_seed_text(env, "ZFNMR_SEED");
    }
    c.threads = ov.threads ? *ov.threads : detail::get(cfg, "threads", default_threads(), "config");
    if (c.threads < 1) throw ConfigError("threads must be >= 1");
    c.out_dir = ov.out_dir ? *ov.out_dir : detail::get<std::string>(cfg, "output_dir", ".", "config");

    c.system = parse_system(detail::section(cfg, "system"));
    c.polarization = parse_polarization(detail::section(cfg, "polarization"), c.system);
    c.error_model = parse_error_model(detail::section(cfg, "error_model"), model_defaults);

    const auto exec = detail::section(cfg, "execution");
    detail::check_keys(exec, {"include_j_during_pulses"}, "execution");
    c.execution.include_j_during_pulses = detail::get(exec, "include_j_during_pulses", true, "execution");

    const auto comp = detail::section(cfg, "compiler");
    detail::check_keys(comp, {"pi_pulse_duration_s", "max_field_t"}, "compiler");
    c.compiler.pi_pulse_duration_s = detail::get(comp, "pi_pulse_duration_s", c.compiler.pi_pulse_duration_s, "compiler");
    c.compiler.max_field_t = detail::get(comp, "max_field_t", c.compiler.max_field_t, "compiler");
    if (!(c.compiler.pi_pulse_duration_s > 0)) throw ConfigError("compiler.pi_pulse_duration_s must be positive");
    if (!(c.compiler.max_field_t > 0)) throw ConfigError("compiler.max_field_t must be positive");
    return c;
}

inline Operator named_state(const std::string &name, const PolarizationConfig &pol) {
    if (name == "sudden") return sudden_state(pol);
    if (name == "adiabatic") return adiabatic_state(pol);
    throw ConfigError("unknown state '" + name + "' (expected 'sudden' or 'adiabatic')");
}

// Output helpers. Files are written only after all computation succeeded.

class OutputSet {
   public:
    void add(std::string name, std::string contents) { files_.emplace_back(std::move(name), std::move(contents)); }

    void add_json(std::string name, const nlohmann::json &j) { add(std::move(name), j.dump(2) + "\n"); }

    template <typename T>
    void add_csv(std::string name, const T &value) {
        std::ostringstream os;
        write_csv(os, value);
        add(std::move(name), os.str());
    }

    std::vector<std::filesystem::path> write(const std::filesystem::path &dir) const {
        std::filesystem::create_directories(dir);
        std::vector<std::filesystem::path> written;
        for (const auto &[name, contents] : files_) {
            const auto path = dir / name;
            std::ofstream os(path, std::ios::binary);
            if (!os) throw std::runtime_error("cannot write " + path.string());
            os << contents;
            written.push_back(path);
        }
        return written;
    }

    const std::vector<std::pair<std::string, std::string>> &files() const { return files_; }

   private:
    std::vector<std::pair<std::string, std::string>> files_;
};

/// Result of a subcommand: files to write and the exit status.
struct CommandResult {
    OutputSet outputs;
    int exit_code = kExitOk;
    std::string message;
};

// fid

struct FidCommand {
    CommonConfig common;
    std::string state = "adiabatic";
    PulseSchedule pulse;
    FidOptions fid{};
    int pad_factor = 8;
    double f_lo = 0.0, f_hi = 0.0;
};

inline FidCommand parse_fid(const nlohmann::json &cfg, const Overrides &ov) {
    FidCommand c;
    c.common = parse_common(cfg, "fid", ov, {"fid"});
    const auto j = detail::section(cfg, "fid");
    detail::check_keys(j, {"state", "pulse", "duration_s", "dt_s", "pad_factor", "noise_sigma", "window_hz"}, "fid");
    c.state = detail::get<std::string>(j, "state", c.state, "fid");
    named_state(c.state, c.common.polarization);
    if (j.contains("pulse")) {
        try {
            j.at("pulse").get_to(c.pulse);
        } catch (const std::exception &e) {
            throw ConfigError(std::string("fid.pulse: ") + e.what());
        }
    } else {
        // Calibrated pi pulse on S along x: the collective rotation that
        // turns the adiabatic populations into S0-T0 coherence.
        c.pulse.label = "pi_S_x";
        c.pulse.segments = {calibrate_pi_pulse(c.common.system, Spin::S, c.common.compiler.pi_pulse_duration_s)};
    }
    c.fid.duration_s = detail::get(j, "duration_s", c.fid.duration_s, "fid");
    c.fid.dt_s = detail::get(j, "dt_s", c.fid.dt_s, "fid");
    c.fid.noise_sigma = detail::get(j, "noise_sigma", 0.0, "fid");
    c.pad_factor = detail::get(j, "pad_factor", c.pad_factor, "fid");
    const double jhz = c.common.system.j_hz;
    const auto window = detail::get<std::vector<double>>(j, "window_hz", {0.5 * jhz, 1.5 * jhz}, "fid");
    if (!(c.fid.duration_s > 0)) throw ConfigError("fid.duration_s must be positive");
    if (!(c.fid.dt_s > 0) || !(c.fid.dt_s < 1.0 / (2.0 * jhz)))
        throw ConfigError("fid.dt_s must be positive and below the Nyquist limit 1/(2J)");
    if (c.fid.duration_s < 2 * c.fid.dt_s) throw ConfigError("fid.duration_s must cover at least two samples");
    if (!(c.fid.noise_sigma >= 0)) throw ConfigError("fid.noise_sigma must be >= 0");
    if (c.pad_factor < 1 || c.pad_factor > 64) throw ConfigError("fid.pad_factor must lie in [1, 64]");
    if (window.size() != 2 || !(window[0] < window[1])) throw ConfigError("fid.window_hz must be [lo, hi] with lo < hi");
    c.f_lo = window[0];
    c.f_hi = window[1];
    c.fid.t2_s = c.common.error_model.t2_s;
    c.fid.singlet_relaxation = c.common.error_model.singlet_relaxation_enabled;
    c.fid.t1_singlet_s = c.common.error_model.t1_singlet_s;
    c.fid.noise_seed = derive_seed(c.common.seed, 1);
    return c;
}

inline CommandResult run_fid(const FidCommand &c) {
    const Executor exec(c.common.system, c.common.error_model, c.common.execution);
    const Operator rho = exec.run(c.pulse, named_state(c.state, c.common.polarization));
    const FIDRecord fid = simulate_fid(c.common.system, rho, c.fid);
    const Spectrum spec = compute_spectrum(fid, c.pad_factor);
    const PeakEstimate peak = analyze_peak(spec, c.f_lo, c.f_hi);
    CommandResult r;
    r.outputs.add_csv("fid.csv", fid);
    r.outputs.add_csv("spectrum.csv", spec);
    r.outputs.add_json("fid_report.json", {{"peak_hz", peak.frequency_hz},
                                           {"fwhm_hz", peak.fwhm_hz},
                                           {"bin_width_hz", spec.df},
                                           {"peak_height", peak.height},
                                           {"fwhm_fit_points", peak.fit_points},
                                           {"samples", fid.samples.size()},
                                           {"state", c.state},
                                           {"pulse", c.pulse}});
    return r;
}

// scan

struct ScanCommand {
    CommonConfig common;
    std::string state = "adiabatic";
    Vec3 axis = Vec3::UnitX();
    std::vector<double> amplitudes;
    std::vector<ScanMode> modes = {ScanMode::collective, ScanMode::selective_s, ScanMode::selective_i};
    ScanOptions scan{};
};

inline ScanMode parse_scan_mode(const std::string &s) {
    if (s == "collective") return ScanMode::collective;
    if (s == "selective_S") return ScanMode::selective_s;
    if (s == "selective_I") return ScanMode::selective_i;
    throw ConfigError("unknown scan mode '" + s + "' (expected collective, selective_S or selective_I)");
}

inline ScanCommand parse_scan(const nlohmann::json &cfg, const Overrides &ov) {
    ScanCommand c;
    c.common = parse_common(cfg, "scan", ov, {"scan"});
    const auto j = detail::section(cfg, "scan");
    detail::check_keys(j, {"state", "axis", "amplitudes", "grid", "modes", "pulse_duration_s"}, "scan");
    c.state = detail::get<std::string>(j, "state", c.state, "scan");
    named_state(c.state, c.common.polarization);
    if (j.contains("axis")) c.axis = detail::parse_axis(j.at("axis"), "scan.axis");
    c.scan.pulse_duration_s = detail::get(j, "pulse_duration_s", c.scan.pulse_duration_s, "scan");
    c.scan.compiler = c.common.compiler;
    if (!(c.scan.pulse_duration_s > 0)) throw ConfigError("scan.pulse_duration_s must be positive");
    if (j.contains("amplitudes") && j.contains("grid")) throw ConfigError("scan: give either 'amplitudes' or 'grid'");
    if (j.contains("amplitudes")) {
        c.amplitudes = detail::get<std::vector<double>>(j, "amplitudes", {}, "scan");
    } else {
        // Default grid: theta_S from 0 to 2 pi.
        const auto g = detail::section(j, "grid");
        detail::check_keys(g, {"start_t", "stop_t", "count"}, "scan.grid");
        const double stop_default = kTwoPi / (c.common.system.gamma_s * c.scan.pulse_duration_s);
        const double start = detail::get(g, "start_t", 0.0, "scan.grid");
        const double stop = detail::get(g, "stop_t", stop_default, "scan.grid");
        const int count = detail::get(g, "count", 97, "scan.grid");
        if (count < 1) throw ConfigError("scan.grid.count must be >= 1");
        for (int i = 0; i < count; ++i)
            c.amplitudes.push_back(count == 1 ? start : start + (stop - start) * i / (count - 1));
    }
    if (c.amplitudes.empty()) throw ConfigError("scan: amplitude grid is empty");
    for (double b : c.amplitudes)
        if (!std::isfinite(b)) throw ConfigError("scan: amplitudes must be finite");
    if (j.contains("modes")) {
        c.modes.clear();
        for (const auto &m : detail::get<std::vector<std::string>>(j, "modes", {}, "scan")) c.modes.push_back(parse_scan_mode(m));
        if (c.modes.empty()) throw ConfigError("scan.modes is empty");
    }
    return c;
}

inline CommandResult run_scan(const ScanCommand &c) {
    const Executor exec(c.common.system, c.common.error_model, c.common.execution);
    const Operator rho0 = named_state(c.state, c.common.polarization);
    std::ostringstream csv;
    csv.precision(17);
    csv << "B_dc,signal,mode\n";
    nlohmann::json fits = nlohmann::json::object();
    for (ScanMode mode : c.modes) {
        const auto signal = amplitude_scan(exec, rho0, c.axis, c.amplitudes, mode, c.scan);
        for (std::size_t i = 0; i < signal.size(); ++i)
            csv << c.amplitudes[i] << ',' << signal[i] << ',' << to_string(mode) << '\n';
        const ScanFit fit = fit_scan(c.common.system, mode, c.amplitudes, signal, c.scan);
        fits[std::string(to_string(mode))] = {{"amplitude", fit.amplitude}, {"relative_residual", fit.relative_residual}};
    }
    CommandResult r;
    r.outputs.add("scan.csv", csv.str());
    r.outputs.add_json("scan_fit.json", {{"model", {{"collective", "A*(cos(theta_S)-cos(theta_I))"},
                                                    {"selective_S", "A*(cos(theta_S)-1)"},
                                                    {"selective_I", "A*(1-cos(theta_I))"}}},
                                         {"pulse_duration_s", c.scan.pulse_duration_s},
                                         {"fits", fits}});
    return r;
}

// rb

struct RbCommand {
    CommonConfig common;
    RBOptions rb{};
    RBFitOptions fit{};
};

inline RbCommand parse_rb(const nlohmann::json &cfg, const Overrides &ov) {
    RbCommand c;
    ErrorModel calibrated;
    calibrated.amplitude_miscalibration = kCalibratedAmplitudeMiscalibration;
    c.common = parse_common(cfg, "rb", ov, {"rb"}, calibrated);
    const auto j = detail::section(cfg, "rb");
    detail::check_keys(j, {"lengths", "k", "realization", "weighted_fit"}, "rb");
    c.rb.lengths = detail::get(j, "lengths", c.rb.lengths, "rb");
    c.rb.k = detail::get(j, "k", c.rb.k, "rb");
    const auto real = detail::get<std::string>(j, "realization", "compiled", "rb");
    if (real == "compiled")
        c.rb.realization = CliffordRealization::compiled;
    else if (real == "abstract")
        c.rb.realization = CliffordRealization::abstract_unitary;
    else
        throw ConfigError("rb.realization must be 'compiled' or 'abstract'");
    c.fit.weighted = detail::get(j, "weighted_fit", false, "rb");
    if (c.rb.k < 1) throw ConfigError("rb.k must be >= 1");
    if (c.rb.lengths.empty()) throw ConfigError("rb.lengths is empty");
    std::set<std::size_t> distinct(c.rb.lengths.begin(), c.rb.lengths.end());
    if (distinct.size() < 3) throw ConfigError("rb.lengths needs at least 3 distinct values");
    c.rb.seed = c.common.seed;
    c.rb.threads = c.common.threads;
    c.rb.execution = c.common.execution;
    c.rb.compiler = c.common.compiler;
    c.rb.polarization = c.common.polarization;
    return c;
}

inline CommandResult run_rb(const RbCommand &c) {
    const RBDataset data = zfnmr::run_rb(Executor(c.common.system, c.common.error_model, c.rb.execution), c.rb);
    CommandResult r;
    r.outputs.add_json("rb_dataset.json", data);
    r.outputs.add_csv("rb.csv", data);
    try {
        const RBFit fit = fit_rb_decay(data, c.fit);
        r.outputs.add_json("rb_fit.json", fit_report(fit, data));
    } catch (const ConvergenceError &e) {
        r.exit_code = kExitNonConvergence;
        r.message = e.what();
    } catch (const std::invalid_argument &e) {
        r.exit_code = kExitNonConvergence;
        r.message = std::string("RB fit failed: ") + e.what();
    }
    return r;
}

// tomo

struct TomoCommand {
    CommonConfig common;
    std::vector<std::string> preparations = {"sudden", "adiabatic"};
    double detector_noise = 0.0;
    double coefficient_noise = 0.0;
};

inline const std::set<std::string> &tomo_preparations() {
    static const std::set<std::string> s = {"sudden", "adiabatic", "cnot_sudden", "cnot_adiabatic"};
    return s;
}

inline TomoCommand parse_tomo(const nlohmann::json &cfg, const Overrides &ov) {
    TomoCommand c;
    c.common = parse_common(cfg, "tomo", ov, {"tomo"});
    const auto j = detail::section(cfg, "tomo");
    detail::check_keys(j, {"preparations", "detector_noise", "coefficient_noise"}, "tomo");
    c.preparations = detail::get(j, "preparations", c.preparations, "tomo");
    c.detector_noise = detail::get(j, "detector_noise", 0.0, "tomo");
    c.coefficient_noise = detail::get(j, "coefficient_noise", 0.0, "tomo");
    if (c.preparations.empty()) throw ConfigError("tomo.preparations is empty");
    for (const auto &p : c.preparations)
        if (!tomo_preparations().count(p)) throw ConfigError("unknown tomography preparation '" + p + "'");
    if (!(c.detector_noise >= 0) || !(c.coefficient_noise >= 0)) throw ConfigError("tomo noise levels must be >= 0");
    return c;
}

inline CommandResult run_tomo(const TomoCommand &c) {
    const Executor exec(c.common.system, c.common.error_model, c.common.execution);
    const PulseSchedule cnot = compile_cnot(c.common.system, c.common.compiler);
    CommandResult r;
    nlohmann::json summary = nlohmann::json::object();
    for (std::size_t i = 0; i < c.preparations.size(); ++i) {
        const std::string &name = c.preparations[i];
        const bool with_cnot = name.rfind("cnot_", 0) == 0;
        const Operator base = named_state(with_cnot ? name.substr(5) : name, c.common.polarization);
        const Operator prepared = with_cnot ? exec.run(cnot, base) : base;
        DetectorNoise noise(c.detector_noise, derive_seed(c.common.seed, 2, i));
        auto result = state_tomography_detailed(exec, [&] { return prepared; }, &noise, c.common.compiler);
        std::mt19937_64 rng(derive_seed(c.common.seed, 3, i));
        result.state = perturb_deviation(result.state, c.coefficient_noise, rng);
        r.outputs.add_json("tomo_" + name + ".json", result.state);
        r.outputs.add_csv("tomo_" + name + ".csv", result.state);
        summary[name] = {{"state_fidelity", state_fidelity(result.state, PauliVector::from_operator(prepared))},
                         {"condition_number", result.condition_number}};
    }
    r.outputs.add_json("tomo_summary.json", summary);
    return r;
}

// cnot

enum class PairSource { simulated_tomography, exact };

struct CnotCommand {
    CommonConfig common;
    std::vector<std::string> inputs = {"sudden", "adiabatic"};
    std::vector<double> weights;
    PairSource source = PairSource::simulated_tomography;
    double detector_noise = 0.0;
    double coefficient_noise = 0.0;
    ReconstructOptions reconstruct{};
    bool ideal_initial_guess = true;
};

inline CnotCommand parse_cnot(const nlohmann::json &cfg, const Overrides &ov) {
    CnotCommand c;
    c.common = parse_common(cfg, "cnot", ov, {"cnot"});
    const auto j = detail::section(cfg, "cnot");
    detail::check_keys(j, {"inputs", "weights", "pairs", "detector_noise", "coefficient_noise", "restarts", "norm",
                           "ideal_initial_guess", "gauge_tolerance"},
                       "cnot");
    c.inputs = detail::get(j, "inputs", c.inputs, "cnot");
    if (c.inputs.size() < 2) throw ConfigError("cnot.inputs needs at least two states");
    for (const auto &s : c.inputs) named_state(s, c.common.polarization);
    c.weights = detail::get(j, "weights", std::vector<double>(c.inputs.size(), 1.0), "cnot");
    if (c.weights.size() != c.inputs.size()) throw ConfigError("cnot.weights must match cnot.inputs");
    for (double w : c.weights)
        if (!(w > 0) || !std::isfinite(w)) throw ConfigError("cnot.weights must be positive");
    const auto src = detail::get<std::string>(j, "pairs", "simulated_tomography", "cnot");
    if (src == "simulated_tomography")
        c.source = PairSource::simulated_tomography;
    else if (src == "exact")
        c.source = PairSource::exact;
    else
        throw ConfigError("cnot.pairs must be 'simulated_tomography' or 'exact'");
    c.detector_noise = detail::get(j, "detector_noise", 0.0, "cnot");
    c.coefficient_noise = detail::get(j, "coefficient_noise", 0.0, "cnot");
    if (!(c.detector_noise >= 0) || !(c.coefficient_noise >= 0)) throw ConfigError("cnot noise levels must be >= 0");
    c.reconstruct.restarts = detail::get(j, "restarts", 20, "cnot");
    if (c.reconstruct.restarts < 1) throw ConfigError("cnot.restarts must be >= 1");
    const auto norm = detail::get<std::string>(j, "norm", "frobenius", "cnot");
    if (norm == "frobenius")
        c.reconstruct.norm = ReconstructionNorm::frobenius_squared;
    else if (norm == "l1")
        c.reconstruct.norm = ReconstructionNorm::l1;
    else
        throw ConfigError("cnot.norm must be 'frobenius' or 'l1'");
    c.reconstruct.gauge_tolerance = detail::get(j, "gauge_tolerance", c.reconstruct.gauge_tolerance, "cnot");
    if (!(c.reconstruct.gauge_tolerance > 0 && c.reconstruct.gauge_tolerance < 1))
        throw ConfigError("cnot.gauge_tolerance must lie in (0, 1)");
    c.ideal_initial_guess = detail::get(j, "ideal_initial_guess", true, "cnot");
    c.reconstruct.seed = derive_seed(c.common.seed, 4);
    c.reconstruct.threads = c.common.threads;
    if (c.ideal_initial_guess) c.reconstruct.initial_guesses = {cnot_matrix().matrix()};
    return c;
}

inline CommandResult run_cnot(const CnotCommand &c) {
    const Executor exec(c.common.system, c.common.error_model, c.common.execution);
    const PulseSchedule cnot = compile_cnot(c.common.system, c.common.compiler);
    std::vector<TomographyPair> pairs;
    nlohmann::json pair_json = nlohmann::json::array();
    for (std::size_t i = 0; i < c.inputs.size(); ++i) {
        const Operator in = named_state(c.inputs[i], c.common.polarization);
        const Operator out = exec.run(cnot, in);
        TomographyPair p;
        if (c.source == PairSource::exact) {
            p.input = PauliVector::from_operator(in);
            p.output = PauliVector::from_operator(out);
        } else {
            DetectorNoise noise(c.detector_noise, derive_seed(c.common.seed, 5, i));
            p.input = state_tomography(exec, [&] { return in; }, &noise, c.common.compiler);
            p.output = state_tomography(exec, [&] { return out; }, &noise, c.common.compiler);
        }
        std::mt19937_64 rng(derive_seed(c.common.seed, 6, i));
        p.input = perturb_deviation(p.input, c.coefficient_noise, rng);
        p.output = perturb_deviation(p.output, c.coefficient_noise, rng);
        p.weight = c.weights[i];
        pair_json.push_back({{"state", c.inputs[i]},
                             {"weight", p.weight},
                             {"input", p.input},
                             {"output", p.output},
                             {"input_fidelity", state_fidelity(p.input, PauliVector::from_operator(in))},
                             {"output_fidelity", state_fidelity(p.output, PauliVector::from_operator(out))}});
        pairs.push_back(std::move(p));
    }
    const Reconstruction rec = reconstruct_unitary(pairs, cnot_matrix().matrix(), c.reconstruct);
    nlohmann::json report = report_json(rec);
    report["schedule_duration_s"] = cnot.total_duration();
    CommandResult r;
    r.outputs.add_json("cnot_report.json", report);
    r.outputs.add_json("cnot_pairs.json", pair_json);
    r.outputs.add_json("cnot_schedule.json", cnot);
    if (!rec.converged) {
        r.exit_code = kExitNonConvergence;
        r.message = "reconstruction did not converge";
    }
    return r;
}

// Dispatch.

inline nlohmann::json load_config(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path.string() + "'");
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error &e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
}

/// Parses, validates and runs one subcommand. Output files and the sidecar
/// run.log (the only place timestamps appear) are written on success or on
/// numerical non-convergence; nothing is written on a config error.
inline int run(const std::string &subcommand, const std::filesystem::path &config_path, const Overrides &ov,
               std::ostream &log) {
    try {
        if (!subcommands().count(subcommand)) throw ConfigError("unknown subcommand '" + subcommand + "'");
        const nlohmann::json cfg = load_config(config_path);
        std::function<CommandResult()> job;
        std::filesystem::path out_dir;
        std::uint64_t seed = 0;
        int threads = 0;
        auto bind = [&](auto command, auto runner) {
            out_dir = command.common.out_dir;
            seed = command.common.seed;
            threads = command.common.threads;
            job = [command, runner] { return runner(command); };
        };
        try {
            if (subcommand == "fid") bind(parse_fid(cfg, ov), run_fid);
            if (subcommand == "scan") bind(parse_scan(cfg, ov), run_scan);
            if (subcommand == "rb") bind(parse_rb(cfg, ov), run_rb);
            if (subcommand == "tomo") bind(parse_tomo(cfg, ov), run_tomo);
            if (subcommand == "cnot") bind(parse_cnot(cfg, ov), run_cnot);
        } catch (const std::invalid_argument &e) {
            throw ConfigError(e.what());
        }

        const auto start = std::chrono::system_clock::now();
        CommandResult result = job();
        const auto paths = result.outputs.write(out_dir);
        const auto stop = std::chrono::system_clock::now();

        std::ostringstream sidecar;
        const std::time_t t0 = std::chrono::system_clock::to_time_t(start);
        sidecar << "started " << std::put_time(std::gmtime(&t0), "%Y-%m-%dT%H:%M:%SZ") << '\n'
                << "subcommand " << subcommand << '\n'
                << "config " << config_path.string() << '\n'
                << "seed " << seed << '\n'
                << "threads " << threads << '\n'
                << "elapsed_s " << std::chrono::duration<double>(stop - start).count() << '\n'
                << "exit " << result.exit_code << '\n';
        for (const auto &p : paths) sidecar << "wrote " << p.filename().string() << '\n';
        std::ofstream(out_dir / "run.log", std::ios::binary) << sidecar.str();

        for (const auto &p : paths) log << "wrote " << p.string() << '\n';
        if (result.exit_code != kExitOk) log << "error: " << result.message << '\n';
        return result.exit_code;
    } catch (const ConfigError &e) {
        log << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ConvergenceError &e) {
        log << "non-convergence: " << e.what() << '\n';
        return kExitNonConvergence;
    }
}

}  // namespace zfnmr::cli
