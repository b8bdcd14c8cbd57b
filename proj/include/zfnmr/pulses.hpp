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

/// Pulse schedules and the composite DC-pulse compiler.
///
/// A dc_pulse with unit axis a, amplitude B >= 0 and duration tau evolves under
/// -B a.(gamma_I I + gamma_S S), i.e. it rotates spin I by -gamma_I B tau and
/// spin S by -gamma_S B tau about a. The compiler therefore points the field
/// along -n to rotate by a positive angle about n.

#include "zfnmr/spincore.hpp"

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace zfnmr {

enum class SegmentKind { dc_pulse, delay };

struct PulseSegment {
    SegmentKind kind = SegmentKind::delay;
    Vec3 axis = Vec3::Zero();
    double amplitude_t = 0.0;
    double duration_s = 0.0;

    static PulseSegment dc_pulse(const Vec3 &axis, double amplitude_t, double duration_s) {
        PulseSegment s{SegmentKind::dc_pulse, axis, amplitude_t, duration_s};
        s.validate();
        return s;
    }
    static PulseSegment delay(double duration_s) {
        PulseSegment s{SegmentKind::delay, Vec3::Zero(), 0.0, duration_s};
        s.validate();
        return s;
    }

    bool is_pulse() const { return kind == SegmentKind::dc_pulse; }
    Vec3 field() const { return amplitude_t * axis; }

    void validate() const {
        if (!(duration_s >= 0) || !std::isfinite(duration_s)) throw std::invalid_argument("segment duration must be >= 0");
        if (kind == SegmentKind::dc_pulse) {
            if (!axis.allFinite() || std::abs(axis.norm() - 1.0) > 1e-12)
                throw std::invalid_argument("dc_pulse axis must be a unit vector");
            if (!std::isfinite(amplitude_t)) throw std::invalid_argument("dc_pulse amplitude must be finite");
        }
    }

    friend bool operator==(const PulseSegment &a, const PulseSegment &b) {
        return a.kind == b.kind && a.axis == b.axis && a.amplitude_t == b.amplitude_t && a.duration_s == b.duration_s;
    }
};

struct PulseSchedule {
    std::string label;
    std::vector<PulseSegment> segments;

    double total_duration() const {
        double t = 0.0;
        for (const auto &s : segments) t += s.duration_s;
        return t;
    }

    /// Appends `later`, which then acts after everything already here.
    PulseSchedule &append(const PulseSchedule &later) {
        segments.insert(segments.end(), later.segments.begin(), later.segments.end());
        return *this;
    }

    friend bool operator==(const PulseSchedule &, const PulseSchedule &) = default;
};

struct CompilerConfig {
    double pi_pulse_duration_s = 50e-6;  ///< calibrated pi pulse on S
    double max_field_t = 1e-3;           ///< only used for flagging, never enforced
};

/// dc_pulse along `axis` with gamma_target * B * duration = pi.
inline PulseSegment calibrate_pi_pulse(const SpinSystem &sys, Spin target, double duration_s,
                                       const Vec3 &axis = Vec3::UnitX()) {
    if (!(duration_s > 0)) throw std::invalid_argument("pi-pulse duration must be positive");
    const double amplitude = std::numbers::pi / (sys.gamma(target) * duration_s);
    return PulseSegment::dc_pulse(axis, amplitude, duration_s);
}

namespace detail {

inline Vec3 checked_unit_axis(const Vec3 &axis) {
    if (!axis.allFinite() || std::abs(axis.norm() - 1.0) > 1e-12) throw std::invalid_argument("rotation axis must be a unit vector");
    return axis;
}

/// Axis of the refocusing pi pulses: orthogonal to n, z preferred, else x.
inline Vec3 refocusing_axis(const Vec3 &n) {
    const Vec3 ref = std::abs(n.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
    return (ref - ref.dot(n) * n).normalized();
}

/// Rotation of `spin` by `angle` about n using the calibrated field amplitude.
inline PulseSegment rotation_segment(const SpinSystem &sys, double amplitude, Spin spin, const Vec3 &n, double angle) {
    const Vec3 dir = angle >= 0 ? Vec3(-n) : n;
    return PulseSegment::dc_pulse(dir, amplitude, std::abs(angle) / (sys.gamma(spin) * amplitude));
}

}  // namespace detail

/// Four-segment composite: half rotation, pi on S, half rotation, pi on S.
/// The second half keeps the sign for target I and flips it for target S; the
/// refocusing pi pulses are orthogonal to the rotation axis so the spectator
/// accumulates no net rotation (exactly, when gamma_I / gamma_S = 4).
inline PulseSchedule compile_selective_rotation(const SpinSystem &sys, Spin target, const Vec3 &axis, double angle,
                                                const CompilerConfig &cfg = {}) {
    if (target != Spin::I && target != Spin::S) throw std::invalid_argument("unsupported target spin");
    if (!std::isfinite(angle)) throw std::invalid_argument("rotation angle must be finite");
    const Vec3 n = detail::checked_unit_axis(axis);
    const PulseSegment pi_s = calibrate_pi_pulse(sys, Spin::S, cfg.pi_pulse_duration_s, -detail::refocusing_axis(n));
    const double amp = pi_s.amplitude_t;
    const double half = 0.5 * angle;
    const double second = target == Spin::I ? half : -half;

    PulseSchedule out;
    out.label = std::string(to_string(target)) + "_rot(" + std::to_string(angle) + ")";
    out.segments = {detail::rotation_segment(sys, amp, target, n, half), pi_s,
                    detail::rotation_segment(sys, amp, target, n, second), pi_s};
    return out;
}

inline PulseSchedule compile_selective_rotation(const SpinSystem &sys, Spin target, Axis axis, double angle,
                                                const CompilerConfig &cfg = {}) {
    auto out = compile_selective_rotation(sys, target, axis_vector(axis), angle, cfg);
    out.label = std::string(to_string(target)) + std::string(to_string(axis)) + "(" + std::to_string(angle) + ")";
    return out;
}

/// z-pi on S, delay t_p/2, reversed z-pi on S, delay t_p/2, with
/// t_p = theta / (2 pi J). Ideal action: exp(-i theta I_z S_z).
inline PulseSchedule compile_uzz(const SpinSystem &sys, double theta, const CompilerConfig &cfg = {}) {
    if (!(theta > 0) || !std::isfinite(theta)) throw std::invalid_argument("U_zz angle must be positive");
    const double tp = theta / (kTwoPi * sys.j_hz);
    const PulseSegment forward = calibrate_pi_pulse(sys, Spin::S, cfg.pi_pulse_duration_s, -Vec3::UnitZ());
    PulseSegment reverse = forward;
    reverse.axis = Vec3::UnitZ();
    PulseSchedule out;
    out.label = "Uzz(" + std::to_string(theta) + ")";
    out.segments = {forward, PulseSegment::delay(0.5 * tp), reverse, PulseSegment::delay(0.5 * tp)};
    return out;
}

/// CNOT with control I and target S, flipping S when I is down:
/// time order U_y^S(pi/2), U_zz(pi), U_x^S(pi/2), U_z^S(-pi/2), U_z^I(pi/2).
inline PulseSchedule compile_cnot(const SpinSystem &sys, const CompilerConfig &cfg = {}) {
    constexpr double h = std::numbers::pi / 2;
    PulseSchedule out;
    out.label = "CNOT";
    out.append(compile_selective_rotation(sys, Spin::S, Axis::y, h, cfg))
        .append(compile_uzz(sys, std::numbers::pi, cfg))
        .append(compile_selective_rotation(sys, Spin::S, Axis::x, h, cfg))
        .append(compile_selective_rotation(sys, Spin::S, Axis::z, -h, cfg))
        .append(compile_selective_rotation(sys, Spin::I, Axis::z, h, cfg));
    return out;
}

/// Segments whose field amplitude exceeds the configured limit.
inline std::vector<std::size_t> segments_over_field_limit(const PulseSchedule &sched, const CompilerConfig &cfg = {}) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < sched.segments.size(); ++i)
        if (sched.segments[i].is_pulse() && std::abs(sched.segments[i].amplitude_t) > cfg.max_field_t) out.push_back(i);
    return out;
}

inline Operator segment_propagator(const SpinSystem &sys, const PulseSegment &seg, bool include_j_during_pulses) {
    if (!seg.is_pulse()) return propagator(zero_field_hamiltonian(sys), seg.duration_s);
    Operator h = pulse_hamiltonian(sys, seg.field());
    if (include_j_during_pulses) h = h + zero_field_hamiltonian(sys);
    return propagator(h, seg.duration_s);
}

/// Time-ordered product of the segment propagators.
inline Operator schedule_propagator(const SpinSystem &sys, const PulseSchedule &sched, bool include_j_during_pulses) {
    Operator u = Operator::identity();
    for (const auto &seg : sched.segments) u = segment_propagator(sys, seg, include_j_during_pulses) * u;
    return u;
}

// Ideal targets for the compiler.

inline Operator ideal_rotation(Spin target, const Vec3 &axis, double angle) { return spin_rotation(target, axis, angle); }
inline Operator ideal_rotation(Spin target, Axis axis, double angle) { return spin_rotation(target, axis, angle); }

inline Operator ideal_uzz(double theta) {
    const Operator zz = Operator::hermitian(spin_operator(Spin::I, Axis::z).matrix() * spin_operator(Spin::S, Axis::z).matrix());
    return propagator(zz, theta);
}

/// Flip S when I is |d>: rows/cols in {|uu>,|ud>,|du>,|dd>}.
inline Operator cnot_matrix() {
    Matrix4 m;
    // clang-format off
    m << 1, 0, 0, 0,
         0, 1, 0, 0,
         0, 0, 0, 1,
         0, 0, 1, 0;
    // clang-format on
    return Operator::unitary(m);
}

// JSON interchange: {label, segments:[{kind, axis:[x,y,z], amplitude_T, duration_s}]}

inline void to_json(nlohmann::json &j, const PulseSegment &s) {
    j = nlohmann::json{{"kind", s.kind == SegmentKind::dc_pulse ? "dc_pulse" : "delay"},
                       {"axis", {s.axis.x(), s.axis.y(), s.axis.z()}},
                       {"amplitude_T", s.amplitude_t},
                       {"duration_s", s.duration_s}};
}

inline void from_json(const nlohmann::json &j, PulseSegment &s) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "dc_pulse")
        s.kind = SegmentKind::dc_pulse;
    else if (kind == "delay")
        s.kind = SegmentKind::delay;
    else
        throw std::invalid_argument("unknown segment kind '" + kind + "'");
    const auto axis = j.value("axis", std::vector<double>{0, 0, 0});
    if (axis.size() != 3) throw std::invalid_argument("segment axis must have 3 components");
    s.axis = Vec3(axis[0], axis[1], axis[2]);
    s.amplitude_t = j.value("amplitude_T", 0.0);
    s.duration_s = j.at("duration_s").get<double>();
    s.validate();
}

inline void to_json(nlohmann::json &j, const PulseSchedule &s) {
    j = nlohmann::json{{"label", s.label}, {"segments", s.segments}};
}

inline void from_json(const nlohmann::json &j, PulseSchedule &s) {
    s.label = j.value("label", std::string{});
    s.segments = j.at("segments").get<std::vector<PulseSegment>>();
}

}  // namespace zfnmr
