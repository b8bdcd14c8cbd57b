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

/// Operator algebra for a heteronuclear spin-1/2 pair (spin I = 1H, spin S = 13C).
///
/// Conventions used throughout the library:
///  * hbar = 1; energies and Hamiltonians are angular frequencies in rad/s.
///  * Spin operators are I_a = sigma_a / 2 (x) 1 and S_a = 1 (x) sigma_a / 2.
///  * Computational basis {|uu>, |ud>, |du>, |dd>}, spin I first, |u> = (1, 0).
///  * Coupled basis {|T+1>, |T0>, |T-1>, |S0>} with
///        |T0> = (|ud> + |du>) / sqrt(2),   |S0> = (|ud> - |du>) / sqrt(2).
///    The coupled basis diagonalizes the zero-field J Hamiltonian.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace zfnmr {

using Complex = std::complex<double>;
using Matrix4 = Eigen::Matrix4cd;
using Matrix2 = Eigen::Matrix2cd;
using Vec3 = Eigen::Vector3d;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Absolute tolerances, applied relative to max(1, max|entry|).
inline constexpr double kHermitianTolerance = 1e-12;
inline constexpr double kUnitaryTolerance = 1e-10;

enum class Basis { computational, coupled };
enum class OperatorKind { general, hermitian, unitary };
enum class Axis { x, y, z };
enum class Spin { I, S };

inline Vec3 axis_vector(Axis a) {
    switch (a) {
        case Axis::x: return Vec3::UnitX();
        case Axis::y: return Vec3::UnitY();
        case Axis::z: return Vec3::UnitZ();
    }
    throw std::invalid_argument("unknown axis");
}

inline std::string_view to_string(Axis a) {
    switch (a) {
        case Axis::x: return "x";
        case Axis::y: return "y";
        case Axis::z: return "z";
    }
    return "?";
}

inline std::string_view to_string(Spin s) { return s == Spin::I ? "I" : "S"; }

inline std::string_view to_string(Basis b) { return b == Basis::computational ? "computational" : "coupled"; }

namespace detail {

inline double max_abs(const Matrix4 &m) { return m.cwiseAbs().maxCoeff(); }

inline double hermiticity_defect(const Matrix4 &m) { return max_abs(m - m.adjoint()); }

inline double unitarity_defect(const Matrix4 &m) { return max_abs(m.adjoint() * m - Matrix4::Identity()); }

/// Columns are the coupled states written in the computational basis.
inline const Eigen::Matrix4d &coupled_transform() {
    static const Eigen::Matrix4d w = [] {
        const double r = 1.0 / std::sqrt(2.0);
        Eigen::Matrix4d m;
        // clang-format off
        m << 1, 0, 0, 0,
             0, r, 0, r,
             0, r, 0, -r,
             0, 0, 1, 0;
        // clang-format on
        return m;
    }();
    return w;
}

inline Matrix2 pauli(int k) {
    Matrix2 m;
    switch (k) {
        case 0: m << 1, 0, 0, 1; break;
        case 1: m << 0, 1, 1, 0; break;
        case 2: m << 0, Complex(0, -1), Complex(0, 1), 0; break;
        case 3: m << 1, 0, 0, -1; break;
        default: throw std::out_of_range("pauli index");
    }
    return m;
}

inline Matrix4 kron(const Matrix2 &a, const Matrix2 &b) {
    Matrix4 out;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
    return out;
}

}  // namespace detail

/// A 4x4 complex matrix with explicit basis metadata.
///
/// Hermitian- and unitary-tagged operators are checked on construction; the
/// tag is never inferred from the entries.
class Operator {
   public:
    Operator() : m_(Matrix4::Zero()) {}

    explicit Operator(const Matrix4 &m, Basis basis = Basis::computational,
                      OperatorKind kind = OperatorKind::general)
        : m_(m), basis_(basis), kind_(kind) {
        check_tag();
    }

    static Operator identity(Basis basis = Basis::computational) {
        return Operator(Matrix4::Identity(), basis, OperatorKind::unitary);
    }
    static Operator zero(Basis basis = Basis::computational) {
        return Operator(Matrix4::Zero(), basis, OperatorKind::hermitian);
    }
    static Operator hermitian(const Matrix4 &m, Basis basis = Basis::computational) {
        return Operator(m, basis, OperatorKind::hermitian);
    }
    static Operator unitary(const Matrix4 &m, Basis basis = Basis::computational) {
        return Operator(m, basis, OperatorKind::unitary);
    }

    const Matrix4 &matrix() const { return m_; }
    Basis basis() const { return basis_; }
    OperatorKind kind() const { return kind_; }
    bool is_hermitian() const { return kind_ == OperatorKind::hermitian; }
    bool is_unitary() const { return kind_ == OperatorKind::unitary; }
    Complex operator()(int row, int col) const { return m_(row, col); }

    /// Same operator expressed in another basis; the kind tag carries over.
    Operator in_basis(Basis target) const {
        if (target == basis_) return *this;
        const Matrix4 w = detail::coupled_transform().cast<Complex>();
        Matrix4 m = target == Basis::coupled ? Matrix4(w.transpose() * m_ * w) : Matrix4(w * m_ * w.transpose());
        if (kind_ == OperatorKind::hermitian) m = 0.5 * (m + m.adjoint());
        return Operator(m, target, kind_);
    }

    Operator adjoint() const { return Operator(m_.adjoint(), basis_, kind_); }
    Complex trace() const { return m_.trace(); }

    /// Drop the tag (e.g. before summing a unitary with something else).
    Operator as_general() const { return Operator(m_, basis_, OperatorKind::general); }

    /// Re-tag as Hermitian after numerically symmetrizing; throws if the
    /// entries are far from Hermitian.
    Operator as_hermitian() const {
        if (detail::hermiticity_defect(m_) > 1e-9 * std::max(1.0, detail::max_abs(m_)))
            throw std::invalid_argument("operator is not Hermitian");
        return Operator(0.5 * (m_ + m_.adjoint()), basis_, OperatorKind::hermitian);
    }

    friend Operator operator*(const Operator &a, const Operator &b) {
        require_same_basis(a, b);
        const bool unitary = a.is_unitary() && b.is_unitary();
        return Operator(a.m_ * b.m_, a.basis_, unitary ? OperatorKind::unitary : OperatorKind::general);
    }
    friend Operator operator+(const Operator &a, const Operator &b) {
        require_same_basis(a, b);
        const bool herm = a.is_hermitian() && b.is_hermitian();
        return Operator(a.m_ + b.m_, a.basis_, herm ? OperatorKind::hermitian : OperatorKind::general);
    }
    friend Operator operator-(const Operator &a, const Operator &b) {
        require_same_basis(a, b);
        const bool herm = a.is_hermitian() && b.is_hermitian();
        return Operator(a.m_ - b.m_, a.basis_, herm ? OperatorKind::hermitian : OperatorKind::general);
    }
    friend Operator operator*(double s, const Operator &a) {
        const auto kind = a.is_hermitian() ? OperatorKind::hermitian : OperatorKind::general;
        return Operator(s * a.m_, a.basis_, kind);
    }
    friend Operator operator*(Complex s, const Operator &a) { return Operator(s * a.m_, a.basis_); }

   private:
    static void require_same_basis(const Operator &a, const Operator &b) {
        if (a.basis_ != b.basis_) throw std::invalid_argument("operator basis mismatch");
    }

    void check_tag() const {
        const double scale = std::max(1.0, detail::max_abs(m_));
        if (!m_.allFinite()) throw std::invalid_argument("operator has non-finite entries");
        if (kind_ == OperatorKind::hermitian && detail::hermiticity_defect(m_) > kHermitianTolerance * scale)
            throw std::invalid_argument("Hermitian-tagged operator is not Hermitian");
        if (kind_ == OperatorKind::unitary && detail::unitarity_defect(m_) > kUnitaryTolerance)
            throw std::invalid_argument("unitary-tagged operator is not unitary");
    }

    Matrix4 m_;
    Basis basis_ = Basis::computational;
    OperatorKind kind_ = OperatorKind::general;
};

/// Physical constants of the spin pair.
struct SpinSystem {
    double gamma_i = kTwoPi * 42.577478e6;  ///< 1H, rad s^-1 T^-1
    double gamma_s = kTwoPi * 10.708399e6;  ///< 13C, rad s^-1 T^-1
    double j_hz = 222.2176;

    static SpinSystem physical() { return {}; }

    /// gamma_I / gamma_S = 4 exactly, so the composite-pulse identities hold
    /// to machine precision.
    static SpinSystem idealized() {
        SpinSystem s;
        s.gamma_s = s.gamma_i / 4.0;
        return s;
    }

    double gamma(Spin spin) const { return spin == Spin::I ? gamma_i : gamma_s; }
    double ratio() const { return gamma_i / gamma_s; }

    void validate() const {
        if (!(std::isfinite(gamma_i) && std::isfinite(gamma_s) && std::isfinite(j_hz)))
            throw std::invalid_argument("spin system parameters must be finite");
        if (!(j_hz > 0)) throw std::invalid_argument("J must be positive");
        if (!(gamma_i > gamma_s && gamma_s > 0)) throw std::invalid_argument("require gamma_I > gamma_S > 0");
    }
};

inline Operator spin_operator(Spin spin, Axis axis) {
    const int k = static_cast<int>(axis) + 1;
    const Matrix2 half = 0.5 * detail::pauli(k);
    const Matrix2 one = detail::pauli(0);
    return Operator::hermitian(spin == Spin::I ? detail::kron(half, one) : detail::kron(one, half));
}

/// n . I (or n . S) for an arbitrary direction.
inline Operator spin_operator(Spin spin, const Vec3 &n) {
    Matrix4 m = Matrix4::Zero();
    for (int a = 0; a < 3; ++a) m += n[a] * spin_operator(spin, static_cast<Axis>(a)).matrix();
    return Operator::hermitian(m);
}

inline Operator total_spin(Axis axis) { return spin_operator(Spin::I, axis) + spin_operator(Spin::S, axis); }

/// Unit Pauli products, spin-I factor first:
///   0: 1,  1-3: sigma_a (x) 1,  4-6: 1 (x) sigma_a,  7-15: sigma_a (x) sigma_b (a major).
/// Tr[P_i P_j] = 4 delta_ij.
inline const std::array<Operator, 16> &pauli_product_basis() {
    static const std::array<Operator, 16> basis = [] {
        std::array<Operator, 16> out;
        out[0] = Operator::hermitian(detail::kron(detail::pauli(0), detail::pauli(0)));
        for (int a = 1; a <= 3; ++a) {
            out[a] = Operator::hermitian(detail::kron(detail::pauli(a), detail::pauli(0)));
            out[3 + a] = Operator::hermitian(detail::kron(detail::pauli(0), detail::pauli(a)));
        }
        for (int a = 1; a <= 3; ++a)
            for (int b = 1; b <= 3; ++b)
                out[7 + 3 * (a - 1) + (b - 1)] = Operator::hermitian(detail::kron(detail::pauli(a), detail::pauli(b)));
        return out;
    }();
    return basis;
}

/// Product-operator style names; "IxSy" denotes sigma_x (x) sigma_y.
inline const std::array<std::string, 16> &pauli_labels() {
    static const std::array<std::string, 16> labels = {"1",    "Ix",   "Iy",   "Iz",   "Sx",   "Sy",
                                                       "Sz",   "IxSx", "IxSy", "IxSz", "IySx", "IySy",
                                                       "IySz", "IzSx", "IzSy", "IzSz"};
    return labels;
}

/// c_i = Re Tr[A P_i]; A = (1/4) sum_i c_i P_i for Hermitian A.
inline std::array<double, 16> pauli_coefficients(const Operator &a) {
    const Matrix4 m = a.in_basis(Basis::computational).matrix();
    std::array<double, 16> c{};
    const auto &basis = pauli_product_basis();
    for (int i = 0; i < 16; ++i) c[i] = (m * basis[i].matrix()).trace().real();
    return c;
}

inline Operator pauli_synthesis(const std::array<double, 16> &c) {
    Matrix4 m = Matrix4::Zero();
    const auto &basis = pauli_product_basis();
    for (int i = 0; i < 16; ++i) m += (0.25 * c[i]) * basis[i].matrix();
    return Operator::hermitian(0.5 * (m + m.adjoint()));
}

/// 2 pi J (I . S), rad/s.
inline Operator zero_field_hamiltonian(const SpinSystem &sys) {
    Matrix4 m = Matrix4::Zero();
    for (int a = 0; a < 3; ++a) {
        const auto ax = static_cast<Axis>(a);
        m += spin_operator(Spin::I, ax).matrix() * spin_operator(Spin::S, ax).matrix();
    }
    return Operator::hermitian(kTwoPi * sys.j_hz * m);
}

/// -sum_a B_a (gamma_I I_a + gamma_S S_a), rad/s, field in tesla.
inline Operator pulse_hamiltonian(const SpinSystem &sys, const Vec3 &field) {
    if (!field.allFinite()) throw std::invalid_argument("field components must be finite");
    Matrix4 m = Matrix4::Zero();
    for (int a = 0; a < 3; ++a) {
        if (field[a] == 0.0) continue;
        const auto ax = static_cast<Axis>(a);
        m -= field[a] *
             (sys.gamma_i * spin_operator(Spin::I, ax).matrix() + sys.gamma_s * spin_operator(Spin::S, ax).matrix());
    }
    return Operator::hermitian(m);
}

/// exp(-i H t) through the Hermitian eigendecomposition.
inline Operator propagator(const Operator &h, double t) {
    if (!(t >= 0) || !std::isfinite(t)) throw std::invalid_argument("propagation time must be finite and >= 0");
    const Matrix4 &m = h.matrix();
    if (detail::hermiticity_defect(m) > kHermitianTolerance * std::max(1.0, detail::max_abs(m)))
        throw std::invalid_argument("propagator requires a Hermitian generator");
    if (t == 0.0) return Operator::identity(h.basis());
    Eigen::SelfAdjointEigenSolver<Matrix4> eig(0.5 * (m + m.adjoint()));
    const auto &v = eig.eigenvectors();
    Eigen::Vector4cd phases;
    for (int k = 0; k < 4; ++k) phases[k] = std::polar(1.0, -eig.eigenvalues()[k] * t);
    return Operator::unitary(v * phases.asDiagonal() * v.adjoint(), h.basis());
}

/// U rho U^dagger; result re-symmetrized so the Hermitian tag stays exact.
inline Operator evolve(const Operator &rho, const Operator &u) {
    if (rho.basis() != u.basis()) throw std::invalid_argument("evolve: basis mismatch");
    if (detail::unitarity_defect(u.matrix()) > kUnitaryTolerance) throw std::invalid_argument("evolve: U is not unitary");
    Matrix4 out = u.matrix() * rho.matrix() * u.matrix().adjoint();
    if (!rho.is_hermitian()) return Operator(out, rho.basis());
    return Operator::hermitian(0.5 * (out + out.adjoint()), rho.basis());
}

inline Operator commutator(const Operator &a, const Operator &b) { return (a * b).as_general() - (b * a).as_general(); }

inline double max_abs(const Operator &a) { return detail::max_abs(a.matrix()); }

/// 1 - |Tr(U^dagger V)| / 4. Zero iff U and V agree up to a global phase.
inline double phase_invariant_distance(const Operator &u, const Operator &v) {
    const Operator vv = v.in_basis(u.basis());
    return std::max(0.0, 1.0 - std::abs((u.matrix().adjoint() * vv.matrix()).trace()) / 4.0);
}

/// exp(-i angle n.sigma/2) acting on one spin, identity on the other.
inline Operator spin_rotation(Spin spin, const Vec3 &axis, double angle) {
    if (angle < 0) return propagator(spin_operator(spin, Vec3(-axis)), -angle);
    return propagator(spin_operator(spin, axis), angle);
}

inline Operator spin_rotation(Spin spin, Axis axis, double angle) {
    return spin_rotation(spin, axis_vector(axis), angle);
}

/// Embed a 2x2 operator on one spin.
inline Operator embed(Spin spin, const Matrix2 &u) {
    const Matrix2 one = detail::pauli(0);
    const Matrix4 m = spin == Spin::I ? detail::kron(u, one) : detail::kron(one, u);
    return Operator(m);
}

}  // namespace zfnmr
