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

// Test oracles written independently of the library internals.

#include "zfnmr/spincore.hpp"

#include <random>

namespace zfnmr::testing {

/// exp(A) by scaling and squaring with a 30-term Taylor series.
inline Matrix4 taylor_expm(const Matrix4 &a) {
    int squarings = 0;
    double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
    while (norm > 0.25) {
        norm /= 2;
        ++squarings;
    }
    const Matrix4 scaled = a / std::pow(2.0, squarings);
    Matrix4 term = Matrix4::Identity(), sum = Matrix4::Identity();
    for (int k = 1; k <= 30; ++k) {
        term = term * scaled / static_cast<double>(k);
        sum += term;
    }
    for (int i = 0; i < squarings; ++i) sum = sum * sum;
    return sum;
}

inline Matrix2 sigma(int k) {
    Matrix2 m;
    switch (k) {
        case 1: m << 0, 1, 1, 0; break;
        case 2: m << 0, Complex(0, -1), Complex(0, 1), 0; break;
        case 3: m << 1, 0, 0, -1; break;
        default: m.setIdentity();
    }
    return m;
}

/// Kronecker product written out entry by entry.
inline Matrix4 kron2(const Matrix2 &a, const Matrix2 &b) {
    Matrix4 m;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l) m(2 * i + k, 2 * j + l) = a(i, j) * b(k, l);
    return m;
}

inline Matrix4 random_hermitian(std::mt19937_64 &rng, double scale = 1.0) {
    std::normal_distribution<double> g;
    Matrix4 m;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) m(i, j) = Complex(g(rng), g(rng));
    return scale * 0.5 * (m + m.adjoint());
}

inline Matrix4 random_unitary(std::mt19937_64 &rng) {
    return taylor_expm(Complex(0, -1) * random_hermitian(rng, 2.0));
}

/// Random density matrix near the identity, as in thermal NMR ensembles.
inline Matrix4 random_density(std::mt19937_64 &rng, double deviation = 1e-3) {
    Matrix4 d = random_hermitian(rng);
    d -= (d.trace() / 4.0) * Matrix4::Identity();
    return 0.25 * Matrix4::Identity() + deviation * d;
}

inline double distance_up_to_phase(const Matrix4 &u, const Matrix4 &v) {
    return 1.0 - std::abs((u.adjoint() * v).trace()) / 4.0;
}

}  // namespace zfnmr::testing
