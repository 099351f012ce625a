// Test-side oracles, deliberately built on routes the library does not
// take: the policy Q-function from the full (A*S)x(A*S) linear system,
// occupancies from truncated geometric series, and residual checks
// evaluated from the defining equations.
#pragma once

#include "dirl/mdp_core.hpp"
#include "dirl/types.hpp"

#include <cmath>

namespace bf {

using dirl::Kernel;
using dirl::Matrix;
using dirl::Real;
using dirl::Vector;

// Solves (I - gamma * P_k pi) q = r on the flattened index (a, s) -> a*S + s.
inline Matrix solve_q_full(const Kernel& kernel, const Matrix& pi, const Matrix& r, Real gamma) {
    const int A = static_cast<int>(kernel.size());
    const int S = static_cast<int>(kernel[0].rows());
    const int N = A * S;
    Matrix M = Matrix::Identity(N, N);
    for (int a = 0; a < A; ++a)
        for (int s = 0; s < S; ++s)
            for (int ap = 0; ap < A; ++ap)
                for (int sp = 0; sp < S; ++sp)
                    M(a * S + s, ap * S + sp) -= gamma * kernel[a](s, sp) * pi(ap, sp);
    Vector rhs(N);
    for (int a = 0; a < A; ++a)
        for (int s = 0; s < S; ++s) rhs(a * S + s) = r(a, s);
    const Vector qf = M.fullPivLu().solve(rhs);
    Matrix q(A, S);
    for (int a = 0; a < A; ++a)
        for (int s = 0; s < S; ++s) q(a, s) = qf(a * S + s);
    return q;
}

// Discounted state occupancy m = sum_t gamma^t rho_t by series summation.
inline Vector occupancy_series(const Kernel& kernel, const Matrix& pi, const Vector& rho0,
                               Real gamma, Real tail_tol = 1e-17) {
    const Matrix K = dirl::policy_chain(kernel, pi);
    Vector m = Vector::Zero(rho0.size());
    Vector rho_t = rho0;
    Real scale = 1.0;
    while (scale > tail_tol) {
        m += scale * rho_t;
        rho_t = K.transpose() * rho_t;
        scale *= gamma;
        if (gamma == 0.0) break;
    }
    return m;
}

// Conditional occupancy series started from (a, s): the chain takes one
// step through kernel[a] and follows pi afterwards.
inline Vector conditional_occupancy_series(const Kernel& kernel, const Matrix& pi, int a, int s,
                                           Real gamma, Real tail_tol = 1e-17) {
    const int S = static_cast<int>(kernel[0].rows());
    const Matrix K = dirl::policy_chain(kernel, pi);
    Vector m = Vector::Zero(S);
    Vector unit = Vector::Zero(S);
    unit(s) = 1.0;
    m += unit;
    Vector rho_t = kernel[a].row(s).transpose();
    Real scale = gamma;
    while (scale > tail_tol) {
        m += scale * rho_t;
        rho_t = K.transpose() * rho_t;
        scale *= gamma;
        if (gamma == 0.0) break;
    }
    return m;
}

// Sup-norm residual of the soft Bellman system, from its definition.
inline Real soft_bellman_residual(const Kernel& kernel, const Matrix& r, Real tau,
                                  const std::vector<int>& action_set, Real gamma,
                                  const Matrix& v) {
    const int S = static_cast<int>(kernel[0].rows());
    Vector V(S);
    for (int s = 0; s < S; ++s) {
        Real m = -std::numeric_limits<Real>::infinity();
        for (int a : action_set) m = std::max(m, (r(a, s) + gamma * v(a, s)) / tau);
        Real acc = 0.0;
        for (int a : action_set) acc += std::exp((r(a, s) + gamma * v(a, s)) / tau - m);
        V(s) = tau * (m + std::log(acc));
    }
    Real res = 0.0;
    for (std::size_t a = 0; a < kernel.size(); ++a)
        res = std::max(res, (kernel[a] * V - v.row(static_cast<Eigen::Index>(a)).transpose())
                                .cwiseAbs()
                                .maxCoeff());
    return res;
}

}  // namespace bf
