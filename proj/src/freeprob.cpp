// SPDX-License-Identifier: Apache-2.0
//
// cfmimo - uplink detection simulator for UAV-based cell-free massive MIMO
// Copyright (C) 2026 The cfmimo authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include "cfmimo/freeprob.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cfmimo
{

namespace
{

struct PicardResult
{
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> history;
};

// Damped Picard iteration x <- (1 - lambda) x + lambda F(x). lambda starts at 1
// and is halved, down to the floor, whenever the residual grows.
template <class Map>
PicardResult damped_picard(std::vector<CMat> &x, Map &&map, const SolverOptions &opt, const std::string &what)
{
    PicardResult res;
    double lambda = 1.0;
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= opt.max_iter; ++it)
    {
        std::vector<CMat> fx;
        try
        {
            fx = map(x);
        }
        catch (const NumericError &e)
        {
            throw SolverError(what + ": iterate lost its sign structure at iteration " + std::to_string(it) + " (" +
                                  e.what() + ")",
                              res.history);
        }
        double r = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            r = std::max(r, sup_norm(fx[i] - x[i]));
        res.history.push_back(r);
        if (!std::isfinite(r))
            throw SolverError(what + ": non-finite residual at iteration " + std::to_string(it), res.history);
        if (r < opt.tol)
        {
            x = std::move(fx);
            res.iterations = it;
            res.residual = r;
            return res;
        }
        if (r > prev)
            lambda = std::max(0.5 * lambda, opt.lambda_floor);
        prev = r;
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] = hermitian_part((1.0 - lambda) * x[i] + lambda * fx[i]);
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s: no convergence after %d iterations (last residual %.3e, tol %.1e)",
                  what.c_str(), opt.max_iter, res.history.empty() ? 0.0 : res.history.back(), opt.tol);
    throw SolverError(buf, res.history);
}

// Inverse of a Hermitian matrix with known definiteness (sign = +1 or -1).
CMat signed_inverse(const CMat &A, int sign)
{
    if (sign > 0)
        return HpdFactor(A).inverse();
    return -HpdFactor(CMat(-A)).inverse();
}

CMat block(const CMat &A, int k, int N)
{
    return A.block(k * N, k * N, N, N);
}

// blkdiag_k f(k)
template <class F>
CMat block_diag_of(int K, int N, F &&f)
{
    CMat out = CMat::Zero(K * N, K * N);
    for (int k = 0; k < K; ++k)
        out.block(k * N, k * N, N, N) = f(k);
    return out;
}

CMat identity(Eigen::Index n)
{
    return CMat::Identity(n, n);
}

// Frozen quantities of the converged G_B iteration.
struct GramTerms
{
    CMat Linv; // (C' + sigma2 I)^{-1/2}
    CMat Gbar; // Linv hbar P
};

GramTerms gram_terms(const ApStatistics &ap)
{
    CMat Lambda = ap.cprime;
    Lambda.diagonal().array() += ap.sigma2;
    GramTerms t;
    t.Linv = hermitian_inv_sqrt(Lambda);
    t.Gbar = t.Linv * ap.hbar * block_precoder(ap.P);
    return t;
}

struct GramEval
{
    CMat Psi;
    CMat PsiT;
    CMat G1full;
    CMat G2;
};

GramEval gram_eval(const ApStatistics &ap, const GramTerms &t, double z, const CMat &G1, const CMat &G2)
{
    const int K = ap.K();
    const int N = ap.N();
    const int M = ap.M();
    GramEval e;
    e.Psi = z * identity(K * N) - block_diag_of(K, N, [&](int k)
                                                 { return eta_tilde(ap.chat[k], t.Linv, G2, ap.P[k]); });
    e.PsiT = identity(M);
    for (int k = 0; k < K; ++k)
        e.PsiT -= eta(ap.chat[k], t.Linv, block(G1, k, N), ap.P[k]);
    e.Psi = hermitian_part(e.Psi);
    e.PsiT = hermitian_part(e.PsiT);
    CMat PsiT_inv = signed_inverse(e.PsiT, +1);
    CMat Psi_inv = signed_inverse(e.Psi, -1);
    e.G1full = signed_inverse(hermitian_part(e.Psi - t.Gbar.adjoint() * PsiT_inv * t.Gbar), -1);
    e.G2 = signed_inverse(hermitian_part(e.PsiT - t.Gbar * Psi_inv * t.Gbar.adjoint()), +1);
    return e;
}

// Scaled copy of the AP statistics used by the G_Bt iteration: every power divided by sigma2.
struct InterferenceTerms
{
    std::vector<CMat> chat; // chat / sigma2
    CMat h;                 // hbar P / sigma
    CMat cp;                // C' / sigma2
    CMat c;                 // cp^{1/2}
};

InterferenceTerms interference_terms(const ApStatistics &ap)
{
    InterferenceTerms t;
    for (const auto &c : ap.chat)
        t.chat.push_back(c / ap.sigma2);
    t.h = ap.hbar * block_precoder(ap.P) / std::sqrt(ap.sigma2);
    t.cp = ap.cprime / ap.sigma2;
    t.c = hermitian_sqrt(t.cp);
    return t;
}

struct InterferenceEval
{
    CMat Phi;
    CMat PhiT;
    CMat Upsilon;
    CMat GDt;
    CMat GDfull;
};

InterferenceEval interference_eval(const ApStatistics &ap, const InterferenceTerms &t, double zs, const CMat &GDt, const CMat &GD)
{
    const int K = ap.K();
    const int N = ap.N();
    const int M = ap.M();
    const CMat I_M = identity(M);
    InterferenceEval e;
    e.Phi = zs * I_M;
    for (int i = 0; i < K; ++i)
        e.Phi -= eta(t.chat[i], I_M, block(GD, i, N), ap.P[i]);
    e.Phi = hermitian_part(e.Phi);
    e.PhiT = hermitian_part(block_diag_of(K, N, [&](int k)
                                          { return CMat(identity(N) - eta_tilde(t.chat[k], I_M, GDt, ap.P[k])); }));
    CMat Phi_inv = signed_inverse(e.Phi, -1);
    CMat PhiT_inv = signed_inverse(e.PhiT, +1);
    CMat inner = hermitian_part(I_M - t.c * Phi_inv * t.c);
    CMat side = t.c * Phi_inv * t.h;
    e.Upsilon = hermitian_part(side.adjoint() * HpdFactor(inner).solve(side));
    e.GDt = signed_inverse(hermitian_part(e.Phi - t.cp - t.h * PhiT_inv * t.h.adjoint()), -1);
    e.GDfull = signed_inverse(hermitian_part(e.PhiT - t.h.adjoint() * Phi_inv * t.h - e.Upsilon), +1);
    return e;
}

} // namespace

ApStatistics ap_statistics(const LinkTable &links, const EstimationStats &est, const std::vector<CMat> &P, int l,
                           double sigma2)
{
    ApStatistics ap;
    const int K = links.K();
    const auto &h0 = links(0, l).hbar;
    ap.hbar.resize(h0.rows(), h0.cols() * K);
    for (int k = 0; k < K; ++k)
    {
        ap.hbar.middleCols(k * h0.cols(), h0.cols()) = links(k, l).hbar;
        ap.chat.push_back(est(k, l).chat);
    }
    ap.P = P;
    ap.cprime = est.cprime[l];
    ap.sigma2 = sigma2;
    return ap;
}

// ---------- G_B ----------

CauchySolutionB solve_cauchy_b(const ApStatistics &ap, double z, const SolverOptions &opt, const CauchyBStart *start)
{
    if (!(z < 0.0))
        throw std::invalid_argument("solve_cauchy_b: z must be negative");
    const int n = ap.n_tot();
    const int M = ap.M();
    const int N = ap.N();
    GramTerms t = gram_terms(ap);

    std::vector<CMat> x(2);
    if (start)
    {
        x[0] = block_diag_projection(start->g_d1, N);
        x[1] = start->g_d2;
    }
    else
    {
        x[0] = identity(n) / z;
        x[1] = identity(M);
    }
    CMat G1full;
    auto map = [&](const std::vector<CMat> &s)
    {
        GramEval e = gram_eval(ap, t, z, s[0], s[1]);
        G1full = e.G1full;
        return std::vector<CMat>{block_diag_projection(e.G1full, N), e.G2};
    };
    PicardResult pr = damped_picard(x, map, opt, "G_B fixed point");

    CauchySolutionB sol;
    sol.z = z;
    sol.g_d1 = x[0];
    sol.g_d1_full = hermitian_part(G1full);
    sol.g_d2 = x[1];
    sol.iterations = pr.iterations;
    sol.residual = pr.residual;
    sol.history = std::move(pr.history);
    return sol;
}

void cauchy_b_derivatives(const ApStatistics &ap, CauchySolutionB &sol, const SolverOptions &opt)
{
    const int K = ap.K();
    const int N = ap.N();
    const int n = ap.n_tot();
    const int M = ap.M();
    GramTerms t = gram_terms(ap);
    GramEval base = gram_eval(ap, t, sol.z, sol.g_d1, sol.g_d2);
    const CMat Psi_inv = signed_inverse(base.Psi, -1);
    const CMat PsiT_inv = signed_inverse(base.PsiT, +1);
    const CMat &G1 = base.G1full;
    const CMat &G2 = base.G2;

    std::vector<CMat> x{block_diag_projection(-G1 * G1, N), CMat::Zero(M, M)};
    CMat X1full;
    auto map = [&](const std::vector<CMat> &s)
    {
        CMat dPsi = identity(n) - block_diag_of(K, N, [&](int k)
                                                { return eta_tilde(ap.chat[k], t.Linv, s[1], ap.P[k]); });
        CMat dPsiT = CMat::Zero(M, M);
        for (int k = 0; k < K; ++k)
            dPsiT -= eta(ap.chat[k], t.Linv, block(s[0], k, N), ap.P[k]);
        CMat dPsiT_inv = -PsiT_inv * dPsiT * PsiT_inv;
        CMat dPsi_inv = -Psi_inv * dPsi * Psi_inv;
        X1full = hermitian_part(-G1 * (dPsi - t.Gbar.adjoint() * dPsiT_inv * t.Gbar) * G1);
        CMat X2 = hermitian_part(-G2 * (dPsiT - t.Gbar * dPsi_inv * t.Gbar.adjoint()) * G2);
        return std::vector<CMat>{block_diag_projection(X1full, N), X2};
    };
    PicardResult pr = damped_picard(x, map, opt, "G_B derivative recursion");
    sol.g_d1_prime = x[0];
    sol.g_d1_prime_full = X1full;
    sol.g_d2_prime = x[1];
    sol.derivative_iterations = pr.iterations;
    sol.derivative_residual = pr.residual;
}

double cauchy_b_multistart_spread(const ApStatistics &ap, double z, int starts, Rng &rng, const SolverOptions &opt)
{
    CauchySolutionB ref = solve_cauchy_b(ap, z, opt);
    const int n = ap.n_tot();
    const int M = ap.M();
    double spread = 0.0;
    for (int s = 0; s < starts; ++s)
    {
        CMat W = complex_gaussian(n, n, rng);
        CMat V = complex_gaussian(M, M, rng);
        CauchyBStart st;
        st.g_d1 = -(W * W.adjoint() / static_cast<double>(n) + 0.1 * identity(n));
        st.g_d2 = V * V.adjoint() / static_cast<double>(M) + 0.1 * identity(M);
        CauchySolutionB alt = solve_cauchy_b(ap, z, opt, &st);
        spread = std::max({spread, sup_norm(alt.g_d1 - ref.g_d1), sup_norm(alt.g_d2 - ref.g_d2)});
    }
    return spread;
}

// ---------- G_Bt ----------

CauchySolutionBt solve_cauchy_bt(const ApStatistics &ap, double z, const SolverOptions &opt)
{
    if (!(z < 0.0))
        throw std::invalid_argument("solve_cauchy_bt: z must be negative");
    const int N = ap.N();
    const int n = ap.n_tot();
    const int M = ap.M();
    const double s2 = ap.sigma2;
    const double zs = z / s2;
    InterferenceTerms t = interference_terms(ap);

    std::vector<CMat> x{identity(M) / zs, identity(n)};
    InterferenceEval last;
    auto map = [&](const std::vector<CMat> &s)
    {
        last = interference_eval(ap, t, zs, s[0], s[1]);
        return std::vector<CMat>{last.GDt, block_diag_projection(last.GDfull, N)};
    };
    PicardResult pr = damped_picard(x, map, opt, "G_Bt fixed point");
    InterferenceEval fin = interference_eval(ap, t, zs, x[0], x[1]);

    CauchySolutionBt sol;
    sol.z = z;
    sol.g_dt = x[0] / s2;
    sol.g_d = x[1];
    sol.phi = fin.Phi * s2;
    sol.phi_t = fin.PhiT;
    sol.upsilon = fin.Upsilon;
    sol.iterations = pr.iterations;
    sol.residual = pr.residual;
    sol.history = std::move(pr.history);
    return sol;
}

namespace
{

struct BtDirection
{
    CMat dGDt; // scaled problem
    CMat dGD;
    PicardResult pr;
};

// Derivative of the scaled fixed point when zs I - C'/sigma2 moves along E.
// E = I is the z derivative.
BtDirection bt_direction(const ApStatistics &ap, const CauchySolutionBt &sol, const CMat &E,
                         const SolverOptions &opt, const std::string &what)
{
    const int K = ap.K();
    const int N = ap.N();
    const int n = ap.n_tot();
    const double s2 = ap.sigma2;
    const double zs = sol.z / s2;
    InterferenceTerms t = interference_terms(ap);
    const CMat I_M = identity(ap.M());
    InterferenceEval base = interference_eval(ap, t, zs, CMat(sol.g_dt * s2), sol.g_d);
    const CMat A_inv = signed_inverse(hermitian_part(base.Phi - t.cp), -1);
    const CMat PhiT_inv = signed_inverse(base.PhiT, +1);
    const CMat &GDt = base.GDt;
    const CMat &GD = base.GDfull;

    std::vector<CMat> x{GDt * E * GDt, CMat::Zero(n, n)};
    x[0] = -hermitian_part(x[0]);
    auto map = [&](const std::vector<CMat> &s)
    {
        CMat dPhi = E;
        for (int i = 0; i < K; ++i)
            dPhi -= eta(t.chat[i], I_M, block(s[1], i, N), ap.P[i]);
        CMat dPhiT = -block_diag_of(K, N, [&](int k) { return eta_tilde(t.chat[k], I_M, s[0], ap.P[k]); });
        CMat dPhiT_inv = -PhiT_inv * dPhiT * PhiT_inv;
        // h^H Phi^{-1} h + Upsilon = h^H (Phi - C')^{-1} h
        CMat dA_inv = -A_inv * dPhi * A_inv;
        CMat XDt = hermitian_part(-GDt * (dPhi - t.h * dPhiT_inv * t.h.adjoint()) * GDt);
        CMat XD = hermitian_part(-GD * (dPhiT - t.h.adjoint() * dA_inv * t.h) * GD);
        return std::vector<CMat>{XDt, block_diag_projection(XD, N)};
    };
    BtDirection out;
    out.pr = damped_picard(x, map, opt, what);
    out.dGDt = x[0];
    out.dGD = x[1];
    return out;
}

} // namespace

void cauchy_bt_derivatives(const ApStatistics &ap, CauchySolutionBt &sol, const SolverOptions &opt)
{
    const double s2 = ap.sigma2;
    BtDirection d = bt_direction(ap, sol, identity(ap.M()), opt, "G_Bt derivative recursion");
    sol.g_dt_prime = d.dGDt / (s2 * s2);
    sol.g_d_prime = d.dGD / s2;
    sol.derivative_iterations = d.pr.iterations;
    sol.derivative_residual = d.pr.residual;
}

void cauchy_bt_load_derivative(const ApStatistics &ap, CauchySolutionBt &sol, const SolverOptions &opt)
{
    const double s2 = ap.sigma2;
    CMat S = ap.cprime;
    S.diagonal().array() += s2;
    BtDirection d = bt_direction(ap, sol, CMat(-S / s2), opt, "G_Bt load derivative recursion");
    sol.g_dt_load = d.dGDt / s2;
    sol.load_iterations = d.pr.iterations;
    sol.load_residual = d.pr.residual;
}

// ---------- asymptotic combining weights ----------

AsymptoticWeights asymptotic_weight_system(const std::vector<ApStatistics> &aps, const SolverOptions &opt)
{
    AsymptoticWeights out;
    const auto L = static_cast<Eigen::Index>(aps.size());
    if (L == 0)
        throw std::invalid_argument("asymptotic_weight_system: no APs");
    const double n = aps.front().n_tot();
    auto track = [&](int it, double res)
    {
        out.max_iterations = std::max(out.max_iterations, it);
        out.max_residual = std::max(out.max_residual, res);
    };
    for (const auto &ap : aps)
    {
        CauchySolutionB b = solve_cauchy_b(ap, -1.0, opt);
        cauchy_b_derivatives(ap, b, opt);
        track(b.iterations, b.residual);
        track(b.derivative_iterations, b.derivative_residual);
        out.gram.push_back(std::move(b));

        CauchySolutionBt bt = solve_cauchy_bt(ap, -ap.sigma2, opt);
        cauchy_bt_derivatives(ap, bt, opt);
        cauchy_bt_load_derivative(ap, bt, opt);
        track(bt.iterations, bt.residual);
        track(bt.derivative_iterations, bt.derivative_residual);
        track(bt.load_iterations, bt.load_residual);
        out.interference.push_back(std::move(bt));
    }

    CVec v(L);
    CMat A(L, L);
    RVec Y(L);
    for (Eigen::Index l = 0; l < L; ++l)
    {
        const auto &b = out.gram[l];
        double trG = b.g_d1.trace().real();
        v(l) = n + trG;
        A(l, l) = n + 2.0 * trG - b.g_d1_prime.trace().real();
        for (Eigen::Index m = 0; m < L; ++m)
            if (m != l)
                A(l, m) = n + trG + out.gram[m].g_d1.trace().real() +
                          (b.g_d1_full * out.gram[m].g_d1_full).trace();

        CMat S = aps[l].cprime;
        S.diagonal().array() += aps[l].sigma2;
        const auto &bt = out.interference[l];
        // Tr(U^H S U) = -Tr(G S) - Tr(G S G S) with G = (zI - Bt)^{-1} at z = -sigma2.
        // The second term reduces to Tr(G^2 S S^H) only when C' is a multiple of I.
        Y(l) = -(bt.g_dt * S).trace().real() - (bt.g_dt_load * S).trace().real();
    }
    out.ws = solve_weight_system(std::move(v), std::move(A), std::move(Y), n, WeightSource::Asymptotic);
    return out;
}

double marchenko_pastur_cauchy(double z, int M, int n)
{
    const double a = n * z;
    const double b = -(z + n - M);
    const double disc = std::sqrt(b * b - 4.0 * a);
    // For z < 0 the roots have opposite signs; the Cauchy transform is the negative one.
    double r1 = (-b + disc) / (2.0 * a);
    double r2 = (-b - disc) / (2.0 * a);
    return r1 < 0.0 ? r1 : r2;
}

double marchenko_pastur_cauchy_derivative(double z, int M, int n)
{
    double g = marchenko_pastur_cauchy(z, M, n);
    // implicit differentiation of n z g^2 - (z + n - M) g + 1 = 0
    return (g - n * g * g) / (2.0 * n * z * g - (z + n - M));
}

} // namespace cfmimo
