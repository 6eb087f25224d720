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

#ifndef CFMIMO_FREEPROB_HPP
#define CFMIMO_FREEPROB_HPP

#include "cfmimo/detection.hpp"
#include "cfmimo/estimation.hpp"
#include "cfmimo/linalg.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/scenario.hpp"

#include <vector>

namespace cfmimo
{

struct SolverOptions
{
    double tol = 1e-10;            // sup-norm change between iterates
    int max_iter = 2000;
    double lambda_floor = 1.0 / 64.0;
};

// Statistics of one AP that the deterministic equivalents depend on.
struct ApStatistics
{
    CMat hbar;              // M x N_tot, [hbar_1l ... hbar_Kl]
    std::vector<CMat> chat; // per UE, MN x MN estimate covariance
    std::vector<CMat> P;    // per UE, N x N data precoder
    CMat cprime;            // M x M error load
    double sigma2 = 1.0;

    int M() const { return static_cast<int>(hbar.rows()); }
    int K() const { return static_cast<int>(P.size()); }
    int N() const { return static_cast<int>(P.front().rows()); }
    int n_tot() const { return K() * N(); }
};

ApStatistics ap_statistics(const LinkTable &links, const EstimationStats &est, const std::vector<CMat> &P, int l,
                           double sigma2);

// ---------- G_B(z) for B = P^H Hhat^H (C' + sigma2 I)^{-1} Hhat P ----------

struct CauchySolutionB
{
    double z = 0.0;
    CMat g_d1;            // block-diagonal projection, N_tot x N_tot
    CMat g_d1_full;       // unprojected right-hand side, approximates E[(zI - B)^{-1}]
    CMat g_d2;            // M x M
    CMat g_d1_prime;      // d/dz of g_d1 (block-diagonal)
    CMat g_d1_prime_full; // d/dz of g_d1_full
    CMat g_d2_prime;
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> history;
    int derivative_iterations = 0;
    double derivative_residual = 0.0;

    /// Tr(G_D1) / N_tot
    double cauchy() const { return g_d1.trace().real() / static_cast<double>(g_d1.rows()); }
    /// d/dz of cauchy(); note (1/N_tot) Tr (zI - B)^{-2} = -cauchy_derivative().
    double cauchy_derivative() const { return g_d1_prime.trace().real() / static_cast<double>(g_d1.rows()); }
};

// Optional starting point, used by the uniqueness check.
struct CauchyBStart
{
    CMat g_d1; // block diagonal, negative definite
    CMat g_d2; // positive definite
};

CauchySolutionB solve_cauchy_b(const ApStatistics &ap, double z, const SolverOptions &opt = {},
                            const CauchyBStart *start = nullptr);

/// Solves the linear recursion for d/dz (G_D1, G_D2) with the base solution frozen.
void cauchy_b_derivatives(const ApStatistics &ap, CauchySolutionB &sol, const SolverOptions &opt = {});

/// Solves from `starts` random sign-correct initializations and returns the
/// largest sup-norm distance between any of them and the default start.
double cauchy_b_multistart_spread(const ApStatistics &ap, double z, int starts, Rng &rng,
                               const SolverOptions &opt = {});

// ---------- G_{Bt,Xi}(z) for Bt = Hhat P P^H Hhat^H + C' ----------

struct CauchySolutionBt
{
    double z = 0.0;
    CMat g_dt;       // M x M
    CMat g_d;        // N_tot x N_tot, block diagonal
    CMat g_dt_prime; // d/dz
    CMat g_d_prime;
    CMat g_dt_load;  // d/dt of G_Dt for Bt + t S, S = C' + sigma2 I; approximates E[G S G]
    CMat phi;
    CMat phi_t;
    CMat upsilon;
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> history;
    int derivative_iterations = 0;
    double derivative_residual = 0.0;
    int load_iterations = 0;
    double load_residual = 0.0;

    /// Tr(G_Dt Xi) / M
    cd cauchy(const CMat &Xi) const { return (g_dt * Xi).trace() / static_cast<double>(g_dt.rows()); }
    cd cauchy_derivative(const CMat &Xi) const
    {
        return (g_dt_prime * Xi).trace() / static_cast<double>(g_dt.rows());
    }
};

/// The iteration runs on the problem scaled by 1 / sigma2; results are on the original scale.
CauchySolutionBt solve_cauchy_bt(const ApStatistics &ap, double z, const SolverOptions &opt = {});
void cauchy_bt_derivatives(const ApStatistics &ap, CauchySolutionBt &sol, const SolverOptions &opt = {});
/// Fills g_dt_load. Needs a converged base solution.
void cauchy_bt_load_derivative(const ApStatistics &ap, CauchySolutionBt &sol, const SolverOptions &opt = {});

// ---------- asymptotic combining weights ----------

struct AsymptoticWeights
{
    WeightSystem ws;
    std::vector<CauchySolutionB> gram;
    std::vector<CauchySolutionBt> interference;
    int max_iterations = 0;       // over all base and derivative solves
    double max_residual = 0.0;
};

/// v, A, Y from statistics only, with G_B at z = -1 and G_Bt at z = -sigma2.
AsymptoticWeights asymptotic_weight_system(const std::vector<ApStatistics> &aps, const SolverOptions &opt = {});

/// Closed-form Marchenko-Pastur Cauchy transform: the negative root of
/// n z g^2 - (z + n - M) g + 1 = 0 (white M x n channel, unit noise).
double marchenko_pastur_cauchy(double z, int M, int n);
/// Its derivative with respect to z.
double marchenko_pastur_cauchy_derivative(double z, int M, int n);

} // namespace cfmimo

#endif
