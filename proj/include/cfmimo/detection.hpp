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

#ifndef CFMIMO_DETECTION_HPP
#define CFMIMO_DETECTION_HPP

#include "cfmimo/estimation.hpp"
#include "cfmimo/linalg.hpp"
#include "cfmimo/scenario.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace cfmimo
{

enum class Scheme
{
    FullyCentralized,
    OneShotEmpirical,
    OneShotAsymptotic,
    SmallCell,
};

std::string to_string(Scheme s);
Scheme parse_scheme(std::string_view name); // throws ConfigError

// ---------- stacking helpers ----------

/// [Hhat_1l ... Hhat_Kl], M x N_tot.
CMat stack_estimates(const EstimationOutput &est, int l);
/// [H_1l ... H_Kl], M x N_tot.
CMat stack_channels(const ChannelRealization &rz, int l);
/// All APs stacked vertically, M_tot x N_tot.
CMat stack_all_estimates(const EstimationOutput &est);
CMat stack_all_channels(const ChannelRealization &rz);
/// blkdiag(P_1, ..., P_K).
CMat block_precoder(const std::vector<CMat> &P);

// ---------- fully centralized ----------

/// U = (Hhat P P^H Hhat^H + C' + sigma2 I)^{-1} Hhat P.
CMat global_mmse(const CMat &hhat, const CMat &P, const CMat &cprime, double sigma2);

/// Per-UE log2 det(I + SINR_k) for one realization, with
/// SINR_k = P_k^H Hhat_k^H U_k (U_k^H Sigma_k U_k)^{-1} U_k^H Hhat_k P_k and
/// Sigma_k the interference-plus-noise matrix without UE k.
std::vector<double> fc_log2det(const CMat &hhat, const CMat &P, const CMat &cprime, double sigma2, int N);

// ---------- distributed ----------

struct LocalMmse
{
    CMat U; // M x N_tot
    CMat Q; // N_tot x N_tot, P^H Hhat^H U
    CMat S; // C'_l + sigma2 I
};

LocalMmse local_mmse(const CMat &hhat_l, const CMat &P, const CMat &cprime_l, double sigma2);

/// I - (B + I)^{-1} with B = P^H Hhat^H S^{-1} Hhat P.
CMat local_q_dual(const CMat &hhat_l, const CMat &P, const CMat &cprime_l, double sigma2);

enum class WeightSource
{
    Empirical,
    Trace,
    Asymptotic,
};

// The combining-weight system (v, A, Y) and its solution.
struct WeightSystem
{
    CVec v;
    CMat A;
    RVec Y; // diagonal of Y
    CVec omega;
    double x_norm2 = 0.0; // ||x||^2, or N_tot for the x-free forms
    double mse = 0.0;
    WeightSource source = WeightSource::Empirical;
    bool regularized = false;
    double imag_residual = 0.0; // max |Im omega_l| / max |omega_l|
};

/// omega = (A + Y)^{-1} v by Hermitian solve, regularized with
/// 1e-12 Tr(A + Y) / L I if the factorization fails.
WeightSystem solve_weight_system(CVec v, CMat A, RVec Y, double x_norm2, WeightSource source);

/// ||x||^2 + w^H (A + Y) w - 2 Re(v^H w).
double weight_mse(const WeightSystem &ws, const CVec &omega);

WeightSystem empirical_weights(const CVec &x, const std::vector<LocalMmse> &local);
WeightSystem trace_weights(const std::vector<LocalMmse> &local);

/// sum_l omega_l xhat_l
CVec combine(const std::vector<CVec> &xhat, const CVec &omega);

// ---------- spectral efficiency ----------

struct SEReport
{
    Scheme scheme = Scheme::FullyCentralized;
    std::vector<double> per_ue_se;
    double sum_se = 0.0;
    double stderr_sum = 0.0;
    double prelog = 1.0;
    long trials = 0;
};

// Running sums for the fully-centralized SE: mean of per-trial log-dets.
class FcAccumulator
{
public:
    explicit FcAccumulator(int K = 0) : sum_(K, 0.0) {}

    void add(const std::vector<double> &log2det);
    void merge(const FcAccumulator &other);
    SEReport report(double prelog) const;
    long count() const { return n_; }

private:
    std::vector<double> sum_;
    double total_ = 0.0;
    double total_sq_ = 0.0;
    long n_ = 0;
};

// Monte Carlo sums for the MMSE-SIC SE of K UEs:
// S_k = E[T_k block k], Gamma_k = E[T_k T_k^H] - S_k S_k^H + sigma2 E[sum_l |w_l|^2 U_kl^H U_kl],
// where T_k = sum_l w_l U_kl^H H_l P.
class SicAccumulator
{
public:
    SicAccumulator() = default;
    SicAccumulator(int K, int N);

    /// Adds one trial: per UE, T_k (N x N_tot) and the noise term sum_l |w_l|^2 U_kl^H U_kl.
    void add(const std::vector<CMat> &T, const std::vector<CMat> &noise_term, double sigma2);
    void merge(const SicAccumulator &other);
    void subtract(const SicAccumulator &other);

    /// log2 det(I + S^H Gamma^{-1} S) per UE, without prelog. Throws NumericError
    /// when Gamma is indefinite beyond -1e-10 relative.
    std::vector<double> log2det() const;
    long count() const { return n_; }

private:
    int K_ = 0;
    int N_ = 0;
    std::vector<CMat> s_;  // sum of own block
    std::vector<CMat> tt_; // sum of T T^H
    std::vector<CMat> nz_; // sum of sigma2 * noise term
    long n_ = 0;
};

/// One trial of the one-shot scheme with common weights omega.
void accumulate_oneshot(SicAccumulator &acc, const std::vector<LocalMmse> &local, const ChannelRealization &rz,
                        const CMat &P, const CVec &omega, double sigma2);

/// One trial of the small-cell scheme: UE k uses only AP nearest[k].
void accumulate_small_cell(SicAccumulator &acc, const std::vector<LocalMmse> &local,
                           const ChannelRealization &rz, const CMat &P, const std::vector<int> &nearest,
                           double sigma2);

/// SE from batch accumulators: point estimate from the merged sums and a
/// delete-one-batch jackknife standard error of the sum SE.
SEReport sic_report(Scheme scheme, const std::vector<SicAccumulator> &batches, double prelog);

} // namespace cfmimo

#endif
