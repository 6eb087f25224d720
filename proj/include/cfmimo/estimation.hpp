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

#ifndef CFMIMO_ESTIMATION_HPP
#define CFMIMO_ESTIMATION_HPP

#include "cfmimo/linalg.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/scenario.hpp"

#include <vector>

namespace cfmimo
{

// Orthogonal pilot matrices and their assignment to UEs.
struct PilotBook
{
    int tau_p = 0;
    int N = 0;
    std::vector<CMat> pilots;             // tau_p x N each
    std::vector<int> assignment;          // UE -> pilot index
    std::vector<std::vector<int>> coset;  // UE -> co-pilot UEs, including itself

    const CMat &phi(int k) const { return pilots[assignment[k]]; }
    int K() const { return static_cast<int>(assignment.size()); }
};

/// DFT-block pilots. With pilot_reuse > 1 the UEs are shuffled with `rng` and
/// grouped in runs of pilot_reuse; with pilot_reuse = 1 UE k gets pilot k and
/// `rng` is not touched. Throws ConfigError when the book is too small.
PilotBook build_pilot_book(int tau_p, int N, int K, int pilot_reuse, Rng &rng);

/// F_k = P_k = sqrt(p / N) I_N for every UE.
std::vector<CMat> equal_power_precoders(int K, int N, double p);

/// F^T (x) I_M, so that vec(H F) = precoder_kron(F, M) vec(H).
CMat precoder_kron(const CMat &F, int M);

// De-spread pilot observations y_kl and their means, index k * L + l.
struct PilotObservation
{
    int K = 0;
    int L = 0;
    std::vector<CVec> y;
    std::vector<CVec> ybar;

    const CVec &y_at(int k, int l) const { return y[static_cast<std::size_t>(k) * L + l]; }
    const CVec &ybar_at(int k, int l) const { return ybar[static_cast<std::size_t>(k) * L + l]; }
};

/// Y_l = sum_i H_il F_i Phi_i^T + N_l, y_kl = vec(Y_l conj(Phi_k)).
/// Throws ConfigError if some Tr(F_k F_k^H) exceeds p_max.
PilotObservation pilot_observe(const ChannelRealization &rz, const LinkTable &stats, const PilotBook &book,
                               const std::vector<CMat> &F, double p_max);

// Trial-independent MMSE quantities of one link.
struct LinkEstimator
{
    CMat C;    // prior covariance T^T (x) R
    CMat gain; // C Ft^H Pi^{-1}
    CMat pi;   // tau_p sum_{i in U_k} Ft_i C_il Ft_i^H + sigma2 I
    CMat chat; // estimate covariance
    CMat cerr; // error covariance C - chat
    double pi_rcond = 0.0;
};

/// Precomputed statistics for every link plus the aggregated per-AP error load.
struct EstimationStats
{
    int K = 0;
    int L = 0;
    int M = 0;
    int N = 0;
    int tau_p = 0;
    std::vector<LinkEstimator> links; // index k * L + l
    std::vector<CMat> cprime;         // per AP, M x M
    bool ill_conditioned = false;     // some Pi had condition number above 1e12

    const LinkEstimator &operator()(int k, int l) const { return links[static_cast<std::size_t>(k) * L + l]; }
};

/// MMSE statistics of link (k, l).
LinkEstimator mmse_link_statistics(int k, int l, const LinkTable &stats, const PilotBook &book,
                                   const std::vector<CMat> &F, double sigma2);

/// Builds all link statistics and the per-AP error loads for data precoders P.
EstimationStats estimation_statistics(const LinkTable &stats, const PilotBook &book, const std::vector<CMat> &F,
                                      const std::vector<CMat> &P, double sigma2);

/// hhat = hbar + gain (y - ybar), reshaped to M x N.
CMat mmse_estimate(const CVec &y, const CVec &ybar, const CMat &hbar, const LinkEstimator &est);

// Channel estimates of one coherence block, index k * L + l.
struct EstimationOutput
{
    int K = 0;
    int L = 0;
    std::vector<CMat> hhat;

    const CMat &h(int k, int l) const { return hhat[static_cast<std::size_t>(k) * L + l]; }
};

EstimationOutput estimate_channels(const PilotObservation &obs, const LinkTable &stats, const EstimationStats &est);

/// Error load of one link: [C'_kl]_{mn} = sum_{ab} [P P^H]_{ab} [Ctilde^{ab}]_{mn},
/// where Ctilde^{ab} is the (a, b) M x M sub-block.
CMat error_load(const CMat &cerr, const CMat &P, int M);

/// L (sum_{ab} [R D R^H]_{ab} Chat^{ab}) L^H, the expectation of (L Ht R) D (L Ht R)^H
/// for vec(Ht) ~ CN(0, Chat).
CMat eta(const CMat &chat, const CMat &Lmat, const CMat &D, const CMat &Rmat);

/// R^H [Tr(Chat^{ba} L^H Dt L)]_{ab} R, the expectation of (L Ht R)^H Dt (L Ht R).
CMat eta_tilde(const CMat &chat, const CMat &Lmat, const CMat &Dt, const CMat &Rmat);

} // namespace cfmimo

#endif
