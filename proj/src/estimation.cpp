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

#include "cfmimo/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace cfmimo
{

PilotBook build_pilot_book(int tau_p, int N, int K, int pilot_reuse, Rng &rng)
{
    if (N < 1 || K < 1 || pilot_reuse < 1)
        throw ConfigError("build_pilot_book: N, K and pilot_reuse must be >= 1");
    if (tau_p < N)
        throw ConfigError("build_pilot_book: tau_p = " + std::to_string(tau_p) + " must be >= N = " + std::to_string(N));
    int available = tau_p / N;
    int groups = (K + pilot_reuse - 1) / pilot_reuse;
    if (available < groups)
        throw ConfigError("build_pilot_book: pilot capacity floor(tau_p / N) = " + std::to_string(available) +
                          " is below ceil(K / pilot_reuse) = " + std::to_string(groups));

    PilotBook book;
    book.tau_p = tau_p;
    book.N = N;

    // Unitary DFT scaled by sqrt(tau_p): every entry has unit modulus.
    CMat dft(tau_p, tau_p);
    for (int r = 0; r < tau_p; ++r)
        for (int c = 0; c < tau_p; ++c)
        {
            long long rc = static_cast<long long>(r) * c % tau_p;
            dft(r, c) = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(rc) / tau_p);
        }
    for (int t = 0; t < groups; ++t)
        book.pilots.push_back(dft.middleCols(t * N, N));

    std::vector<int> order(K);
    std::iota(order.begin(), order.end(), 0);
    if (pilot_reuse > 1)
        std::shuffle(order.begin(), order.end(), rng);

    book.assignment.assign(K, 0);
    std::vector<std::vector<int>> members(groups);
    for (int pos = 0; pos < K; ++pos)
    {
        int g = pos / pilot_reuse;
        book.assignment[order[pos]] = g;
        members[g].push_back(order[pos]);
    }
    book.coset.resize(K);
    for (int k = 0; k < K; ++k)
    {
        auto c = members[book.assignment[k]];
        std::sort(c.begin(), c.end());
        book.coset[k] = std::move(c);
    }
    return book;
}

std::vector<CMat> equal_power_precoders(int K, int N, double p)
{
    return std::vector<CMat>(K, CMat(std::sqrt(p / N) * CMat::Identity(N, N)));
}

CMat precoder_kron(const CMat &F, int M)
{
    return kron(F.transpose(), CMat::Identity(M, M));
}

PilotObservation pilot_observe(const ChannelRealization &rz, const LinkTable &stats, const PilotBook &book,
                               const std::vector<CMat> &F, double p_max)
{
    const int K = rz.K;
    const int L = rz.L;
    for (int k = 0; k < K; ++k)
    {
        double pw = F[k].squaredNorm();
        if (pw > p_max * (1.0 + 1e-12))
            throw ConfigError("pilot_observe: precoder of UE " + std::to_string(k) + " uses power " + std::to_string(pw) +
                              " above p_k = " + std::to_string(p_max));
    }

    PilotObservation obs;
    obs.K = K;
    obs.L = L;
    obs.y.resize(static_cast<std::size_t>(K) * L);
    obs.ybar.resize(obs.y.size());
    for (int l = 0; l < L; ++l)
    {
        CMat Y = rz.pilot_noise[l];
        for (int i = 0; i < K; ++i)
            Y.noalias() += rz.h(i, l) * F[i] * book.phi(i).transpose();
        for (int k = 0; k < K; ++k)
        {
            CMat Z = Y * book.phi(k).conjugate();
            CVec ybar = CVec::Zero(Z.size());
            for (int i : book.coset[k])
            {
                CMat m = stats(i, l).hbar * F[i];
                ybar += static_cast<double>(book.tau_p) * m.reshaped();
            }
            obs.y[static_cast<std::size_t>(k) * L + l] = Z.reshaped();
            obs.ybar[static_cast<std::size_t>(k) * L + l] = std::move(ybar);
        }
    }
    return obs;
}

LinkEstimator mmse_link_statistics(int k, int l, const LinkTable &stats, const PilotBook &book,
                                   const std::vector<CMat> &F, double sigma2)
{
    const int M = static_cast<int>(stats(k, l).hbar.rows());
    const int MN = static_cast<int>(stats(k, l).hbar.size());
    const double tp = book.tau_p;

    LinkEstimator e;
    e.C = stats(k, l).covariance();
    e.pi = sigma2 * CMat::Identity(MN, MN);
    for (int i : book.coset[k])
    {
        CMat Ft = precoder_kron(F[i], M);
        CMat Ci = i == k ? e.C : stats(i, l).covariance();
        e.pi.noalias() += tp * Ft * Ci * Ft.adjoint();
    }
    e.pi = hermitian_part(e.pi);

    HpdFactor fac(e.pi);
    e.pi_rcond = fac.rcond();
    CMat Ftk = precoder_kron(F[k], M);
    // gain = C Ft^H Pi^{-1} = (Pi^{-1} Ft C)^H since Pi and C are Hermitian.
    e.gain = fac.solve(CMat(Ftk * e.C)).adjoint();
    e.chat = hermitian_part(tp * e.gain * Ftk * e.C);
    e.cerr = hermitian_part(e.C - e.chat);
    return e;
}

CMat error_load(const CMat &cerr, const CMat &P, int M)
{
    const int N = static_cast<int>(P.rows());
    CMat X = P * P.adjoint();
    CMat out = CMat::Zero(M, M);
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b)
            out += X(a, b) * cerr.block(a * M, b * M, M, M);
    return hermitian_part(out);
}

EstimationStats estimation_statistics(const LinkTable &stats, const PilotBook &book, const std::vector<CMat> &F,
                                      const std::vector<CMat> &P, double sigma2)
{
    EstimationStats es;
    es.K = stats.K();
    es.L = stats.L();
    es.M = static_cast<int>(stats(0, 0).hbar.rows());
    es.N = static_cast<int>(stats(0, 0).hbar.cols());
    es.tau_p = book.tau_p;
    es.links.reserve(static_cast<std::size_t>(es.K) * es.L);
    for (int k = 0; k < es.K; ++k)
        for (int l = 0; l < es.L; ++l)
        {
            es.links.push_back(mmse_link_statistics(k, l, stats, book, F, sigma2));
            if (es.links.back().pi_rcond * 1e12 < 1.0)
                es.ill_conditioned = true;
        }
    es.cprime.assign(es.L, CMat::Zero(es.M, es.M));
    for (int l = 0; l < es.L; ++l)
        for (int k = 0; k < es.K; ++k)
            es.cprime[l] += error_load(es(k, l).cerr, P[k], es.M);
    return es;
}

CMat mmse_estimate(const CVec &y, const CVec &ybar, const CMat &hbar, const LinkEstimator &est)
{
    CVec h = hbar.reshaped() + est.gain * (y - ybar);
    return h.reshaped(hbar.rows(), hbar.cols());
}

EstimationOutput estimate_channels(const PilotObservation &obs, const LinkTable &stats, const EstimationStats &est)
{
    EstimationOutput out;
    out.K = obs.K;
    out.L = obs.L;
    out.hhat.reserve(obs.y.size());
    for (int k = 0; k < obs.K; ++k)
        for (int l = 0; l < obs.L; ++l)
            out.hhat.push_back(mmse_estimate(obs.y_at(k, l), obs.ybar_at(k, l), stats(k, l).hbar, est(k, l)));
    return out;
}

CMat eta(const CMat &chat, const CMat &Lmat, const CMat &D, const CMat &Rmat)
{
    const Eigen::Index N = Rmat.rows();
    if (D.rows() != Rmat.cols() || D.cols() != Rmat.cols() || chat.rows() % N != 0)
        throw std::invalid_argument("eta: dimension mismatch");
    const Eigen::Index M = chat.rows() / N;
    if (Lmat.cols() != M)
        throw std::invalid_argument("eta: dimension mismatch");
    CMat X = Rmat * D * Rmat.adjoint();
    CMat S = CMat::Zero(M, M);
    for (Eigen::Index a = 0; a < N; ++a)
        for (Eigen::Index b = 0; b < N; ++b)
            S += X(a, b) * chat.block(a * M, b * M, M, M);
    return Lmat * S * Lmat.adjoint();
}

CMat eta_tilde(const CMat &chat, const CMat &Lmat, const CMat &Dt, const CMat &Rmat)
{
    const Eigen::Index N = Rmat.rows();
    if (chat.rows() % N != 0)
        throw std::invalid_argument("eta_tilde: dimension mismatch");
    const Eigen::Index M = chat.rows() / N;
    if (Lmat.rows() != Dt.rows() || Dt.rows() != Dt.cols() || Lmat.cols() != M)
        throw std::invalid_argument("eta_tilde: dimension mismatch");
    CMat X = Lmat.adjoint() * Dt * Lmat;
    CMat Z(N, N);
    // Tr(Chat^{ba} X) = sum_{mn} [Chat^{ba}]_{mn} X_{nm}
    for (Eigen::Index a = 0; a < N; ++a)
        for (Eigen::Index b = 0; b < N; ++b)
            Z(a, b) = chat.block(b * M, a * M, M, M).cwiseProduct(X.transpose()).sum();
    return Rmat.adjoint() * Z * Rmat;
}

} // namespace cfmimo
