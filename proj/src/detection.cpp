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

#include "cfmimo/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cfmimo
{

std::string to_string(Scheme s)
{
    switch (s)
    {
    case Scheme::FullyCentralized:
        return "fully_centralized";
    case Scheme::OneShotEmpirical:
        return "oneshot_empirical";
    case Scheme::OneShotAsymptotic:
        return "oneshot_asymptotic";
    case Scheme::SmallCell:
        return "small_cell";
    }
    return "unknown";
}

Scheme parse_scheme(std::string_view name)
{
    if (name == "fully_centralized" || name == "fc" || name == "FC")
        return Scheme::FullyCentralized;
    if (name == "oneshot_empirical")
        return Scheme::OneShotEmpirical;
    if (name == "oneshot_asymptotic")
        return Scheme::OneShotAsymptotic;
    if (name == "small_cell")
        return Scheme::SmallCell;
    throw ConfigError("unknown scheme '" + std::string(name) +
                      "' (expected fully_centralized, oneshot_empirical, oneshot_asymptotic or small_cell)");
}

// ---------- stacking helpers ----------

CMat stack_estimates(const EstimationOutput &est, int l)
{
    const auto &h0 = est.h(0, l);
    CMat out(h0.rows(), h0.cols() * est.K);
    for (int k = 0; k < est.K; ++k)
        out.middleCols(k * h0.cols(), h0.cols()) = est.h(k, l);
    return out;
}

CMat stack_channels(const ChannelRealization &rz, int l)
{
    const auto &h0 = rz.h(0, l);
    CMat out(h0.rows(), h0.cols() * rz.K);
    for (int k = 0; k < rz.K; ++k)
        out.middleCols(k * h0.cols(), h0.cols()) = rz.h(k, l);
    return out;
}

CMat stack_all_estimates(const EstimationOutput &est)
{
    const auto &h0 = est.h(0, 0);
    CMat out(h0.rows() * est.L, h0.cols() * est.K);
    for (int l = 0; l < est.L; ++l)
        out.middleRows(l * h0.rows(), h0.rows()) = stack_estimates(est, l);
    return out;
}

CMat stack_all_channels(const ChannelRealization &rz)
{
    const auto &h0 = rz.h(0, 0);
    CMat out(h0.rows() * rz.L, h0.cols() * rz.K);
    for (int l = 0; l < rz.L; ++l)
        out.middleRows(l * h0.rows(), h0.rows()) = stack_channels(rz, l);
    return out;
}

CMat block_precoder(const std::vector<CMat> &P)
{
    return block_diag(std::span<const CMat>(P.data(), P.size()));
}

// ---------- fully centralized ----------

namespace
{
CMat interference_plus_noise(const CMat &G, const CMat &cprime, double sigma2)
{
    CMat Sigma = G * G.adjoint() + cprime;
    Sigma.diagonal().array() += sigma2;
    return hermitian_part(Sigma);
}
} // namespace

CMat global_mmse(const CMat &hhat, const CMat &P, const CMat &cprime, double sigma2)
{
    CMat G = hhat * P;
    return HpdFactor(interference_plus_noise(G, cprime, sigma2)).solve(G);
}

std::vector<double> fc_log2det(const CMat &hhat, const CMat &P, const CMat &cprime, double sigma2, int N)
{
    CMat G = hhat * P;
    CMat Sigma = interference_plus_noise(G, cprime, sigma2);
    CMat U = HpdFactor(Sigma).solve(G);
    const int K = static_cast<int>(G.cols()) / N;
    std::vector<double> out(K, 0.0);
    for (int k = 0; k < K; ++k)
    {
        auto Gk = G.middleCols(k * N, N);
        auto Uk = U.middleCols(k * N, N);
        if (Gk.squaredNorm() == 0.0)
            continue;
        CMat Sigma_k = Sigma - Gk * Gk.adjoint();
        CMat a = Uk.adjoint() * Gk;
        CMat b = hermitian_part(Uk.adjoint() * Sigma_k * Uk);
        CMat sinr = a.adjoint() * HpdFactor(b).solve(a);
        out[k] = log2_det_identity_plus(sinr);
    }
    return out;
}

// ---------- distributed ----------

LocalMmse local_mmse(const CMat &hhat_l, const CMat &P, const CMat &cprime_l, double sigma2)
{
    LocalMmse out;
    CMat G = hhat_l * P;
    out.S = cprime_l;
    out.S.diagonal().array() += sigma2;
    out.S = hermitian_part(out.S);
    out.U = HpdFactor(hermitian_part(G * G.adjoint() + out.S)).solve(G);
    out.Q = hermitian_part(G.adjoint() * out.U);
    return out;
}

CMat local_q_dual(const CMat &hhat_l, const CMat &P, const CMat &cprime_l, double sigma2)
{
    CMat G = hhat_l * P;
    CMat S = cprime_l;
    S.diagonal().array() += sigma2;
    CMat B = hermitian_part(G.adjoint() * HpdFactor(S).solve(G));
    CMat IB = B;
    IB.diagonal().array() += 1.0;
    CMat I = CMat::Identity(B.rows(), B.cols());
    return hermitian_part(I - HpdFactor(IB).inverse());
}

WeightSystem solve_weight_system(CVec v, CMat A, RVec Y, double x_norm2, WeightSource source)
{
    WeightSystem ws;
    ws.v = std::move(v);
    ws.A = hermitian_part(A);
    ws.Y = std::move(Y);
    ws.x_norm2 = x_norm2;
    ws.source = source;

    CMat K = ws.A;
    K.diagonal() += ws.Y.cast<cd>();
    try
    {
        HpdFactor f(K);
        if (f.ill_conditioned(1e15))
            throw NumericError("weight system ill-conditioned");
        ws.omega = f.solve(ws.v);
    }
    catch (const NumericError &)
    {
        double reg = 1e-12 * std::abs(K.trace().real()) / static_cast<double>(K.rows());
        if (!(reg > 0.0))
            reg = 1e-300;
        K.diagonal().array() += reg;
        ws.omega = HpdFactor(K).solve(ws.v);
        ws.regularized = true;
    }
    double mag = ws.omega.cwiseAbs().maxCoeff();
    ws.imag_residual = mag > 0.0 ? ws.omega.imag().cwiseAbs().maxCoeff() / mag : 0.0;
    ws.mse = weight_mse(ws, ws.omega);
    return ws;
}

double weight_mse(const WeightSystem &ws, const CVec &omega)
{
    CVec Kw = ws.A * omega + ws.Y.cast<cd>().cwiseProduct(omega);
    return ws.x_norm2 + omega.dot(Kw).real() - 2.0 * ws.v.dot(omega).real();
}

WeightSystem empirical_weights(const CVec &x, const std::vector<LocalMmse> &local)
{
    const auto L = static_cast<Eigen::Index>(local.size());
    CVec v(L);
    CMat A(L, L);
    RVec Y(L);
    std::vector<CVec> Qx(L);
    for (Eigen::Index l = 0; l < L; ++l)
    {
        Qx[l] = local[l].Q * x;
        v(l) = x.dot(Qx[l]);
        Y(l) = (local[l].U.adjoint() * local[l].S * local[l].U).trace().real();
    }
    for (Eigen::Index l = 0; l < L; ++l)
        for (Eigen::Index m = 0; m < L; ++m)
            A(l, m) = Qx[l].dot(Qx[m]);
    return solve_weight_system(std::move(v), std::move(A), std::move(Y), x.squaredNorm(), WeightSource::Empirical);
}

WeightSystem trace_weights(const std::vector<LocalMmse> &local)
{
    const auto L = static_cast<Eigen::Index>(local.size());
    CVec v(L);
    CMat A(L, L);
    RVec Y(L);
    for (Eigen::Index l = 0; l < L; ++l)
    {
        v(l) = local[l].Q.trace();
        Y(l) = (local[l].U.adjoint() * local[l].S * local[l].U).trace().real();
        for (Eigen::Index m = 0; m < L; ++m)
            A(l, m) = (local[l].Q * local[m].Q).trace();
    }
    double n_tot = L > 0 ? static_cast<double>(local[0].Q.rows()) : 0.0;
    return solve_weight_system(std::move(v), std::move(A), std::move(Y), n_tot, WeightSource::Trace);
}

CVec combine(const std::vector<CVec> &xhat, const CVec &omega)
{
    if (xhat.empty() || static_cast<Eigen::Index>(xhat.size()) != omega.size())
        throw std::invalid_argument("combine: need one weight per local estimate");
    CVec out = CVec::Zero(xhat.front().size());
    for (std::size_t l = 0; l < xhat.size(); ++l)
    {
        if (xhat[l].size() != out.size())
            throw std::invalid_argument("combine: local estimates differ in length");
        out += omega(static_cast<Eigen::Index>(l)) * xhat[l];
    }
    return out;
}

// ---------- spectral efficiency ----------

void FcAccumulator::add(const std::vector<double> &log2det)
{
    double s = 0.0;
    for (std::size_t k = 0; k < log2det.size(); ++k)
    {
        sum_[k] += log2det[k];
        s += log2det[k];
    }
    total_ += s;
    total_sq_ += s * s;
    ++n_;
}

void FcAccumulator::merge(const FcAccumulator &o)
{
    for (std::size_t k = 0; k < sum_.size(); ++k)
        sum_[k] += o.sum_[k];
    total_ += o.total_;
    total_sq_ += o.total_sq_;
    n_ += o.n_;
}

SEReport FcAccumulator::report(double prelog) const
{
    SEReport r;
    r.scheme = Scheme::FullyCentralized;
    r.prelog = prelog;
    r.trials = n_;
    if (n_ == 0)
        return r;
    for (double s : sum_)
    {
        r.per_ue_se.push_back(prelog * s / static_cast<double>(n_));
        r.sum_se += r.per_ue_se.back();
    }
    if (n_ > 1)
    {
        double mean = total_ / n_;
        double var = std::max(0.0, (total_sq_ - n_ * mean * mean) / (n_ - 1));
        r.stderr_sum = prelog * std::sqrt(var / n_);
    }
    else
        r.stderr_sum = std::numeric_limits<double>::quiet_NaN();
    return r;
}

SicAccumulator::SicAccumulator(int K, int N)
    : K_(K), N_(N), s_(K, CMat::Zero(N, N)), tt_(K, CMat::Zero(N, N)), nz_(K, CMat::Zero(N, N))
{
}

void SicAccumulator::add(const std::vector<CMat> &T, const std::vector<CMat> &noise_term, double sigma2)
{
    for (int k = 0; k < K_; ++k)
    {
        s_[k] += T[k].middleCols(k * N_, N_);
        tt_[k].noalias() += T[k] * T[k].adjoint();
        nz_[k] += sigma2 * noise_term[k];
    }
    ++n_;
}

void SicAccumulator::merge(const SicAccumulator &o)
{
    if (K_ == 0)
    {
        *this = o;
        return;
    }
    for (int k = 0; k < K_; ++k)
    {
        s_[k] += o.s_[k];
        tt_[k] += o.tt_[k];
        nz_[k] += o.nz_[k];
    }
    n_ += o.n_;
}

void SicAccumulator::subtract(const SicAccumulator &o)
{
    for (int k = 0; k < K_; ++k)
    {
        s_[k] -= o.s_[k];
        tt_[k] -= o.tt_[k];
        nz_[k] -= o.nz_[k];
    }
    n_ -= o.n_;
}

std::vector<double> SicAccumulator::log2det() const
{
    std::vector<double> out(K_, 0.0);
    if (n_ == 0)
        return out;
    const double inv = 1.0 / static_cast<double>(n_);
    for (int k = 0; k < K_; ++k)
    {
        CMat S = s_[k] * inv;
        if (S.squaredNorm() == 0.0)
            continue;
        CMat Gamma = hermitian_part(tt_[k] * inv - S * S.adjoint() + nz_[k] * inv);
        RVec ev = hermitian_eigenvalues(Gamma);
        double scale = ev.cwiseAbs().maxCoeff();
        if (ev.minCoeff() < -1e-10 * scale)
            throw NumericError("SIC SE: interference covariance of UE " + std::to_string(k) +
                               " is indefinite (min eigenvalue " + std::to_string(ev.minCoeff()) + " after " +
                               std::to_string(n_) + " trials); increase the trial count");
        out[k] = log2_det_identity_plus(S.adjoint() * HpdFactor(Gamma).solve(S));
    }
    return out;
}

void accumulate_oneshot(SicAccumulator &acc, const std::vector<LocalMmse> &local, const ChannelRealization &rz,
                        const CMat &P, const CVec &omega, double sigma2)
{
    const int K = rz.K;
    const int L = rz.L;
    const Eigen::Index N = P.rows() / K;
    std::vector<CMat> HP(L);
    for (int l = 0; l < L; ++l)
        HP[l] = stack_channels(rz, l) * P;
    std::vector<CMat> T(K, CMat::Zero(N, P.cols()));
    std::vector<CMat> noise(K, CMat::Zero(N, N));
    for (int k = 0; k < K; ++k)
        for (int l = 0; l < L; ++l)
        {
            cd w = omega(l);
            if (w == cd(0.0))
                continue;
            auto Ukl = local[l].U.middleCols(k * N, N);
            T[k].noalias() += w * (Ukl.adjoint() * HP[l]);
            noise[k].noalias() += std::norm(w) * (Ukl.adjoint() * Ukl);
        }
    acc.add(T, noise, sigma2);
}

void accumulate_small_cell(SicAccumulator &acc, const std::vector<LocalMmse> &local,
                           const ChannelRealization &rz, const CMat &P, const std::vector<int> &nearest,
                           double sigma2)
{
    const int K = rz.K;
    const Eigen::Index N = P.rows() / K;
    std::vector<CMat> T(K);
    std::vector<CMat> noise(K);
    for (int k = 0; k < K; ++k)
    {
        int l = nearest[k];
        auto Ukl = local[l].U.middleCols(k * N, N);
        T[k] = Ukl.adjoint() * (stack_channels(rz, l) * P);
        noise[k] = Ukl.adjoint() * Ukl;
    }
    acc.add(T, noise, sigma2);
}

SEReport sic_report(Scheme scheme, const std::vector<SicAccumulator> &batches, double prelog)
{
    SEReport r;
    r.scheme = scheme;
    r.prelog = prelog;
    SicAccumulator total;
    for (const auto &b : batches)
        total.merge(b);
    r.trials = total.count();
    for (double v : total.log2det())
    {
        r.per_ue_se.push_back(prelog * v);
        r.sum_se += r.per_ue_se.back();
    }

    const std::size_t B = batches.size();
    if (B < 2)
    {
        r.stderr_sum = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    std::vector<double> theta(B);
    double mean = 0.0;
    for (std::size_t b = 0; b < B; ++b)
    {
        SicAccumulator rest = total;
        rest.subtract(batches[b]);
        double s = 0.0;
        for (double v : rest.log2det())
            s += prelog * v;
        theta[b] = s;
        mean += s;
    }
    mean /= static_cast<double>(B);
    double ss = 0.0;
    for (double t : theta)
        ss += (t - mean) * (t - mean);
    r.stderr_sum = std::sqrt(ss * static_cast<double>(B - 1) / static_cast<double>(B));
    return r;
}

} // namespace cfmimo
