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

#include "cfmimo/selftest.hpp"

#include "cfmimo/detection.hpp"
#include "cfmimo/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

namespace cfmimo
{

ApStatistics white_ap(int M, int K, int N)
{
    ApStatistics ap;
    ap.hbar = CMat::Zero(M, K * N);
    for (int k = 0; k < K; ++k)
    {
        ap.chat.push_back(CMat::Identity(M * N, M * N));
        ap.P.push_back(CMat::Identity(N, N));
    }
    ap.cprime = CMat::Zero(M, M);
    ap.sigma2 = 1.0;
    return ap;
}

ApStatistics random_ap(int M, int K, int N, Rng &rng)
{
    ApStatistics ap;
    ap.sigma2 = 1.0;
    ap.hbar = complex_gaussian(M, K * N, rng, 0.5);
    for (int k = 0; k < K; ++k)
    {
        CMat W = complex_gaussian(M * N, M * N, rng);
        ap.chat.push_back(W * W.adjoint() / static_cast<double>(M * N));
        ap.P.push_back(CMat::Identity(N, N) * 0.8);
    }
    CMat Wc = complex_gaussian(M, M, rng);
    ap.cprime = Wc * Wc.adjoint() * (0.3 / M);
    return ap;
}

namespace
{

std::string fmt(const char *f, double a, double b = 0.0)
{
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

OracleResult finish(std::string name, double value, double tol, std::string detail)
{
    OracleResult r;
    r.name = std::move(name);
    r.value = value;
    r.tolerance = tol;
    r.passed = std::isfinite(value) && value <= tol;
    r.detail = std::move(detail);
    return r;
}

constexpr int kMpM = 8;
constexpr int kMpK = 2;
constexpr int kMpN = 2;

} // namespace

OracleResult mp_value_oracle(double perturb)
{
    double worst = 0.0;
    for (double z : {-0.5, -1.0, -2.0})
    {
        ApStatistics ap = white_ap(kMpM, kMpK, kMpN);
        CauchySolutionB s = solve_cauchy_b(ap, z);
        double ref = marchenko_pastur_cauchy(z, kMpM, kMpK * kMpN) + perturb;
        worst = std::max(worst, std::abs(s.cauchy() - ref));
    }
    return finish("marchenko_pastur_value", worst, 1e-6, "M = 8, N_tot = 4, z in {-0.5, -1, -2}");
}

OracleResult mp_derivative_oracle(double perturb)
{
    double worst = 0.0;
    for (double z : {-0.5, -1.0, -2.0})
    {
        ApStatistics ap = white_ap(kMpM, kMpK, kMpN);
        CauchySolutionB s = solve_cauchy_b(ap, z);
        cauchy_b_derivatives(ap, s);
        double ref = marchenko_pastur_cauchy_derivative(z, kMpM, kMpK * kMpN) + perturb;
        worst = std::max(worst, std::abs(s.cauchy_derivative() - ref));
    }
    return finish("marchenko_pastur_derivative", worst, 1e-5, "symbolic derivative of the closed form");
}

OracleResult finite_difference_oracle(int instances, std::uint64_t seed)
{
    Rng rng = make_stream(seed, Stream::Oracle, {1});
    std::uniform_int_distribution<int> dm(2, 8), dk(1, 3), dn(1, 2);
    std::uniform_real_distribution<double> dz(-2.0, -0.5);
    const double eps = 1e-4;
    double worst = 0.0;
    auto check = [&](const CMat &analytic, const CMat &plus, const CMat &minus)
    {
        CMat fd = (plus - minus) / (2.0 * eps);
        for (Eigen::Index i = 0; i < fd.size(); ++i)
        {
            double err = std::abs(analytic(i) - fd(i));
            worst = std::max(worst, err / (1e-6 + 1e-4 * std::abs(analytic(i))));
        }
    };
    for (int t = 0; t < instances; ++t)
    {
        int M = dm(rng), K = dk(rng), N = dn(rng);
        double z = dz(rng);
        ApStatistics ap = random_ap(M, K, N, rng);

        CauchySolutionB b = solve_cauchy_b(ap, z);
        cauchy_b_derivatives(ap, b);
        check(b.g_d1_prime, solve_cauchy_b(ap, z + eps).g_d1, solve_cauchy_b(ap, z - eps).g_d1);

        CauchySolutionBt bt = solve_cauchy_bt(ap, z);
        cauchy_bt_derivatives(ap, bt);
        check(bt.g_dt_prime, solve_cauchy_bt(ap, z + eps).g_dt, solve_cauchy_bt(ap, z - eps).g_dt);
    }
    return finish("finite_difference_derivative", worst, 1.0,
                  std::to_string(instances) + " instances, worst err / (1e-6 + 1e-4 |G'|)");
}

namespace
{

// One UE, one AP, M = N = 2, deterministic geometry.
struct SmallLink
{
    SystemConfig cfg;
    LinkTable links;
    PilotBook book;
    std::vector<CMat> F;
    EstimationStats est;
};

SmallLink small_link(std::uint64_t seed)
{
    SmallLink s;
    s.cfg.L = 1;
    s.cfg.K = 1;
    s.cfg.M = 2;
    s.cfg.N = 2;
    s.cfg.area_side = 400.0;
    Rng dep_rng = make_stream(seed, Stream::Deployment, {0});
    Deployment dep = make_deployment(s.cfg, dep_rng);
    s.links = build_link_stats(s.cfg, dep);
    Rng pilot_rng = make_stream(seed, Stream::PilotAssignment, {0});
    s.book = build_pilot_book(s.cfg.pilot_length(), s.cfg.N, s.cfg.K, s.cfg.pilot_reuse, pilot_rng);
    s.F = equal_power_precoders(s.cfg.K, s.cfg.N, s.cfg.p_k);
    s.est = estimation_statistics(s.links, s.book, s.F, s.F, s.cfg.sigma2);
    return s;
}

// Draws (error, estimate) pairs as vec'd columns.
template <class Fn>
void for_each_draw(const SmallLink &s, long draws, std::uint64_t seed, Fn &&fn)
{
    for (long t = 0; t < draws; ++t)
    {
        Rng rng = make_stream(seed, Stream::Oracle, {2, static_cast<std::uint64_t>(t)});
        ChannelRealization rz = draw_channel(s.links, s.cfg.sigma2, s.book.tau_p, rng);
        PilotObservation obs = pilot_observe(rz, s.links, s.book, s.F, s.cfg.p_k);
        EstimationOutput out = estimate_channels(obs, s.links, s.est);
        CVec hhat = out.h(0, 0).reshaped();
        CVec err = rz.h(0, 0).reshaped() - hhat;
        fn(err, hhat);
    }
}

} // namespace

OracleResult orthogonality_oracle(long draws, std::uint64_t seed)
{
    SmallLink s = small_link(seed);
    const Eigen::Index d = s.cfg.M * s.cfg.N;
    CMat sum = CMat::Zero(d, d);
    RMat sq = RMat::Zero(d, d);
    for_each_draw(s, draws, seed,
                  [&](const CVec &e, const CVec &h)
                  {
                      CMat x = e * h.adjoint();
                      sum += x;
                      sq += x.cwiseAbs2();
                  });
    const double n = static_cast<double>(draws);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < sum.size(); ++i)
    {
        cd mean = sum(i) / n;
        double var = std::max(sq(i) / n - std::norm(mean), 0.0);
        double se = std::sqrt(var / n);
        worst = std::max(worst, std::abs(mean) / se);
    }
    return finish("estimator_orthogonality", worst, 5.0,
                  std::to_string(draws) + " draws, worst |E[e hhat^H]| in standard errors");
}

OracleResult error_covariance_oracle(long draws, std::uint64_t seed, double tolerance)
{
    SmallLink s = small_link(seed);
    const Eigen::Index d = s.cfg.M * s.cfg.N;
    CMat sum = CMat::Zero(d, d);
    for_each_draw(s, draws, seed, [&](const CVec &e, const CVec &) { sum += e * e.adjoint(); });
    const CMat &ref = s.est(0, 0).cerr;
    double rel = (sum / static_cast<double>(draws) - ref).norm() / ref.norm();
    return finish("estimator_error_covariance", rel, tolerance,
                  std::to_string(draws) + " draws, relative Frobenius error");
}

OracleResult weight_optimality_oracle(int instances, int competitors, std::uint64_t seed)
{
    Rng rng = make_stream(seed, Stream::Oracle, {3});
    std::uniform_int_distribution<int> dl(1, 4), dm(1, 8), dn(1, 6);
    std::uniform_real_distribution<double> dlog(-6.0, 0.5);
    long violations = 0;
    double min_gap = std::numeric_limits<double>::infinity();
    for (int t = 0; t < instances; ++t)
    {
        const int L = dl(rng), M = dm(rng), Ntot = dn(rng);
        const double sigma2 = std::pow(10.0, dlog(rng));
        CMat P = CMat::Identity(Ntot, Ntot);
        std::vector<LocalMmse> local;
        for (int l = 0; l < L; ++l)
        {
            CMat hhat = complex_gaussian(M, Ntot, rng);
            CMat W = complex_gaussian(M, M, rng);
            local.push_back(local_mmse(hhat, P, W * W.adjoint() * (0.2 / M), sigma2));
        }
        CVec x = complex_gaussian_vec(Ntot, rng);
        WeightSystem ws = empirical_weights(x, local);

        // MSE from its definition: ||sum_l w_l Q_l x - x||^2 + sum_l |w_l|^2 Tr(U_l^H S_l U_l).
        auto mse = [&](const CVec &w)
        {
            CVec r = -x;
            double noise = 0.0;
            for (int l = 0; l < L; ++l)
            {
                r += w(l) * (local[l].Q * x);
                noise += std::norm(w(l)) * (local[l].U.adjoint() * local[l].S * local[l].U).trace().real();
            }
            return r.squaredNorm() + noise;
        };
        const double best = mse(ws.omega);
        const double slack = 1e-12 * std::max(1.0, std::abs(best));
        for (int c = 0; c < competitors; ++c)
        {
            double scale = std::pow(10.0, dlog(rng));
            CVec w = (c % 2 == 0) ? CVec(ws.omega + scale * complex_gaussian_vec(L, rng))
                                  : complex_gaussian_vec(L, rng);
            double gap = mse(w) - best;
            min_gap = std::min(min_gap, gap);
            if (gap < -slack)
                ++violations;
        }
    }
    return finish("combining_weight_optimality", static_cast<double>(violations), 0.0,
                  std::to_string(instances) + " instances x " + std::to_string(competitors) +
                      " competitors, smallest MSE gap " + fmt("%.3e", min_gap));
}

std::vector<OracleResult> run_selftest(bool perturb_mp)
{
    const double perturb = perturb_mp ? 1e-3 : 0.0;
    return {
        mp_value_oracle(perturb),
        mp_derivative_oracle(perturb),
        finite_difference_oracle(10, 1),
        orthogonality_oracle(20000, 1),
        error_covariance_oracle(20000, 1, 0.03),
        weight_optimality_oracle(50, 100, 1),
    };
}

} // namespace cfmimo
