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
#include "cfmimo/selftest.hpp"

#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace cfmimo;
using namespace cfmimo::test;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace
{

// Statistics without any randomness left: Hhat = hbar.
ApStatistics deterministic_ap(int M, int K, int N, Rng &rng)
{
    ApStatistics ap = random_ap(M, K, N, rng);
    for (auto &c : ap.chat)
        c.setZero();
    return ap;
}

CMat draw_hhat(const ApStatistics &ap, const std::vector<CMat> &roots, Rng &rng)
{
    const int M = ap.M(), N = ap.N();
    CMat H = ap.hbar;
    for (int k = 0; k < ap.K(); ++k)
    {
        CVec w = roots[k] * complex_gaussian_vec(M * N, rng);
        H.middleCols(k * N, N) += w.reshaped(M, N);
    }
    return H;
}

std::vector<CMat> roots_of(const ApStatistics &ap)
{
    std::vector<CMat> r;
    for (const auto &c : ap.chat)
        r.push_back(hermitian_sqrt(c));
    return r;
}

CMat lambda_of(const ApStatistics &ap)
{
    CMat S = ap.cprime;
    S.diagonal().array() += ap.sigma2;
    return S;
}

bool negative_definite(const CMat &A) { return hermitian_eigenvalues(A).maxCoeff() < 0.0; }
bool positive_definite(const CMat &A) { return hermitian_eigenvalues(A).minCoeff() > 0.0; }

} // namespace

TEST_CASE("Marchenko-Pastur closed form", "[freeprob]")
{
    for (double z : {-0.1, -1.0, -7.0})
        for (auto [M, n] : {std::pair{8, 4}, std::pair{4, 8}, std::pair{16, 16}})
        {
            double g = marchenko_pastur_cauchy(z, M, n);
            CHECK(g < 0.0);
            CHECK(std::abs(n * z * g * g - (z + n - M) * g + 1.0) < 1e-12);
            double h = 1e-6;
            double fd = (marchenko_pastur_cauchy(z + h, M, n) - marchenko_pastur_cauchy(z - h, M, n)) / (2 * h);
            CHECK_THAT(marchenko_pastur_cauchy_derivative(z, M, n), WithinRel(fd, 1e-6));
        }
}

TEST_CASE("G_B reproduces Marchenko-Pastur for white channels", "[freeprob]")
{
    CHECK(mp_value_oracle().passed);
    CHECK(mp_derivative_oracle().passed);
    CHECK_FALSE(mp_value_oracle(1e-3).passed);
    CHECK_FALSE(mp_derivative_oracle(1e-3).passed);
}

TEST_CASE("G_B without estimate randomness is the exact resolvent", "[freeprob]")
{
    Rng rng(1);
    ApStatistics ap = deterministic_ap(4, 2, 2, rng);
    const double z = -0.7;
    CMat G = hermitian_inv_sqrt(lambda_of(ap)) * ap.hbar * block_precoder(ap.P);
    CMat B = G.adjoint() * G;
    CMat R = (z * CMat::Identity(4, 4) - B).inverse();
    CauchySolutionB s = solve_cauchy_b(ap, z);
    cauchy_b_derivatives(ap, s);
    CHECK((s.g_d1_full - R).norm() < 1e-10 * R.norm());
    CHECK((s.g_d1 - block_diag_projection(R, 2)).norm() < 1e-10 * R.norm());
    // True derivative: d/dz (zI - B)^{-1} = -(zI - B)^{-2}.
    CHECK((s.g_d1_prime_full + R * R).norm() < 1e-8 * (R * R).norm());
    CHECK_THAT(s.cauchy_derivative(), WithinRel(-(R * R).trace().real() / 4.0, 1e-8));
}

TEST_CASE("G_B matches a Monte Carlo resolvent", "[freeprob]")
{
    Rng rng(2);
    const int M = 32, K = 8, N = 2;
    const double z = -1.0;
    ApStatistics white = white_ap(M, K, N);
    auto roots = roots_of(white);
    double mc = 0.0;
    const int draws = 200;
    for (int d = 0; d < draws; ++d)
    {
        CMat H = draw_hhat(white, roots, rng);
        mc += (z * CMat::Identity(K * N, K * N) - H.adjoint() * H).inverse().trace().real() / (K * N);
    }
    mc /= draws;
    CHECK_THAT(solve_cauchy_b(white, z).cauchy(), WithinRel(mc, 1e-2));

    ApStatistics ap = random_ap(M, 4, 2, rng);
    roots = roots_of(ap);
    CMat Linv = hermitian_inv_sqrt(lambda_of(ap));
    CMat P = block_precoder(ap.P);
    CMat acc = CMat::Zero(8, 8);
    for (int d = 0; d < draws; ++d)
    {
        CMat G = Linv * draw_hhat(ap, roots, rng) * P;
        acc += (z * CMat::Identity(8, 8) - G.adjoint() * G).inverse();
    }
    acc /= draws;
    CauchySolutionB s = solve_cauchy_b(ap, z);
    CHECK_THAT(s.cauchy(), WithinRel(acc.trace().real() / 8.0, 2e-2));
    CHECK((s.g_d1 - block_diag_projection(acc, 2)).norm() < 0.05 * acc.norm());
}

TEST_CASE("G_Bt without estimate randomness is the exact resolvent", "[freeprob]")
{
    Rng rng(3);
    ApStatistics ap = deterministic_ap(5, 2, 2, rng);
    ap.sigma2 = 0.4;
    const double z = -0.4;
    CMat h = ap.hbar * block_precoder(ap.P);
    CMat Bt = h * h.adjoint() + ap.cprime;
    CMat R = (z * CMat::Identity(5, 5) - Bt).inverse();
    CauchySolutionBt s = solve_cauchy_bt(ap, z);
    cauchy_bt_derivatives(ap, s);
    CHECK((s.g_dt - R).norm() < 1e-10 * R.norm());
    CHECK((s.g_dt_prime + R * R).norm() < 1e-8 * (R * R).norm());
    CHECK(std::abs(s.cauchy(CMat::Zero(5, 5))) == 0.0);
}

TEST_CASE("G_Bt matches a Monte Carlo resolvent", "[freeprob]")
{
    Rng rng(4);
    const int M = 32, K = 4, N = 2;
    ApStatistics ap = random_ap(M, K, N, rng);
    ap.sigma2 = 0.5;
    const double z = -ap.sigma2;
    auto roots = roots_of(ap);
    CMat P = block_precoder(ap.P);
    CMat S = lambda_of(ap);
    CMat acc = CMat::Zero(M, M);
    const int draws = 200;
    for (int d = 0; d < draws; ++d)
    {
        CMat G = draw_hhat(ap, roots, rng) * P;
        acc += (z * CMat::Identity(M, M) - G * G.adjoint() - ap.cprime).inverse();
    }
    acc /= draws;
    CauchySolutionBt s = solve_cauchy_bt(ap, z);
    cd mc = (acc * S).trace() / static_cast<double>(M);
    CHECK(std::abs(s.cauchy(S) - mc) < 2e-2 * std::abs(mc));
}

TEST_CASE("derivatives agree with central differences", "[freeprob]")
{
    OracleResult r = finite_difference_oracle(10, 7);
    INFO(r.detail << " value " << r.value);
    CHECK(r.passed);
}

TEST_CASE("solutions have the resolvent sign pattern", "[freeprob]")
{
    Rng rng(5);
    for (int t = 0; t < 5; ++t)
    {
        ApStatistics ap = random_ap(6, 2, 2, rng);
        CauchySolutionB b = solve_cauchy_b(ap, -1.0);
        cauchy_b_derivatives(ap, b);
        CHECK(negative_definite(b.g_d1));
        CHECK(positive_definite(b.g_d2));
        CHECK(negative_definite(b.g_d1_prime));
        CauchySolutionBt bt = solve_cauchy_bt(ap, -ap.sigma2);
        cauchy_bt_derivatives(ap, bt);
        CHECK(negative_definite(bt.g_dt));
        CHECK(negative_definite(bt.g_dt_prime));
        CHECK(b.residual <= 1e-10);
        CHECK(bt.residual <= 1e-10);
    }
}

TEST_CASE("fixed point does not depend on the starting point", "[freeprob]")
{
    Rng rng(6);
    ApStatistics ap = random_ap(6, 3, 2, rng);
    Rng starts(60);
    CHECK(cauchy_b_multistart_spread(ap, -1.0, 5, starts) < 1e-8);
}

TEST_CASE("Upsilon equals the Woodbury difference", "[freeprob]")
{
    Rng rng(7);
    ApStatistics ap = random_ap(6, 2, 2, rng);
    ap.sigma2 = 0.3;
    ap.cprime *= 0.3;
    CauchySolutionBt s = solve_cauchy_bt(ap, -ap.sigma2);
    CMat h = ap.hbar * block_precoder(ap.P);
    CMat ref = h.adjoint() * ((s.phi - ap.cprime).inverse() - s.phi.inverse()) * h;
    CHECK((s.upsilon - ref).norm() < 1e-9 * ref.norm());
}

TEST_CASE("asymptotic weights for identical APs are equal", "[freeprob]")
{
    Rng rng(8);
    ApStatistics ap = random_ap(8, 2, 2, rng);
    AsymptoticWeights w = asymptotic_weight_system({ap, ap});
    CHECK(std::abs(w.ws.omega(0) - w.ws.omega(1)) < 1e-10 * std::abs(w.ws.omega(0)));
    CHECK(w.ws.source == WeightSource::Asymptotic);
    CHECK(w.gram.size() == 2);
    CHECK(w.max_residual <= 1e-10);
}

TEST_CASE("asymptotic weight system matches Monte Carlo traces", "[freeprob]")
{
    Rng rng(9);
    const int M = 32, K = 4, N = 2;
    ApStatistics ap = random_ap(M, K, N, rng);
    ap.sigma2 = 0.5;
    auto roots = roots_of(ap);
    CMat P = block_precoder(ap.P);
    double v = 0.0, a = 0.0, y = 0.0;
    const int draws = 400;
    for (int d = 0; d < draws; ++d)
    {
        LocalMmse loc = local_mmse(draw_hhat(ap, roots, rng), P, ap.cprime, ap.sigma2);
        WeightSystem tr = trace_weights({loc});
        v += tr.v(0).real();
        a += tr.A(0, 0).real();
        y += tr.Y(0);
    }
    v /= draws;
    a /= draws;
    y /= draws;
    AsymptoticWeights w = asymptotic_weight_system({ap});
    CHECK_THAT(w.ws.v(0).real(), WithinRel(v, 2e-2));
    CHECK_THAT(w.ws.A(0, 0).real(), WithinRel(a, 2e-2));
    CHECK_THAT(w.ws.Y(0), WithinRel(y, 2e-2));
    CHECK_THAT(w.ws.omega(0).real(), WithinRel(v / (a + y), 2e-2));
}

TEST_CASE("AP statistics gather the per-UE blocks", "[freeprob]")
{
    System s = make_system(config(2, 3, 4, 2));
    ApStatistics ap = ap_statistics(s.links, s.est, s.F, 1, s.cfg.sigma2);
    CHECK(ap.M() == 4);
    CHECK(ap.K() == 3);
    CHECK(ap.n_tot() == 6);
    CHECK(ap.hbar.middleCols(2, 2) == s.links(1, 1).hbar);
    CHECK(ap.chat[2] == s.est(2, 1).chat);
    CHECK(ap.cprime == s.est.cprime[1]);
}

TEST_CASE("solver reports non-convergence with its residual history", "[freeprob]")
{
    Rng rng(10);
    ApStatistics ap = random_ap(6, 2, 2, rng);
    SolverOptions opt;
    opt.max_iter = 1;
    try
    {
        solve_cauchy_b(ap, -1.0, opt);
        FAIL("expected SolverError");
    }
    catch (const SolverError &e)
    {
        CHECK_FALSE(e.residual_history.empty());
    }
    CHECK_THROWS_AS(solve_cauchy_bt(ap, -1.0, opt), SolverError);
    CHECK_THROWS_AS(solve_cauchy_b(ap, 0.5), std::invalid_argument);
}

TEST_CASE("load derivative without estimate randomness is G S G", "[freeprob]")
{
    Rng rng(11);
    ApStatistics ap = deterministic_ap(5, 2, 2, rng);
    ap.sigma2 = 0.7;
    const double z = -ap.sigma2;
    CMat h = ap.hbar * block_precoder(ap.P);
    CMat R = (z * CMat::Identity(5, 5) - h * h.adjoint() - ap.cprime).inverse();
    CMat S = lambda_of(ap);
    CauchySolutionBt s = solve_cauchy_bt(ap, z);
    cauchy_bt_load_derivative(ap, s);
    CMat ref = R * S * R;
    CHECK((s.g_dt_load - ref).norm() < 1e-9 * ref.norm());
}

TEST_CASE("load derivative reduces to the squared resolvent when C' is scalar", "[freeprob]")
{
    Rng rng(12);
    ApStatistics ap = random_ap(8, 2, 2, rng);
    ap.sigma2 = 0.6;
    ap.cprime = 0.25 * CMat::Identity(8, 8);
    CMat S = lambda_of(ap);
    CauchySolutionBt s = solve_cauchy_bt(ap, -ap.sigma2);
    cauchy_bt_derivatives(ap, s);
    cauchy_bt_load_derivative(ap, s);
    double load = (s.g_dt_load * S).trace().real();
    double squared = -(s.g_dt_prime * S * S).trace().real();
    CHECK_THAT(load, WithinRel(squared, 1e-8));
}

TEST_CASE("single-AP asymptotic system keeps v = A + Y", "[freeprob]")
{
    // For the local MMSE filter Q - Q^2 = U^H S U, so a single AP always gets omega = 1.
    for (double s2 : {1e-3, 0.5, 2.0})
    {
        Rng rng(13);
        ApStatistics ap = random_ap(16, 3, 2, rng);
        ap.sigma2 = s2;
        AsymptoticWeights w = asymptotic_weight_system({ap});
        CHECK_THAT(w.ws.v(0).real(), WithinRel(w.ws.A(0, 0).real() + w.ws.Y(0), 1e-8));
        CHECK_THAT(w.ws.omega(0).real(), WithinAbs(1.0, 1e-8));
    }
}
