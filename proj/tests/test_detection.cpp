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
#include "cfmimo/experiments.hpp"

#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace cfmimo;
using namespace cfmimo::test;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace
{

CMat scalar(cd v)
{
    CMat m(1, 1);
    m(0, 0) = v;
    return m;
}

// Local filters of one trial of a full system.
struct Trial
{
    ChannelRealization rz;
    std::vector<LocalMmse> local;
    CMat P;
};

Trial run_trial(const System &s, Rng &rng)
{
    Trial t;
    t.rz = draw_channel(s.links, s.cfg.sigma2, s.book.tau_p, rng);
    PilotObservation obs = pilot_observe(t.rz, s.links, s.book, s.F, s.cfg.p_k);
    EstimationOutput out = estimate_channels(obs, s.links, s.est);
    t.P = block_precoder(s.F);
    for (int l = 0; l < s.cfg.L; ++l)
        t.local.push_back(local_mmse(stack_estimates(out, l), t.P, s.est.cprime[l], s.cfg.sigma2));
    return t;
}

} // namespace

TEST_CASE("scheme names round-trip", "[detection]")
{
    for (Scheme s : {Scheme::FullyCentralized, Scheme::OneShotEmpirical, Scheme::OneShotAsymptotic, Scheme::SmallCell})
        CHECK(parse_scheme(to_string(s)) == s);
    CHECK_THROWS_AS(parse_scheme("mrc"), ConfigError);
}

TEST_CASE("global MMSE filter", "[detection]")
{
    const cd h(0.3, -1.2), p(0.7, 0.0);
    const double c = 0.4, s2 = 0.25;
    CMat U = global_mmse(scalar(h), scalar(p), scalar(c), s2);
    CHECK(std::abs(U(0, 0) - h * p / (std::norm(h * p) + c + s2)) < 1e-14);

    Rng rng(1);
    CMat H = complex_gaussian(4, 3, rng);
    CMat Z = global_mmse(H, CMat::Zero(3, 3), CMat::Zero(4, 4), 1.0);
    CHECK(Z.norm() == 0.0);

    CMat P = complex_gaussian(3, 3, rng);
    CMat C = wishart(4, rng);
    LocalMmse loc = local_mmse(H, P, C, 0.5);
    CHECK((global_mmse(H, P, C, 0.5) - loc.U).norm() < 1e-12 * loc.U.norm());
}

TEST_CASE("fully centralized log-det closed forms", "[detection]")
{
    const double s2 = 0.5, c = 0.2;
    CMat H(1, 2);
    H << cd(1.0, 0.5), cd(-0.3, 0.8);
    CMat P = CMat::Identity(2, 2);
    auto se = fc_log2det(H, P, scalar(c), s2, 1);
    REQUIRE(se.size() == 2);
    CHECK_THAT(se[0], WithinAbs(std::log2(1.0 + std::norm(H(0, 0)) / (std::norm(H(0, 1)) + c + s2)), 1e-12));
    CHECK_THAT(se[1], WithinAbs(std::log2(1.0 + std::norm(H(0, 1)) / (std::norm(H(0, 0)) + c + s2)), 1e-12));

    auto zero = fc_log2det(H, CMat::Zero(2, 2), scalar(c), s2, 1);
    CHECK(zero == std::vector<double>{0.0, 0.0});
}

TEST_CASE("fully centralized log-det equals the per-UE MMSE capacity", "[detection]")
{
    // With an MMSE filter, log2 det(I + SINR_k) = log2 det(I + G_k^H Sigma_k^{-1} G_k).
    Rng rng(4);
    const int M = 5, K = 2, N = 2;
    CMat H = complex_gaussian(M, K * N, rng);
    CMat P = complex_gaussian(K * N, K * N, rng);
    CMat C = wishart(M, rng);
    auto se = fc_log2det(H, P, C, 0.3, N);
    CMat G = H * P;
    for (int k = 0; k < K; ++k)
    {
        CMat Sk = G * G.adjoint() - G.middleCols(k * N, N) * G.middleCols(k * N, N).adjoint() + C;
        Sk.diagonal().array() += 0.3;
        CMat Gk = G.middleCols(k * N, N);
        double ref = log2_det_identity_plus(Gk.adjoint() * Sk.inverse() * Gk);
        CHECK_THAT(se[k], WithinAbs(ref, 1e-10));
    }
}

TEST_CASE("local MMSE Q agrees with the dual form", "[detection]")
{
    Rng rng(9);
    for (int t = 0; t < 20; ++t)
    {
        const int M = 2 + t % 5, Nt = 1 + t % 4;
        CMat H = complex_gaussian(M, Nt, rng);
        CMat P = complex_gaussian(Nt, Nt, rng);
        CMat C = wishart(M, rng);
        LocalMmse loc = local_mmse(H, P, C, 0.1 + 0.1 * t);
        CMat dual = local_q_dual(H, P, C, 0.1 + 0.1 * t);
        CHECK((loc.Q - dual).norm() < 1e-10);
        RVec ev = hermitian_eigenvalues(loc.Q);
        CHECK(ev.minCoeff() > -1e-12);
        CHECK(ev.maxCoeff() < 1.0);
    }
    LocalMmse zero = local_mmse(CMat::Zero(3, 2), CMat::Identity(2, 2), CMat::Zero(3, 3), 1.0);
    CHECK(zero.Q.norm() == 0.0);
    CHECK(zero.U.norm() == 0.0);
}

TEST_CASE("empirical weights for a single AP", "[detection]")
{
    Rng rng(3);
    CMat H = complex_gaussian(4, 3, rng);
    LocalMmse loc = local_mmse(H, CMat::Identity(3, 3), 0.1 * CMat::Identity(4, 4), 0.5);
    CVec x = complex_gaussian_vec(3, rng);
    WeightSystem ws = empirical_weights(x, {loc});
    cd v = x.dot(loc.Q * x);
    double a = (loc.Q * x).squaredNorm();
    double y = (loc.U.adjoint() * loc.S * loc.U).trace().real();
    CHECK(std::abs(ws.omega(0) - v / (a + y)) < 1e-12 * std::abs(ws.omega(0)));
    CHECK(ws.imag_residual < 1e-12);
    CHECK_FALSE(ws.regularized);
}

TEST_CASE("identical APs get identical weights", "[detection]")
{
    Rng rng(5);
    CMat H = complex_gaussian(6, 4, rng);
    LocalMmse loc = local_mmse(H, CMat::Identity(4, 4), CMat::Zero(6, 6), 0.3);
    CVec x = complex_gaussian_vec(4, rng);
    WeightSystem ws = empirical_weights(x, {loc, loc, loc});
    CHECK(std::abs(ws.omega(0) - ws.omega(1)) < 1e-10);
    CHECK(std::abs(ws.omega(1) - ws.omega(2)) < 1e-10);
}

TEST_CASE("weight solution minimizes the quadratic MSE", "[detection]")
{
    Rng rng(6);
    std::vector<LocalMmse> local;
    for (int l = 0; l < 4; ++l)
        local.push_back(local_mmse(complex_gaussian(5, 4, rng), CMat::Identity(4, 4), wishart(5, rng), 0.2));
    CVec x = complex_gaussian_vec(4, rng);
    for (const WeightSystem &ws : {empirical_weights(x, local), trace_weights(local)})
    {
        const double best = weight_mse(ws, ws.omega);
        CHECK_THAT(best, WithinRel(ws.mse, 1e-12));
        for (int l = 0; l < 4; ++l)
            for (cd d : {cd(1e-3, 0.0), cd(-1e-3, 0.0), cd(0.0, 1e-3), cd(0.0, -1e-3)})
            {
                CVec w = ws.omega;
                w(l) += d;
                CHECK(weight_mse(ws, w) > best);
            }
    }
}

TEST_CASE("trace weights with Q = I", "[detection]")
{
    LocalMmse loc;
    loc.Q = CMat::Identity(3, 3);
    loc.U = CMat::Identity(3, 3);
    loc.S = 0.5 * CMat::Identity(3, 3);
    WeightSystem ws = trace_weights({loc});
    // v = 3, A = 3, Y = 1.5.
    CHECK(std::abs(ws.omega(0) - 3.0 / 4.5) < 1e-14);
    CHECK(ws.x_norm2 == 3.0);
    WeightSystem two = trace_weights({loc, loc});
    CHECK(std::abs(two.omega(0) - 3.0 / 7.5) < 1e-12);
}

TEST_CASE("empirical weights concentrate on the trace weights as N_tot grows", "[detection]")
{
    Rng rng(12);
    std::vector<double> spread;
    for (int n : {4, 16, 64})
    {
        std::vector<LocalMmse> local;
        for (int l = 0; l < 2; ++l)
            local.push_back(local_mmse(complex_gaussian(2 * n, n, rng, 1.0 / n), CMat::Identity(n, n),
                                       CMat::Zero(2 * n, 2 * n), 0.5 + l));
        WeightSystem tr = trace_weights(local);
        double acc = 0.0;
        const int draws = 200;
        for (int d = 0; d < draws; ++d)
        {
            WeightSystem em = empirical_weights(complex_gaussian_vec(n, rng), local);
            acc += (em.omega - tr.omega).norm() / tr.omega.norm();
        }
        spread.push_back(acc / draws);
    }
    CHECK(spread[0] > spread[1]);
    CHECK(spread[1] > spread[2]);
}

TEST_CASE("combining local estimates", "[detection]")
{
    CVec a(2), b(2), w(2);
    a << 1.0, 2.0;
    b << cd(0.0, 1.0), 3.0;
    w << 2.0, cd(0.0, -1.0);
    CVec out = combine({a, b}, w);
    CHECK(std::abs(out(0) - cd(3.0, 0.0)) < 1e-15);
    CHECK(std::abs(out(1) - cd(4.0, -3.0)) < 1e-15);
    CHECK_THROWS_AS(combine({a}, w), std::invalid_argument);
    CHECK_THROWS_AS(combine({}, CVec()), std::invalid_argument);
}

TEST_CASE("fully centralized accumulator", "[detection]")
{
    FcAccumulator a(2), b(2);
    a.add({1.0, 2.0});
    b.add({3.0, 0.0});
    b.add({2.0, 1.0});
    a.merge(b);
    SEReport r = a.report(0.5);
    CHECK(r.trials == 3);
    CHECK_THAT(r.per_ue_se[0], WithinAbs(0.5 * 2.0, 1e-15));
    CHECK_THAT(r.per_ue_se[1], WithinAbs(0.5 * 1.0, 1e-15));
    CHECK_THAT(r.sum_se, WithinAbs(1.5, 1e-15));
    // Per-trial sums 3, 3, 3 have no spread.
    CHECK_THAT(r.stderr_sum, WithinAbs(0.0, 1e-15));
    FcAccumulator one(1);
    one.add({1.0});
    CHECK(std::isnan(one.report(1.0).stderr_sum));
}

TEST_CASE("zero combining weights give zero SE", "[detection]")
{
    System s = make_system(config(2, 2, 3, 1));
    Rng rng(2);
    SicAccumulator acc(2, 1);
    for (int t = 0; t < 10; ++t)
    {
        Trial tr = run_trial(s, rng);
        accumulate_oneshot(acc, tr.local, tr.rz, tr.P, CVec::Zero(2), s.cfg.sigma2);
    }
    CHECK(acc.log2det() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("one-shot with perfect CSI on one link equals the fully centralized SE", "[detection]")
{
    const cd h(0.8, -0.4);
    const double s2 = 0.3;
    ChannelRealization rz;
    rz.K = 1;
    rz.L = 1;
    rz.H = {scalar(h)};
    CMat P = CMat::Identity(1, 1);
    LocalMmse loc = local_mmse(scalar(h), P, CMat::Zero(1, 1), s2);
    SicAccumulator acc(1, 1);
    CVec w = CVec::Ones(1);
    for (int t = 0; t < 5; ++t)
        accumulate_oneshot(acc, {loc}, rz, P, w, s2);
    double fc = fc_log2det(scalar(h), P, CMat::Zero(1, 1), s2, 1)[0];
    CHECK_THAT(acc.log2det()[0], WithinAbs(fc, 1e-12));
    CHECK_THAT(fc, WithinAbs(std::log2(1.0 + std::norm(h) / s2), 1e-12));
}

TEST_CASE("small cell with one AP equals one-shot with unit weight", "[detection]")
{
    System s = make_system(config(1, 3, 4, 2));
    Rng rng(7);
    SicAccumulator a(3, 2), b(3, 2);
    for (int t = 0; t < 50; ++t)
    {
        Trial tr = run_trial(s, rng);
        accumulate_oneshot(a, tr.local, tr.rz, tr.P, CVec::Ones(1), s.cfg.sigma2);
        accumulate_small_cell(b, tr.local, tr.rz, tr.P, {0, 0, 0}, s.cfg.sigma2);
    }
    auto x = a.log2det(), y = b.log2det();
    for (int k = 0; k < 3; ++k)
        CHECK_THAT(x[k], WithinAbs(y[k], 1e-10));
}

TEST_CASE("SIC accumulator merge is order independent", "[detection]")
{
    System s = make_system(config(2, 2, 4, 2));
    Rng rng(8);
    std::vector<SicAccumulator> parts(3, SicAccumulator(2, 2));
    for (int t = 0; t < 60; ++t)
    {
        Trial tr = run_trial(s, rng);
        accumulate_oneshot(parts[t % 3], tr.local, tr.rz, tr.P, CVec::Ones(2) * 0.5, s.cfg.sigma2);
    }
    SicAccumulator f, r;
    for (int i = 0; i < 3; ++i)
    {
        f.merge(parts[i]);
        r.merge(parts[2 - i]);
    }
    CHECK(f.count() == 60);
    auto x = f.log2det(), y = r.log2det();
    for (int k = 0; k < 2; ++k)
        CHECK_THAT(x[k], WithinRel(y[k], 1e-12));

    SEReport rep = sic_report(Scheme::OneShotEmpirical, parts, 0.9);
    CHECK(rep.trials == 60);
    CHECK(rep.per_ue_se.size() == 2);
    CHECK_THAT(rep.sum_se, WithinRel(0.9 * (x[0] + x[1]), 1e-12));
    CHECK(rep.stderr_sum > 0.0);
    CHECK(std::isnan(sic_report(Scheme::SmallCell, {f}, 1.0).stderr_sum));
}

TEST_CASE("scheme ordering at one point", "[detection]")
{
    SystemConfig c = config(4, 4, 8, 2, 3);
    auto rows = run_point(c, {Scheme::FullyCentralized, Scheme::OneShotAsymptotic, Scheme::SmallCell}, 400, 3, 0.0);
    REQUIRE(rows.size() == 3);
    auto find = [&](Scheme s) -> const ResultRow &
    {
        for (const auto &r : rows)
            if (r.scheme == s)
                return r;
        FAIL("missing scheme");
        return rows.front();
    };
    const ResultRow &fc = find(Scheme::FullyCentralized);
    const ResultRow &os = find(Scheme::OneShotAsymptotic);
    const ResultRow &sc = find(Scheme::SmallCell);
    for (const auto &r : rows)
    {
        CHECK(std::isfinite(r.sum_se));
        CHECK(r.se_stderr > 0.0);
        CHECK(r.trials == 400);
        double sum = 0.0;
        for (double v : r.per_ue_se)
            sum += v;
        CHECK_THAT(sum, WithinRel(r.sum_se, 1e-12));
    }
    CHECK(fc.sum_se + 3.0 * std::hypot(fc.se_stderr, os.se_stderr) >= os.sum_se);
    CHECK(os.sum_se + 3.0 * std::hypot(os.se_stderr, sc.se_stderr) >= sc.sum_se);
}
