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

#include "cfmimo/experiments.hpp"

#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace cfmimo;
using namespace cfmimo::test;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace
{

SweepSpec small_sweep(SweepAxis axis, std::vector<double> points)
{
    SweepSpec s;
    s.name = "t";
    s.base = config(2, 2, 4, 1, 5);
    s.axis = axis;
    s.points = std::move(points);
    s.schemes = {Scheme::FullyCentralized, Scheme::OneShotAsymptotic};
    s.trials = 8;
    return s;
}

ResultRow sample_row(double axis, Scheme s)
{
    ResultRow r;
    r.axis_value = axis;
    r.scheme = s;
    r.environment = Environment::Urban;
    r.sum_se = 1.0 / 3.0;
    r.se_stderr = 1e-17;
    r.per_ue_se = {0.1, 0.2333333333333333};
    r.trials = 12;
    r.seed = 18446744073709551615ULL;
    r.config_hash = "0123456789abcdef";
    r.solver_iters = 17;
    r.solver_residual = 3.5e-11;
    return r;
}

} // namespace

TEST_CASE("divisors", "[experiments]")
{
    CHECK(divisors(1) == std::vector<int>{1});
    CHECK(divisors(36) == std::vector<int>{1, 2, 3, 4, 6, 9, 12, 18, 36});
    CHECK(divisors(144).size() == 15);
    CHECK(divisors(13) == std::vector<int>{1, 13});
}

TEST_CASE("axis names round-trip", "[experiments]")
{
    for (SweepAxis a : {SweepAxis::AntennasFixedRatio, SweepAxis::RatioLM, SweepAxis::NumUAVs, SweepAxis::Height,
                        SweepAxis::NumUEs, SweepAxis::PilotReuse})
        CHECK(parse_axis(to_string(a)) == a);
    CHECK_THROWS_AS(parse_axis("azimuth"), ConfigError);
}

TEST_CASE("ratio L/M sweep enumerates divisor pairs in axis order", "[experiments]")
{
    SweepSpec s = small_sweep(SweepAxis::RatioLM, {});
    s.m_tot = 36;
    auto pts = enumerate_points(s, Environment::Urban);
    REQUIRE(pts.size() == 9);
    for (std::size_t i = 0; i < pts.size(); ++i)
    {
        REQUIRE(pts[i].config);
        CHECK(pts[i].config->L * pts[i].config->M == 36);
        CHECK(pts[i].axis_value == static_cast<double>(pts[i].config->L) / pts[i].config->M);
        CHECK(pts[i].config->environment == Environment::Urban);
        if (i)
            CHECK(pts[i].axis_value > pts[i - 1].axis_value);
    }
    s.points = {2, 3, 5};
    auto kept = enumerate_points(s, Environment::Urban);
    REQUIRE(kept.size() == 3);
    CHECK(kept[0].config->L == 2);
    CHECK(kept[1].config->L == 3);
    CHECK_FALSE(kept[2].config);
    CHECK(kept[2].skip_reason.find("does not divide") != std::string::npos);
}

TEST_CASE("other axes set the intended field", "[experiments]")
{
    SweepSpec s = small_sweep(SweepAxis::NumUAVs, {1, 4, 5});
    s.m_tot = 20;
    auto u = enumerate_points(s, Environment::Suburban);
    REQUIRE(u.size() == 3);
    CHECK(u[0].config->M == 20);
    CHECK(u[1].config->M == 5);
    CHECK(u[2].config->L == 5);

    s = small_sweep(SweepAxis::AntennasFixedRatio, {1, 2, 1.5});
    s.antenna_ratio = 2.0;
    auto a = enumerate_points(s, Environment::Suburban);
    REQUIRE(a.size() == 3);
    CHECK(a[0].config->M == 2);
    CHECK_FALSE(a[1].config);
    CHECK(a[2].config->N == 2);
    CHECK(a[2].config->M == 4);

    s = small_sweep(SweepAxis::Height, {160, 40, 100});
    auto h = enumerate_points(s, Environment::Suburban);
    CHECK(h.size() == 3);
    CHECK(h[0].config->uav_height == 40.0);
    CHECK(h[2].config->uav_height == 160.0);

    s = small_sweep(SweepAxis::NumUEs, {3});
    CHECK(enumerate_points(s, Environment::Suburban)[0].config->K == 3);

    s = small_sweep(SweepAxis::PilotReuse, {2});
    s.base.pilot_reuse = 2;
    auto p = enumerate_points(s, Environment::Suburban);
    CHECK(p[0].config->N == 2);
    CHECK(p[0].config->pilot_length() == 2);

    // Infeasible configurations become skipped points, not errors.
    s = small_sweep(SweepAxis::Height, {1.0});
    auto bad = enumerate_points(s, Environment::Suburban);
    CHECK_FALSE(bad[0].config);
    CHECK(bad[0].skip_reason.find("uav_height") != std::string::npos);
}

TEST_CASE("sweep-level violations", "[experiments]")
{
    SweepSpec s = small_sweep(SweepAxis::RatioLM, {});
    CHECK(s.violations().size() == 1);
    s.m_tot = 4;
    CHECK(s.violations().empty());
    s.trials = 0;
    s.schemes.clear();
    CHECK(s.violations().size() == 2);
    CHECK_THROWS_AS(run_sweep(s), ConfigError);
    CHECK(small_sweep(SweepAxis::Height, {}).violations().size() == 1);
}

TEST_CASE("run_point is deterministic and shares trials across schemes", "[experiments]")
{
    SystemConfig c = config(2, 2, 4, 2, 3);
    auto a = run_point(c, {Scheme::FullyCentralized, Scheme::SmallCell}, 1, 3, 1.0);
    auto b = run_point(c, {Scheme::FullyCentralized, Scheme::SmallCell}, 1, 3, 1.0);
    REQUIRE(a.size() == 2);
    CHECK(a == b);
    auto only = run_point(c, {Scheme::SmallCell}, 1, 3, 1.0);
    REQUIRE(only.size() == 1);
    CHECK(only[0] == a[1]);
    CHECK(a[0].config_hash == config_hash([&] { auto x = c; x.seed = 3; return x; }()));
    CHECK(a[0].seed == 3);
    CHECK(a[0].axis_value == 1.0);
}

TEST_CASE("parallel execution does not change the results", "[experiments]")
{
    SystemConfig c = config(3, 3, 4, 1, 2);
    std::vector<Scheme> all{Scheme::FullyCentralized, Scheme::OneShotEmpirical, Scheme::OneShotAsymptotic,
                            Scheme::SmallCell};
    RunOptions one, many;
    many.parallel = 8;
    auto a = run_point(c, all, 60, 2, 0.0, 2, one);
    auto b = run_point(c, all, 60, 2, 0.0, 2, many);
    CHECK(a == b);
}

TEST_CASE("fully centralized SE is the mean of per-trial log-dets", "[experiments]")
{
    // Recompute the trials independently of the batch engine.
    SystemConfig c = config(2, 2, 3, 1, 4);
    const int trials = 25;
    auto rows = run_point(c, {Scheme::FullyCentralized}, trials, 4, 0.0);
    System s = make_system(c);
    CMat P = block_precoder(s.F);
    CMat cprime = block_diag(std::span<const CMat>(s.est.cprime.data(), s.est.cprime.size()));
    double acc = 0.0;
    for (int t = 0; t < trials; ++t)
    {
        Rng rng = make_stream(4, Stream::Trial, {0, static_cast<std::uint64_t>(t)});
        ChannelRealization rz = draw_channel(s.links, c.sigma2, s.book.tau_p, rng);
        PilotObservation obs = pilot_observe(rz, s.links, s.book, s.F, c.p_k);
        EstimationOutput out = estimate_channels(obs, s.links, s.est);
        for (double v : fc_log2det(stack_all_estimates(out), P, cprime, c.sigma2, c.N))
            acc += v;
    }
    CHECK_THAT(rows[0].sum_se, WithinRel(c.prelog() * acc / trials, 1e-10));
}

TEST_CASE("standard error shrinks like one over the square root of trials", "[experiments]")
{
    SystemConfig c = config(2, 2, 4, 1, 6);
    auto small = run_point(c, {Scheme::FullyCentralized, Scheme::SmallCell}, 100, 6, 0.0);
    auto large = run_point(c, {Scheme::FullyCentralized, Scheme::SmallCell}, 1600, 6, 0.0);
    for (int i = 0; i < 2; ++i)
    {
        CHECK(small[i].se_stderr > 0.0);
        double ratio = small[i].se_stderr / large[i].se_stderr;
        CHECK(ratio > 4.0 * 0.8);
        CHECK(ratio < 4.0 * 1.2);
    }
}

TEST_CASE("sweeps emit skipped rows and stay sorted", "[experiments]")
{
    SweepSpec s = small_sweep(SweepAxis::NumUEs, {3, 1, 500});
    s.trials = 2;
    auto rows = run_sweep(s);
    REQUIRE(rows.size() == 6);
    for (std::size_t i = 1; i < rows.size(); ++i)
        CHECK(rows[i - 1].axis_value <= rows[i].axis_value);
    CHECK(rows[0].axis_value == 1.0);
    CHECK(to_string(rows[0].scheme) < to_string(rows[1].scheme));
    const ResultRow &skipped = rows[4];
    CHECK(skipped.axis_value == 500.0);
    CHECK(std::isnan(skipped.sum_se));
    CHECK(skipped.trials == 0);
    CHECK(skipped.note.rfind("skipped:", 0) == 0);
}

TEST_CASE("height sweep row count", "[experiments]")
{
    SweepSpec s = small_sweep(SweepAxis::Height, {40, 80, 120});
    s.trials = 2;
    s.environments = {Environment::Suburban, Environment::DenseUrban};
    CHECK(run_sweep(s).size() == 3 * 2 * 2);
}

TEST_CASE("CSV of no rows is the header alone", "[experiments]")
{
    CHECK(format_csv({}) == std::string(kCsvHeader) + "\n");
    CHECK(parse_csv(format_csv({})).empty());
}

TEST_CASE("CSV round trip is exact, including failed rows", "[experiments]")
{
    std::vector<ResultRow> rows{sample_row(0.25, Scheme::SmallCell), sample_row(0.25, Scheme::FullyCentralized)};
    ResultRow bad = sample_row(4.0, Scheme::OneShotAsymptotic);
    bad.sum_se = std::numeric_limits<double>::quiet_NaN();
    bad.se_stderr = std::numeric_limits<double>::quiet_NaN();
    bad.per_ue_se.clear();
    bad.trials = 0;
    rows.push_back(bad);
    std::string text = format_csv(rows);
    auto back = parse_csv(text);
    sort_rows(rows);
    CHECK(back == rows);
    CHECK(format_csv(back) == text);

    std::istringstream lines(text);
    std::string header, first;
    std::getline(lines, header);
    std::getline(lines, first);
    CHECK(header == kCsvHeader);
    CHECK(first.rfind("2.50000000000000000e-01,fully_centralized,urban,", 0) == 0);
    CHECK(first.find("\"[1.00000000000000006e-01,2.33333333333333309e-01]\"") != std::string::npos);
}

TEST_CASE("CSV parse errors name the line", "[experiments]")
{
    CHECK_THROWS_AS(parse_csv("axis,scheme\n"), IoError);
    std::string text = format_csv({sample_row(1.0, Scheme::SmallCell)});
    std::string broken = text + "1.0,small_cell,urban\n";
    try
    {
        parse_csv(broken);
        FAIL("expected IoError");
    }
    catch (const IoError &e)
    {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(read_csv("/nonexistent/dir/x.csv"), IoError);
    CHECK_THROWS_AS(emit_csv({}, "/nonexistent/dir/x.csv"), IoError);
}

TEST_CASE("sweep CSV bytes are reproducible", "[experiments]")
{
    SweepSpec s = small_sweep(SweepAxis::Height, {60, 120});
    s.trials = 4;
    RunOptions par;
    par.parallel = 4;
    const std::string a = format_csv(run_sweep(s));
    const std::string b = format_csv(run_sweep(s, par));
    CHECK(a == b);
    auto dir = std::filesystem::temp_directory_path() / "cfmimo_experiments_test";
    std::filesystem::create_directories(dir);
    auto path = (dir / "h.csv").string();
    emit_csv(parse_csv(a), path);
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    CHECK(ss.str() == a);
    std::filesystem::remove_all(dir);
}
