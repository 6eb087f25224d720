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

#include "cfmimo/estimation.hpp"
#include "cfmimo/freeprob.hpp"
#include "cfmimo/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace cfmimo
{

std::string to_string(SweepAxis a)
{
    switch (a)
    {
    case SweepAxis::AntennasFixedRatio:
        return "antennas_fixed_ratio";
    case SweepAxis::RatioLM:
        return "ratio_lm";
    case SweepAxis::NumUAVs:
        return "num_uavs";
    case SweepAxis::Height:
        return "height";
    case SweepAxis::NumUEs:
        return "num_ues";
    case SweepAxis::PilotReuse:
        return "pilot_reuse";
    }
    return "unknown";
}

SweepAxis parse_axis(std::string_view name)
{
    for (auto a : {SweepAxis::AntennasFixedRatio, SweepAxis::RatioLM, SweepAxis::NumUAVs, SweepAxis::Height,
                   SweepAxis::NumUEs, SweepAxis::PilotReuse})
        if (name == to_string(a))
            return a;
    throw ConfigError("unknown sweep axis '" + std::string(name) +
                      "' (expected antennas_fixed_ratio, ratio_lm, num_uavs, height, num_ues or pilot_reuse)");
}

std::vector<std::string> SweepSpec::violations() const
{
    std::vector<std::string> v;
    if (trials < 1)
        v.push_back("trials must be >= 1");
    if (deployments_per_point < 1)
        v.push_back("deployments_per_point must be >= 1");
    if (environments.empty())
        v.push_back("environments must not be empty");
    if (schemes.empty())
        v.push_back("schemes must not be empty");
    if ((axis == SweepAxis::RatioLM || axis == SweepAxis::NumUAVs) && m_tot < 1)
        v.push_back("m_tot must be >= 1 for the " + to_string(axis) + " axis");
    if (axis == SweepAxis::AntennasFixedRatio && !(antenna_ratio > 0.0))
        v.push_back("antenna_ratio must be > 0");
    if (axis != SweepAxis::RatioLM && points.empty())
        v.push_back("points must not be empty for the " + to_string(axis) + " axis");
    for (double p : points)
        if (!std::isfinite(p))
            v.push_back("points must be finite");
    return v;
}

std::vector<int> divisors(int n)
{
    std::vector<int> out;
    for (int d = 1; d <= n; ++d)
        if (n % d == 0)
            out.push_back(d);
    return out;
}

namespace
{

bool is_integer(double x)
{
    return std::isfinite(x) && x == std::floor(x) && std::abs(x) < 1e9;
}

SweepPoint make_point(const SystemConfig &cfg, double axis_value)
{
    SweepPoint p;
    p.axis_value = axis_value;
    auto v = cfg.violations();
    if (v.empty())
        p.config = cfg;
    else
        p.skip_reason = v.front();
    return p;
}

SweepPoint skip(double axis_value, std::string reason)
{
    SweepPoint p;
    p.axis_value = axis_value;
    p.skip_reason = std::move(reason);
    return p;
}

} // namespace

std::vector<SweepPoint> enumerate_points(const SweepSpec &spec, Environment env)
{
    SystemConfig base = spec.base;
    base.environment = env;
    std::vector<SweepPoint> out;
    switch (spec.axis)
    {
    case SweepAxis::RatioLM:
    {
        for (int L : divisors(spec.m_tot))
        {
            if (!spec.points.empty() &&
                std::find(spec.points.begin(), spec.points.end(), static_cast<double>(L)) == spec.points.end())
                continue;
            SystemConfig c = base;
            c.L = L;
            c.M = spec.m_tot / L;
            out.push_back(make_point(c, static_cast<double>(c.L) / c.M));
        }
        for (double p : spec.points)
            if (!is_integer(p) || p < 1 || spec.m_tot % static_cast<int>(p) != 0)
                out.push_back(skip(p, "L = " + std::to_string(p) + " does not divide m_tot"));
        break;
    }
    case SweepAxis::NumUAVs:
        for (double p : spec.points)
        {
            if (!is_integer(p) || p < 1 || spec.m_tot % static_cast<int>(p) != 0)
            {
                out.push_back(skip(p, "L does not divide m_tot = " + std::to_string(spec.m_tot)));
                continue;
            }
            SystemConfig c = base;
            c.L = static_cast<int>(p);
            c.M = spec.m_tot / c.L;
            out.push_back(make_point(c, p));
        }
        break;
    case SweepAxis::AntennasFixedRatio:
        for (double p : spec.points)
        {
            double m = spec.antenna_ratio * p;
            if (!is_integer(p) || !is_integer(m))
            {
                out.push_back(skip(p, "N and antenna_ratio * N must be integers"));
                continue;
            }
            SystemConfig c = base;
            c.N = static_cast<int>(p);
            c.M = static_cast<int>(m);
            out.push_back(make_point(c, p));
        }
        break;
    case SweepAxis::Height:
        for (double p : spec.points)
        {
            SystemConfig c = base;
            c.uav_height = p;
            out.push_back(make_point(c, p));
        }
        break;
    case SweepAxis::NumUEs:
        for (double p : spec.points)
        {
            if (!is_integer(p))
            {
                out.push_back(skip(p, "K must be an integer"));
                continue;
            }
            SystemConfig c = base;
            c.K = static_cast<int>(p);
            out.push_back(make_point(c, p));
        }
        break;
    case SweepAxis::PilotReuse:
        for (double p : spec.points)
        {
            if (!is_integer(p))
            {
                out.push_back(skip(p, "N must be an integer"));
                continue;
            }
            SystemConfig c = base;
            c.N = static_cast<int>(p);
            out.push_back(make_point(c, p));
        }
        break;
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const SweepPoint &a, const SweepPoint &b) { return a.axis_value < b.axis_value; });
    return out;
}

bool ResultRow::operator==(const ResultRow &o) const
{
    auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
    if (per_ue_se.size() != o.per_ue_se.size())
        return false;
    for (std::size_t i = 0; i < per_ue_se.size(); ++i)
        if (!same(per_ue_se[i], o.per_ue_se[i]))
            return false;
    return same(axis_value, o.axis_value) && scheme == o.scheme && environment == o.environment &&
           same(sum_se, o.sum_se) && same(se_stderr, o.se_stderr) && trials == o.trials && seed == o.seed &&
           config_hash == o.config_hash && solver_iters == o.solver_iters &&
           same(solver_residual, o.solver_residual);
}

// ---------- Monte Carlo engine ----------

namespace
{

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Trial-independent state of one deployment.
struct PointContext
{
    SystemConfig cfg;
    LinkTable links;
    PilotBook book;
    std::vector<CMat> F;
    std::vector<CMat> P;
    CMat Pblk;
    EstimationStats est;
    CMat cprime_all;
    std::vector<int> nearest;
    std::optional<AsymptoticWeights> asym;
    std::string asym_error;
};

PointContext make_context(const SystemConfig &cfg, std::uint64_t seed, int deployment, bool need_asym)
{
    PointContext c;
    c.cfg = cfg;
    Rng dep_rng = make_stream(seed, Stream::Deployment, {static_cast<std::uint64_t>(deployment)});
    Deployment dep = make_deployment(cfg, dep_rng);
    c.links = build_link_stats(cfg, dep);
    Rng pilot_rng = make_stream(seed, Stream::PilotAssignment, {static_cast<std::uint64_t>(deployment)});
    c.book = build_pilot_book(cfg.pilot_length(), cfg.N, cfg.K, cfg.pilot_reuse, pilot_rng);
    c.F = equal_power_precoders(cfg.K, cfg.N, cfg.p_k);
    c.P = c.F;
    c.Pblk = block_precoder(c.P);
    c.est = estimation_statistics(c.links, c.book, c.F, c.P, cfg.sigma2);
    c.cprime_all = block_diag(std::span<const CMat>(c.est.cprime.data(), c.est.cprime.size()));
    c.nearest = nearest_ap(dep);
    if (need_asym)
    {
        std::vector<ApStatistics> aps;
        for (int l = 0; l < cfg.L; ++l)
            aps.push_back(ap_statistics(c.links, c.est, c.P, l, cfg.sigma2));
        try
        {
            c.asym = asymptotic_weight_system(aps);
        }
        catch (const SolverError &e)
        {
            c.asym_error = e.what();
        }
        catch (const NumericError &e)
        {
            c.asym_error = e.what();
        }
    }
    return c;
}

// Per-batch sums of every scheme.
struct BatchResult
{
    FcAccumulator fc;
    SicAccumulator emp;
    SicAccumulator asym;
    SicAccumulator small;
    std::map<Scheme, std::string> failed;
};

bool has(const std::vector<Scheme> &s, Scheme x)
{
    return std::find(s.begin(), s.end(), x) != s.end();
}

BatchResult run_batch(const PointContext &c, const std::vector<Scheme> &schemes, std::uint64_t seed, int deployment,
                      long first, long last)
{
    const auto &cfg = c.cfg;
    BatchResult r;
    r.fc = FcAccumulator(cfg.K);
    r.emp = SicAccumulator(cfg.K, cfg.N);
    r.asym = SicAccumulator(cfg.K, cfg.N);
    r.small = SicAccumulator(cfg.K, cfg.N);
    const bool want_fc = has(schemes, Scheme::FullyCentralized);
    const bool want_emp = has(schemes, Scheme::OneShotEmpirical);
    const bool want_asym = has(schemes, Scheme::OneShotAsymptotic) && c.asym.has_value();
    const bool want_small = has(schemes, Scheme::SmallCell);

    auto guarded = [&](Scheme s, auto &&fn)
    {
        if (r.failed.count(s))
            return;
        try
        {
            fn();
        }
        catch (const NumericError &e)
        {
            r.failed[s] = e.what();
        }
    };

    for (long t = first; t < last; ++t)
    {
        Rng rng = make_stream(seed, Stream::Trial,
                              {static_cast<std::uint64_t>(deployment), static_cast<std::uint64_t>(t)});
        ChannelRealization rz = draw_channel(c.links, cfg.sigma2, c.book.tau_p, rng);
        CVec x = complex_gaussian_vec(cfg.n_tot(), rng);
        PilotObservation obs = pilot_observe(rz, c.links, c.book, c.F, cfg.p_k);
        EstimationOutput est = estimate_channels(obs, c.links, c.est);

        if (want_fc)
            guarded(Scheme::FullyCentralized, [&]
                    { r.fc.add(fc_log2det(stack_all_estimates(est), c.Pblk, c.cprime_all, cfg.sigma2, cfg.N)); });
        if (!(want_emp || want_asym || want_small))
            continue;
        std::vector<LocalMmse> local;
        local.reserve(cfg.L);
        for (int l = 0; l < cfg.L; ++l)
            local.push_back(local_mmse(stack_estimates(est, l), c.Pblk, c.est.cprime[l], cfg.sigma2));
        if (want_emp)
            guarded(Scheme::OneShotEmpirical, [&]
                    {
                        WeightSystem ws = empirical_weights(x, local);
                        accumulate_oneshot(r.emp, local, rz, c.Pblk, ws.omega, cfg.sigma2);
                    });
        if (want_asym)
            guarded(Scheme::OneShotAsymptotic,
                    [&] { accumulate_oneshot(r.asym, local, rz, c.Pblk, c.asym->ws.omega, cfg.sigma2); });
        if (want_small)
            guarded(Scheme::SmallCell,
                    [&] { accumulate_small_cell(r.small, local, rz, c.Pblk, c.nearest, cfg.sigma2); });
    }
    return r;
}

std::vector<BatchResult> run_batches(const PointContext &c, const std::vector<Scheme> &schemes, std::uint64_t seed,
                                     int deployment, long trials, const RunOptions &opt)
{
    const long B = std::max<long>(1, std::min<long>(trials, opt.batches));
    std::vector<BatchResult> out(B);
    std::atomic<long> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&]
    {
        for (;;)
        {
            long b = next.fetch_add(1);
            if (b >= B)
                return;
            try
            {
                out[b] = run_batch(c, schemes, seed, deployment, b * trials / B, (b + 1) * trials / B);
            }
            catch (...)
            {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error)
                    error = std::current_exception();
            }
        }
    };
    int threads = std::max(1, std::min<int>(opt.parallel, static_cast<int>(B)));
    if (threads == 1)
        worker();
    else
    {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i)
            pool.emplace_back(worker);
        for (auto &th : pool)
            th.join();
    }
    if (error)
        std::rethrow_exception(error);
    return out;
}

ResultRow failed_row(const SystemConfig &cfg, Scheme s, double axis_value, std::uint64_t seed, long trials,
                     std::string note)
{
    ResultRow r;
    r.axis_value = axis_value;
    r.scheme = s;
    r.environment = cfg.environment;
    r.sum_se = kNaN;
    r.se_stderr = kNaN;
    r.trials = trials;
    r.seed = seed;
    r.config_hash = config_hash(cfg);
    r.note = std::move(note);
    return r;
}

} // namespace

std::vector<ResultRow> run_point(const SystemConfig &cfg_in, const std::vector<Scheme> &schemes, int trials,
                                 std::uint64_t seed, double axis_value, int deployments_per_point,
                                 const RunOptions &opt)
{
    SystemConfig cfg = cfg_in;
    cfg.seed = seed;
    cfg.validate();
    const double prelog = cfg.prelog();
    const bool need_asym = has(schemes, Scheme::OneShotAsymptotic);

    // Per scheme: per-deployment reports, or a failure note.
    std::map<Scheme, std::vector<SEReport>> reports;
    std::map<Scheme, std::string> failures;
    int solver_iters = 0;
    double solver_residual = 0.0;

    for (int d = 0; d < deployments_per_point; ++d)
    {
        PointContext ctx = make_context(cfg, seed, d, need_asym);
        if (need_asym)
        {
            if (ctx.asym)
            {
                solver_iters = std::max(solver_iters, ctx.asym->max_iterations);
                solver_residual = std::max(solver_residual, ctx.asym->max_residual);
            }
            else if (!failures.count(Scheme::OneShotAsymptotic))
                failures[Scheme::OneShotAsymptotic] = "solver: " + ctx.asym_error;
        }
        std::vector<BatchResult> batches = run_batches(ctx, schemes, seed, d, trials, opt);
        for (const auto &b : batches)
            for (const auto &[s, why] : b.failed)
                if (!failures.count(s))
                    failures[s] = why;

        for (Scheme s : schemes)
        {
            if (failures.count(s))
                continue;
            try
            {
                if (s == Scheme::FullyCentralized)
                {
                    FcAccumulator acc(cfg.K);
                    for (const auto &b : batches)
                        acc.merge(b.fc);
                    reports[s].push_back(acc.report(prelog));
                    continue;
                }
                std::vector<SicAccumulator> accs;
                for (const auto &b : batches)
                    accs.push_back(s == Scheme::OneShotEmpirical    ? b.emp
                                   : s == Scheme::OneShotAsymptotic ? b.asym
                                                                    : b.small);
                reports[s].push_back(sic_report(s, accs, prelog));
            }
            catch (const NumericError &e)
            {
                failures[s] = e.what();
            }
        }
    }

    std::vector<ResultRow> rows;
    const long total_trials = static_cast<long>(trials) * deployments_per_point;
    for (Scheme s : schemes)
    {
        if (failures.count(s))
        {
            rows.push_back(failed_row(cfg, s, axis_value, seed, total_trials, failures[s]));
            continue;
        }
        const auto &rep = reports[s];
        ResultRow r;
        r.axis_value = axis_value;
        r.scheme = s;
        r.environment = cfg.environment;
        r.trials = total_trials;
        r.seed = seed;
        r.config_hash = config_hash(cfg);
        if (s == Scheme::OneShotAsymptotic)
        {
            r.solver_iters = solver_iters;
            r.solver_residual = solver_residual;
        }
        // Average over deployments; the standard errors are independent.
        const double D = static_cast<double>(rep.size());
        r.per_ue_se.assign(cfg.K, 0.0);
        double var = 0.0;
        for (const auto &x : rep)
        {
            for (int k = 0; k < cfg.K; ++k)
                r.per_ue_se[k] += x.per_ue_se[k] / D;
            r.sum_se += x.sum_se / D;
            var += x.stderr_sum * x.stderr_sum;
        }
        r.se_stderr = std::sqrt(var) / D;
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<ResultRow> run_sweep(const SweepSpec &spec, const RunOptions &opt)
{
    auto v = spec.violations();
    if (!v.empty())
        throw ConfigError("sweep '" + spec.name + "': " + v.front());
    std::vector<ResultRow> rows;
    for (Environment env : spec.environments)
        for (const SweepPoint &p : enumerate_points(spec, env))
        {
            if (!p.config)
            {
                SystemConfig c = spec.base;
                c.environment = env;
                c.seed = spec.base.seed;
                for (Scheme s : spec.schemes)
                    rows.push_back(failed_row(c, s, p.axis_value, spec.base.seed, 0, "skipped: " + p.skip_reason));
                continue;
            }
            auto point_rows = run_point(*p.config, spec.schemes, spec.trials, spec.base.seed, p.axis_value,
                                        spec.deployments_per_point, opt);
            rows.insert(rows.end(), point_rows.begin(), point_rows.end());
        }
    sort_rows(rows);
    return rows;
}

void sort_rows(std::vector<ResultRow> &rows)
{
    std::stable_sort(rows.begin(), rows.end(),
                     [](const ResultRow &a, const ResultRow &b)
                     {
                         if (a.axis_value != b.axis_value)
                             return a.axis_value < b.axis_value;
                         return to_string(a.scheme) < to_string(b.scheme);
                     });
}

// ---------- CSV ----------

namespace
{

std::string num(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17e", x);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string &line)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i)
    {
        char ch = line[i];
        if (quoted)
        {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"')
            {
                cur += '"';
                ++i;
            }
            else if (ch == '"')
                quoted = false;
            else
                cur += ch;
        }
        else if (ch == '"')
            quoted = true;
        else if (ch == ',')
        {
            out.push_back(std::move(cur));
            cur.clear();
        }
        else
            cur += ch;
    }
    out.push_back(std::move(cur));
    return out;
}

double parse_double(const std::string &s, int line)
{
    char *end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0')
        throw IoError("csv line " + std::to_string(line) + ": bad number '" + s + "'");
    return v;
}

} // namespace

std::string format_csv(std::vector<ResultRow> rows)
{
    sort_rows(rows);
    std::ostringstream os;
    os << kCsvHeader << '\n';
    for (const auto &r : rows)
    {
        std::string list = "[";
        for (std::size_t i = 0; i < r.per_ue_se.size(); ++i)
            list += (i ? "," : "") + num(r.per_ue_se[i]);
        list += "]";
        os << num(r.axis_value) << ',' << to_string(r.scheme) << ',' << to_string(r.environment) << ','
           << num(r.sum_se) << ',' << num(r.se_stderr) << ",\"" << list << "\"," << r.trials << ',' << r.seed << ','
           << r.config_hash << ',' << r.solver_iters << ',' << num(r.solver_residual) << '\n';
    }
    return os.str();
}

void emit_csv(const std::vector<ResultRow> &rows, const std::string &path)
{
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open '" + path + "' for writing");
    f << format_csv(rows);
    f.flush();
    if (!f)
        throw IoError("write to '" + path + "' failed");
}

std::vector<ResultRow> parse_csv(const std::string &text)
{
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kCsvHeader)
        throw IoError("csv: missing or unexpected header");
    std::vector<ResultRow> rows;
    int lineno = 1;
    while (std::getline(is, line))
    {
        ++lineno;
        if (line.empty())
            continue;
        auto f = split_csv_line(line);
        if (f.size() != 11)
            throw IoError("csv line " + std::to_string(lineno) + ": expected 11 fields, got " +
                          std::to_string(f.size()));
        ResultRow r;
        try
        {
            r.axis_value = parse_double(f[0], lineno);
            r.scheme = parse_scheme(f[1]);
            r.environment = parse_environment(f[2]);
            r.sum_se = parse_double(f[3], lineno);
            r.se_stderr = parse_double(f[4], lineno);
            for (const auto &x : nlohmann::json::parse(f[5]))
                r.per_ue_se.push_back(x.get<double>());
            r.trials = std::stol(f[6]);
            r.seed = std::stoull(f[7]);
            r.config_hash = f[8];
            r.solver_iters = std::stoi(f[9]);
            r.solver_residual = parse_double(f[10], lineno);
        }
        catch (const IoError &)
        {
            throw;
        }
        catch (const std::exception &e)
        {
            throw IoError("csv line " + std::to_string(lineno) + ": " + e.what());
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<ResultRow> read_csv(const std::string &path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_csv(ss.str());
}

} // namespace cfmimo
