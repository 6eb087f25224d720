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

#include "cfmimo/scenario.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace cfmimo
{

namespace
{
constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

void require_finite(double v, const char *what)
{
    if (!std::isfinite(v))
        throw std::domain_error(std::string(what) + " must be finite");
}
} // namespace

std::string to_string(Environment env)
{
    switch (env)
    {
    case Environment::Suburban:
        return "suburban";
    case Environment::Urban:
        return "urban";
    case Environment::DenseUrban:
        return "dense_urban";
    }
    return "unknown";
}

Environment parse_environment(std::string_view name)
{
    if (name == "suburban" || name == "Suburban")
        return Environment::Suburban;
    if (name == "urban" || name == "Urban")
        return Environment::Urban;
    if (name == "dense_urban" || name == "DenseUrban" || name == "dense-urban")
        return Environment::DenseUrban;
    throw ConfigError("unknown environment '" + std::string(name) + "' (expected suburban, urban or dense_urban)");
}

// ---------- SystemConfig ----------

int SystemConfig::pilot_length() const
{
    if (tau_p > 0)
        return tau_p;
    int reuse = pilot_reuse > 0 ? pilot_reuse : 1;
    return ((K + reuse - 1) / reuse) * N;
}

std::vector<std::string> SystemConfig::violations() const
{
    std::vector<std::string> v;
    if (L < 1)
        v.push_back("L must be >= 1");
    if (M < 1)
        v.push_back("M must be >= 1");
    if (K < 1)
        v.push_back("K must be >= 1");
    if (N < 1)
        v.push_back("N must be >= 1");
    if (pilot_reuse < 1)
        v.push_back("pilot_reuse must be >= 1");
    if (tau_p < 0)
        v.push_back("tau_p must be >= 0 (0 selects the automatic length)");
    if (tau_c < 1)
        v.push_back("tau_c must be >= 1");
    if (v.empty())
    {
        int tp = pilot_length();
        if (tp < N)
            v.push_back("tau_p must be >= N");
        if (tp >= tau_c)
            v.push_back("tau_p must be < tau_c so the data phase is not empty");
        int groups = (K + pilot_reuse - 1) / pilot_reuse;
        if (tp / N < groups)
            v.push_back("pilot book too small: floor(tau_p / N) = " + std::to_string(tp / N) + " < ceil(K / pilot_reuse) = " +
                        std::to_string(groups));
    }
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
        v.push_back("sigma2 must be > 0");
    if (!(p_k > 0.0) || !std::isfinite(p_k))
        v.push_back("p_k must be > 0");
    if (!(kappa >= 0.0) || !std::isfinite(kappa))
        v.push_back("kappa must be >= 0");
    if (!(asd_deg > 0.0) || !std::isfinite(asd_deg))
        v.push_back("asd_deg must be > 0");
    if (!(area_side > 0.0) || !std::isfinite(area_side))
        v.push_back("area_side must be > 0");
    if (!(ue_height >= 0.0) || !std::isfinite(ue_height))
        v.push_back("ue_height must be >= 0");
    if (!(uav_height > ue_height) || !std::isfinite(uav_height))
        v.push_back("uav_height must exceed ue_height");
    for (int e = 0; e < 3; ++e)
    {
        const auto &c = constants.entries[e];
        if (!(c.a > 0.0 && c.b > 0.0) || !std::isfinite(c.a) || !std::isfinite(c.b) ||
            !std::isfinite(c.excess_los_db) || !std::isfinite(c.excess_nlos_db))
            v.push_back("environment constants for " + to_string(static_cast<Environment>(e)) +
                        " must be finite with a, b > 0");
    }
    return v;
}

void SystemConfig::validate() const
{
    auto v = violations();
    if (!v.empty())
        throw ConfigError(v.front());
}

std::string canonical_string(const SystemConfig &c)
{
    auto num = [](double x)
    {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17e", x);
        return std::string(buf);
    };
    std::ostringstream os;
    os << "L=" << c.L << "\nM=" << c.M << "\nK=" << c.K << "\nN=" << c.N << "\ntau_c=" << c.tau_c
       << "\ntau_p=" << c.pilot_length() << "\nsigma2=" << num(c.sigma2) << "\np_k=" << num(c.p_k)
       << "\nuav_height=" << num(c.uav_height) << "\nue_height=" << num(c.ue_height)
       << "\narea_side=" << num(c.area_side) << "\nenvironment=" << to_string(c.environment)
       << "\nkappa=" << num(c.kappa) << "\nasd_deg=" << num(c.asd_deg) << "\npilot_reuse=" << c.pilot_reuse
       << "\nseed=" << c.seed << '\n';
    for (int e = 0; e < 3; ++e)
    {
        const auto &k = c.constants.entries[e];
        os << "constants." << to_string(static_cast<Environment>(e)) << '=' << num(k.a) << ',' << num(k.b) << ','
           << num(k.excess_los_db) << ',' << num(k.excess_nlos_db) << '\n';
    }
    return os.str();
}

std::string config_hash(const SystemConfig &cfg)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical_string(cfg))
    {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------- deployment ----------

std::vector<Point3> ap_grid(int L, double area_side, double height)
{
    int g = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(L))));
    while (g * g < L)
        ++g;
    std::vector<Point3> out;
    out.reserve(L);
    double cell = area_side / g;
    for (int row = 0; row < g && static_cast<int>(out.size()) < L; ++row)
        for (int col = 0; col < g && static_cast<int>(out.size()) < L; ++col)
            out.push_back({(col + 0.5) * cell, (row + 0.5) * cell, height});
    return out;
}

Deployment make_deployment(const SystemConfig &cfg, Rng &rng)
{
    Deployment dep;
    dep.ap_positions = ap_grid(cfg.L, cfg.area_side, cfg.uav_height);
    std::uniform_real_distribution<double> u(0.0, cfg.area_side);
    dep.ue_positions.reserve(cfg.K);
    for (int k = 0; k < cfg.K; ++k)
    {
        double x = u(rng);
        double y = u(rng);
        dep.ue_positions.push_back({x, y, cfg.ue_height});
    }
    return dep;
}

std::vector<int> nearest_ap(const Deployment &dep)
{
    std::vector<int> out;
    out.reserve(dep.ue_positions.size());
    for (const auto &ue : dep.ue_positions)
    {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < dep.ap_positions.size(); ++l)
        {
            const auto &ap = dep.ap_positions[l];
            double d = std::hypot(ap.x - ue.x, ap.y - ue.y, ap.z - ue.z);
            if (d < best_d)
            {
                best_d = d;
                best = static_cast<int>(l);
            }
        }
        out.push_back(best);
    }
    return out;
}

// ---------- large-scale model ----------

double los_probability(const EnvironmentConstants &env, double h, double d_ground)
{
    require_finite(h, "los_probability: h");
    require_finite(d_ground, "los_probability: d_ground");
    if (!(h > 0.0) || d_ground < 0.0)
        throw std::domain_error("los_probability: requires h > 0 and d_ground >= 0");
    double theta = d_ground == 0.0 ? 90.0 : std::atan(h / d_ground) / kDeg;
    return 1.0 / (1.0 + env.a * std::exp(-env.b * (theta - env.a)));
}

PathLoss path_loss(const EnvironmentConstants &env, double d_3d, double p_los)
{
    require_finite(d_3d, "path_loss: d_3d");
    require_finite(p_los, "path_loss: p_los");
    if (!(d_3d > 0.0))
        throw std::domain_error("path_loss: d_3d must be > 0");
    if (p_los < 0.0 || p_los > 1.0)
        throw std::domain_error("path_loss: p_los must lie in [0, 1]");
    PathLoss pl{};
    pl.fspl_db = kPathLossConstantDb - 10.0 * kPathLossExponent * std::log10(d_3d);
    pl.pl_los_db = pl.fspl_db - env.excess_los_db;
    pl.pl_nlos_db = pl.fspl_db - env.excess_nlos_db;
    pl.pl_avg_db = p_los * pl.pl_los_db + (1.0 - p_los) * pl.pl_nlos_db;
    return pl;
}

// Adaptive composite Gauss-Legendre. Each panel is compared against the sum of
// its two halves and split until the difference drops below its share of the
// tolerance.
namespace
{
struct Quadrature
{
    int max_depth = 40;
    long evaluations = 0;
    double worst_error = 0.0;

    template <class F>
    cd panel(F &f, double a, double b)
    {
        evaluations += 20;
        return boost::math::quadrature::gauss<double, 20>::integrate(f, a, b);
    }

    template <class F>
    cd adapt(F &f, double a, double b, cd whole, double tol, int depth)
    {
        double m = 0.5 * (a + b);
        cd left = panel(f, a, m);
        cd right = panel(f, m, b);
        double err = std::abs(left + right - whole);
        if (err <= tol || depth >= max_depth)
        {
            if (err > tol)
                worst_error = std::max(worst_error, err);
            return left + right;
        }
        return adapt(f, a, m, left, 0.5 * tol, depth + 1) + adapt(f, m, b, right, 0.5 * tol, depth + 1);
    }
};
} // namespace

CMat correlation_matrix(int dim, double mean_angle_deg, double asd_deg)
{
    require_finite(mean_angle_deg, "correlation_matrix: mean_angle_deg");
    require_finite(asd_deg, "correlation_matrix: asd_deg");
    if (dim < 1 || !(asd_deg > 0.0))
        throw std::domain_error("correlation_matrix: requires dim >= 1 and asd_deg > 0");

    const double tol = 1e-10;
    const double xi = asd_deg;
    const double norm = 1.0 / std::sqrt(2.0 * kPi * xi * xi);

    // Initial panels of width xi around the mean resolve the Gaussian even when
    // the spread is tiny compared with the integration range.
    std::vector<double> breaks{-180.0, 180.0};
    for (int j = -12; j <= 12; ++j)
    {
        double p = mean_angle_deg + j * xi;
        if (p > -180.0 && p < 180.0)
            breaks.push_back(p);
    }
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    const double panel_tol = tol / static_cast<double>(breaks.size() - 1);

    // Toeplitz: entry (m, n) depends only on the lag m - n.
    std::vector<cd> lag(dim);
    Quadrature q;
    for (int d = 0; d < dim; ++d)
    {
        auto f = [&](double phi) -> cd
        {
            double g = norm * std::exp(-(phi - mean_angle_deg) * (phi - mean_angle_deg) / (2.0 * xi * xi));
            double ph = kPi * d * std::sin(phi * kDeg);
            return cd(g * std::cos(ph), g * std::sin(ph));
        };
        cd sum = 0.0;
        for (std::size_t i = 0; i + 1 < breaks.size(); ++i)
        {
            double a = breaks[i];
            double b = breaks[i + 1];
            sum += q.adapt(f, a, b, q.panel(f, a, b), panel_tol, 0);
        }
        lag[d] = sum;
    }
    if (q.worst_error > tol)
    {
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "correlation_matrix: quadrature did not converge (dim=%d, mean=%.6g deg, asd=%.6g deg, "
                      "panel error %.3e > %.1e after %ld evaluations)",
                      dim, mean_angle_deg, asd_deg, q.worst_error, tol, q.evaluations);
        throw NumericError(buf);
    }

    CMat R(dim, dim);
    for (int m = 0; m < dim; ++m)
        for (int n = 0; n < dim; ++n)
            R(m, n) = m >= n ? lag[m - n] : std::conj(lag[n - m]);
    return hermitian_part(R);
}

CMat los_component(int M, int N, double theta_r_deg, double theta_t_deg)
{
    if (M < 1 || N < 1)
        throw std::domain_error("los_component: requires M, N >= 1");
    double sr = std::sin(theta_r_deg * kDeg);
    double st = std::sin(theta_t_deg * kDeg);
    CMat H(M, N);
    for (int m = 0; m < M; ++m)
        for (int n = 0; n < N; ++n)
            H(m, n) = std::polar(1.0, kPi * (m * sr - n * st));
    return H;
}

LinkGeometry link_geometry(const Point3 &ap, const Point3 &ue)
{
    LinkGeometry g{};
    double dx = ue.x - ap.x;
    double dy = ap.y - ue.y;
    g.height = ap.z - ue.z;
    g.d_ground = std::hypot(dx, dy);
    g.d_3d = std::hypot(g.d_ground, g.height);
    g.theta_r_deg = std::asin(std::clamp(dx / g.d_3d, -1.0, 1.0)) / kDeg;
    g.theta_t_deg = std::asin(std::clamp(dy / g.d_3d, -1.0, 1.0)) / kDeg;
    return g;
}

void normalize_link(LinkStats &link, int M, int N)
{
    double beta = link.beta;
    double kappa = link.kappa;
    double trR = link.R.trace().real();
    double trT = link.T.trace().real();
    link.R *= (beta * M / (kappa + 1.0)) / trR;
    link.T *= static_cast<double>(N) / trT;
    double fro2 = link.hbar.squaredNorm();
    double target = kappa * beta * M / (kappa + 1.0);
    link.hbar *= fro2 > 0.0 ? std::sqrt(target / fro2) : 0.0;
    link.R_sqrt = hermitian_sqrt(link.R);
    link.T_sqrt = hermitian_sqrt(link.T);
}

LinkTable build_link_stats(const SystemConfig &cfg, const Deployment &dep)
{
    const auto &env = cfg.constants[cfg.environment];
    LinkTable table(cfg.K, cfg.L);
    for (int k = 0; k < cfg.K; ++k)
        for (int l = 0; l < cfg.L; ++l)
        {
            LinkGeometry g = link_geometry(dep.ap_positions[l], dep.ue_positions[k]);
            LinkStats &s = table(k, l);
            s.p_los = los_probability(env, g.height, g.d_ground);
            s.beta = path_loss(env, g.d_3d, s.p_los).beta();
            s.kappa = cfg.kappa;
            s.R = correlation_matrix(cfg.M, g.theta_r_deg, cfg.asd_deg);
            s.T = correlation_matrix(cfg.N, g.theta_t_deg, cfg.asd_deg);
            s.hbar = los_component(cfg.M, cfg.N, g.theta_r_deg, g.theta_t_deg);
            normalize_link(s, cfg.M, cfg.N);
        }
    return table;
}

ChannelRealization draw_channel(const LinkTable &stats, double sigma2, int tau_p, Rng &rng)
{
    ChannelRealization out;
    out.K = stats.K();
    out.L = stats.L();
    out.H.reserve(static_cast<std::size_t>(out.K) * out.L);
    for (int k = 0; k < out.K; ++k)
        for (int l = 0; l < out.L; ++l)
        {
            const LinkStats &s = stats(k, l);
            CMat W = complex_gaussian(s.hbar.rows(), s.hbar.cols(), rng);
            out.H.push_back(s.hbar + s.R_sqrt * W * s.T_sqrt);
        }
    out.pilot_noise.reserve(out.L);
    for (int l = 0; l < out.L; ++l)
    {
        Eigen::Index M = stats(0, l).hbar.rows();
        out.pilot_noise.push_back(complex_gaussian(M, tau_p, rng, sigma2));
    }
    return out;
}

} // namespace cfmimo
