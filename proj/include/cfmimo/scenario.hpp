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

#ifndef CFMIMO_SCENARIO_HPP
#define CFMIMO_SCENARIO_HPP

#include "cfmimo/linalg.hpp"
#include "cfmimo/rng.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cfmimo
{

enum class Environment
{
    Suburban,
    Urban,
    DenseUrban,
};

std::string to_string(Environment env);
Environment parse_environment(std::string_view name); // throws ConfigError

// Air-to-ground LoS model constants: logistic (a, b) and the excess losses in dB.
struct EnvironmentConstants
{
    double a;
    double b;
    double excess_los_db;
    double excess_nlos_db;
};

// Single editable source of truth for the per-environment constants. The
// defaults are the classic air-to-ground values for the three environments.
struct EnvironmentTable
{
    std::array<EnvironmentConstants, 3> entries = {{
        {4.88, 0.43, 0.1, 21.0},  // Suburban
        {9.61, 0.16, 1.0, 20.0},  // Urban
        {12.08, 0.11, 1.6, 23.0}, // DenseUrban
    }};

    const EnvironmentConstants &operator[](Environment env) const { return entries[static_cast<int>(env)]; }
    EnvironmentConstants &operator[](Environment env) { return entries[static_cast<int>(env)]; }
    bool operator==(const EnvironmentTable &) const = default;
};

inline bool operator==(const EnvironmentConstants &x, const EnvironmentConstants &y)
{
    return x.a == y.a && x.b == y.b && x.excess_los_db == y.excess_los_db && x.excess_nlos_db == y.excess_nlos_db;
}

inline double dbm_to_watt(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

// All scalar parameters of one scenario.
struct SystemConfig
{
    int L = 4;       // AP-UAVs
    int M = 8;       // antennas per AP-UAV
    int K = 4;       // UEs
    int N = 2;       // antennas per UE
    int tau_c = 200; // channel uses per coherence block
    int tau_p = 0;   // pilot length; 0 selects ceil(K / pilot_reuse) * N
    double sigma2 = dbm_to_watt(-94.0);
    double p_k = dbm_to_watt(23.0);
    double uav_height = 100.0;
    double ue_height = 1.5;
    double area_side = 1000.0;
    Environment environment = Environment::Suburban;
    double kappa = 2.0; // Rician factor, linear (about 3 dB)
    double asd_deg = 15.0;
    int pilot_reuse = 1;
    std::uint64_t seed = 1;
    EnvironmentTable constants;

    int pilot_length() const;
    int n_tot() const { return K * N; }
    int m_tot() const { return L * M; }
    double prelog() const { return 1.0 - static_cast<double>(pilot_length()) / tau_c; }

    /// Human-readable list of violated invariants, empty when valid.
    std::vector<std::string> violations() const;
    /// Throws ConfigError naming the first violation.
    void validate() const;

    bool operator==(const SystemConfig &) const = default;
};

/// Canonical one-line-per-field text form; the basis of the config hash.
std::string canonical_string(const SystemConfig &cfg);
/// FNV-1a 64 of canonical_string, as 16 hex digits.
std::string config_hash(const SystemConfig &cfg);

struct Point3
{
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

struct Deployment
{
    std::vector<Point3> ap_positions;
    std::vector<Point3> ue_positions;
};

/// AP lattice: ceil(sqrt(L)) x ceil(sqrt(L)) cells centred in the square, filled row-major.
std::vector<Point3> ap_grid(int L, double area_side, double height);

/// APs on the lattice, UEs uniform in the square at ue_height.
Deployment make_deployment(const SystemConfig &cfg, Rng &rng);

/// Index of the nearest AP to each UE (3-D distance); ties go to the lowest index.
std::vector<int> nearest_ap(const Deployment &dep);

// ---------- large-scale model ----------

/// Logistic LoS probability with elevation angle atan(h / d_ground) in degrees.
double los_probability(const EnvironmentConstants &env, double h, double d_ground);

struct PathLoss
{
    double fspl_db;    // 10 log10(rho / d^alpha), a gain
    double pl_los_db;  // gain including LoS excess loss
    double pl_nlos_db; // gain including NLoS excess loss
    double pl_avg_db;  // LoS-probability weighted mixture
    double beta() const { return db_to_linear(pl_avg_db); }
};

inline constexpr double kPathLossConstantDb = -55.0;
inline constexpr double kPathLossExponent = 3.0;

PathLoss path_loss(const EnvironmentConstants &env, double d_3d, double p_los);

/// ULA (half-wavelength) correlation for a Gaussian angular spread; not normalized.
CMat correlation_matrix(int dim, double mean_angle_deg, double asd_deg);

/// a_R(theta_r) a_T(theta_t)^H with half-wavelength ULA steering vectors.
CMat los_component(int M, int N, double theta_r_deg, double theta_t_deg);

// Geometry of one UE-AP link. The AP array lies along x, the UE array along y.
struct LinkGeometry
{
    double d_ground;
    double d_3d;
    double height;      // AP altitude above the UE
    double theta_r_deg; // angle off AP broadside
    double theta_t_deg; // angle off UE broadside
};

LinkGeometry link_geometry(const Point3 &ap, const Point3 &ue);

// Statistical CSI of one (UE k, AP l) link.
struct LinkStats
{
    CMat hbar;   // M x N LoS component
    CMat R;      // M x M receive correlation
    CMat T;      // N x N transmit correlation
    CMat R_sqrt;
    CMat T_sqrt;
    double beta = 0.0;
    double p_los = 0.0;
    double kappa = 0.0;

    /// Full MN x MN covariance T^T (x) R of vec(H - hbar).
    CMat covariance() const { return kron(T.transpose(), R); }
};

// Per-link statistics for all K x L pairs, indexed (k, l).
class LinkTable
{
public:
    LinkTable() = default;
    LinkTable(int K, int L) : K_(K), L_(L), links_(static_cast<std::size_t>(K) * L) {}

    int K() const { return K_; }
    int L() const { return L_; }
    const LinkStats &operator()(int k, int l) const { return links_[index(k, l)]; }
    LinkStats &operator()(int k, int l) { return links_[index(k, l)]; }

private:
    std::size_t index(int k, int l) const { return static_cast<std::size_t>(k) * L_ + l; }
    int K_ = 0;
    int L_ = 0;
    std::vector<LinkStats> links_;
};

/// Rescales R, T and hbar of a link so the three trace identities hold exactly.
void normalize_link(LinkStats &link, int M, int N);

/// Builds all link statistics. Mean angles come from geometry, so no randomness is consumed.
LinkTable build_link_stats(const SystemConfig &cfg, const Deployment &dep);

// One coherence block: channels H_kl and the pilot-phase noise at every AP.
struct ChannelRealization
{
    int K = 0;
    int L = 0;
    std::vector<CMat> H;           // index k * L + l, each M x N
    std::vector<CMat> pilot_noise; // per AP, M x tau_p

    const CMat &h(int k, int l) const { return H[static_cast<std::size_t>(k) * L + l]; }
};

/// H_kl = hbar + R^{1/2} W T^{1/2}, plus CN(0, sigma2) pilot noise.
ChannelRealization draw_channel(const LinkTable &stats, double sigma2, int tau_p, Rng &rng);

} // namespace cfmimo

#endif
