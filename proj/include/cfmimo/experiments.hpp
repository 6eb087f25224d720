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

#ifndef CFMIMO_EXPERIMENTS_HPP
#define CFMIMO_EXPERIMENTS_HPP

#include "cfmimo/detection.hpp"
#include "cfmimo/scenario.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cfmimo
{

// What the sweep varies.
//  AntennasFixedRatio: points are N, with M = antenna_ratio * N.
//  RatioLM:            divisor pairs (L, M) of m_tot; the axis value is L / M.
//                      Points, if given, are the L values to keep.
//  NumUAVs:            points are L, with M = m_tot / L.
//  Height:             points are the AP altitude in metres.
//  NumUEs:             points are K.
//  PilotReuse:         points are N at the base pilot_reuse factor.
enum class SweepAxis
{
    AntennasFixedRatio,
    RatioLM,
    NumUAVs,
    Height,
    NumUEs,
    PilotReuse,
};

std::string to_string(SweepAxis a);
SweepAxis parse_axis(std::string_view name); // throws ConfigError

struct SweepSpec
{
    std::string name = "sweep";
    SystemConfig base;
    SweepAxis axis = SweepAxis::Height;
    std::vector<double> points;
    int m_tot = 0;
    double antenna_ratio = 2.0;
    std::vector<Environment> environments{Environment::Suburban};
    std::vector<Scheme> schemes{Scheme::FullyCentralized, Scheme::OneShotEmpirical, Scheme::OneShotAsymptotic,
                                Scheme::SmallCell};
    int trials = 2000;
    int deployments_per_point = 1;

    /// Violated invariants of the sweep itself; point-level infeasibility is not an error.
    std::vector<std::string> violations() const;
};

struct SweepPoint
{
    double axis_value = 0.0;
    std::optional<SystemConfig> config; // empty when the point is infeasible
    std::string skip_reason;
};

/// Points of the sweep for one environment, in axis order.
std::vector<SweepPoint> enumerate_points(const SweepSpec &spec, Environment env);

/// Positive divisors of n in increasing order.
std::vector<int> divisors(int n);

struct ResultRow
{
    double axis_value = 0.0;
    Scheme scheme = Scheme::FullyCentralized;
    Environment environment = Environment::Suburban;
    double sum_se = 0.0;
    double se_stderr = 0.0;
    std::vector<double> per_ue_se;
    long trials = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
    int solver_iters = 0;
    double solver_residual = 0.0;
    std::string note; // failure or skip reason; kept out of the CSV

    bool operator==(const ResultRow &o) const;
};

struct RunOptions
{
    int parallel = 1;
    int batches = 40; // upper bound; a point uses min(trials, batches)
};

/// One point: deployment, statistics, `trials` realizations shared by all schemes.
/// A failing scheme yields a row with sum_se = NaN and a note; the others still run.
std::vector<ResultRow> run_point(const SystemConfig &cfg, const std::vector<Scheme> &schemes, int trials,
                                 std::uint64_t seed, double axis_value, int deployments_per_point = 1,
                                 const RunOptions &opt = {});

/// All points and environments of the sweep, sorted as in the CSV.
std::vector<ResultRow> run_sweep(const SweepSpec &spec, const RunOptions &opt = {});

/// Sorts by (axis value, scheme name), stable for ties.
void sort_rows(std::vector<ResultRow> &rows);

inline constexpr const char *kCsvHeader =
    "axis,scheme,environment,sum_se,se_stderr,per_ue_se_json,trials,seed,config_hash,solver_iters,solver_residual";

std::string format_csv(std::vector<ResultRow> rows);
void emit_csv(const std::vector<ResultRow> &rows, const std::string &path); // throws IoError
std::vector<ResultRow> parse_csv(const std::string &text);                  // throws IoError
std::vector<ResultRow> read_csv(const std::string &path);                   // throws IoError

} // namespace cfmimo

#endif
