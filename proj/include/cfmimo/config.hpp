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

#ifndef CFMIMO_CONFIG_HPP
#define CFMIMO_CONFIG_HPP

#include "cfmimo/experiments.hpp"
#include "cfmimo/scenario.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cfmimo
{

// Power levels are kept in dBm as written so the file round-trips exactly.
struct ScenarioSection
{
    SystemConfig system;
    double noise_dbm = -94.0;
    double power_dbm = 23.0;

    SystemConfig resolved() const; // system with sigma2 and p_k filled from the dBm values
    bool operator==(const ScenarioSection &) const = default;
};

struct OutputSection
{
    std::string directory; // empty: $CFMIMO_OUT_DIR, then "out"
    std::string prefix;    // empty: the sweep name alone
    bool operator==(const OutputSection &) const = default;
};

struct SweepSection
{
    std::string name = "sweep";
    SweepAxis axis = SweepAxis::Height;
    std::vector<double> points;
    int m_tot = 0;
    double antenna_ratio = 2.0;
    std::vector<Environment> environments{Environment::Suburban};
    std::vector<Scheme> schemes{Scheme::FullyCentralized, Scheme::OneShotEmpirical, Scheme::OneShotAsymptotic,
                                Scheme::SmallCell};
    int trials = 2000;
    int deployments_per_point = 1;
    std::optional<ScenarioSection> scenario; // replaces the top-level scenario for this sweep
    bool operator==(const SweepSection &) const = default;
};

struct ConfigFile
{
    ScenarioSection scenario;
    EnvironmentTable constants;
    std::vector<SweepSection> sweeps;
    OutputSection output;

    /// The sweep with the scenario and constants sections applied.
    SweepSpec sweep_spec(std::size_t i) const;
    bool operator==(const ConfigFile &) const = default;
};

// One violated constraint; line is 0 when the default value is at fault.
struct Violation
{
    std::string key;
    int line = 0;
    std::string message;
};

struct LoadedConfig
{
    ConfigFile config;
    std::vector<Violation> violations;
};

/// Parses YAML text. Syntax errors, unknown keys and wrong types throw
/// ConfigError with the line; invariant violations are returned instead.
LoadedConfig parse_config(const std::string &text);
LoadedConfig load_config(const std::string &path); // throws IoError when unreadable

/// Canonical YAML form, every field written out.
std::string serialize_config(const ConfigFile &cfg);

// Source line (1-based) of each key path, e.g. "scenario.K" or "sweep[0].points".
using KeyLines = std::map<std::string, int>;

/// Constraint checks on an already-parsed config.
std::vector<Violation> check_config(const ConfigFile &cfg, const KeyLines &lines = {});

} // namespace cfmimo

#endif
