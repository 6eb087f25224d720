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

#include "cfmimo/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace cfmimo
{

SystemConfig ScenarioSection::resolved() const
{
    SystemConfig c = system;
    c.sigma2 = dbm_to_watt(noise_dbm);
    c.p_k = dbm_to_watt(power_dbm);
    return c;
}

SweepSpec ConfigFile::sweep_spec(std::size_t i) const
{
    const SweepSection &s = sweeps.at(i);
    SweepSpec spec;
    spec.name = s.name;
    spec.base = s.scenario ? s.scenario->resolved() : scenario.resolved();
    spec.base.constants = constants;
    spec.axis = s.axis;
    spec.points = s.points;
    spec.m_tot = s.m_tot;
    spec.antenna_ratio = s.antenna_ratio;
    spec.environments = s.environments;
    spec.schemes = s.schemes;
    spec.trials = s.trials;
    spec.deployments_per_point = s.deployments_per_point;
    return spec;
}

namespace
{

int line_of(const YAML::Node &n)
{
    return n.Mark().line + 1;
}

[[noreturn]] void fail(const YAML::Node &n, const std::string &msg)
{
    throw ConfigError("line " + std::to_string(line_of(n)) + ": " + msg);
}

template <class T>
T scalar(const YAML::Node &n, const std::string &key)
{
    if (!n.IsScalar())
        fail(n, "'" + key + "' must be a scalar");
    try
    {
        return n.as<T>();
    }
    catch (const YAML::Exception &)
    {
        fail(n, "'" + key + "' has the wrong type: '" + n.Scalar() + "'");
    }
}

double real_value(const YAML::Node &n, const std::string &key)
{
    double v = scalar<double>(n, key);
    if (!std::isfinite(v))
        fail(n, "'" + key + "' must be finite");
    return v;
}

int int_value(const YAML::Node &n, const std::string &key)
{
    return scalar<int>(n, key);
}

void expect_map(const YAML::Node &n, const std::string &what)
{
    if (!n.IsMap())
        fail(n, "'" + what + "' must be a mapping");
}

// Walks the keys of a map, rejecting any not in `allowed`.
template <class Fn>
void for_each_key(const YAML::Node &map, const std::string &path, const std::set<std::string> &allowed, KeyLines &lines,
                  Fn &&fn)
{
    expect_map(map, path);
    std::set<std::string> seen;
    for (auto it = map.begin(); it != map.end(); ++it)
    {
        std::string key = it->first.Scalar();
        if (!allowed.count(key))
        {
            std::string list;
            for (const auto &a : allowed)
                list += (list.empty() ? "" : ", ") + a;
            fail(it->first, "unknown key '" + key + "' in " + path + " (allowed: " + list + ")");
        }
        if (!seen.insert(key).second)
            fail(it->first, "duplicate key '" + key + "' in " + path);
        lines[path + "." + key] = line_of(it->first);
        fn(key, it->second);
    }
}

void parse_scenario(const YAML::Node &n, const std::string &path, ScenarioSection &s, KeyLines &lines)
{
    static const std::set<std::string> keys{"L",          "M",          "K",         "N",           "tau_c",
                                            "tau_p",      "noise_dbm",  "power_dbm", "uav_height",  "ue_height",
                                            "area_side",  "environment", "kappa",    "asd_deg",     "pilot_reuse",
                                            "seed"};
    SystemConfig &c = s.system;
    for_each_key(n, path, keys, lines,
                 [&](const std::string &k, const YAML::Node &v)
                 {
                     if (k == "L")
                         c.L = int_value(v, k);
                     else if (k == "M")
                         c.M = int_value(v, k);
                     else if (k == "K")
                         c.K = int_value(v, k);
                     else if (k == "N")
                         c.N = int_value(v, k);
                     else if (k == "tau_c")
                         c.tau_c = int_value(v, k);
                     else if (k == "tau_p")
                         c.tau_p = int_value(v, k);
                     else if (k == "noise_dbm")
                         s.noise_dbm = real_value(v, k);
                     else if (k == "power_dbm")
                         s.power_dbm = real_value(v, k);
                     else if (k == "uav_height")
                         c.uav_height = real_value(v, k);
                     else if (k == "ue_height")
                         c.ue_height = real_value(v, k);
                     else if (k == "area_side")
                         c.area_side = real_value(v, k);
                     else if (k == "environment")
                     {
                         try
                         {
                             c.environment = parse_environment(scalar<std::string>(v, k));
                         }
                         catch (const ConfigError &e)
                         {
                             fail(v, e.what());
                         }
                     }
                     else if (k == "kappa")
                         c.kappa = real_value(v, k);
                     else if (k == "asd_deg")
                         c.asd_deg = real_value(v, k);
                     else if (k == "pilot_reuse")
                         c.pilot_reuse = int_value(v, k);
                     else if (k == "seed")
                         c.seed = scalar<std::uint64_t>(v, k);
                 });
}

void parse_constants(const YAML::Node &n, EnvironmentTable &t, KeyLines &lines)
{
    static const std::set<std::string> envs{"suburban", "urban", "dense_urban"};
    static const std::set<std::string> fields{"a", "b", "excess_los_db", "excess_nlos_db"};
    for_each_key(n, "constants", envs, lines,
                 [&](const std::string &env, const YAML::Node &v)
                 {
                     EnvironmentConstants &c = t[parse_environment(env)];
                     for_each_key(v, "constants." + env, fields, lines,
                                  [&](const std::string &k, const YAML::Node &x)
                                  {
                                      double d = real_value(x, k);
                                      if (k == "a")
                                          c.a = d;
                                      else if (k == "b")
                                          c.b = d;
                                      else if (k == "excess_los_db")
                                          c.excess_los_db = d;
                                      else
                                          c.excess_nlos_db = d;
                                  });
                 });
}

template <class T, class Parse>
std::vector<T> list_of(const YAML::Node &n, const std::string &key, Parse &&parse)
{
    std::vector<T> out;
    if (n.IsScalar())
    {
        out.push_back(parse(n));
        return out;
    }
    if (!n.IsSequence())
        fail(n, "'" + key + "' must be a list");
    for (const auto &x : n)
        out.push_back(parse(x));
    return out;
}

// A sweep-level scenario map is applied over the top-level one once the whole file is read.
SweepSection parse_sweep(const YAML::Node &n, const std::string &path, KeyLines &lines, YAML::Node &scenario)
{
    static const std::set<std::string> keys{"name",    "axis",   "points",
                                            "m_tot",   "antenna_ratio", "environments",
                                            "schemes", "trials", "deployments_per_point",
                                            "scenario"};
    SweepSection s;
    for_each_key(n, path, keys, lines,
                 [&](const std::string &k, const YAML::Node &v)
                 {
                     try
                     {
                         if (k == "name")
                             s.name = scalar<std::string>(v, k);
                         else if (k == "scenario")
                         {
                             expect_map(v, path + ".scenario");
                             scenario = v;
                         }
                         else if (k == "axis")
                             s.axis = parse_axis(scalar<std::string>(v, k));
                         else if (k == "points")
                             s.points = list_of<double>(v, k, [&](const YAML::Node &x) { return real_value(x, k); });
                         else if (k == "m_tot")
                             s.m_tot = int_value(v, k);
                         else if (k == "antenna_ratio")
                             s.antenna_ratio = real_value(v, k);
                         else if (k == "environments")
                             s.environments = list_of<Environment>(
                                 v, k, [&](const YAML::Node &x) { return parse_environment(scalar<std::string>(x, k)); });
                         else if (k == "schemes")
                             s.schemes = list_of<Scheme>(
                                 v, k, [&](const YAML::Node &x) { return parse_scheme(scalar<std::string>(x, k)); });
                         else if (k == "trials")
                             s.trials = int_value(v, k);
                         else if (k == "deployments_per_point")
                             s.deployments_per_point = int_value(v, k);
                     }
                     catch (const ConfigError &e)
                     {
                         std::string what = e.what();
                         if (what.rfind("line ", 0) == 0)
                             throw;
                         fail(v, what);
                     }
                 });
    return s;
}

// Key that a SystemConfig violation message refers to.
std::string scenario_key(const std::string &msg)
{
    if (msg.rfind("sigma2", 0) == 0)
        return "scenario.noise_dbm";
    if (msg.rfind("p_k", 0) == 0)
        return "scenario.power_dbm";
    if (msg.rfind("pilot book", 0) == 0)
        return "scenario.tau_p";
    const std::string env_prefix = "environment constants for ";
    if (msg.rfind(env_prefix, 0) == 0)
    {
        auto rest = msg.substr(env_prefix.size());
        return "constants." + rest.substr(0, rest.find(' '));
    }
    return "scenario." + msg.substr(0, msg.find(' '));
}

int line_for(const KeyLines &lines, const std::string &key)
{
    auto it = lines.find(key);
    if (it != lines.end())
        return it->second;
    // Fall back to the enclosing section.
    auto dot = key.rfind('.');
    if (dot != std::string::npos)
    {
        auto sec = lines.find(key.substr(0, dot));
        if (sec != lines.end())
            return sec->second;
    }
    return 0;
}

std::string num(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    std::string s = buf;
    if (s.find_first_of(".eEn") == std::string::npos)
        s += ".0";
    return s;
}

std::string quoted(const std::string &s)
{
    std::string out = "\"";
    for (char ch : s)
    {
        if (ch == '"' || ch == '\\')
            out += '\\';
        out += ch;
    }
    return out + "\"";
}

} // namespace

std::vector<Violation> check_config(const ConfigFile &cfg, const KeyLines &lines)
{
    std::vector<Violation> out;
    auto add = [&](const std::string &key, const std::string &msg) { out.push_back({key, line_for(lines, key), msg}); };

    SystemConfig base = cfg.scenario.resolved();
    base.constants = cfg.constants;
    for (const auto &msg : base.violations())
        add(scenario_key(msg), msg);

    if (cfg.sweeps.empty())
        add("sweep", "at least one sweep is required");
    std::set<std::string> names;
    for (std::size_t i = 0; i < cfg.sweeps.size(); ++i)
    {
        const std::string path = "sweep[" + std::to_string(i) + "]";
        const SweepSection &s = cfg.sweeps[i];
        if (s.name.empty() || s.name.find_first_of("/\\ ") != std::string::npos)
            add(path + ".name", "name must be non-empty without spaces or slashes");
        if (!names.insert(s.name).second)
            add(path + ".name", "duplicate sweep name '" + s.name + "'");
        SweepSpec spec = cfg.sweep_spec(i);
        auto bv = spec.base.violations();
        if (s.scenario)
            for (const auto &msg : bv)
            {
                std::string key = scenario_key(msg);
                if (key.rfind("scenario.", 0) == 0)
                    add(path + "." + key, msg);
            }
        auto sv = spec.violations();
        for (const auto &msg : sv)
            add(path + "." + msg.substr(0, msg.find(' ')), msg);
        if (!sv.empty() || !bv.empty())
            continue;
        for (Environment env : spec.environments)
            for (const auto &p : enumerate_points(spec, env))
                if (!p.config)
                    add(path + (spec.axis == SweepAxis::RatioLM && spec.points.empty() ? ".m_tot" : ".points"),
                        to_string(env) + " point " + num(p.axis_value) + " is infeasible: " + p.skip_reason);
    }
    return out;
}

LoadedConfig parse_config(const std::string &text)
{
    YAML::Node root;
    try
    {
        root = YAML::Load(text);
    }
    catch (const YAML::ParserException &e)
    {
        throw ConfigError("line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    LoadedConfig out;
    KeyLines lines;
    std::vector<YAML::Node> sweep_scenarios;
    if (root.IsNull())
        throw ConfigError("line 1: empty config");
    static const std::set<std::string> top{"scenario", "constants", "sweep", "output"};
    for_each_key(root, "config", top, lines,
                 [&](const std::string &k, const YAML::Node &v)
                 {
                     lines[k] = line_of(v);
                     if (k == "scenario")
                         parse_scenario(v, "scenario", out.config.scenario, lines);
                     else if (k == "constants")
                         parse_constants(v, out.config.constants, lines);
                     else if (k == "output")
                         for_each_key(v, "output", {"directory", "prefix"}, lines,
                                      [&](const std::string &ok, const YAML::Node &ov)
                                      {
                                          if (ok == "directory")
                                              out.config.output.directory = scalar<std::string>(ov, ok);
                                          else
                                              out.config.output.prefix = scalar<std::string>(ov, ok);
                                      });
                     else if (k == "sweep")
                     {
                         if (v.IsMap())
                         {
                             lines["sweep[0]"] = line_of(v);
                             sweep_scenarios.emplace_back();
                             out.config.sweeps.push_back(parse_sweep(v, "sweep[0]", lines, sweep_scenarios.back()));
                         }
                         else if (v.IsSequence())
                         {
                             for (std::size_t i = 0; i < v.size(); ++i)
                             {
                                 std::string path = "sweep[" + std::to_string(i) + "]";
                                 lines[path] = line_of(v[i]);
                                 sweep_scenarios.emplace_back();
                                 out.config.sweeps.push_back(parse_sweep(v[i], path, lines, sweep_scenarios.back()));
                             }
                         }
                         else
                             fail(v, "'sweep' must be a mapping or a list of mappings");
                     }
                 });
    for (std::size_t i = 0; i < sweep_scenarios.size(); ++i)
        if (sweep_scenarios[i].IsMap())
        {
            ScenarioSection sc = out.config.scenario;
            parse_scenario(sweep_scenarios[i], "sweep[" + std::to_string(i) + "].scenario", sc, lines);
            out.config.sweeps[i].scenario = sc;
        }
    out.violations = check_config(out.config, lines);
    return out;
}

LoadedConfig load_config(const std::string &path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    try
    {
        return parse_config(ss.str());
    }
    catch (const ConfigError &e)
    {
        throw ConfigError(path + ": " + e.what());
    }
}

namespace
{

void write_scenario(std::ostream &os, const ScenarioSection &s, const std::string &indent)
{
    const SystemConfig &c = s.system;
    os << indent << "L: " << c.L << '\n'
       << indent << "M: " << c.M << '\n'
       << indent << "K: " << c.K << '\n'
       << indent << "N: " << c.N << '\n'
       << indent << "tau_c: " << c.tau_c << '\n'
       << indent << "tau_p: " << c.tau_p << '\n'
       << indent << "noise_dbm: " << num(s.noise_dbm) << '\n'
       << indent << "power_dbm: " << num(s.power_dbm) << '\n'
       << indent << "uav_height: " << num(c.uav_height) << '\n'
       << indent << "ue_height: " << num(c.ue_height) << '\n'
       << indent << "area_side: " << num(c.area_side) << '\n'
       << indent << "environment: " << to_string(c.environment) << '\n'
       << indent << "kappa: " << num(c.kappa) << '\n'
       << indent << "asd_deg: " << num(c.asd_deg) << '\n'
       << indent << "pilot_reuse: " << c.pilot_reuse << '\n'
       << indent << "seed: " << c.seed << '\n';
}

} // namespace

std::string serialize_config(const ConfigFile &cfg)
{
    std::ostringstream os;
    os << "scenario:\n";
    write_scenario(os, cfg.scenario, "  ");
    os << "constants:\n";
    for (int e = 0; e < 3; ++e)
    {
        const auto &k = cfg.constants.entries[e];
        os << "  " << to_string(static_cast<Environment>(e)) << ": {a: " << num(k.a) << ", b: " << num(k.b)
           << ", excess_los_db: " << num(k.excess_los_db) << ", excess_nlos_db: " << num(k.excess_nlos_db) << "}\n";
    }
    os << "sweep:\n";
    for (const auto &s : cfg.sweeps)
    {
        os << "  - name: " << quoted(s.name) << "\n    axis: " << to_string(s.axis) << "\n    points: [";
        for (std::size_t i = 0; i < s.points.size(); ++i)
            os << (i ? ", " : "") << num(s.points[i]);
        os << "]\n    m_tot: " << s.m_tot << "\n    antenna_ratio: " << num(s.antenna_ratio) << "\n    environments: [";
        for (std::size_t i = 0; i < s.environments.size(); ++i)
            os << (i ? ", " : "") << to_string(s.environments[i]);
        os << "]\n    schemes: [";
        for (std::size_t i = 0; i < s.schemes.size(); ++i)
            os << (i ? ", " : "") << to_string(s.schemes[i]);
        os << "]\n    trials: " << s.trials << "\n    deployments_per_point: " << s.deployments_per_point << '\n';
        if (s.scenario)
        {
            os << "    scenario:\n";
            write_scenario(os, *s.scenario, "      ");
        }
    }
    os << "output:\n  directory: " << quoted(cfg.output.directory) << "\n  prefix: " << quoted(cfg.output.prefix)
       << '\n';
    return os.str();
}

} // namespace cfmimo
