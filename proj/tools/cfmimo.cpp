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

// cfmimo: validate configs, run sweeps, run the oracle self-test.
//
// Exit codes: 0 success, 1 invalid config (validate) or failed oracle
// (selftest), 2 config error, 3 solver or numeric failure, 4 I/O error.

#include "cfmimo/config.hpp"
#include "cfmimo/experiments.hpp"
#include "cfmimo/selftest.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace cfmimo;

namespace
{

enum Exit
{
    kOk = 0,
    kInvalid = 1,
    kConfig = 2,
    kSolver = 3,
    kIo = 4,
};

std::string fnv1a_hex(const std::string &text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text)
    {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string utc_now()
{
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// NaN is not valid JSON; failed values become null.
nlohmann::json number(double x)
{
    return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

int cmd_validate(const std::string &path)
{
    LoadedConfig lc = load_config(path);
    if (lc.violations.empty())
    {
        std::cout << path << ": ok\n";
        return kOk;
    }
    for (const auto &v : lc.violations)
        std::cout << path << ":" << v.line << ": " << v.key << ": " << v.message << '\n';
    std::cout << lc.violations.size() << " violation(s)\n";
    return kInvalid;
}

struct RunFlags
{
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::optional<int> deployments;
    int parallel = 1;
};

int cmd_run(const std::string &path, const RunFlags &flags)
{
    const auto t0 = std::chrono::steady_clock::now();
    const std::string started = utc_now();
    LoadedConfig lc = load_config(path);
    if (!lc.violations.empty())
    {
        for (const auto &v : lc.violations)
            std::cerr << path << ":" << v.line << ": " << v.key << ": " << v.message << '\n';
        return kConfig;
    }
    ConfigFile &cfg = lc.config;
    if (flags.seed)
        cfg.scenario.system.seed = *flags.seed;
    for (auto &s : cfg.sweeps)
    {
        if (flags.trials)
            s.trials = *flags.trials;
        if (flags.deployments)
            s.deployments_per_point = *flags.deployments;
    }
    auto again = check_config(cfg);
    if (!again.empty())
    {
        std::cerr << "after command-line overrides: " << again.front().key << ": " << again.front().message << '\n';
        return kConfig;
    }

    std::string out_dir = flags.out;
    if (out_dir.empty())
        out_dir = cfg.output.directory;
    if (out_dir.empty())
        if (const char *env = std::getenv("CFMIMO_OUT_DIR"))
            out_dir = env;
    if (out_dir.empty())
        out_dir = "out";
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec)
        throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());

    RunOptions opt;
    opt.parallel = std::max(1, flags.parallel);

    nlohmann::json manifest;
    manifest["tool"] = "cfmimo";
    manifest["version"] = CFMIMO_VERSION;
    manifest["config_path"] = path;
    manifest["config_hash"] = fnv1a_hex(serialize_config(cfg));
    manifest["canonical_config"] = serialize_config(cfg);
    manifest["versions"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                          "." + std::to_string(EIGEN_MINOR_VERSION)},
                            {"compiler", __VERSION__}};
    manifest["parallel"] = opt.parallel;
    manifest["started_utc"] = started;
    manifest["kappa_linear"] = cfg.scenario.system.kappa;
    manifest["ue_positions"] = "fixed per deployment; each point draws deployments_per_point deployments from the "
                               "seed, and the UE draws are shared across the points of a sweep";
    manifest["files"] = nlohmann::json::array();
    manifest["points"] = nlohmann::json::array();

    bool solver_failed = false;
    const std::string prefix = cfg.output.prefix.empty() ? "" : cfg.output.prefix + "_";
    for (std::size_t i = 0; i < cfg.sweeps.size(); ++i)
    {
        SweepSpec spec = cfg.sweep_spec(i);
        std::vector<ResultRow> rows = run_sweep(spec, opt);
        for (Environment env : spec.environments)
        {
            std::vector<ResultRow> part;
            for (const auto &r : rows)
                if (r.environment == env)
                    part.push_back(r);
            fs::path file = fs::path(out_dir) / (prefix + spec.name + "_" + to_string(env) + ".csv");
            emit_csv(part, file.string());
            manifest["files"].push_back({{"path", file.string()},
                                         {"sweep", spec.name},
                                         {"environment", to_string(env)},
                                         {"axis", to_string(spec.axis)},
                                         {"rows", part.size()}});
            std::cout << "wrote " << file.string() << " (" << part.size() << " rows)\n";
        }
        for (const auto &r : rows)
        {
            if (r.note.rfind("solver", 0) == 0)
                solver_failed = true;
            manifest["points"].push_back({{"sweep", spec.name},
                                          {"environment", to_string(r.environment)},
                                          {"axis", r.axis_value},
                                          {"scheme", to_string(r.scheme)},
                                          {"config_hash", r.config_hash},
                                          {"sum_se", number(r.sum_se)},
                                          {"solver_iters", r.solver_iters},
                                          {"solver_residual", r.solver_residual},
                                          {"note", r.note}});
        }
    }
    manifest["finished_utc"] = utc_now();
    manifest["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::path mpath = fs::path(out_dir) / (prefix + "manifest.json");
    std::ofstream mf(mpath);
    if (!mf)
        throw IoError("cannot open '" + mpath.string() + "' for writing");
    mf << manifest.dump(2) << '\n';
    if (!mf)
        throw IoError("write to '" + mpath.string() + "' failed");
    std::cout << "wrote " << mpath.string() << '\n';
    if (solver_failed)
    {
        std::cerr << "some rows failed in the solver; see the manifest notes\n";
        return kSolver;
    }
    return kOk;
}

int cmd_selftest(bool perturb_mp)
{
    auto results = run_selftest(perturb_mp);
    bool ok = true;
    for (const auto &r : results)
    {
        std::printf("%s %-30s value %.3e tolerance %.3e  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.value,
                    r.tolerance, r.detail.c_str());
        ok = ok && r.passed;
    }
    std::printf("%s\n", ok ? "selftest passed" : "selftest FAILED");
    return ok ? kOk : kInvalid;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"uplink detection simulator for UAV-based cell-free massive MIMO"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("cfmimo ") + CFMIMO_VERSION);

    std::string config_path;
    auto *validate = app.add_subcommand("validate", "check a config file and list violated constraints");
    validate->add_option("config", config_path, "YAML config")->required();

    RunFlags flags;
    std::uint64_t seed = 0;
    int trials = 0;
    int deployments = 0;
    auto *run = app.add_subcommand("run", "run every sweep of a config and write CSVs plus a manifest");
    run->add_option("config", config_path, "YAML config")->required();
    run->add_option("--out", flags.out, "output directory (default: config, then $CFMIMO_OUT_DIR, then ./out)");
    auto *seed_opt = run->add_option("--seed", seed, "override scenario.seed");
    auto *trials_opt = run->add_option("--trials", trials, "override trials of every sweep")->check(CLI::PositiveNumber);
    auto *dep_opt = run->add_option("--deployments", deployments, "override deployments_per_point")
                        ->check(CLI::PositiveNumber);
    run->add_option("--parallel", flags.parallel, "worker threads")->check(CLI::PositiveNumber);

    bool perturb_mp = false;
    auto *selftest = app.add_subcommand("selftest", "run the fast oracle suite");
    selftest->add_flag("--perturb-mp", perturb_mp, "shift the closed-form reference (negative control)");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kConfig;
    }

    try
    {
        if (*validate)
            return cmd_validate(config_path);
        if (*run)
        {
            if (*seed_opt)
                flags.seed = seed;
            if (*trials_opt)
                flags.trials = trials;
            if (*dep_opt)
                flags.deployments = deployments;
            return cmd_run(config_path, flags);
        }
        if (*selftest)
            return cmd_selftest(perturb_mp);
    }
    catch (const ConfigError &e)
    {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    }
    catch (const SolverError &e)
    {
        std::cerr << "solver error: " << e.what() << '\n';
        return kSolver;
    }
    catch (const NumericError &e)
    {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kSolver;
    }
    catch (const IoError &e)
    {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kIo;
    }
    return kOk;
}
