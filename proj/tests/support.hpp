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

#ifndef CFMIMO_TESTS_SUPPORT_HPP
#define CFMIMO_TESTS_SUPPORT_HPP

#include "cfmimo/estimation.hpp"
#include "cfmimo/scenario.hpp"

namespace cfmimo::test
{

// Statistics of one deployment with equal-power precoders.
struct System
{
    SystemConfig cfg;
    Deployment dep;
    LinkTable links;
    PilotBook book;
    std::vector<CMat> F;
    EstimationStats est;
};

inline System make_system(const SystemConfig &cfg)
{
    System s;
    s.cfg = cfg;
    Rng dep_rng = make_stream(cfg.seed, Stream::Deployment, {0});
    s.dep = make_deployment(cfg, dep_rng);
    s.links = build_link_stats(cfg, s.dep);
    Rng pilot_rng = make_stream(cfg.seed, Stream::PilotAssignment, {0});
    s.book = build_pilot_book(cfg.pilot_length(), cfg.N, cfg.K, cfg.pilot_reuse, pilot_rng);
    s.F = equal_power_precoders(cfg.K, cfg.N, cfg.p_k);
    s.est = estimation_statistics(s.links, s.book, s.F, s.F, cfg.sigma2);
    return s;
}

inline SystemConfig config(int L, int K, int M, int N, std::uint64_t seed = 1)
{
    SystemConfig c;
    c.L = L;
    c.K = K;
    c.M = M;
    c.N = N;
    c.seed = seed;
    return c;
}

// Hermitian PD test matrix W W^H / n + shift I.
inline CMat wishart(Eigen::Index n, Rng &rng, double shift = 0.0)
{
    CMat W = complex_gaussian(n, n, rng);
    return W * W.adjoint() / static_cast<double>(n) + shift * CMat::Identity(n, n);
}

} // namespace cfmimo::test

#endif
