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

#ifndef CFMIMO_SELFTEST_HPP
#define CFMIMO_SELFTEST_HPP

#include "cfmimo/freeprob.hpp"
#include "cfmimo/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cfmimo
{

// Outcome of one oracle. `value` is compared against `tolerance`; passed
// means value <= tolerance.
struct OracleResult
{
    std::string name;
    bool passed = false;
    double value = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

/// Zero mean, identity estimate covariance, P = I, no error load, sigma2 = 1.
ApStatistics white_ap(int M, int K, int N);
/// Random LoS part, Wishart estimate covariances and error load, sigma2 = 1.
ApStatistics random_ap(int M, int K, int N, Rng &rng);

/// max |G_B(z) - MP(z)| over z in {-0.5, -1, -2}; `perturb` is added to the
/// closed form as a negative control.
OracleResult mp_value_oracle(double perturb = 0.0);
OracleResult mp_derivative_oracle(double perturb = 0.0);

/// Analytic d/dz of G_D1 and G_Dt against central differences at eps = 1e-4.
/// The value is the worst err / (1e-6 + 1e-4 |G'|) over all entries.
OracleResult finite_difference_oracle(int instances, std::uint64_t seed);

/// MMSE estimator on one 2 x 2 link: E[(h - hhat) hhat^H] = 0 entrywise within
/// 5 Monte Carlo standard errors.
OracleResult orthogonality_oracle(long draws, std::uint64_t seed);
/// Sample error covariance against Ctilde, relative Frobenius error.
OracleResult error_covariance_oracle(long draws, std::uint64_t seed, double tolerance);

/// Combining weights against random competitors; MSE evaluated from its
/// definition. The value is the number of competitors that beat the optimum.
OracleResult weight_optimality_oracle(int instances, int competitors, std::uint64_t seed);

/// The fast release-gate suite.
std::vector<OracleResult> run_selftest(bool perturb_mp = false);

} // namespace cfmimo

#endif
