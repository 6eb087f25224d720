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

#ifndef CFMIMO_RNG_HPP
#define CFMIMO_RNG_HPP

#include "cfmimo/linalg.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cfmimo
{

using Rng = std::mt19937_64;

// Stream purposes. Every random draw in the library comes from a stream keyed
// by (master seed, purpose, indices), so a trial's numbers do not depend on
// which thread runs it or on how many trials ran before it.
enum class Stream : std::uint64_t
{
    Deployment = 1,
    PilotAssignment = 2,
    Trial = 3,
    Oracle = 4,
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent seed: folds each key into the state with mix64.
constexpr std::uint64_t split_seed(std::uint64_t master, Stream purpose,
                                   std::initializer_list<std::uint64_t> keys = {})
{
    std::uint64_t s = mix64(master ^ mix64(static_cast<std::uint64_t>(purpose)));
    for (auto k : keys)
        s = mix64(s ^ mix64(k + 0x632be59bd9b4e019ULL));
    return s;
}

inline Rng make_stream(std::uint64_t master, Stream purpose, std::initializer_list<std::uint64_t> keys = {})
{
    return Rng(split_seed(master, purpose, keys));
}

/// Matrix of i.i.d. CN(0, variance) entries, filled column-major.
inline CMat complex_gaussian(Eigen::Index rows, Eigen::Index cols, Rng &rng, double variance = 1.0)
{
    std::normal_distribution<double> nd(0.0, std::sqrt(0.5 * variance));
    CMat out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i)
        {
            double re = nd(rng);
            double im = nd(rng);
            out(i, j) = cd(re, im);
        }
    return out;
}

inline CVec complex_gaussian_vec(Eigen::Index n, Rng &rng, double variance = 1.0)
{
    return complex_gaussian(n, 1, rng, variance).col(0);
}

} // namespace cfmimo

#endif
