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

#ifndef CFMIMO_LINALG_HPP
#define CFMIMO_LINALG_HPP

#include <Eigen/Dense>

#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfmimo
{

using cd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

// Error classes shared by all modules. The CLI maps them onto exit codes.
struct ConfigError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

// Solver failure carrying the sup-norm residual of every iteration.
struct SolverError : std::runtime_error
{
    SolverError(const std::string &what, std::vector<double> history)
        : std::runtime_error(what), residual_history(std::move(history)) {}
    std::vector<double> residual_history;
};

/// (A + A^H) / 2
CMat hermitian_part(const CMat &A);

/// Principal square root of a Hermitian PSD matrix; negative eigenvalues are clipped at zero.
CMat hermitian_sqrt(const CMat &A);

/// A^{-1/2} for Hermitian positive definite A. Throws NumericError if A is not PD.
CMat hermitian_inv_sqrt(const CMat &A);

CMat kron(const CMat &A, const CMat &B);

/// Block-diagonal matrix with the given square blocks.
CMat block_diag(std::span<const CMat> blocks);

/// Extracts the diagonal blocks of size `block` from a square matrix and zeroes the rest.
CMat block_diag_projection(const CMat &A, Eigen::Index block);

/// Eigenvalues of the Hermitian part of A, ascending.
RVec hermitian_eigenvalues(const CMat &A);

double min_eigenvalue(const CMat &A);
double spectral_norm_hermitian(const CMat &A);

/// Largest absolute entry.
double sup_norm(const CMat &A);

/// True if every eigenvalue of the Hermitian part is >= -tol * ||A||_2.
bool is_psd(const CMat &A, double rel_tol = 1e-10);

// Hermitian positive definite factorization used for every solve in the library.
// Falls back to a pivoted LDL^T when Cholesky breaks down on a matrix that is
// only numerically semi-definite.
class HpdFactor
{
public:
    explicit HpdFactor(const CMat &A);

    CMat solve(const CMat &B) const;
    CVec solve(const CVec &b) const;
    CMat inverse() const;

    /// log2 det(A), real because A is Hermitian PD.
    double log2_det() const;

    /// Cheap reciprocal condition estimate from the factorization.
    double rcond() const { return rcond_; }
    bool ill_conditioned(double limit = 1e12) const { return rcond_ * limit < 1.0; }

private:
    Eigen::LLT<CMat> llt_;
    Eigen::LDLT<CMat> ldlt_;
    bool use_ldlt_ = false;
    double rcond_ = 0.0;
    Eigen::Index n_ = 0;
};

/// log2 det(I + A) for Hermitian PSD A.
double log2_det_identity_plus(const CMat &A);

} // namespace cfmimo

#endif
