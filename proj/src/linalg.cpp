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

#include "cfmimo/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace cfmimo
{

CMat hermitian_part(const CMat &A)
{
    return 0.5 * (A + A.adjoint());
}

CMat hermitian_sqrt(const CMat &A)
{
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(A));
    RVec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const CMat &V = es.eigenvectors();
    return hermitian_part(V * ev.cast<cd>().asDiagonal() * V.adjoint());
}

CMat hermitian_inv_sqrt(const CMat &A)
{
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(A));
    const RVec &ev = es.eigenvalues();
    if (ev.size() > 0 && !(ev.minCoeff() > 0.0))
        throw NumericError("hermitian_inv_sqrt: matrix is not positive definite (min eigenvalue " +
                           std::to_string(ev.minCoeff()) + ")");
    RVec d = ev.cwiseSqrt().cwiseInverse();
    const CMat &V = es.eigenvectors();
    return hermitian_part(V * d.cast<cd>().asDiagonal() * V.adjoint());
}

CMat kron(const CMat &A, const CMat &B)
{
    CMat out(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j)
            out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return out;
}

CMat block_diag(std::span<const CMat> blocks)
{
    Eigen::Index n = 0;
    for (const auto &b : blocks)
        n += b.rows();
    CMat out = CMat::Zero(n, n);
    Eigen::Index off = 0;
    for (const auto &b : blocks)
    {
        out.block(off, off, b.rows(), b.cols()) = b;
        off += b.rows();
    }
    return out;
}

CMat block_diag_projection(const CMat &A, Eigen::Index block)
{
    CMat out = CMat::Zero(A.rows(), A.cols());
    for (Eigen::Index off = 0; off < A.rows(); off += block)
        out.block(off, off, block, block) = A.block(off, off, block, block);
    return out;
}

RVec hermitian_eigenvalues(const CMat &A)
{
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(A), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

double min_eigenvalue(const CMat &A)
{
    return hermitian_eigenvalues(A).minCoeff();
}

double spectral_norm_hermitian(const CMat &A)
{
    if (A.size() == 0)
        return 0.0;
    return hermitian_eigenvalues(A).cwiseAbs().maxCoeff();
}

double sup_norm(const CMat &A)
{
    return A.size() == 0 ? 0.0 : A.cwiseAbs().maxCoeff();
}

bool is_psd(const CMat &A, double rel_tol)
{
    if (A.size() == 0)
        return true;
    RVec ev = hermitian_eigenvalues(A);
    double scale = ev.cwiseAbs().maxCoeff();
    return ev.minCoeff() >= -rel_tol * scale;
}

// ---------- HpdFactor ----------

HpdFactor::HpdFactor(const CMat &A) : n_(A.rows())
{
    if (A.rows() != A.cols())
        throw std::invalid_argument("HpdFactor: matrix must be square");
    CMat H = hermitian_part(A);
    llt_.compute(H);
    if (llt_.info() == Eigen::Success)
    {
        rcond_ = llt_.rcond();
        return;
    }
    ldlt_.compute(H);
    if (ldlt_.info() != Eigen::Success || !ldlt_.isPositive())
        throw NumericError("HpdFactor: matrix is not positive definite");
    use_ldlt_ = true;
    rcond_ = ldlt_.rcond();
    if (!(rcond_ > 0.0))
        throw NumericError("HpdFactor: matrix is singular");
}

CMat HpdFactor::solve(const CMat &B) const
{
    return use_ldlt_ ? CMat(ldlt_.solve(B)) : CMat(llt_.solve(B));
}

CVec HpdFactor::solve(const CVec &b) const
{
    return use_ldlt_ ? CVec(ldlt_.solve(b)) : CVec(llt_.solve(b));
}

CMat HpdFactor::inverse() const
{
    return hermitian_part(solve(CMat(CMat::Identity(n_, n_))));
}

double HpdFactor::log2_det() const
{
    double s = 0.0;
    if (use_ldlt_)
    {
        for (Eigen::Index i = 0; i < n_; ++i)
            s += std::log2(std::real(ldlt_.vectorD()(i)));
        return s;
    }
    const auto &L = llt_.matrixLLT();
    for (Eigen::Index i = 0; i < n_; ++i)
        s += 2.0 * std::log2(L(i, i).real());
    return s;
}

double log2_det_identity_plus(const CMat &A)
{
    CMat M = CMat::Identity(A.rows(), A.cols()) + hermitian_part(A);
    return HpdFactor(M).log2_det();
}

} // namespace cfmimo
