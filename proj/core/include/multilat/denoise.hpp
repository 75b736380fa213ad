#pragma once

#include "multilat/geometry.hpp"

#include <Eigen/Core>

#include <cstddef>

namespace multilat {

/// Orthogonal projector onto the consistent RD vectors of M microphones.
/// The vectorized upper triangle (row-major, m < m') of a consistent matrix
/// lies in the range of the pairwise difference operator; this returns
/// G G^+ for that operator. Cached per M, safe to call concurrently.
const Eigen::MatrixXd& consistent_projector(std::size_t mic_count);

/// Upper triangle of an RD matrix, row-major, m < m'.
Eigen::VectorXd upper_triangle(const RdMatrix& rd);

/// Inverse of upper_triangle: mirrors with negation, zero diagonal.
RdMatrix from_upper_triangle(const Eigen::VectorXd& upper, std::size_t mic_count);

/// Closest consistent RD matrix in the least-squares sense (TDOA averaging):
///   d'(m, m') = (1/M) * sum_k (d(m, k) + d(k, m')).
/// Throws InputError when the input is not antisymmetric to 1e-9.
RdMatrix tdoa_average(const RdMatrix& rd);

/// The same projection computed with the explicit cached projector.
RdMatrix tdoa_average_projected(const RdMatrix& rd);

}  // namespace multilat
