#pragma once

#include "regopt/types.hpp"

namespace regopt {

/// An eigenvalue is treated as positive when it exceeds this fraction of the
/// largest one.
inline constexpr double kPositiveEigRelTol = 1e-12;

struct EigenDecomposition {
  Vector eigenvalues;  // ascending
  Matrix eigenvectors; // orthonormal columns, same order
};

/// Symmetric eigendecomposition, S = U diag(λ) Uᵀ.
EigenDecomposition sym_eig(const SymmetricMatrix& s);

// Unique symmetric solution N of NB + BN = D for positive definite B, built in
// the eigenbasis of B: N = U ( ⟨u_i, D u_j⟩ / (β_i + β_j) ) Uᵀ.
SymmetricMatrix lyapunov_solve(const SymmetricMatrix& b, const SymmetricMatrix& d,
                               double pd_rel_tol = kPositiveEigRelTol);

// Orthogonal projector onto ker(Aᵀ) for full-column-rank A: I − A(AᵀA)⁻¹Aᵀ.
// Uses the normal-equations formula while cond(AᵀA) < 1e8, otherwise a
// singular-vector basis of the left null space.
SymmetricMatrix kernel_projector(const GeneralMatrix& a);

/// Deterministic factor R with RᵀR = S (transpose of the lower Cholesky factor).
GeneralMatrix spd_factor(const SymmetricMatrix& s);

/// Solves S x = rhs for positive definite S (Cholesky).
Matrix solve_spd(const SymmetricMatrix& s, const Matrix& rhs);
Vector solve_spd(const SymmetricMatrix& s, const Vector& rhs);

/// Solves S x = rhs for general nonsingular S (partial-pivot LU).
Matrix solve_general(const Matrix& s, const Matrix& rhs);
Vector solve_general(const Matrix& s, const Vector& rhs);

}  // namespace regopt
