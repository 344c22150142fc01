#pragma once

#include "regopt/moments.hpp"
#include "regopt/types.hpp"

#include <variant>

namespace regopt {

/// Affine reconstruction map x̂(y) = Wy + b; the common output of every method.
struct AffineMap {
  AffineMap(Matrix w_in, Vector b_in);

  Index n() const { return w.rows(); }
  Index m() const { return w.cols(); }

  Matrix w;  // n×m
  Vector b;  // n
};

// The six regularizer parameterizations. Weighted variants carry the noise
// metric Ω (SPD); Quad variants store a symmetric penalty, Lav variants any
// square matrix.
struct TikhWeightedParams {
  SymmetricMatrix omega;  // m×m
  Matrix r;               // n×n
  Vector x0;              // n
};
struct TikhParams {
  Matrix r;
  Vector x0;
};
struct QuadWeightedParams {
  SymmetricMatrix omega;
  SymmetricMatrix m;
  Vector x0;
};
struct QuadParams {
  SymmetricMatrix m;
  Vector x0;
};
struct LavWeightedParams {
  SymmetricMatrix omega;
  Matrix m;
  Vector x0;
};
struct LavParams {
  Matrix m;
  Vector x0;
};

using RegularizerParams = std::variant<TikhWeightedParams, TikhParams, QuadWeightedParams,
                                       QuadParams, LavWeightedParams, LavParams>;

const char* variant_name(const RegularizerParams& params);

// Population risk of an affine map, split into its three nonnegative parts:
//   ⟨(WA−I)Σ_x, WA−I⟩ + ⟨WΣ_ε, W⟩ + ‖(WA−I)μ_x + b‖².
struct RiskBreakdown {
  double operator_bias = 0;
  double variance = 0;
  double offset_bias = 0;
  double total() const { return operator_bias + variance + offset_bias; }
};

RiskBreakdown risk_closed_form(const ProblemMoments& p, const AffineMap& map);

// Empirical risk over a paired dataset, reported in both conventions: the mean
// of ‖Wy+b−x†‖² over samples, and the same divided by the signal dimension n
// (the per-dimension 1/(mn) objective used for training).
struct EmpiricalRisk {
  double mean_sum_sq = 0;       // (1/N) Σ ‖Wy_i+b−x†_i‖²
  double mean_per_dim = 0;      // mean_sum_sq / n
  double std_error_sum_sq = 0;  // standard error of mean_sum_sq
  Index count = 0;
};

EmpiricalRisk risk_empirical(const PairedDataset& dataset, const AffineMap& map);

/// Risk-minimizing offset for a fixed W: b* = (I − WA)μ_x.
Vector optimal_offset(const ProblemMoments& p, const Matrix& w);

/// Best affine map: W* = Σ_x Aᵀ (A Σ_x Aᵀ + Σ_ε)⁻¹, b* = (I − W*A)μ_x.
AffineMap lmmse(const ProblemMoments& p);

/// Risk-optimal weighted Tikhonov parameters: Ω = Σ_ε⁻¹, RᵀR = Σ_x⁻¹, x₀ = μ_x.
TikhWeightedParams optimal_tikhonov_weighted(const ProblemMoments& p);

/// Risk-optimal Lavrentiev regularizer M = AᵀΣ_εA(AᵀA)⁻¹Σ_x⁻¹ with x₀ = μ_x.
LavParams optimal_lavrentiev(const ProblemMoments& p);

struct QuadSolution {
  QuadParams params;
  double min_eigenvalue_m = 0;  // may be negative; the penalty need not be PSD
};

/// PD tolerance for B inside optimal_quadratic (strict positivity at roundoff).
inline constexpr double kQuadraticBPdRelTol = 1e-16;

// Risk-optimal symmetric quadratic regularizer: solve NB + BN = AᵀAΣ_x + Σ_xAᵀA
// with B = Aᵀ(AΣ_xAᵀ + Σ_ε)A, then M = N⁻¹ − AᵀA.
QuadSolution optimal_quadratic(const ProblemMoments& p);

/// Affine map realized by a parameterization (Table-of-methods form).
AffineMap assemble_map(const RegularizerParams& params, const GeneralMatrix& a);

// Exactness test for unweighted Lavrentiev: the optimal Lavrentiev map equals
// the LMMSE map exactly when AᵀΣ_ε P_{ker(Aᵀ)} = 0.
struct GapCondition {
  bool holds = false;
  double residual = 0;   // ‖AᵀΣ_ε P_{ker(Aᵀ)}‖_Fro
  double reference = 0;  // ‖AᵀΣ_ε‖_Fro
};

GapCondition lavrentiev_gap_condition(const GeneralMatrix& a, const SymmetricMatrix& sigma_eps,
                                      double tol = 1e-8);

/// Relative norm of the skew part: (½‖M − Mᵀ‖_Fro) / ‖M‖_Fro, in [0, 1].
double asymmetry_fraction(const Matrix& m);

}  // namespace regopt
