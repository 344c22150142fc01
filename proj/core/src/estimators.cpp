#include "regopt/estimators.hpp"

#include "regopt/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <sstream>

namespace regopt {

namespace {

constexpr Index kBlockRows = 4096;

void check_map_dims(const ProblemMoments& p, const AffineMap& map, const char* who) {
  if (map.n() != p.n() || map.m() != p.m()) {
    std::ostringstream os;
    os << who << ": map is " << map.n() << "x" << map.m() << " but problem is n=" << p.n()
       << ", m=" << p.m();
    throw DimensionError(os.str());
  }
}

// Shared (AᵀΩA or AᵀA) + penalty assembly with a singularity guard.
Matrix solve_variant_system(const Matrix& system, const Matrix& rhs, const char* variant) {
  Eigen::PartialPivLU<Matrix> lu(system);
  const double rc = lu.rcond();
  if (!(rc > std::numeric_limits<double>::epsilon())) {
    std::ostringstream os;
    os << "assemble_map(" << variant
       << "): system matrix singular (reciprocal condition estimate " << rc << ")";
    throw NumericError(os.str());
  }
  return lu.solve(rhs);
}

}  // namespace

AffineMap::AffineMap(Matrix w_in, Vector b_in) : w(std::move(w_in)), b(std::move(b_in)) {
  if (w.rows() != b.size())
    throw DimensionError("AffineMap: W has " + std::to_string(w.rows()) +
                         " rows but b has " + std::to_string(b.size()));
  if (!w.allFinite() || !b.allFinite()) throw NumericError("AffineMap: non-finite entry");
}

const char* variant_name(const RegularizerParams& params) {
  struct Namer {
    const char* operator()(const TikhWeightedParams&) const { return "tikhonov-weighted"; }
    const char* operator()(const TikhParams&) const { return "tikhonov"; }
    const char* operator()(const QuadWeightedParams&) const { return "quadratic-weighted"; }
    const char* operator()(const QuadParams&) const { return "quadratic"; }
    const char* operator()(const LavWeightedParams&) const { return "lavrentiev-weighted"; }
    const char* operator()(const LavParams&) const { return "lavrentiev"; }
  };
  return std::visit(Namer{}, params);
}

RiskBreakdown risk_closed_form(const ProblemMoments& p, const AffineMap& map) {
  check_map_dims(p, map, "risk_closed_form");
  const Matrix e = map.w * p.a.mat() - Matrix::Identity(p.n(), p.n());
  RiskBreakdown out;
  out.operator_bias = (e * p.sigma_x.mat()).cwiseProduct(e).sum();
  out.variance = (map.w * p.sigma_eps.mat()).cwiseProduct(map.w).sum();
  out.offset_bias = (e * p.mu_x + map.b).squaredNorm();
  return out;
}

EmpiricalRisk risk_empirical(const PairedDataset& dataset, const AffineMap& map) {
  if (dataset.size() < 1) throw Error("risk_empirical: empty dataset");
  if (map.n() != dataset.n() || map.m() != dataset.m())
    throw DimensionError("risk_empirical: map/dataset dimension mismatch");
  const Index n = dataset.size();
  double sum = 0, sum_sq = 0;
  for (Index r0 = 0; r0 < n; r0 += kBlockRows) {
    const Index rows = std::min(kBlockRows, n - r0);
    const Matrix err = dataset.y.middleRows(r0, rows) * map.w.transpose() +
                       Matrix::Constant(rows, 1, 1.0) * map.b.transpose() -
                       dataset.x.middleRows(r0, rows);
    const Vector sq = err.rowwise().squaredNorm();
    sum += sq.sum();
    sum_sq += sq.squaredNorm();
  }
  EmpiricalRisk out;
  out.count = n;
  out.mean_sum_sq = sum / static_cast<double>(n);
  out.mean_per_dim = out.mean_sum_sq / static_cast<double>(dataset.n());
  if (n > 1) {
    const double var =
        (sum_sq - sum * sum / static_cast<double>(n)) / static_cast<double>(n - 1);
    out.std_error_sum_sq = std::sqrt(std::max(var, 0.0) / static_cast<double>(n));
  }
  return out;
}

Vector optimal_offset(const ProblemMoments& p, const Matrix& w) {
  if (w.rows() != p.n() || w.cols() != p.m())
    throw DimensionError("optimal_offset: W dimension mismatch");
  return p.mu_x - w * (p.a.mat() * p.mu_x);
}

AffineMap lmmse(const ProblemMoments& p) {
  const Matrix& A = p.a.mat();
  Matrix g = A * p.sigma_x.mat() * A.transpose() + p.sigma_eps.mat();
  Eigen::LLT<Matrix> llt(g);
  Matrix wt;  // m×n, W = wtᵀ
  if (llt.info() == Eigen::Success) {
    wt = llt.solve(Matrix(A * p.sigma_x.mat()));
  } else {
    Eigen::PartialPivLU<Matrix> lu(g);
    if (!(lu.rcond() > std::numeric_limits<double>::epsilon()))
      throw NumericError("lmmse: A Sigma_x A^T + Sigma_eps is singular");
    wt = lu.solve(Matrix(A * p.sigma_x.mat()));
  }
  Matrix w = wt.transpose();
  Vector b = optimal_offset(p, w);
  return AffineMap(std::move(w), std::move(b));
}

TikhWeightedParams optimal_tikhonov_weighted(const ProblemMoments& p) {
  Eigen::LLT<Matrix> llt_eps(p.sigma_eps.mat());
  if (llt_eps.info() != Eigen::Success)
    throw NumericError("optimal_tikhonov_weighted: Sigma_eps not invertible");
  Eigen::LLT<Matrix> llt_x(p.sigma_x.mat());
  if (llt_x.info() != Eigen::Success)
    throw NumericError("optimal_tikhonov_weighted: Sigma_x not invertible");
  const Matrix omega = llt_eps.solve(Matrix::Identity(p.m(), p.m()));
  const Matrix sigma_x_inv = llt_x.solve(Matrix::Identity(p.n(), p.n()));
  GeneralMatrix r = spd_factor(SymmetricMatrix(sigma_x_inv));
  return TikhWeightedParams{SymmetricMatrix(omega), r.mat(), p.mu_x};
}

LavParams optimal_lavrentiev(const ProblemMoments& p) {
  const Matrix& A = p.a.mat();
  const Matrix ata = A.transpose() * A;
  {
    Eigen::LLT<Matrix> llt(ata);
    if (llt.info() != Eigen::Success)
      throw NumericError("optimal_lavrentiev: A^T A is singular");
  }
  // M = AᵀΣ_εA (AᵀA)⁻¹ Σ_x⁻¹ = AᵀΣ_εA (Σ_x AᵀA)⁻¹.
  const Matrix t = A.transpose() * p.sigma_eps.mat() * A;
  const Matrix c = p.sigma_x.mat() * ata;
  Eigen::PartialPivLU<Matrix> lu(Matrix(c.transpose()));
  if (!(lu.rcond() > std::numeric_limits<double>::epsilon()))
    throw NumericError("optimal_lavrentiev: Sigma_x A^T A is singular (is Sigma_x invertible?)");
  const Matrix m = lu.solve(Matrix(t.transpose())).transpose();
  {
    // Invertible whenever the preconditions hold; guarded anyway.
    Eigen::PartialPivLU<Matrix> check(Matrix(ata + m));
    if (!(check.rcond() > std::numeric_limits<double>::epsilon()))
      throw NumericError("optimal_lavrentiev: A^T A + M is singular");
  }
  return LavParams{m, p.mu_x};
}

QuadSolution optimal_quadratic(const ProblemMoments& p) {
  const Matrix& A = p.a.mat();
  const Matrix ata = A.transpose() * A;
  const Matrix g = A * p.sigma_x.mat() * A.transpose() + p.sigma_eps.mat();
  const SymmetricMatrix b(Matrix(A.transpose() * g * A));
  const SymmetricMatrix d(Matrix(ata * p.sigma_x.mat() + p.sigma_x.mat() * ata));
  // Smoothing operators drive the trailing eigenvalues of B toward roundoff
  // while the Lyapunov right-hand side vanishes on the same subspace, so the
  // eigenbasis formula stays stable; require strict positivity only.
  const SymmetricMatrix n = lyapunov_solve(b, d, kQuadraticBPdRelTol);
  Eigen::PartialPivLU<Matrix> lu(n.mat());
  const double rc = lu.rcond();
  if (!(rc > std::numeric_limits<double>::epsilon())) {
    std::ostringstream os;
    os << "optimal_quadratic: Lyapunov solution N is singular (reciprocal condition "
          "estimate "
       << rc << ")";
    throw NumericError(os.str());
  }
  const Matrix n_inv = lu.solve(Matrix::Identity(p.n(), p.n()));
  const SymmetricMatrix m(Matrix(n_inv - ata));
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.mat(), Eigen::EigenvaluesOnly);
  return QuadSolution{QuadParams{m, p.mu_x}, es.eigenvalues().minCoeff()};
}

AffineMap assemble_map(const RegularizerParams& params, const GeneralMatrix& a) {
  const Matrix& A = a.mat();
  const Index n = A.cols();
  const char* name = variant_name(params);

  struct Pieces {
    Matrix system;   // n×n
    Matrix data;     // n×m, right factor of W
    Vector penalty;  // n, M x₀ (or RᵀR x₀)
  };
  const Pieces pc = std::visit(
      [&](const auto& v) -> Pieces {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, TikhWeightedParams>) {
          const Matrix rtr = v.r.transpose() * v.r;
          return {A.transpose() * v.omega.mat() * A + rtr,
                  A.transpose() * v.omega.mat(), rtr * v.x0};
        } else if constexpr (std::is_same_v<T, TikhParams>) {
          const Matrix rtr = v.r.transpose() * v.r;
          return {A.transpose() * A + rtr, A.transpose(), rtr * v.x0};
        } else if constexpr (std::is_same_v<T, QuadWeightedParams>) {
          return {A.transpose() * v.omega.mat() * A + v.m.mat(),
                  A.transpose() * v.omega.mat(), v.m.mat() * v.x0};
        } else if constexpr (std::is_same_v<T, QuadParams>) {
          return {A.transpose() * A + v.m.mat(), A.transpose(), v.m.mat() * v.x0};
        } else if constexpr (std::is_same_v<T, LavWeightedParams>) {
          return {A.transpose() * v.omega.mat() * A + v.m,
                  A.transpose() * v.omega.mat(), v.m * v.x0};
        } else {
          static_assert(std::is_same_v<T, LavParams>);
          return {A.transpose() * A + v.m, A.transpose(), v.m * v.x0};
        }
      },
      params);
  if (pc.system.rows() != n || pc.penalty.size() != n)
    throw DimensionError(std::string("assemble_map(") + name +
                         "): parameter shapes inconsistent with operator");
  Matrix rhs(n, pc.data.cols() + 1);
  rhs.leftCols(pc.data.cols()) = pc.data;
  rhs.col(pc.data.cols()) = pc.penalty;
  const Matrix sol = solve_variant_system(pc.system, rhs, name);
  return AffineMap(sol.leftCols(pc.data.cols()), sol.col(pc.data.cols()));
}

GapCondition lavrentiev_gap_condition(const GeneralMatrix& a,
                                      const SymmetricMatrix& sigma_eps, double tol) {
  if (sigma_eps.dim() != a.rows())
    throw DimensionError("lavrentiev_gap_condition: Sigma_eps dimension mismatch");
  const SymmetricMatrix proj = kernel_projector(a);
  const Matrix at_sigma = a.mat().transpose() * sigma_eps.mat();
  GapCondition out;
  out.residual = (at_sigma * proj.mat()).norm();
  out.reference = at_sigma.norm();
  out.holds = out.residual <= tol * out.reference;
  return out;
}

double asymmetry_fraction(const Matrix& m) {
  if (m.rows() != m.cols())
    throw DimensionError("asymmetry_fraction: matrix not square");
  const double norm = m.norm();
  if (norm == 0) throw Error("asymmetry_fraction: zero matrix");
  return 0.5 * (m - m.transpose()).norm() / norm;
}

}  // namespace regopt
