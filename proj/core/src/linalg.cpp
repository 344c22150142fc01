#include "regopt/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <sstream>

namespace regopt {

namespace {

std::string dims(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

double min_eigenvalue(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

EigenDecomposition sym_eig(const SymmetricMatrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s.mat());
  if (es.info() != Eigen::Success) {
    const double res =
        (s.mat() * es.eigenvectors() - es.eigenvectors() * es.eigenvalues().asDiagonal())
            .norm();
    std::ostringstream os;
    os << "sym_eig: eigen iteration did not converge on " << dims(s.mat())
       << " input (residual " << res << ")";
    throw NumericError(os.str());
  }
  return {es.eigenvalues(), es.eigenvectors()};
}

SymmetricMatrix lyapunov_solve(const SymmetricMatrix& b, const SymmetricMatrix& d,
                               double pd_rel_tol) {
  if (b.dim() != d.dim())
    throw DimensionError("lyapunov_solve: B is " + dims(b.mat()) + " but D is " +
                         dims(d.mat()));
  const EigenDecomposition eig = sym_eig(b);
  const double beta_max = eig.eigenvalues.maxCoeff();
  const double beta_min = eig.eigenvalues.minCoeff();
  if (!(beta_min > pd_rel_tol * beta_max)) {
    std::ostringstream os;
    os << "lyapunov_solve: B not positive definite (eigenvalue " << beta_min
       << ", largest " << beta_max << ")";
    throw NumericError(os.str());
  }
  const Matrix d_tilde = eig.eigenvectors.transpose() * d.mat() * eig.eigenvectors;
  Matrix n_tilde(b.dim(), b.dim());
  for (Index i = 0; i < b.dim(); ++i)
    for (Index j = 0; j < b.dim(); ++j)
      n_tilde(i, j) = d_tilde(i, j) / (eig.eigenvalues(i) + eig.eigenvalues(j));
  return SymmetricMatrix(eig.eigenvectors * n_tilde * eig.eigenvectors.transpose());
}

SymmetricMatrix kernel_projector(const GeneralMatrix& a) {
  const Matrix& A = a.mat();
  const Index m = A.rows(), n = A.cols();
  Eigen::JacobiSVD<Matrix> sv(A);  // singular values only
  const Vector& sigma = sv.singularValues();
  const double smax = sigma(0);
  const double rank_tol = static_cast<double>(std::max(m, n)) *
                          std::numeric_limits<double>::epsilon() * smax;
  Index rank = 0;
  while (rank < sigma.size() && sigma(rank) > rank_tol) ++rank;
  if (rank < n) {
    std::ostringstream os;
    os << "kernel_projector: A rank-deficient (estimated rank " << rank << " of " << n
       << ")";
    throw NumericError(os.str());
  }
  const double cond_normal = (smax / sigma(n - 1)) * (smax / sigma(n - 1));
  if (cond_normal < 1e8) {
    const SymmetricMatrix gram(Matrix(A.transpose() * A));
    const Matrix p = Matrix::Identity(m, m) - A * solve_spd(gram, Matrix(A.transpose()));
    return SymmetricMatrix(p);
  }
  // Ill-conditioned Gram matrix: project onto left singular vectors n..m-1.
  Eigen::BDCSVD<Matrix> full(A, Eigen::ComputeFullU);
  const Matrix u_null = full.matrixU().rightCols(m - n);
  return SymmetricMatrix(Matrix(u_null * u_null.transpose()));
}

GeneralMatrix spd_factor(const SymmetricMatrix& s) {
  Eigen::LLT<Matrix> llt(s.mat());
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "spd_factor: input not positive definite (smallest eigenvalue "
       << min_eigenvalue(s.mat()) << ")";
    throw NumericError(os.str());
  }
  return GeneralMatrix(Matrix(llt.matrixU()));
}

Matrix solve_spd(const SymmetricMatrix& s, const Matrix& rhs) {
  if (s.dim() != rhs.rows())
    throw DimensionError("solve_spd: S is " + dims(s.mat()) + " but rhs has " +
                         std::to_string(rhs.rows()) + " rows");
  Eigen::LLT<Matrix> llt(s.mat());
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "solve_spd: matrix not positive definite (smallest eigenvalue "
       << min_eigenvalue(s.mat()) << ")";
    throw NumericError(os.str());
  }
  return llt.solve(rhs);
}

Vector solve_spd(const SymmetricMatrix& s, const Vector& rhs) {
  return Vector(solve_spd(s, Matrix(rhs)));
}

Matrix solve_general(const Matrix& s, const Matrix& rhs) {
  if (s.rows() != s.cols())
    throw DimensionError("solve_general: matrix not square (" + dims(s) + ")");
  if (s.rows() != rhs.rows())
    throw DimensionError("solve_general: matrix is " + dims(s) + " but rhs has " +
                         std::to_string(rhs.rows()) + " rows");
  Eigen::PartialPivLU<Matrix> lu(s);
  const double rc = lu.rcond();
  if (!(rc > std::numeric_limits<double>::epsilon())) {
    std::ostringstream os;
    os << "solve_general: singular system (reciprocal condition estimate " << rc << ")";
    throw NumericError(os.str());
  }
  return lu.solve(rhs);
}

Vector solve_general(const Matrix& s, const Vector& rhs) {
  return Vector(solve_general(s, Matrix(rhs)));
}

}  // namespace regopt
