#include "regopt/moments.hpp"

#include <Eigen/Eigenvalues>

#include <sstream>

namespace regopt {

namespace {

constexpr Index kBlockRows = 4096;

void check_psd(const SymmetricMatrix& s, const char* name) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s.mat(), Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo < -kPsdRelTol * std::max(hi, 0.0)) {
    std::ostringstream os;
    os << "ProblemMoments: " << name << " not PSD within tolerance (min eigenvalue "
       << lo << ", max " << hi << ")";
    throw NumericError(os.str());
  }
}

// One-pass accumulation of mean and raw second moment over row blocks.
MomentEstimate accumulate_moments(const Eigen::Ref<const Matrix>& samples,
                                  const char* who) {
  const Index n = samples.rows(), d = samples.cols();
  if (n < 2) throw Error(std::string(who) + ": need at least 2 samples, got " +
                         std::to_string(n));
  Vector sum = Vector::Zero(d);
  Matrix raw = Matrix::Zero(d, d);
  for (Index r0 = 0; r0 < n; r0 += kBlockRows) {
    const Index rows = std::min(kBlockRows, n - r0);
    const auto block = samples.middleRows(r0, rows);
    if (!block.allFinite()) {
      for (Index i = 0; i < rows; ++i)
        if (!block.row(i).allFinite())
          throw DataError(std::string(who) + ": non-finite value in sample row " +
                          std::to_string(r0 + i));
    }
    sum += block.colwise().sum().transpose();
    raw.selfadjointView<Eigen::Lower>().rankUpdate(block.transpose());
  }
  raw.triangularView<Eigen::StrictlyUpper>() = raw.transpose();
  const Vector mean = sum / static_cast<double>(n);
  Matrix cov = (raw - static_cast<double>(n) * mean * mean.transpose()) /
               static_cast<double>(n - 1);
  return {mean, SymmetricMatrix(cov)};
}

}  // namespace

ProblemMoments::ProblemMoments(GeneralMatrix a_in, Vector mu_x_in,
                               SymmetricMatrix sigma_x_in, SymmetricMatrix sigma_eps_in)
    : a(std::move(a_in)),
      mu_x(std::move(mu_x_in)),
      sigma_x(std::move(sigma_x_in)),
      sigma_eps(std::move(sigma_eps_in)) {
  if (mu_x.size() != a.cols() || sigma_x.dim() != a.cols() || sigma_eps.dim() != a.rows()) {
    std::ostringstream os;
    os << "ProblemMoments: inconsistent dimensions (A " << a.rows() << "x" << a.cols()
       << ", mu_x " << mu_x.size() << ", sigma_x " << sigma_x.dim() << ", sigma_eps "
       << sigma_eps.dim() << ")";
    throw DimensionError(os.str());
  }
  if (!mu_x.allFinite()) throw NumericError("ProblemMoments: non-finite mu_x");
  check_psd(sigma_x, "sigma_x");
  check_psd(sigma_eps, "sigma_eps");
}

PairedDataset::PairedDataset(Matrix x_in, Matrix y_in, DatasetMeta meta_in)
    : x(std::move(x_in)), y(std::move(y_in)), meta(std::move(meta_in)) {
  if (x.rows() != y.rows())
    throw DimensionError("PairedDataset: X has " + std::to_string(x.rows()) +
                         " rows but Y has " + std::to_string(y.rows()));
  if (x.rows() < 1) throw DimensionError("PairedDataset: empty dataset");
}

MomentEstimate empirical_moments(const Eigen::Ref<const Matrix>& samples) {
  return accumulate_moments(samples, "empirical_moments");
}

SymmetricMatrix jitter_regularize(const SymmetricMatrix& s, double lambda_rel) {
  if (!(lambda_rel > 0))
    throw Error("jitter_regularize: lambda_rel must be positive, got " +
                std::to_string(lambda_rel));
  const double lambda = lambda_rel * s.mat().trace() / static_cast<double>(s.dim());
  return SymmetricMatrix(Matrix(s.mat() + lambda * Matrix::Identity(s.dim(), s.dim())));
}

NoiseMomentEstimate noise_moments_from_pairs(const PairedDataset& dataset,
                                             const GeneralMatrix& a) {
  if (dataset.n() != a.cols() || dataset.m() != a.rows()) {
    std::ostringstream os;
    os << "noise_moments_from_pairs: dataset (n=" << dataset.n() << ", m=" << dataset.m()
       << ") inconsistent with operator " << a.rows() << "x" << a.cols();
    throw DimensionError(os.str());
  }
  const Index n = dataset.size();
  const Index m = dataset.m();
  if (n < 2)
    throw Error("noise_moments_from_pairs: need at least 2 samples, got " +
                std::to_string(n));
  // Residual blocks are formed on the fly; the full N×m residual matrix is
  // never materialized.
  Vector sum = Vector::Zero(m);
  Matrix raw = Matrix::Zero(m, m);
  for (Index r0 = 0; r0 < n; r0 += kBlockRows) {
    const Index rows = std::min(kBlockRows, n - r0);
    const Matrix block = dataset.y.middleRows(r0, rows) -
                         dataset.x.middleRows(r0, rows) * a.mat().transpose();
    if (!block.allFinite()) {
      for (Index i = 0; i < rows; ++i)
        if (!block.row(i).allFinite())
          throw DataError("noise_moments_from_pairs: non-finite residual in row " +
                          std::to_string(r0 + i));
    }
    sum += block.colwise().sum().transpose();
    raw.selfadjointView<Eigen::Lower>().rankUpdate(block.transpose());
  }
  raw.triangularView<Eigen::StrictlyUpper>() = raw.transpose();
  const Vector mean = sum / static_cast<double>(n);
  Matrix cov = (raw - static_cast<double>(n) * mean * mean.transpose()) /
               static_cast<double>(n - 1);
  return {SymmetricMatrix(cov), mean};
}

}  // namespace regopt
