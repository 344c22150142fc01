#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <utility>

namespace regopt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Error categories; the CLI maps these onto exit codes (config=2, data=3, numeric=4).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

/// Dense real matrix with finite entries (no NaN/Inf), checked on construction.
class GeneralMatrix {
 public:
  explicit GeneralMatrix(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() < 1 || entries_.cols() < 1)
      throw DimensionError("GeneralMatrix: dimensions must be positive");
    if (!entries_.allFinite())
      throw NumericError("GeneralMatrix: non-finite entry");
  }

  Index rows() const { return entries_.rows(); }
  Index cols() const { return entries_.cols(); }
  const Matrix& mat() const { return entries_; }

 private:
  Matrix entries_;
};

/// Square matrix stored exactly symmetric: construction replaces X by (X + Xᵀ)/2,
/// so downstream eigen/Lyapunov formulas never see asymmetric drift.
class SymmetricMatrix {
 public:
  explicit SymmetricMatrix(const Matrix& entries) {
    if (entries.rows() != entries.cols())
      throw DimensionError("SymmetricMatrix: input not square (" +
                           std::to_string(entries.rows()) + "x" +
                           std::to_string(entries.cols()) + ")");
    if (entries.rows() < 1)
      throw DimensionError("SymmetricMatrix: dimension must be positive");
    if (!entries.allFinite())
      throw NumericError("SymmetricMatrix: non-finite entry");
    entries_ = 0.5 * (entries + entries.transpose());
  }

  static SymmetricMatrix identity(Index dim) { return SymmetricMatrix(Matrix::Identity(dim, dim)); }
  static SymmetricMatrix zero(Index dim) { return SymmetricMatrix(Matrix::Zero(dim, dim)); }

  Index dim() const { return entries_.rows(); }
  const Matrix& mat() const { return entries_; }

 private:
  Matrix entries_;
};

}  // namespace regopt
