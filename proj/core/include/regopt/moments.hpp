#pragma once

#include "regopt/types.hpp"

#include <cstdint>
#include <string>

namespace regopt {

/// Relative PSD slack for validating covariance inputs.
inline constexpr double kPsdRelTol = 1e-10;

/// Relative ridge applied to empirical covariances before any inversion.
inline constexpr double kDefaultJitterRel = 1e-10;

// Forward operator plus population moments (μ_x, Σ_x, Σ_ε); the data every
// closed-form estimator consumes. Covariances must be PSD within tolerance and
// dimensions mutually consistent.
struct ProblemMoments {
  ProblemMoments(GeneralMatrix a_in, Vector mu_x_in, SymmetricMatrix sigma_x_in,
                 SymmetricMatrix sigma_eps_in);

  Index n() const { return a.cols(); }
  Index m() const { return a.rows(); }

  GeneralMatrix a;           // m×n
  Vector mu_x;               // n
  SymmetricMatrix sigma_x;   // n×n
  SymmetricMatrix sigma_eps; // m×m
};

struct DatasetMeta {
  std::uint64_t seed = 0;
  double noise_level = 1.0;  // η for wind noise, 1 otherwise
  std::string generator;
};

/// Matched ground truths and measurements, one sample per row.
struct PairedDataset {
  PairedDataset(Matrix x_in, Matrix y_in, DatasetMeta meta_in);

  Index size() const { return x.rows(); }
  Index n() const { return x.cols(); }
  Index m() const { return y.cols(); }

  Matrix x;  // N×n
  Matrix y;  // N×m
  DatasetMeta meta;
};

struct MomentEstimate {
  Vector mean;
  SymmetricMatrix covariance;  // unbiased, 1/(N−1)
};

// Empirical mean and covariance of row samples, accumulated in one blocked
// pass (the sample matrix is never copied). N ≥ 2 required.
MomentEstimate empirical_moments(const Eigen::Ref<const Matrix>& samples);

// S + λI with λ = lambda_rel · trace(S)/dim. Strictly PD for nonzero PSD S;
// a zero matrix passes through unchanged (trace 0), which callers must reject.
SymmetricMatrix jitter_regularize(const SymmetricMatrix& s, double lambda_rel);

struct NoiseMomentEstimate {
  SymmetricMatrix covariance;   // centered covariance of the residuals y − Ax†
  Vector residual_mean;         // should be near zero under the noise model
};

/// Estimates Σ_ε from the residuals of a paired dataset under operator A.
NoiseMomentEstimate noise_moments_from_pairs(const PairedDataset& dataset,
                                             const GeneralMatrix& a);

}  // namespace regopt
