#include "regopt/linalg.hpp"

#include "test_support.hpp"

#include <doctest.h>

using namespace regopt;
using testsup::random_matrix;
using testsup::random_spd;
using testsup::random_symmetric;

TEST_CASE("sym_eig on diagonal input") {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 3;
  d(1, 1) = 1;
  const auto eig = sym_eig(SymmetricMatrix(d));
  CHECK(eig.eigenvalues(0) == doctest::Approx(1.0));
  CHECK(eig.eigenvalues(1) == doctest::Approx(3.0));
  CHECK(std::abs(eig.eigenvectors(1, 0)) == doctest::Approx(1.0));  // e2 first
  CHECK(std::abs(eig.eigenvectors(0, 1)) == doctest::Approx(1.0));
}

TEST_CASE("sym_eig on the identity") {
  const auto eig = sym_eig(SymmetricMatrix::identity(3));
  for (int i = 0; i < 3; ++i) CHECK(eig.eigenvalues(i) == doctest::Approx(1.0));
  CHECK((eig.eigenvectors.transpose() * eig.eigenvectors - Matrix::Identity(3, 3)).norm() <
        1e-10);
}

TEST_CASE("sym_eig round trip and orthonormality on random symmetric input") {
  CounterRng rng(7);
  const SymmetricMatrix s = random_symmetric(rng, 5);
  const auto eig = sym_eig(s);
  const Matrix rebuilt =
      eig.eigenvectors * eig.eigenvalues.asDiagonal() * eig.eigenvectors.transpose();
  CHECK((rebuilt - s.mat()).norm() <= 1e-10 * s.mat().norm());
  CHECK((eig.eigenvectors.transpose() * eig.eigenvectors - Matrix::Identity(5, 5)).norm() <=
        1e-10);
  for (Index i = 0; i < 5; ++i) {
    CHECK((s.mat() * eig.eigenvectors.col(i) -
           eig.eigenvalues(i) * eig.eigenvectors.col(i))
              .norm() <= 1e-10 * s.mat().norm());
    if (i > 0) CHECK(eig.eigenvalues(i) >= eig.eigenvalues(i - 1));
  }
}

TEST_CASE("sym_eig round trip property over seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CounterRng rng(seed);
    const Index n = 2 + static_cast<Index>(rng.uniform_int(7));
    const SymmetricMatrix s = random_symmetric(rng, n);
    const auto eig = sym_eig(s);
    const Matrix rebuilt =
        eig.eigenvectors * eig.eigenvalues.asDiagonal() * eig.eigenvectors.transpose();
    CHECK((rebuilt - s.mat()).norm() <= 1e-10 * std::max(1.0, s.mat().norm()));
  }
}

TEST_CASE("lyapunov_solve with identity B") {
  CounterRng rng(3);
  const SymmetricMatrix d = random_symmetric(rng, 4);
  const SymmetricMatrix n = lyapunov_solve(SymmetricMatrix::identity(4), d);
  CHECK((n.mat() - 0.5 * d.mat()).norm() <= 1e-12 * d.mat().norm());
}

TEST_CASE("lyapunov_solve diagonal case") {
  Matrix b = Matrix::Zero(2, 2), d = Matrix::Zero(2, 2);
  b(0, 0) = 1;
  b(1, 1) = 3;
  d(0, 0) = 2;
  d(1, 1) = 8;
  const SymmetricMatrix n = lyapunov_solve(SymmetricMatrix(b), SymmetricMatrix(d));
  CHECK(n.mat()(0, 0) == doctest::Approx(1.0));
  CHECK(n.mat()(1, 1) == doctest::Approx(4.0 / 3.0));
  CHECK(std::abs(n.mat()(0, 1)) < 1e-14);
}

namespace {

// Independent oracle: solve the n²-dimensional linearization
// (I ⊗ B + B ⊗ I) vec(N) = vec(D) with a dense LU.
Matrix kron_lyapunov_oracle(const Matrix& b, const Matrix& d) {
  const Index n = b.rows();
  Matrix big = Matrix::Zero(n * n, n * n);
  // vec is column-stacked: vec(NB + BN) = (Bᵀ ⊗ I + I ⊗ B) vec(N); B symmetric.
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      for (Index k = 0; k < n; ++k) {
        big(i + n * j, i + n * k) += b(k, j);  // N B term
        big(i + n * j, k + n * j) += b(i, k);  // B N term
      }
  Vector vec_d(n * n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) vec_d(i + n * j) = d(i, j);
  const Vector vec_n = big.partialPivLu().solve(vec_d);
  Matrix out(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) out(i, j) = vec_n(i + n * j);
  return out;
}

}  // namespace

TEST_CASE("lyapunov_solve matches the Kronecker oracle") {
  CounterRng rng(11);
  const SymmetricMatrix b = random_spd(rng, 4);
  const SymmetricMatrix d = random_symmetric(rng, 4);
  const SymmetricMatrix n = lyapunov_solve(b, d);
  const Matrix oracle = kron_lyapunov_oracle(b.mat(), d.mat());
  CHECK((n.mat() - oracle).norm() <= 1e-9 * std::max(1.0, oracle.norm()));
}

TEST_CASE("lyapunov residual and oracle agreement up to 6x6") {
  for (std::uint64_t seed = 100; seed < 112; ++seed) {
    CounterRng rng(seed);
    const Index n = 2 + static_cast<Index>(rng.uniform_int(5));  // 2..6
    const SymmetricMatrix b = random_spd(rng, n);
    const SymmetricMatrix d = random_symmetric(rng, n);
    const SymmetricMatrix sol = lyapunov_solve(b, d);
    const Matrix resid = sol.mat() * b.mat() + b.mat() * sol.mat() - d.mat();
    CHECK(resid.norm() <= 1e-8 * std::max(1.0, d.mat().norm()));
    CHECK((sol.mat() - kron_lyapunov_oracle(b.mat(), d.mat())).norm() <=
          1e-9 * std::max(1.0, sol.mat().norm()));
  }
}

TEST_CASE("lyapunov_solve rejects indefinite B") {
  Matrix b = Matrix::Identity(2, 2);
  b(1, 1) = -0.5;
  CHECK_THROWS_WITH_AS(lyapunov_solve(SymmetricMatrix(b), SymmetricMatrix::identity(2)),
                       doctest::Contains("-0.5"), NumericError);
}

TEST_CASE("kernel_projector forced by orthogonality") {
  Matrix a(2, 1);
  a << 1, 0;
  const SymmetricMatrix p = kernel_projector(GeneralMatrix(a));
  Matrix expect = Matrix::Zero(2, 2);
  expect(1, 1) = 1;
  CHECK((p.mat() - expect).norm() < 1e-12);
}

TEST_CASE("kernel_projector of a square invertible operator is zero") {
  CounterRng rng(21);
  const Matrix a = random_matrix(rng, 3, 3) + 3 * Matrix::Identity(3, 3);
  const SymmetricMatrix p = kernel_projector(GeneralMatrix(a));
  CHECK(p.mat().norm() < 1e-10);
}

TEST_CASE("kernel_projector annihilates the range and has the right trace") {
  CounterRng rng(3);
  const Matrix a = random_matrix(rng, 6, 3);
  const SymmetricMatrix p = kernel_projector(GeneralMatrix(a));
  CHECK((p.mat() * a).norm() <= 1e-10 * a.norm());
  CHECK((p.mat() * p.mat() - p.mat()).norm() <= 1e-10);
  CHECK(p.mat().trace() == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("kernel_projector idempotence property") {
  for (std::uint64_t seed = 40; seed < 52; ++seed) {
    CounterRng rng(seed);
    const Index n = 1 + static_cast<Index>(rng.uniform_int(4));
    const Index m = n + 1 + static_cast<Index>(rng.uniform_int(4));
    const Matrix a = random_matrix(rng, m, n);
    const SymmetricMatrix p = kernel_projector(GeneralMatrix(a));
    CHECK((p.mat() * p.mat() - p.mat()).norm() <= 1e-10);
    CHECK((p.mat() * a).norm() <= 1e-10 * std::max(1.0, a.norm()));
  }
}

TEST_CASE("kernel_projector reports rank deficiency") {
  Matrix a(3, 2);
  a << 1, 2, 2, 4, 3, 6;  // rank 1
  CHECK_THROWS_WITH_AS(kernel_projector(GeneralMatrix(a)),
                       doctest::Contains("rank 1"), NumericError);
}

TEST_CASE("spd_factor canonical cases") {
  CHECK((spd_factor(SymmetricMatrix::identity(3)).mat() - Matrix::Identity(3, 3)).norm() <
        1e-14);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 4;
  d(1, 1) = 9;
  const Matrix r = spd_factor(SymmetricMatrix(d)).mat();
  CHECK(r(0, 0) == doctest::Approx(2.0));
  CHECK(r(1, 1) == doctest::Approx(3.0));
  CHECK(std::abs(r(0, 1)) + std::abs(r(1, 0)) < 1e-14);
}

TEST_CASE("spd_factor round trip on random SPD input") {
  CounterRng rng(5);
  const SymmetricMatrix s = random_spd(rng, 6);
  const Matrix r = spd_factor(s).mat();
  CHECK((r.transpose() * r - s.mat()).norm() <= 1e-10 * s.mat().norm());
}

TEST_CASE("spd_factor composed with the Gram map is the identity") {
  for (std::uint64_t seed = 60; seed < 70; ++seed) {
    CounterRng rng(seed);
    const Index n = 2 + static_cast<Index>(rng.uniform_int(6));
    const SymmetricMatrix s = random_spd(rng, n);
    const Matrix r = spd_factor(s).mat();
    CHECK((r.transpose() * r - s.mat()).norm() <= 1e-10 * s.mat().norm());
  }
}

TEST_CASE("spd_factor rejects indefinite input") {
  Matrix s = Matrix::Identity(2, 2);
  s(1, 1) = -1;
  CHECK_THROWS_AS(spd_factor(SymmetricMatrix(s)), NumericError);
}

TEST_CASE("solve_spd basics") {
  Vector b(2);
  b << 2, 8;
  CHECK((solve_spd(SymmetricMatrix::identity(2), b) - b).norm() < 1e-14);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2;
  d(1, 1) = 4;
  const Vector x = solve_spd(SymmetricMatrix(d), b);
  CHECK(x(0) == doctest::Approx(1.0));
  CHECK(x(1) == doctest::Approx(2.0));
}

TEST_CASE("solve_spd residual on random instance") {
  CounterRng rng(9);
  const SymmetricMatrix s = random_spd(rng, 8);
  const Vector b = testsup::random_vector(rng, 8);
  const Vector x = solve_spd(s, b);
  CHECK((s.mat() * x - b).norm() <= 1e-10 * b.norm());
}

TEST_CASE("solve_general handles nonsymmetric systems and flags singular ones") {
  CounterRng rng(13);
  const Matrix s = random_matrix(rng, 5, 5) + 5 * Matrix::Identity(5, 5);
  const Vector b = testsup::random_vector(rng, 5);
  CHECK((s * solve_general(s, b) - b).norm() <= 1e-10 * b.norm());

  Matrix sing = Matrix::Ones(3, 3);
  CHECK_THROWS_WITH_AS(solve_general(sing, Vector(Vector::Ones(3))),
                       doctest::Contains("condition"), NumericError);
}

TEST_CASE("symmetric matrix symmetrizes on construction") {
  Matrix x(2, 2);
  x << 1, 2, 0, 1;
  const SymmetricMatrix s(x);
  CHECK(s.mat()(0, 1) == doctest::Approx(1.0));
  CHECK(s.mat()(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("general matrix rejects non-finite entries") {
  Matrix x = Matrix::Zero(2, 2);
  x(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(GeneralMatrix{x}, NumericError);
}
