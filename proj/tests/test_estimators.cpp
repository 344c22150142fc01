#include "regopt/estimators.hpp"

#include "regopt/linalg.hpp"
#include "test_support.hpp"

#include <doctest.h>

using namespace regopt;
using testsup::psd_sqrt;
using testsup::random_matrix;
using testsup::random_problem;
using testsup::random_spd;
using testsup::random_vector;

namespace {

ProblemMoments scalar_problem(double a, double var_x, double var_eps, double mu) {
  return ProblemMoments(GeneralMatrix(Matrix::Constant(1, 1, a)),
                        Vector::Constant(1, mu),
                        SymmetricMatrix(Matrix::Constant(1, 1, var_x)),
                        SymmetricMatrix(Matrix::Constant(1, 1, var_eps)));
}

// Monte-Carlo risk estimate with a 3-standard-error band.
struct McRisk {
  double mean;
  double stderr3;
};

McRisk mc_risk(const ProblemMoments& p, const AffineMap& map, Index draws,
               std::uint64_t seed) {
  const Matrix root_x = psd_sqrt(p.sigma_x);
  const Matrix root_eps = psd_sqrt(p.sigma_eps);
  CounterRng rng(seed);
  double sum = 0, sum_sq = 0;
  for (Index i = 0; i < draws; ++i) {
    const Vector x = p.mu_x + root_x * random_vector(rng, p.n());
    const Vector y = p.a.mat() * x + root_eps * random_vector(rng, p.m());
    const double err = (map.w * y + map.b - x).squaredNorm();
    sum += err;
    sum_sq += err * err;
  }
  const double mean = sum / static_cast<double>(draws);
  const double var =
      (sum_sq - sum * sum / static_cast<double>(draws)) / static_cast<double>(draws - 1);
  return {mean, 3 * std::sqrt(std::max(var, 0.0) / static_cast<double>(draws))};
}

}  // namespace

TEST_CASE("risk_closed_form trivial maps") {
  CounterRng rng(1);
  const ProblemMoments p = random_problem(rng, 4, 3);
  const AffineMap zero(Matrix::Zero(3, 4), Vector::Zero(3));
  const auto risk = risk_closed_form(p, zero);
  CHECK(risk.total() == doctest::Approx(p.sigma_x.mat().trace() + p.mu_x.squaredNorm()));

  // exact inversion with no noise
  const ProblemMoments exact(GeneralMatrix(Matrix::Identity(3, 3)), p.mu_x, p.sigma_x,
                             SymmetricMatrix::zero(3));
  const AffineMap ident(Matrix::Identity(3, 3), Vector::Zero(3));
  CHECK(risk_closed_form(exact, ident).total() == doctest::Approx(0.0));
}

TEST_CASE("risk_closed_form agrees with a Monte-Carlo oracle") {
  CounterRng rng(13);
  const ProblemMoments p = random_problem(rng, 3, 2);
  const AffineMap map(random_matrix(rng, 2, 3), random_vector(rng, 2));
  const auto closed = risk_closed_form(p, map);
  const auto mc = mc_risk(p, map, 1000000, 77);
  CHECK(std::abs(closed.total() - mc.mean) <= mc.stderr3);
}

TEST_CASE("risk decomposition terms are nonnegative and sum to the total") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    CounterRng rng(seed);
    const ProblemMoments p = random_problem(rng, 5, 3);
    const AffineMap map(random_matrix(rng, 3, 5), random_vector(rng, 3));
    const auto r = risk_closed_form(p, map);
    CHECK(r.operator_bias >= 0);
    CHECK(r.variance >= 0);
    CHECK(r.offset_bias >= 0);
    CHECK(r.total() == doctest::Approx(r.operator_bias + r.variance + r.offset_bias));
  }
}

TEST_CASE("risk_empirical basic contracts") {
  CounterRng rng(2);
  const Matrix a = random_matrix(rng, 3, 2);
  const Matrix x = random_matrix(rng, 50, 2);
  const Matrix y = x * a.transpose();
  const PairedDataset ds(x, y, {});

  // a map reproducing every x† exactly: W = pseudo-inverse of A, b = 0
  const Matrix pinv =
      (a.transpose() * a).ldlt().solve(Matrix(a.transpose()));
  const auto zero_risk = risk_empirical(ds, AffineMap(pinv, Vector::Zero(2)));
  CHECK(zero_risk.mean_sum_sq == doctest::Approx(0.0));

  const auto blind = risk_empirical(ds, AffineMap(Matrix::Zero(2, 3), Vector::Zero(2)));
  CHECK(blind.mean_sum_sq == doctest::Approx(x.rowwise().squaredNorm().mean()));
  CHECK(blind.mean_per_dim == doctest::Approx(blind.mean_sum_sq / 2.0));
}

TEST_CASE("risk_empirical approaches the closed form on large samples") {
  CounterRng rng(3);
  const ProblemMoments p = random_problem(rng, 3, 2);
  const AffineMap map(random_matrix(rng, 2, 3), random_vector(rng, 2));
  const Matrix root_x = psd_sqrt(p.sigma_x);
  const Matrix root_eps = psd_sqrt(p.sigma_eps);
  const Index draws = 200000;
  Matrix xs(draws, 2), ys(draws, 3);
  CounterRng sample_rng(404);
  for (Index i = 0; i < draws; ++i) {
    const Vector x = p.mu_x + root_x * random_vector(sample_rng, 2);
    const Vector y = p.a.mat() * x + root_eps * random_vector(sample_rng, 3);
    xs.row(i) = x.transpose();
    ys.row(i) = y.transpose();
  }
  const auto emp = risk_empirical(PairedDataset(xs, ys, {}), map);
  CHECK(std::abs(emp.mean_sum_sq - risk_closed_form(p, map).total()) <=
        3 * emp.std_error_sum_sq);
}

TEST_CASE("optimal_offset closed form") {
  CounterRng rng(4);
  ProblemMoments p = random_problem(rng, 4, 3);

  const ProblemMoments centered(p.a, Vector::Zero(3), p.sigma_x, p.sigma_eps);
  CHECK(optimal_offset(centered, random_matrix(rng, 3, 4)).norm() == doctest::Approx(0.0));

  const Matrix square = random_matrix(rng, 3, 3) + 3 * Matrix::Identity(3, 3);
  const ProblemMoments sq(GeneralMatrix(square), random_vector(rng, 3),
                          random_spd(rng, 3), random_spd(rng, 3));
  const Matrix w_inv = square.inverse();
  CHECK(optimal_offset(sq, w_inv).norm() <= 1e-10);
}

TEST_CASE("optimal_offset is a local minimum in b") {
  CounterRng rng(5);
  const ProblemMoments p = random_problem(rng, 4, 3);
  const Matrix w = random_matrix(rng, 3, 4);
  const Vector b_star = optimal_offset(p, w);
  const double base = risk_closed_form(p, AffineMap(w, b_star)).total();
  const double scale = std::max(1.0, b_star.norm());
  for (int t = 0; t < 100; ++t) {
    const Vector delta = 1e-2 * scale * random_vector(rng, 3);
    CHECK(risk_closed_form(p, AffineMap(w, Vector(b_star + delta))).total() >=
          base - 1e-12);
  }
  // with the optimal offset the offset-bias summand vanishes
  CHECK(risk_closed_form(p, AffineMap(w, b_star)).offset_bias <= 1e-18);
}

TEST_CASE("lmmse scalar hand computation") {
  const ProblemMoments p = scalar_problem(1.0, 1.0, 1.0, 0.0);
  const AffineMap map = lmmse(p);
  CHECK(map.w(0, 0) == doctest::Approx(0.5));
  CHECK(map.b(0) == doctest::Approx(0.0));
  CHECK(risk_closed_form(p, map).total() == doctest::Approx(0.5));
}

TEST_CASE("lmmse with zero noise and invertible A inverts exactly") {
  CounterRng rng(6);
  const Matrix a = random_matrix(rng, 3, 3) + 3 * Matrix::Identity(3, 3);
  const ProblemMoments p(GeneralMatrix(a), random_vector(rng, 3), random_spd(rng, 3),
                         SymmetricMatrix::zero(3));
  const AffineMap map = lmmse(p);
  CHECK((map.w - a.inverse()).norm() <= 1e-8 * a.inverse().norm());
  CHECK(risk_closed_form(p, map).total() <= 1e-10);
}

TEST_CASE("lmmse matches a brute-force scalar grid search") {
  const ProblemMoments p = scalar_problem(1.0, 1.0, 1.0, 0.0);
  double best_w = 0, best_risk = std::numeric_limits<double>::infinity();
  for (double w = -2.0; w <= 2.0; w += 1e-4) {
    const double risk =
        risk_closed_form(p, AffineMap(Matrix::Constant(1, 1, w), Vector::Zero(1))).total();
    if (risk < best_risk) {
      best_risk = risk;
      best_w = w;
    }
  }
  CHECK(std::abs(best_w - 0.5) <= 1e-4 + 1e-12);
  CHECK(lmmse(p).w(0, 0) == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("lmmse satisfies its normal equation") {
  for (std::uint64_t seed = 20; seed < 26; ++seed) {
    CounterRng rng(seed);
    const ProblemMoments p = random_problem(rng, 5, 3);
    const AffineMap map = lmmse(p);
    const Matrix lhs =
        map.w * (p.a.mat() * p.sigma_x.mat() * p.a.mat().transpose() + p.sigma_eps.mat());
    const Matrix rhs = p.sigma_x.mat() * p.a.mat().transpose();
    CHECK((lhs - rhs).norm() <= 1e-8 * rhs.norm());
  }
}

TEST_CASE("lmmse is a local optimum under random perturbations") {
  for (std::uint64_t seed = 7; seed < 12; ++seed) {
    CounterRng rng(seed);
    const ProblemMoments p = random_problem(rng, 4, 3);
    const AffineMap star = lmmse(p);
    const double base = risk_closed_form(p, star).total();
    for (int t = 0; t < 100; ++t) {
      const Matrix dw = 1e-2 * star.w.norm() * random_matrix(rng, 3, 4);
      const Vector db = 1e-2 * std::max(1.0, star.b.norm()) * random_vector(rng, 3);
      const double perturbed =
          risk_closed_form(p, AffineMap(Matrix(star.w + dw), Vector(star.b + db))).total();
      CHECK(perturbed >= base - 1e-12);
    }
  }
}

TEST_CASE("optimal weighted Tikhonov scalar hand computation") {
  const ProblemMoments p = scalar_problem(1.0, 1.0, 1.0, 3.0);
  const TikhWeightedParams params = optimal_tikhonov_weighted(p);
  CHECK(params.omega.mat()(0, 0) == doctest::Approx(1.0));
  CHECK(params.r(0, 0) == doctest::Approx(1.0));
  CHECK(params.x0(0) == doctest::Approx(3.0));
  const AffineMap map = assemble_map(RegularizerParams(params), p.a);
  CHECK(map.w(0, 0) == doctest::Approx(0.5));
  CHECK(map.b(0) == doctest::Approx(1.5));
}

TEST_CASE("optimal weighted Tikhonov identity case") {
  CounterRng rng(8);
  const Vector mu = random_vector(rng, 3);
  const ProblemMoments p(GeneralMatrix(Matrix::Identity(3, 3)), mu,
                         SymmetricMatrix::identity(3), SymmetricMatrix::identity(3));
  const AffineMap map = assemble_map(RegularizerParams(optimal_tikhonov_weighted(p)), p.a);
  CHECK((map.w - 0.5 * Matrix::Identity(3, 3)).norm() <= 1e-10);
  CHECK((map.b - 0.5 * mu).norm() <= 1e-10);
}

TEST_CASE("optimal weighted Tikhonov equals lmmse") {
  CounterRng rng(17);
  const ProblemMoments p = random_problem(rng, 4, 3);
  const AffineMap tikh = assemble_map(RegularizerParams(optimal_tikhonov_weighted(p)), p.a);
  const AffineMap star = lmmse(p);
  CHECK((tikh.w - star.w).norm() <= 1e-8 * star.w.norm());
  CHECK((tikh.b - star.b).norm() <= 1e-8 * std::max(1.0, star.b.norm()));
}

TEST_CASE("optimal Lavrentiev white-noise special case") {
  const ProblemMoments p(GeneralMatrix(Matrix::Identity(2, 2)), Vector::Zero(2),
                         SymmetricMatrix::identity(2),
                         SymmetricMatrix(Matrix(0.25 * Matrix::Identity(2, 2))));
  const LavParams params = optimal_lavrentiev(p);
  CHECK((params.m - 0.25 * Matrix::Identity(2, 2)).norm() <= 1e-12);
  const AffineMap map = assemble_map(RegularizerParams(params), p.a);
  CHECK((map.w - 0.8 * Matrix::Identity(2, 2)).norm() <= 1e-10);
  CHECK((map.w - lmmse(p).w).norm() <= 1e-10);
}

TEST_CASE("optimal Lavrentiev equals lmmse whenever the noise is white") {
  for (std::uint64_t seed = 30; seed < 36; ++seed) {
    CounterRng rng(seed);
    const Index n = 2 + static_cast<Index>(rng.uniform_int(3));
    const Index m = n + static_cast<Index>(rng.uniform_int(3));
    Matrix a = random_matrix(rng, m, n) + Matrix::Identity(m, n);
    const double s2 = 0.1 + rng.uniform();
    const ProblemMoments p(GeneralMatrix(a), random_vector(rng, n), random_spd(rng, n),
                           SymmetricMatrix(Matrix(s2 * Matrix::Identity(m, m))));
    const AffineMap lav = assemble_map(RegularizerParams(optimal_lavrentiev(p)), p.a);
    const AffineMap star = lmmse(p);
    CHECK((lav.w - star.w).norm() <= 1e-8 * star.w.norm());
  }
}

TEST_CASE("optimal Lavrentiev sits strictly between lmmse and quadratic when the gap is open") {
  CounterRng rng(19);
  const ProblemMoments p = random_problem(rng, 3, 2);
  REQUIRE_FALSE(lavrentiev_gap_condition(p.a, p.sigma_eps).holds);
  const double r_star = risk_closed_form(p, lmmse(p)).total();
  const double r_lav =
      risk_closed_form(p, assemble_map(RegularizerParams(optimal_lavrentiev(p)), p.a))
          .total();
  const double r_quad =
      risk_closed_form(p,
                       assemble_map(RegularizerParams(optimal_quadratic(p).params), p.a))
          .total();
  CHECK(r_lav > r_star * (1 + 1e-12));
  CHECK(r_lav < r_quad * (1 - 1e-12));
}

TEST_CASE("optimal quadratic commuting identity case") {
  const ProblemMoments p(GeneralMatrix(Matrix::Identity(2, 2)), Vector::Zero(2),
                         SymmetricMatrix::identity(2),
                         SymmetricMatrix(Matrix(0.25 * Matrix::Identity(2, 2))));
  const QuadSolution sol = optimal_quadratic(p);
  CHECK((sol.params.m.mat() - 0.25 * Matrix::Identity(2, 2)).norm() <= 1e-10);
  CHECK(sol.min_eigenvalue_m == doctest::Approx(0.25));
}

TEST_CASE("optimal quadratic diagonal case equals the Lavrentiev solution") {
  Matrix sigma_x = Matrix::Zero(2, 2);
  sigma_x(0, 0) = 1;
  sigma_x(1, 1) = 2;
  const ProblemMoments p(GeneralMatrix(Matrix::Identity(2, 2)), Vector::Zero(2),
                         SymmetricMatrix(sigma_x), SymmetricMatrix::identity(2));
  // B = diag(2,3), D = diag(2,4), N = diag(1/2, 2/3), M = diag(1, 1/2)
  const QuadSolution sol = optimal_quadratic(p);
  CHECK(sol.params.m.mat()(0, 0) == doctest::Approx(1.0));
  CHECK(sol.params.m.mat()(1, 1) == doctest::Approx(0.5));
  const LavParams lav = optimal_lavrentiev(p);
  CHECK((sol.params.m.mat() - lav.m).norm() <= 1e-10);
}

TEST_CASE("optimal quadratic beats random symmetric perturbations and loses to Lavrentiev") {
  CounterRng rng(23);
  const ProblemMoments p = random_problem(rng, 3, 3);
  const QuadSolution sol = optimal_quadratic(p);
  const double base =
      risk_closed_form(p, assemble_map(RegularizerParams(sol.params), p.a)).total();
  const double scale = 1e-2 * sol.params.m.mat().norm();
  for (int t = 0; t < 200; ++t) {
    const SymmetricMatrix delta = testsup::random_symmetric(rng, 3);
    const SymmetricMatrix m_pert(
        Matrix(sol.params.m.mat() + scale * delta.mat() / delta.mat().norm()));
    const double perturbed =
        risk_closed_form(
            p, assemble_map(RegularizerParams(QuadParams{m_pert, sol.params.x0}), p.a))
            .total();
    CHECK(perturbed >= base - 1e-12 * std::max(1.0, base));
  }
  const double r_lav =
      risk_closed_form(p, assemble_map(RegularizerParams(optimal_lavrentiev(p)), p.a))
          .total();
  CHECK(base >= r_lav - 1e-12);
}

TEST_CASE("risk ordering lmmse <= lavrentiev <= quadratic") {
  for (std::uint64_t seed = 200; seed < 215; ++seed) {
    CounterRng rng(seed);
    const Index n = 2 + static_cast<Index>(rng.uniform_int(3));
    const Index m = n + static_cast<Index>(rng.uniform_int(4));
    const ProblemMoments p = random_problem(rng, m, n);
    const double r_star = risk_closed_form(p, lmmse(p)).total();
    const double r_lav =
        risk_closed_form(p, assemble_map(RegularizerParams(optimal_lavrentiev(p)), p.a))
            .total();
    const double r_quad =
        risk_closed_form(
            p, assemble_map(RegularizerParams(optimal_quadratic(p).params), p.a))
            .total();
    CHECK(r_star <= r_lav + 1e-10);
    CHECK(r_lav <= r_quad + 1e-10);
  }
}

TEST_CASE("assemble_map fixed cases") {
  // Tikh{R=I, x0=0}, A=I → W = I/2, b = 0
  const GeneralMatrix ident(Matrix::Identity(2, 2));
  const AffineMap tikh =
      assemble_map(RegularizerParams(TikhParams{Matrix::Identity(2, 2), Vector::Zero(2)}),
                   ident);
  CHECK((tikh.w - 0.5 * Matrix::Identity(2, 2)).norm() <= 1e-12);
  CHECK(tikh.b.norm() == doctest::Approx(0.0));

  // Lav with x0 in ker(M): the offset contributes nothing
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 1.0;  // ker(M) = span(e2)
  Vector x0(2);
  x0 << 0, 5;
  const AffineMap lav = assemble_map(RegularizerParams(LavParams{m, x0}), ident);
  CHECK(lav.b.norm() <= 1e-12);
}

TEST_CASE("assemble_map reports the variant on singular systems") {
  Matrix m = -Matrix::Identity(2, 2);  // AᵀA + M = 0
  CHECK_THROWS_WITH_AS(
      assemble_map(RegularizerParams(LavParams{m, Vector::Zero(2)}),
                   GeneralMatrix(Matrix::Identity(2, 2))),
      doctest::Contains("lavrentiev"), NumericError);
}

TEST_CASE("gap condition hand computation") {
  Matrix a(2, 1);
  a << 1, 0;
  Matrix sigma(2, 2);
  sigma << 1, 0.5, 0.5, 1;
  const GapCondition gap = lavrentiev_gap_condition(GeneralMatrix(a), SymmetricMatrix(sigma));
  CHECK(gap.residual == doctest::Approx(0.5));
  CHECK_FALSE(gap.holds);
}

TEST_CASE("gap condition holds for white and operator-aligned noise") {
  CounterRng rng(31);
  const Matrix a = random_matrix(rng, 5, 3);
  const GeneralMatrix ga(a);
  const SymmetricMatrix white(Matrix(0.7 * Matrix::Identity(5, 5)));
  CHECK(lavrentiev_gap_condition(ga, white).holds);
  CHECK(lavrentiev_gap_condition(ga, white).residual <= 1e-10);

  const SymmetricMatrix aligned(
      Matrix(0.3 * Matrix::Identity(5, 5) + 0.9 * a * a.transpose()));
  CHECK(lavrentiev_gap_condition(ga, aligned).holds);
}

TEST_CASE("gap condition is equivalent to map equality, both directions") {
  int holds_seen = 0, fails_seen = 0;
  for (std::uint64_t seed = 300; seed < 330; ++seed) {
    CounterRng rng(seed);
    const Index n = 2 + static_cast<Index>(rng.uniform_int(3));
    const bool force_hold = seed % 2 == 0;
    const Index m = force_hold ? n : n + 1 + static_cast<Index>(rng.uniform_int(3));
    Matrix a = random_matrix(rng, m, n);
    if (force_hold) a += 3 * Matrix::Identity(m, n);  // square invertible family
    const ProblemMoments p(GeneralMatrix(a), random_vector(rng, n), random_spd(rng, n),
                           random_spd(rng, m));
    const GapCondition gap = lavrentiev_gap_condition(p.a, p.sigma_eps);
    const AffineMap lav = assemble_map(RegularizerParams(optimal_lavrentiev(p)), p.a);
    const AffineMap star = lmmse(p);
    const double rel = (lav.w - star.w).norm() / star.w.norm();
    if (gap.holds) {
      ++holds_seen;
      CHECK(rel <= 1e-6);
    } else {
      ++fails_seen;
      CHECK(rel > 1e-6);
      CHECK(risk_closed_form(p, lav).total() > risk_closed_form(p, star).total());
    }
  }
  CHECK(holds_seen > 0);
  CHECK(fails_seen > 0);
}

TEST_CASE("asymmetry_fraction endpoints") {
  CounterRng rng(32);
  const SymmetricMatrix s = testsup::random_symmetric(rng, 4);
  CHECK(asymmetry_fraction(s.mat()) == doctest::Approx(0.0));

  Matrix skew = random_matrix(rng, 4, 4);
  skew = 0.5 * (skew - skew.transpose()).eval();
  CHECK(asymmetry_fraction(skew) == doctest::Approx(1.0));

  CHECK_THROWS_AS(asymmetry_fraction(Matrix::Zero(3, 3)), Error);
}
