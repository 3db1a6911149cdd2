#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "gauss_bubbles/discrete.hpp"
#include "oracles.hpp"

using namespace gb;

namespace {

std::vector<std::vector<double>> rows_of(const DiscreteFunction& f) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(f.table().rows()));
  for (Eigen::Index r = 0; r < f.table().rows(); ++r) {
    for (Eigen::Index j = 0; j < f.table().cols(); ++j) rows[static_cast<std::size_t>(r)].push_back(f.table()(r, j));
  }
  return rows;
}

DiscreteFunction random_function(int m, int n, std::uint64_t seed, bool indicator) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t size = cube_size(m, n);
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(size), m);
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    if (indicator) {
      t(r, static_cast<Eigen::Index>(gen() % static_cast<std::uint64_t>(m))) = 1.0;
    } else {
      for (int j = 0; j < m; ++j) t(r, j) = u(gen);
      t.row(r) /= t.row(r).sum();
    }
  }
  return DiscreteFunction(m, n, t);
}

IntegrationConfig config(std::uint64_t samples, std::uint64_t seed) {
  IntegrationConfig cfg;
  cfg.sample_count = samples;
  cfg.seed = seed;
  cfg.dimension = 1;
  return cfg;
}

Eigen::VectorXd row_of(const DiscreteFunction& f, std::vector<int> point) {
  for (int& p : point) p -= 1;
  return f.table().row(static_cast<Eigen::Index>(cube_index(point, f.alphabet()))).transpose();
}

}  // namespace

TEST_CASE("cube indexing") {
  CHECK(cube_size(3, 4) == 81);
  CHECK_THROWS_AS(cube_size(10, 8), CapacityError);
  CHECK_THROWS_AS(cube_size(0, 2), DomainError);
  for (std::size_t idx = 0; idx < 81; ++idx) {
    const std::vector<int> p = cube_point(idx, 3, 4);
    CHECK(cube_index(p, 3) == idx);
  }
  CHECK(cube_point(5, 2, 3) == std::vector<int>{1, 0, 1});
}

TEST_CASE("kernel rows") {
  for (int m = 2; m <= 9; ++m) {
    const double lo = -1.0 / (m - 1);
    for (double rho : {lo, -0.1, 0.0, 0.3, 0.7, 0.999, 1.0}) {
      if (rho < lo) continue;
      const NoiseKernel k(m, rho);
      CHECK(std::abs(k.stay() + (m - 1) * k.move() - 1.0) <= 1e-15);
      CHECK(k.stay() >= 0.0);
      CHECK(k.move() >= 0.0);
      const Eigen::MatrixXd mat = k.matrix();
      CHECK((mat.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-15);
      CHECK((mat.colwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-15);
    }
    CHECK_THROWS_AS(NoiseKernel(m, lo - 1e-3), DomainError);
    CHECK_THROWS_AS(NoiseKernel(m, 1.0 + 1e-9), DomainError);
  }
  CHECK(NoiseKernel(2, 0.5).stay() == doctest::Approx(0.75));
  CHECK_NOTHROW(NoiseKernel(3, 0.0, NoiseKernel::Convention::unnormalized));
  CHECK_THROWS_AS(NoiseKernel(3, 0.5, NoiseKernel::Convention::unnormalized), DomainError);
  CHECK_THROWS_AS(NoiseKernel(1, 0.5), DomainError);
}

TEST_CASE("influences") {
  CHECK(influences(Eigen::VectorXd::Constant(9, 2.0), 3, 2, 0).influence == 0.0);
  CHECK(influences(Eigen::VectorXd::Constant(9, 2.0), 3, 2, 1).influence == 0.0);
  Eigen::VectorXd first(4), equal(4);
  first << 1, 1, 0, 0;  // 1 when omega_1 = 1
  equal << 1, 0, 0, 1;  // 1 when omega_1 = omega_2
  CHECK(influences(first, 2, 2, 0).influence == doctest::Approx(0.25));
  CHECK(influences(first, 2, 2, 1).influence == doctest::Approx(0.0));
  CHECK(influences(equal, 2, 2, 0).influence == doctest::Approx(0.25));
  CHECK(influences(equal, 2, 2, 1).influence == doctest::Approx(0.25));
  CHECK(influences(first, 2, 2, 0).mean == doctest::Approx(0.5));
  CHECK_THROWS_AS(influences(first, 2, 2, 2), DomainError);
  CHECK_THROWS_AS(influences(first, 2, 2, -1), DomainError);
}

TEST_CASE("noise kernel application") {
  Eigen::VectorXd g(2);
  g << 1, 0;
  const Eigen::VectorXd out = apply_noise_kernel(g, 2, 1, NoiseKernel(2, 0.5));
  CHECK(out(0) == doctest::Approx(0.75));
  CHECK(out(1) == doctest::Approx(0.25));

  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  for (int m = 2; m <= 4; ++m) {
    for (int n = 1; m <= 4 && std::pow(m, n) <= 81; ++n) {
      const auto size = static_cast<Eigen::Index>(cube_size(m, n));
      Eigen::VectorXd t(size);
      for (Eigen::Index k = 0; k < size; ++k) t(k) = nd(gen);
      CHECK((apply_noise_kernel(t, m, n, NoiseKernel(m, 1.0)) - t).norm() <= 1e-13);
      const Eigen::VectorXd flat = apply_noise_kernel(t, m, n, NoiseKernel(m, 0.0));
      CHECK((flat.array() - t.mean()).abs().maxCoeff() <= 1e-12);
      const NoiseKernel k(m, 0.37);
      const Eigen::VectorXd smoothed = apply_noise_kernel(t, m, n, k);
      CHECK(std::abs(smoothed.mean() - t.mean()) <= 1e-12);
      // Dense tensor power of the kernel as the oracle.
      Eigen::MatrixXd full = Eigen::MatrixXd::Ones(1, 1);
      for (int i = 0; i < n; ++i) {
        const Eigen::MatrixXd km = k.matrix();
        Eigen::MatrixXd next(full.rows() * m, full.cols() * m);
        for (Eigen::Index a = 0; a < full.rows(); ++a) {
          for (Eigen::Index b = 0; b < full.cols(); ++b) next.block(a * m, b * m, m, m) = full(a, b) * km;
        }
        full = next;
      }
      CHECK((full * t - smoothed).norm() <= 1e-12);
    }
  }
}

TEST_CASE("plurality and dictator") {
  const DiscreteFunction p23 = plurality_function(2, 3);
  CHECK(row_of(p23, {1, 1, 2}).isApprox(Eigen::Vector2d(1, 0)));
  const DiscreteFunction p33 = plurality_function(3, 3);
  CHECK(row_of(p33, {1, 2, 3}).isApprox(Eigen::Vector3d::Constant(1.0 / 3.0)));
  CHECK(row_of(p33, {3, 2, 3}).isApprox(Eigen::Vector3d(0, 0, 1)));
  const DiscreteFunction p22 = plurality_function(2, 2);
  CHECK(row_of(p22, {1, 2}).isApprox(Eigen::Vector2d(0.5, 0.5)));
  const DiscreteFunction d = dictator_function(3, 2);
  CHECK(row_of(d, {2, 1}).isApprox(Eigen::Vector3d(0, 1, 0)));
  for (Eigen::Index r = 0; r < p33.table().rows(); ++r) {
    CHECK(std::abs(p33.table().row(r).sum() - 1.0) <= 1e-12);
    CHECK(p33.table().row(r).minCoeff() >= 0.0);
  }
  CHECK(p33.table().rows() == 27);

  Eigen::MatrixXd bad = Eigen::MatrixXd::Constant(4, 2, 0.5);
  bad(0, 0) = 0.7;
  CHECK_THROWS_AS(DiscreteFunction(2, 2, bad), DomainError);
  bad(0, 0) = 1.5;
  bad(0, 1) = -0.5;
  CHECK_THROWS_AS(DiscreteFunction(2, 2, bad), DomainError);
  CHECK_THROWS_AS(DiscreteFunction(2, 3, Eigen::MatrixXd::Constant(4, 2, 0.5)), ContractViolation);
}

TEST_CASE("exact stability equals the brute-force double sum") {
  for (int m = 2; m <= 9; ++m) {
    for (int n = 1; std::pow(m, n) <= 81; ++n) {
      std::vector<DiscreteFunction> fs = {plurality_function(m, n), dictator_function(m, n),
                                          random_function(m, n, 10 * m + n, false)};
      for (const auto& f : fs) {
        const auto rows = rows_of(f);
        for (double rho : {0.0, 0.3, 0.7, 1.0}) {
          const double exact = discrete_noise_stability(f, rho).total;
          CHECK(std::abs(exact - oracle::brute_force_stability(rows, m, n, rho)) <= 1e-12);
        }
      }
    }
  }
  CHECK(discrete_noise_stability(dictator_function(2, 1), 0.5).total == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(discrete_noise_stability(dictator_function(2, 1), 0.3).total == doctest::Approx(0.65).epsilon(1e-15));
  CHECK(discrete_noise_stability(plurality_function(2, 3), 0.0).total == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("stability at the ends of the rho range") {
  for (int m = 2; m <= 4; ++m) {
    const DiscreteFunction f = random_function(m, 3, 100 + m, false);
    const Eigen::VectorXd means = f.table().colwise().mean();
    CHECK(discrete_noise_stability(f, 0.0).total == doctest::Approx(means.squaredNorm()).epsilon(1e-13));
    const DiscreteFunction g = random_function(m, 3, 200 + m, true);
    CHECK(discrete_noise_stability(g, 1.0).total == doctest::Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("indicator coordinates stay in the monotone band") {
  const DiscreteFunction f = random_function(3, 4, 7, true);
  const Eigen::VectorXd means = f.table().colwise().mean();
  for (double rho = 0.0; rho <= 1.0 + 1e-12; rho += 0.1) {
    const DiscreteStability s = discrete_noise_stability(f, std::min(rho, 1.0));
    for (int j = 0; j < 3; ++j) {
      CHECK(s.per_coordinate(j) >= means(j) * means(j) - 1e-12);
      CHECK(s.per_coordinate(j) <= means(j) + 1e-12);
    }
  }
}

TEST_CASE("plurality stability is invariant under relabeling the symbols") {
  const int m = 3, n = 4;
  const DiscreteFunction f = plurality_function(m, n);
  const std::vector<int> sigma = {2, 0, 1};
  Eigen::MatrixXd t(f.table().rows(), m);
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    std::vector<int> p = cube_point(static_cast<std::size_t>(r), m, n);
    for (int& v : p) v = sigma[static_cast<std::size_t>(v)];
    const Eigen::RowVectorXd src = f.table().row(static_cast<Eigen::Index>(cube_index(p, m)));
    for (int j = 0; j < m; ++j) t(r, j) = src(sigma[static_cast<std::size_t>(j)]);
  }
  const DiscreteFunction g(m, n, t);
  for (double rho : {0.2, 0.6}) {
    CHECK(discrete_noise_stability(g, rho).total == doctest::Approx(discrete_noise_stability(f, rho).total).epsilon(1e-13));
  }
}

TEST_CASE("Monte Carlo stability matches the exact evaluator") {
  const int m = 3, n = 5;
  const DiscreteFunction f = plurality_function(m, n);
  const VotingRule rule = [&](std::span<const int> votes, Eigen::Ref<Eigen::VectorXd> out) {
    out = f.table().row(static_cast<Eigen::Index>(cube_index(votes, m))).transpose();
  };
  for (double rho : {0.0, 0.4, -0.3}) {
    const NoiseKernel k(m, rho);
    const DiscreteStability mc = discrete_noise_stability_mc(m, n, rule, k, config(1'000'000, 0));
    const double exact = discrete_noise_stability(f, rho).total;
    CHECK(std::abs(mc.total - exact) <= 3.0 * mc.std_error);
  }
}

TEST_CASE("majority cross-check") {
  const IntegrationConfig cfg = config(100'000, 61);
  const CltCrosscheck zero = clt_crosscheck(11, 0.0, cfg);
  CHECK(zero.gaussian == 0.5);
  CHECK(std::abs(zero.discrete - 0.5) <= 3.0 * zero.std_error);
  const CltCrosscheck one = clt_crosscheck(11, 1.0, cfg);
  CHECK(one.gaussian == 1.0);
  CHECK(one.discrete == 1.0);
  const CltCrosscheck half = clt_crosscheck(101, 0.5, cfg);
  CHECK(half.gaussian == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(std::abs(half.discrete - half.gaussian) <= 0.01);
  CHECK_THROWS_AS(clt_crosscheck(10, 0.5, cfg), DomainError);
  CHECK_THROWS_AS(clt_crosscheck(11, 1.5, cfg), DomainError);
}
