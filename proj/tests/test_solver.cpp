#include <doctest.h>

#include <cmath>

#include "nsmkl/error.hpp"
#include "nsmkl/kernels.hpp"
#include "nsmkl/solver.hpp"
#include "support.hpp"

using namespace nsmkl;

namespace {

std::span<const double> view(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

struct Instance {
  std::vector<Matrix> grams;
  Matrix memberships;
};

Instance random_instance(std::uint64_t seed, Index n, Index g, Index c) {
  std::mt19937_64 rng(seed);
  Instance inst;
  for (Index k = 0; k < g; ++k) inst.grams.push_back(testing::random_rbf_gram(rng, n, 2 + k, 0.6 + 0.3 * k));
  inst.memberships = c == 1 ? Matrix::Ones(n, 1) : testing::random_memberships(rng, n, c);
  return inst;
}

MklConfig config_for(Regime regime, double p, double q, double delta) {
  MklConfig c;
  c.regime = regime;
  c.p = p;
  c.q = q;
  c.delta = delta;
  c.tol = 1e-10;
  c.max_iter = 2000;
  return c;
}

}  // namespace

TEST_CASE("compute_u") {
  auto inst = random_instance(1, 4, 2, 2);
  const LocalisedKernelStack stack(inst.grams, inst.memberships);
  CHECK(compute_u(stack, Vector::Zero(4)).isZero(0.0));

  const std::vector<Matrix> id{Matrix::Identity(5, 5), Matrix::Identity(5, 5)};
  const LocalisedKernelStack ident(id, Matrix::Ones(5, 1));
  const Vector u = compute_u(ident, Vector::Ones(5));
  CHECK(u[0] == 5.0);
  CHECK(u[1] == 5.0);

  std::mt19937_64 rng(2);
  const Vector lam = testing::random_matrix(rng, 4, 1);
  const Vector got = compute_u(stack, lam);
  for (Index k = 0; k < stack.weight_count(); ++k) {
    double expected = 0.0;
    for (Index i = 0; i < 4; ++i) {
      for (Index j = 0; j < 4; ++j) expected += lam[i] * stack.at(k)(i, j) * lam[j];
    }
    CHECK(got[k] == doctest::Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("mu_update closed form") {
  const std::vector<double> one{1.0};
  const Vector single = mu_update(std::vector<double>{3.7}, one, 2.0, 1.0);
  CHECK(single[0] == doctest::Approx(1.0).epsilon(1e-15));

  const std::vector<double> u4(4, 2.0), mu4(4, 0.5);
  const Vector uni = mu_update(u4, mu4, 2, 2);
  for (double m : uni) CHECK(m == doctest::Approx(0.5).epsilon(1e-15));
  // The uniform vector is a fixed point of repeated updates.
  Vector again = uni;
  for (int i = 0; i < 5; ++i) again = mu_update(u4, view(again), 2, 2);
  CHECK((again - uni).cwiseAbs().maxCoeff() < 1e-15);

  const std::vector<double> u_sparse{1.0, 0.0};
  const std::vector<double> mu2(2, std::sqrt(0.5));
  const Vector sparse = mu_update(u_sparse, mu2, 2, 2);
  CHECK(sparse[0] == doctest::Approx(1.0));
  CHECK(sparse[1] <= 1e-12);

  const std::vector<double> zeros(3, 0.0), mu3(3, 0.5);
  CHECK_THROWS_AS(mu_update(zeros, mu3, 2, 2), Error);

  // Random inputs always land on the constraint surface.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uni01(0.0, 1.0);
  const double grid[] = {32.0 / 31, 8.0 / 7, 4.0 / 3, 2, 4, 10};
  for (double p : grid) {
    for (double q : grid) {
      Vector u(6), mu(6);
      for (Index i = 0; i < 6; ++i) {
        u[i] = uni01(rng);
        mu[i] = uni01(rng);
      }
      const Vector next = mu_update(view(u), view(mu), p, q);
      CHECK(next.minCoeff() >= 0.0);
      CHECK(std::abs(lp_norm(view(next), p) * lp_norm(view(next), q) - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("mu_optimal solves the stationarity condition") {
  // p == q: mu proportional to u^{1/(p-1)} on the l_p sphere.
  const std::vector<double> u{1.0, 4.0, 0.25};
  const Vector m2 = mu_optimal(u, 2, 2);
  const double s = std::sqrt(1.0 + 16.0 + 0.0625);
  CHECK(m2[0] == doctest::Approx(1.0 / s).epsilon(1e-13));
  CHECK(m2[1] == doctest::Approx(4.0 / s).epsilon(1e-13));
  CHECK(m2[2] == doctest::Approx(0.25 / s).epsilon(1e-13));

  const std::vector<double> with_zero{2.0, 0.0, 1.0};
  CHECK(mu_optimal(with_zero, 4.0 / 3, 4)[1] == 0.0);
  const std::vector<double> zeros(3, 0.0);
  CHECK_THROWS_AS(mu_optimal(zeros, 2, 2), Error);

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> uni01(0.05, 1.0);
  const double grid[] = {32.0 / 31, 16.0 / 15, 8.0 / 7, 4.0 / 3, 2, 4, 8, 10};
  for (double p : grid) {
    for (double q : grid) {
      Vector uv(5);
      for (auto& x : uv) x = uni01(rng);
      const Vector mu = mu_optimal(view(uv), p, q);
      CHECK(std::abs(lp_norm(view(mu), p) * lp_norm(view(mu), q) - 1.0) <= 1e-12);
      // A fixed point of the one-step map.
      const Vector again = mu_update(view(uv), view(mu), p, q);
      CHECK((again - mu).cwiseAbs().maxCoeff() <= 1e-9);
      // No random feasible point does better.
      const double best = mu.dot(uv);
      for (int t = 0; t < 200; ++t) {
        Vector w(5);
        for (auto& x : w) x = uni01(rng);
        w /= std::sqrt(lp_norm(view(w), p) * lp_norm(view(w), q));
        CHECK(w.dot(uv) <= best + 1e-12);
      }
    }
  }
}

TEST_CASE("lambda_solve") {
  const std::vector<Matrix> scalar{Matrix::Ones(1, 1)};
  const LocalisedKernelStack s1(scalar, Matrix::Ones(1, 1));
  const std::vector<double> unit{1.0};
  CHECK(lambda_solve(s1, unit, 1.0)[0] == doctest::Approx(0.5).epsilon(1e-15));

  const std::vector<Matrix> id{Matrix::Identity(3, 3)};
  const LocalisedKernelStack si(id, Matrix::Ones(3, 1));
  CHECK(lambda_solve(si, unit, 1.0).isApproxToConstant(0.5, 1e-15));

  std::mt19937_64 rng(6);
  const std::vector<Matrix> g{testing::random_psd(rng, 6), testing::random_psd(rng, 6)};
  const LocalisedKernelStack s(g, Matrix::Ones(6, 1));
  const std::vector<double> mu{0.3, 0.8};
  const Matrix a = 0.7 * Matrix::Identity(6, 6) + 0.3 * g[0] + 0.8 * g[1];
  const Vector expected = a.inverse() * Vector::Ones(6);
  CHECK((lambda_solve(s, mu, 0.7) - expected).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(saddle_value(s, mu, 0.7) == doctest::Approx(expected.sum()).epsilon(1e-12));
  CHECK(saddle_objective(s, mu, expected, 0.7) == doctest::Approx(expected.sum()).epsilon(1e-10));
}

TEST_CASE("uniform initial weights") {
  CHECK(uniform_weights(Regime::joint_matrix, 1, 1, 2, 1)[0] == 1.0);
  const Vector six = uniform_weights(Regime::joint_matrix, 2, 3, 2, 2);
  CHECK(six.size() == 6);
  CHECK(six[0] == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-15));
  const Vector four = uniform_weights(Regime::joint_matrix, 2, 2, 2, 1);
  CHECK(four[3] == doctest::Approx(std::pow(4.0, -0.75)).epsilon(1e-15));
  CHECK(lp_norm(view(four), 2) * lp_norm(view(four), 1) == doctest::Approx(1.0).epsilon(1e-15));
  const Vector dm = uniform_weights(Regime::disjoint_matrix, 3, 2, 4, 4.0 / 3);
  for (Index c = 0; c < 3; ++c) {
    const Vector block = dm.segment(c * 2, 2);
    CHECK(lp_norm(view(block), 4) * lp_norm(view(block), 4.0 / 3) == doctest::Approx(1.0).epsilon(1e-14));
  }
  const Vector jv = uniform_weights(Regime::joint_vector, 2, 2, 3, 1);
  CHECK(lp_norm(view(jv), 3) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("single-kernel regime is the closed form") {
  auto inst = random_instance(7, 12, 1, 1);
  const LocalisedKernelStack stack(inst.grams, inst.memberships);
  MklConfig cfg = config_for(Regime::single_kernel, 2, 2, 0.5);
  const auto r = train(stack, cfg);
  CHECK(r.trace.converged);
  CHECK(r.mu.size() == 1);
  CHECK(r.mu[0] == doctest::Approx(1.0).epsilon(1e-15));
  const Vector closed = single_kernel_lambda(inst.grams[0], 0.5);
  CHECK((r.lambda - closed).cwiseAbs().maxCoeff() <= 1e-12);
  const Vector direct = (0.5 * Matrix::Identity(12, 12) + inst.grams[0]).inverse() * Vector::Ones(12);
  CHECK((closed - direct).cwiseAbs().maxCoeff() <= 1e-10);

  auto two = random_instance(7, 12, 2, 1);
  const LocalisedKernelStack stack2(two.grams, two.memberships);
  CHECK_THROWS_AS(train(stack2, cfg), Error);
}

TEST_CASE("reductions between regimes") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto inst = random_instance(100 + seed, 15, 3, 1);
    const LocalisedKernelStack stack(inst.grams, inst.memberships);

    const auto jm = train(stack, config_for(Regime::joint_matrix, 2, 4.0 / 3, 1.5));
    const auto nl = train_non_localised(inst.grams, config_for(Regime::non_localised, 2, 4.0 / 3, 1.5));
    REQUIRE(jm.trace.converged);
    REQUIRE(nl.trace.converged);
    CHECK((jm.lambda - nl.lambda).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((jm.mu - nl.mu).cwiseAbs().maxCoeff() <= 1e-6);

    const auto dv = train(stack, config_for(Regime::disjoint_vector, 2, 2, 1.5));
    const auto jv = train(stack, config_for(Regime::joint_vector, 2, 2, 1.5));
    const auto dm = train(stack, config_for(Regime::disjoint_matrix, 2, 4.0 / 3, 1.5));
    CHECK((dv.lambda - jv.lambda).cwiseAbs().maxCoeff() == 0.0);
    CHECK((dm.lambda - jm.lambda).cwiseAbs().maxCoeff() == 0.0);
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto inst = random_instance(200 + seed, 12, 2, 3);
    const LocalisedKernelStack stack(inst.grams, inst.memberships);
    for (double p : {4.0 / 3, 2.0, 4.0}) {
      const auto jv = train(stack, config_for(Regime::joint_vector, p, p, 2.0));
      const auto jm = train(stack, config_for(Regime::joint_matrix, p, p, 2.0));
      REQUIRE(jv.trace.converged);
      CHECK((jv.lambda - jm.lambda).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("converged runs satisfy the optimality conditions") {
  const Regime regimes[] = {Regime::joint_matrix, Regime::joint_vector, Regime::disjoint_vector,
                            Regime::disjoint_matrix};
  int converged = 0;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const Index n = 8 + static_cast<Index>(seed * 3 % 25);
    const Index g = 1 + static_cast<Index>(seed % 3);
    const Index c = 1 + static_cast<Index>(seed % 3);
    auto inst = random_instance(300 + seed, n, g, c);
    const LocalisedKernelStack stack(inst.grams, inst.memberships);
    for (Regime regime : regimes) {
      const double p = seed % 2 == 0 ? 2.0 : 4.0;
      const double q = seed % 4 < 2 ? 4.0 / 3 : 2.0;
      const double delta = 0.5 * static_cast<double>(n);
      MklConfig cfg = config_for(regime, p, q, delta);
      const auto r = train(stack, cfg);
      if (!r.trace.converged) continue;
      ++converged;
      const auto st = check_stationarity(stack, cfg, r.mu, r.lambda);
      CHECK(st.constraint_violation <= 1e-8);
      CHECK(st.min_weight >= 0.0);
      CHECK(st.linear_residual <= 1e-8);
      CHECK(st.kkt_residual <= 1e-6);
      CHECK(r.lambda.norm() <= std::sqrt(static_cast<double>(n)) / delta + 1e-9);
      CHECK(r.trace.lambda_change.back() <= cfg.tol);

      // One more sweep of the fixed-point map barely moves lambda.
      const Vector u = compute_u(stack, r.lambda);
      const Vector mu = regime_mu_update(regime, c, view(u), view(r.mu), p, q, cfg.weight_floor);
      const Vector h = lambda_solve(stack, view(mu), delta);
      CHECK((r.lambda - h).cwiseAbs().maxCoeff() <= 10 * cfg.tol * r.lambda.cwiseAbs().maxCoeff());
    }
  }
  CHECK(converged >= 40);
}

TEST_CASE("large delta makes the solution independent of the starting point") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto inst = random_instance(400 + seed, 20, 3, 3);
    const LocalisedKernelStack stack(inst.grams, inst.memberships);
    MklConfig cfg = config_for(Regime::joint_matrix, 2, 4.0 / 3, 100.0 * 20);
    const auto a = train(stack, cfg);
    std::mt19937_64 rng(seed);
    TrainOptions opts;
    opts.initial_lambda = testing::random_unit(rng, 20);
    const auto b = train(stack, cfg, opts);
    REQUIRE(a.trace.converged);
    REQUIRE(b.trace.converged);
    CHECK((a.lambda - b.lambda).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("trained weights beat random feasible weights") {
  auto inst = random_instance(500, 10, 2, 2);
  const LocalisedKernelStack stack(inst.grams, inst.memberships);
  const MklConfig cfg = config_for(Regime::joint_matrix, 2, 2, 1.0);
  const auto r = train(stack, cfg);
  REQUIRE(r.trace.converged);
  const double trained = saddle_value(stack, view(r.mu), 1.0);
  CHECK(trained == doctest::Approx(r.lambda.sum()).epsilon(1e-10));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    Vector mu(4);
    for (auto& x : mu) x = u(rng);
    mu /= std::sqrt(lp_norm(view(mu), 2) * lp_norm(view(mu), 2));
    CHECK(trained <= saddle_value(stack, view(mu), 1.0) + 1e-9);
  }
}

TEST_CASE("permuting clusters permutes weight blocks") {
  auto inst = random_instance(600, 14, 2, 3);
  const LocalisedKernelStack stack(inst.grams, inst.memberships);
  Matrix permuted(14, 3);
  permuted << inst.memberships.col(2), inst.memberships.col(0), inst.memberships.col(1);
  const LocalisedKernelStack stack_p(inst.grams, permuted);
  const MklConfig cfg = config_for(Regime::joint_matrix, 2, 4.0 / 3, 7.0);
  const auto a = train(stack, cfg);
  const auto b = train(stack_p, cfg);
  CHECK((a.lambda - b.lambda).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((a.mu.segment(4, 2) - b.mu.segment(0, 2)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((a.mu.segment(0, 2) - b.mu.segment(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("non-convergence is reported, not thrown") {
  auto inst = random_instance(700, 10, 2, 2);
  const LocalisedKernelStack stack(inst.grams, inst.memberships);
  MklConfig cfg = config_for(Regime::joint_matrix, 2, 2, 1.0);
  cfg.max_iter = 1;
  cfg.tol = 1e-300;
  const auto r = train(stack, cfg);
  CHECK_FALSE(r.trace.converged);
  CHECK(r.trace.iterations == 1);
  CHECK(r.lambda.size() == 10);
  CHECK(r.lambda.norm() <= std::sqrt(10.0) + 1e-9);
}
