#include <Eigen/Dense>
#include <cmath>
#include <filesystem>

#include "aenp/taskgen.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace aenp;

TEST_CASE("lengthscale profile by side and orientation") {
  GibbsProcessConfig cfg;
  CHECK(lengthscale_profile(-1.0, 1, cfg) == 0.1);
  CHECK(lengthscale_profile(1.0, 1, cfg) == 4.0);
  CHECK(lengthscale_profile(-1.0, 0, cfg) == 4.0);
  CHECK(lengthscale_profile(1.0, 0, cfg) == 0.1);
  CHECK(lengthscale_profile(0.0, 1, cfg) == 4.0);  // changepoint belongs to the right side
}

TEST_CASE("gibbs kernel closed form") {
  CHECK(gibbs_kernel(0.3, 0.3, 0.1, 4.0) < 1.0);
  CHECK(gibbs_kernel(0.3, 0.3, 0.7, 0.7) == 1.0);
  CHECK(gibbs_kernel(0.05, 0.15, 0.1, 0.1) == doctest::Approx(0.60653065971263342).epsilon(1e-14));
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3), ell = rng.uniform(0.05, 5);
    const double se = std::exp(-(a - b) * (a - b) / (2 * ell * ell));
    CHECK(std::abs(gibbs_kernel(a, b, ell, ell) - se) < 1e-14);
    GibbsProcessConfig cfg;
    CHECK(gibbs_kernel(a, b, 1, cfg) == gibbs_kernel(b, a, 1, cfg));
  }
}

TEST_CASE("grams are symmetric and positive semidefinite") {
  GibbsProcessConfig cfg;
  Rng rng(12);
  for (int rep = 0; rep < 40; ++rep) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 512));
    std::vector<double> xs(n);
    for (auto& x : xs) x = rng.uniform(-9, 9);
    const int beta = rep % 2;
    const auto k = gibbs_cross(xs, xs, beta, cfg);
    Eigen::MatrixXd m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        REQUIRE(k[i * n + j] == k[j * n + i]);
        m(i, j) = k[i * n + j];
      }
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("sampled tasks respect the sampler contract") {
  TaskSamplerConfig s;
  GibbsProcessConfig p;
  for (std::uint64_t i = 0; i < 200; ++i) {
    const auto mode = i % 2 ? TaskMode::ood : TaskMode::id;
    const Task t = sample_task(5, Stream::train, i, mode, s, p);
    const double c = 0.5 * (t.context_lo + t.context_hi);
    CHECK(t.context_hi - t.context_lo == doctest::Approx(4.0));
    if (mode == TaskMode::id) {
      CHECK((c >= -7 && c <= 7));
    } else {
      CHECK((c >= 13 && c <= 27));
    }
    CHECK(t.x_context.size() >= 1);
    CHECK(t.x_context.size() <= 64);
    CHECK(t.x_target.size() == 128);
    for (double x : t.x_context) CHECK((x >= t.context_lo && x <= t.context_hi));
    for (double x : t.x_target) CHECK((x >= t.context_lo - 1 && x <= t.context_hi + 1));
  }
  const Task a = sample_task(9, Stream::train, 17, TaskMode::id, s, p);
  const Task b = sample_task(9, Stream::train, 17, TaskMode::id, s, p);
  CHECK(a.y_context == b.y_context);
  CHECK(a.y_target == b.y_target);
  CHECK(a.x_target == b.x_target);
  const Task c = sample_task(9, Stream::eval_id, 17, TaskMode::id, s, p);
  CHECK(c.x_target != a.x_target);
}

TEST_CASE("empirical covariance of constant-lengthscale draws matches the kernel") {
  GibbsProcessConfig p;
  p.ell_low = p.ell_high = 0.8;
  const std::vector<double> xs = {-1.0, -0.4, 0.0, 0.5, 1.3};
  const int reps = 5000;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(5, 5);
  std::vector<Eigen::VectorXd> draws;
  Rng rng(13);
  for (int r = 0; r < reps; ++r) {
    const auto f = sample_gp(xs, 1, p, rng);
    draws.emplace_back(Eigen::Map<const Eigen::VectorXd>(f.data(), 5));
  }
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      double m = 0, m2 = 0;
      for (const auto& d : draws) {
        const double v = d(i) * d(j);
        m += v;
        m2 += v * v;
      }
      m /= reps;
      const double se = std::sqrt((m2 / reps - m * m) / reps);
      CHECK(std::abs(m - gibbs_kernel(xs[i], xs[j], 0.8, 0.8)) <= 3 * se + 1e-12);
    }
}

TEST_CASE("variogram on the short-lengthscale side") {
  // beta = 1 puts ell = 0.1 on x < 0. For observations a distance d apart the
  // semivariogram is 1 - exp(-d^2 / (2 * 0.01)) + noise^2.
  GibbsProcessConfig p;
  Rng rng(14);
  for (double d : {0.05, 0.1, 0.3}) {
    double acc = 0;
    const int reps = 1000;
    for (int r = 0; r < reps; ++r) {
      const double x0 = rng.uniform(-6, -2 - d);
      const auto f = sample_gp({x0, x0 + d}, 1, p, rng);
      const double y0 = f[0] + 0.2 * rng.normal(), y1 = f[1] + 0.2 * rng.normal();
      acc += 0.5 * (y0 - y1) * (y0 - y1);
    }
    const double gamma = 1 - std::exp(-d * d / 0.02) + 0.04;
    // semivariance estimate of a scaled chi-square(1): sd = gamma * sqrt(2 / reps)
    CHECK(std::abs(acc / reps - gamma) < 4 * gamma * std::sqrt(2.0 / reps));
  }
}

TEST_CASE("posterior oracle") {
  GibbsProcessConfig p;
  SUBCASE("empty context gives the prior marginal") {
    Task t;
    t.x_target = {10.0};
    t.y_target = {0.7};
    t.beta = 1;
    const double expected = -0.5 * std::log(2 * std::numbers::pi * 1.04) - 0.49 / (2 * 1.04);
    CHECK(gp_posterior_loglik(t, p, OracleKind::known_beta) == doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("posterior variance never exceeds the prior") {
    TaskSamplerConfig s;
    for (std::uint64_t i = 0; i < 20; ++i) {
      const Task t = sample_task(3, Stream::train, i, TaskMode::id, s, p);
      const auto pred = gp_predict(t.x_context, t.y_context, t.x_target, t.beta, p);
      for (std::size_t k = 0; k < pred.variance.size(); ++k) {
        CHECK(pred.variance[k] <= 1.04 + 1e-12);
        CHECK(pred.variance[k] > 0.0);
      }
    }
  }
  SUBCASE("one-sided tasks agree with a stationary SE oracle") {
    TaskSamplerConfig s;
    s.id_center_range = {-6.5, -3.5};  // everything left of the changepoint
    for (std::uint64_t i = 0; i < 20; ++i) {
      const Task t = sample_task(4, Stream::train, i, TaskMode::id, s, p);
      const double ell = t.beta == 1 ? 0.1 : 4.0;
      const double ref = oracle::se_posterior_loglik(t.x_context, t.y_context, t.x_target, t.y_target, ell, 0.2);
      CHECK(std::abs(gp_posterior_loglik(t, p, OracleKind::known_beta) - ref) < 1e-10);
    }
  }
  SUBCASE("the mixture oracle is close to the known orientation oracle when data is informative") {
    TaskSamplerConfig s;
    const Task t = sample_task(6, Stream::train, 0, TaskMode::id, s, p);
    const double known = gp_posterior_loglik(t, p, OracleKind::known_beta, true);
    const double mix = gp_posterior_loglik(t, p, OracleKind::mixture, true);
    CHECK(std::isfinite(mix));
    CHECK(std::abs(known - mix) < 1.0);
  }
}

TEST_CASE("task serialization round trips") {
  TaskSamplerConfig s;
  GibbsProcessConfig p;
  std::vector<Task> tasks;
  for (std::uint64_t i = 0; i < 5; ++i) tasks.push_back(sample_task(1, Stream::eval_ood, i, TaskMode::ood, s, p));
  const auto hash = task_config_hash(s, p);
  const auto dir = std::filesystem::temp_directory_path();
  write_tasks_jsonl(dir / "aenp_tasks.jsonl", tasks, hash);
  write_tasks_binary(dir / "aenp_tasks.bin", tasks, hash);
  std::string h1, h2;
  const auto a = read_tasks_jsonl(dir / "aenp_tasks.jsonl", &h1);
  const auto b = read_tasks_binary(dir / "aenp_tasks.bin", &h2);
  CHECK(h1 == hash);
  CHECK(h2 == hash);
  REQUIRE(a.size() == 5);
  REQUIRE(b.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a[i].y_target == tasks[i].y_target);
    CHECK(b[i].y_target == tasks[i].y_target);
    CHECK(b[i].x_context == tasks[i].x_context);
    CHECK(a[i].seed == tasks[i].seed);
    CHECK(b[i].mode == TaskMode::ood);
  }
  std::filesystem::remove(dir / "aenp_tasks.jsonl");
  std::filesystem::remove(dir / "aenp_tasks.bin");
}
