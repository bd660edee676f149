#include <cmath>
#include <random>

#include "aenp/tensor.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace aenp;
using testutil::gradcheck;
using testutil::project;
using testutil::random_param;

namespace {
using Fn = std::function<Tensor(const std::vector<Tensor>&)>;
constexpr double kGradTol = 1e-5;
}  // namespace

TEST_CASE("broadcast add matches hand values and shape") {
  auto a = Tensor::from({2, 1}, {1, 2});
  auto b = Tensor::from({3}, {10, 20, 30});
  auto c = a + b;
  CHECK(c.shape() == Shape{2, 3});
  CHECK(c.to_vector() == std::vector<double>{11, 21, 31, 12, 22, 32});
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({4})), ShapeError);
}

TEST_CASE("elementwise gradients agree with central differences") {
  std::mt19937_64 gen(1);
  const std::vector<std::pair<const char*, Fn>> cases = {
      {"add", [](auto& v) { return project(v[0] + v[1]); }},
      {"sub", [](auto& v) { return project(v[0] - v[1]); }},
      {"mul", [](auto& v) { return project(v[0] * v[1]); }},
      {"div", [](auto& v) { return project(v[0] / exp(v[1])); }},
      {"exp", [](auto& v) { return project(exp(v[0]) + v[1]); }},
      {"log", [](auto& v) { return project(log(square(v[0]) + 1.0) * v[1]); }},
      {"softplus", [](auto& v) { return project(softplus(v[0] * 3.0) + v[1]); }},
      {"sqrt", [](auto& v) { return project(sqrt(square(v[0]) + 0.5) * v[1]); }},
      {"sin_cos", [](auto& v) { return project(sin(v[0]) * cos(v[1])); }},
      {"guarded_div", [](auto& v) { return project(guarded_div(v[0], square(v[1]) + 0.3)); }},
  };
  for (const auto& [name, f] : cases) {
    CAPTURE(name);
    auto a = random_param({3, 4}, gen);
    auto b = random_param({3, 4}, gen);
    CHECK(gradcheck(f, {a, b}) < kGradTol);
  }
  SUBCASE("broadcasting accumulates into the smaller operand") {
    auto a = random_param({3, 4}, gen);
    auto b = random_param({1, 4}, gen);
    CHECK(gradcheck([](auto& v) { return project(v[0] * v[1] + v[1]); }, {a, b}) < kGradTol);
  }
  SUBCASE("relu away from the kink") {
    auto a = Tensor::parameter({4}, {-0.7, -0.2, 0.3, 1.1});
    CHECK(gradcheck([](auto& v) { return project(relu(v[0])); }, {a}) < kGradTol);
  }
}

TEST_CASE("reductions and shape ops have correct gradients") {
  std::mt19937_64 gen(2);
  auto a = random_param({2, 3, 4}, gen);
  CHECK(gradcheck([](auto& v) { return project(sum(v[0], 1)); }, {a}) < kGradTol);
  CHECK(gradcheck([](auto& v) { return project(mean(v[0], 2, true)); }, {a}) < kGradTol);
  CHECK(gradcheck([](auto& v) { return mean(v[0]); }, {a}) < kGradTol);
  CHECK(gradcheck([](auto& v) { return project(permute(v[0], {2, 0, 1})); }, {a}) < kGradTol);
  CHECK(gradcheck([](auto& v) { return project(transpose(v[0])); }, {a}) < kGradTol);
  CHECK(gradcheck([](auto& v) { return project(reshape(v[0], {6, 4})); }, {a}) < kGradTol);
  CHECK(gradcheck([](auto& v) { return project(slice(v[0], 1, 1, 2)); }, {a}) < kGradTol);
  auto b = random_param({2, 5, 4}, gen);
  CHECK(gradcheck([](auto& v) { return project(concat({v[0], v[1]}, 1)); }, {a, b}) < kGradTol);
}

TEST_CASE("permute and concat values") {
  auto a = Tensor::from({2, 3}, {0, 1, 2, 3, 4, 5});
  CHECK(transpose(a).to_vector() == std::vector<double>{0, 3, 1, 4, 2, 5});
  auto c = concat({a, Tensor::from({2, 1}, {9, 8})}, 1);
  CHECK(c.to_vector() == std::vector<double>{0, 1, 2, 9, 3, 4, 5, 8});
  CHECK(slice(a, 1, 1, 2).to_vector() == std::vector<double>{1, 2, 4, 5});
}

TEST_CASE("matmul values and gradients") {
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor::from({2, 2}, {5, 6, 7, 8});
  CHECK(matmul(a, b).to_vector() == std::vector<double>{19, 22, 43, 50});
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  std::mt19937_64 gen(3);
  auto x = random_param({3, 4}, gen);
  auto y = random_param({4, 2}, gen);
  CHECK(gradcheck([](auto& v) { return project(matmul(v[0], v[1])); }, {x, y}) < kGradTol);
  auto bx = random_param({2, 3, 4}, gen);
  auto by = random_param({2, 4, 5}, gen);
  CHECK(gradcheck([](auto& v) { return project(matmul(v[0], v[1])); }, {bx, by}) < kGradTol);
}

TEST_CASE("broadcasting against an empty axis stays empty") {
  const auto z = Tensor::zeros({3, 0}) * Tensor::full({1, 1}, 2.0);
  CHECK(z.shape() == Shape{3, 0});
  CHECK(z.numel() == 0);
}

TEST_CASE("linear matches matmul plus bias") {
  std::mt19937_64 gen(13);
  auto x = random_param({5, 3}, gen);
  auto w = random_param({3, 4}, gen);
  auto b = random_param({4}, gen);
  auto fused = linear(x, w, b).to_vector();
  auto plain = (matmul(x, w) + b).to_vector();
  for (std::size_t i = 0; i < fused.size(); ++i) CHECK(fused[i] == doctest::Approx(plain[i]).epsilon(1e-14));
  CHECK(gradcheck([](auto& v) { return project(linear(v[0], v[1], v[2])); }, {x, w, b}) < kGradTol);
  CHECK_THROWS_AS(linear(x, Tensor::zeros({4, 4}), b), ShapeError);
}

TEST_CASE("softmax and layer_norm") {
  auto s = softmax(Tensor::from({1, 2}, {0, 0}));
  CHECK(s.to_vector() == std::vector<double>{0.5, 0.5});
  std::mt19937_64 gen(4);
  auto x = random_param({5, 7}, gen, -3.0, 3.0);
  auto p = softmax(x);
  auto ln = layer_norm(x);
  for (std::size_t r = 0; r < 5; ++r) {
    double total = 0.0, m = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
      total += p[r * 7 + j];
      m += ln[r * 7 + j];
    }
    m /= 7.0;
    for (std::size_t j = 0; j < 7; ++j) var += (ln[r * 7 + j] - m) * (ln[r * 7 + j] - m);
    var /= 7.0;
    CHECK(std::abs(total - 1.0) < 1e-12);
    CHECK(std::abs(m) < 1e-10);
    CHECK(std::abs(var - 1.0) < 1e-8);
  }
  CHECK(gradcheck([](auto& v) { return project(softmax(v[0])); }, {x}) < kGradTol);
  CHECK(gradcheck([](auto& v) { return project(layer_norm(v[0])); }, {x}) < kGradTol);
}

TEST_CASE("cholesky") {
  auto id = cholesky(Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  CHECK(id.lower.to_vector() == std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(id.jitter == 0.0);
  auto r = cholesky(Tensor::from({2, 2}, {4, 2, 2, 3}));
  CHECK(r.lower[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(r.lower[1] == 0.0);
  CHECK(r.lower[2] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.lower[3] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  SUBCASE("rank deficient matrix is rescued by jitter") {
    auto s = cholesky(Tensor::from({2, 2}, {1, 1, 1, 1}));
    CHECK(s.jitter > 0.0);
    CHECK(s.jitter <= 1e-4);
  }
  SUBCASE("indefinite matrix reports every attempted level") {
    try {
      cholesky(Tensor::from({2, 2}, {1, 2, 2, 1}));
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("0.0001") != std::string::npos);
      CHECK(msg.find("1e-08") != std::string::npos);
    }
  }
  CHECK_THROWS_AS(cholesky(Tensor::from({2, 2}, {1, 0.5, 0.2, 1})), ShapeError);
}

TEST_CASE("conv1d gradients and interior translation equivariance") {
  std::mt19937_64 gen(5);
  auto x = random_param({2, 12}, gen);
  auto k = random_param({3, 2, 5}, gen);
  CHECK(gradcheck([](auto& v) { return project(conv1d(v[0], v[1])); }, {x, k}) < kGradTol);
  CHECK_THROWS_AS(conv1d(x, random_param({3, 2, 4}, gen)), ShapeError);
  CHECK_THROWS_AS(conv1d(x, random_param({3, 3, 5}, gen)), ShapeError);

  const std::size_t len = 40, half = 2, shift = 3;
  auto sig = random_param({2, len}, gen);
  std::vector<double> shifted(2 * len, 0.0);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = shift; i < len; ++i) shifted[c * len + i] = sig[c * len + i - shift];
  auto y = conv1d(sig, k);
  auto ys = conv1d(Tensor::from({2, len}, shifted), k);
  double worst = 0.0;
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = half + shift; i + half < len; ++i)
      worst = std::max(worst, std::abs(ys[o * len + i] - y[o * len + i - shift]));
  CHECK(worst < 1e-12);
}

TEST_CASE("symmetric kernels") {
  auto k = symmetric_kernel(Tensor::from({1, 1, 2}, {1.5, -2.0}));
  CHECK(k.to_vector() == std::vector<double>{-2.0, 1.5, -2.0});
  std::mt19937_64 gen(6);
  auto h = random_param({3, 2, 4}, gen);
  auto full = symmetric_kernel(h);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t j = 0; j < 7; ++j) CHECK(full[r * 7 + j] == full[r * 7 + 6 - j]);
  CHECK(gradcheck([](auto& v) { return project(symmetric_kernel(v[0])); }, {h}) < kGradTol);

  const std::size_t len = 31;
  auto sig = random_param({2, len}, gen);
  std::vector<double> flipped(2 * len);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < len; ++i) flipped[c * len + i] = sig[c * len + len - 1 - i];
  auto y = symmetric_conv1d(sig, h);
  auto yf = symmetric_conv1d(Tensor::from({2, len}, flipped), h);
  double worst = 0.0;
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 3; i + 3 < len; ++i)
      worst = std::max(worst, std::abs(yf[o * len + i] - y[o * len + len - 1 - i]));
  CHECK(worst < 1e-12);
}

TEST_CASE("autograd bookkeeping") {
  auto p = Tensor::parameter({2}, {1.0, 2.0});
  auto loss = sum(p * p);
  loss.backward();
  CHECK(p.grad()[0] == 2.0);
  loss.backward();
  CHECK(p.grad()[0] == 4.0);  // accumulates until zero_grad
  p.zero_grad();
  {
    NoGradGuard guard;
    auto q = p * p;
    CHECK_FALSE(q.requires_grad());
  }
  auto tape = record_tape(sum(p * p));
  REQUIRE(tape.entries.size() == 3);
  for (std::size_t i = 0; i < tape.entries.size(); ++i)
    for (auto parent : tape.entries[i].parents) CHECK(parent < i);
  CHECK_THROWS_AS(log(Tensor::from({1}, {-1.0})), NumericalError);
}
