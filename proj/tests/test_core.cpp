#include <cmath>
#include <filesystem>
#include <random>

#include "aenp/checkpoint.hpp"
#include "aenp/nn.hpp"
#include "aenp/optim.hpp"
#include "aenp/rng.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace aenp;

TEST_CASE("rng streams are deterministic and distinct") {
  Rng a(42, Stream::train, 3), b(42, Stream::train, 3), c(42, Stream::eval_id, 3),
      d(42, Stream::train, 4);
  const auto va = a.next_u64();
  CHECK(va == b.next_u64());
  CHECK(va != c.next_u64());
  CHECK(va != d.next_u64());
}

TEST_CASE("rng distributions have the right moments") {
  Rng r(7);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  std::int64_t lo = 100, hi = -100;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
    const auto k = r.uniform_int(1, 64);
    lo = std::min(lo, k);
    hi = std::max(hi, k);
  }
  CHECK(std::abs(su / n - 0.5) < 4 * std::sqrt(1.0 / 12 / n));
  CHECK(std::abs(sn / n) < 4 / std::sqrt(n));
  CHECK(std::abs(sn2 / n - 1.0) < 4 * std::sqrt(2.0 / n));
  CHECK(lo == 1);
  CHECK(hi == 64);
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("mlp forward examples and gradient") {
  ParamStore store;
  Rng rng(1);
  Mlp mlp(store, "m", {3, 5, 2}, rng);
  for (auto& [_, t] : store.items())
    for (auto& v : t.mutable_data()) v = 0.0;
  auto x = Tensor::from({4, 3}, std::vector<double>(12, 0.7));
  const auto out = mlp(x);
  for (double v : out.data()) CHECK(v == 0.0);

  ParamStore id_store;
  Linear lin(id_store, "id", 3, 3, rng);
  auto w = lin.weight.mutable_data();
  for (std::size_t i = 0; i < 9; ++i) w[i] = (i % 4 == 0) ? 1.0 : 0.0;
  CHECK(mlp_forward(x, {lin}).to_vector() == x.to_vector());

  ParamStore gs;
  Mlp g(gs, "g", {3, 4, 4, 2}, rng);
  std::vector<Tensor> params;
  for (auto& [_, t] : gs.items()) params.push_back(t);
  auto input = Tensor::from({5, 3}, {0.1, -0.4, 0.9, 0.3, 0.2, -0.8, 1.1, 0.5, -0.2, 0.0, 0.7,
                                     0.6, -1.0, 0.4, 0.3});
  auto f = [&](const std::vector<Tensor>&) { return testutil::project(g(input)); };
  CHECK(testutil::gradcheck(f, params) < 1e-6);
  CHECK_THROWS_AS(g(Tensor::zeros({5, 2})), ShapeError);
}

TEST_CASE("adamw closed-form steps") {
  SUBCASE("zero gradient and zero decay leave parameters unchanged") {
    ParamStore s;
    auto p = s.add("p", {3}, {1.0, -2.0, 3.0});
    AdamW opt(s, {.lr = 0.1, .weight_decay = 0.0});
    p.mutable_grad();
    opt.step();
    CHECK(p.to_vector() == std::vector<double>{1.0, -2.0, 3.0});
    CHECK(opt.steps() == 1);
  }
  SUBCASE("gradient value 3.0 enters the moments as 0.5") {
    ParamStore s;
    auto p = s.add("p", {1}, {0.0});
    AdamW opt(s, {.lr = 1e-3, .weight_decay = 0.0, .clip_value = 0.5});
    p.mutable_grad()[0] = 3.0;
    opt.step();
    CHECK(opt.first_moments()[0][0] == doctest::Approx(0.1 * 0.5).epsilon(1e-15));
    CHECK(opt.second_moments()[0][0] == doctest::Approx(0.001 * 0.25).epsilon(1e-15));
  }
  SUBCASE("first step moves by lr * g / (|g| + eps) after decoupled decay") {
    const double lr = 1e-2, wd = 0.05, g = -0.3, p0 = 1.7, eps = 1e-8;
    ParamStore s;
    auto p = s.add("p", {1}, {p0});
    AdamW opt(s, {.lr = lr, .eps = eps, .weight_decay = wd, .clip_value = 0.5});
    p.mutable_grad()[0] = g;
    opt.step();
    // bias-corrected moments after one step are g and g^2
    const double expected = p0 * (1.0 - lr * wd) - lr * g / (std::abs(g) + eps);
    CHECK(p[0] == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "aenp_ckpt_test";
  std::filesystem::remove_all(dir);
  ParamStore a;
  Rng rng(3);
  Mlp m(a, "m", {2, 3, 1}, rng);
  save_checkpoint(dir, a, {{"seed", 3}});
  ParamStore b;
  Rng other(99);
  Mlp m2(b, "m", {2, 3, 1}, other);
  auto manifest = load_checkpoint(dir, b);
  CHECK(manifest["seed"] == 3);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a.items()[i].second.to_vector() == b.items()[i].second.to_vector());
  ParamStore c;
  Mlp m3(c, "m", {2, 4, 1}, other);
  CHECK_THROWS(load_checkpoint(dir, c));
  std::filesystem::remove_all(dir);
}
