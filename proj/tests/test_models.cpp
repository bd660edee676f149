#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "../src/models/bank.hpp"
#include "aenp/config_error.hpp"
#include "aenp/models.hpp"
#include "aenp/taskgen.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace aenp;
using testutil::gradcheck;
using testutil::project;

namespace {

ModelConfig small_config(Family family, bool tilde) {
  ModelConfig c;
  c.family = family;
  c.tilde = tilde;
  c.seed = 11;
  c.channels = 6;
  c.kernel_size = 5;
  c.conv_layers = 3;
  c.grid_density = 10;
  c.decoder_lengthscales = 3;
  c.dz = 8;
  c.heads = 2;
  c.head_dim = 4;
  c.layers = 2;
  c.mu_hidden = 6;
  c.pseudo_tokens = 5;
  return c;
}

struct Data {
  std::vector<double> xc, yc, xt;
};

Data make_data(std::mt19937_64& gen, std::size_t nc, std::size_t nt, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> ux(lo, hi), uy(-1.0, 1.0);
  Data d;
  for (std::size_t i = 0; i < nc; ++i) {
    d.xc.push_back(ux(gen));
    d.yc.push_back(uy(gen));
  }
  for (std::size_t i = 0; i < nt; ++i) d.xt.push_back(ux(gen) * 1.2);
  return d;
}

std::vector<double> shifted(std::vector<double> v, double delta) {
  for (auto& x : v) x += delta;
  return v;
}

std::vector<double> negated(std::vector<double> v) {
  for (auto& x : v) x = -x;
  return v;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.numel() == b.numel());
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double prediction_diff(const GaussianPrediction& a, const GaussianPrediction& b) {
  return std::max(max_abs_diff(a.mean, b.mean), max_abs_diff(a.variance, b.variance));
}

bool bitwise_equal(const GaussianPrediction& a, const GaussianPrediction& b) {
  return a.mean.to_vector() == b.mean.to_vector() && a.variance.to_vector() == b.variance.to_vector();
}

// Copies every parameter the strict model shares by name with the source.
void copy_shared(const Model& from, Model& to) {
  for (auto& [name, t] : to.params().items()) {
    REQUIRE(from.params().contains(name));
    const auto src = from.params().get(name).data();
    REQUIRE(src.size() == t.numel());
    std::copy(src.begin(), src.end(), t.mutable_data().begin());
  }
}

void zero_bank(Model& m) {
  for (auto& [name, t] : m.params().items()) {
    if (name.rfind("bank.", 0) == 0) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
  }
}

}  // namespace

TEST_CASE("make_grid is anchored to the lattice and covers the data") {
  const auto g = make_grid({0.12}, {0.31}, 0.1, 0.0);
  REQUIRE(g.size() == 4);
  CHECK(g.front() == doctest::Approx(0.1));
  CHECK(g.back() == doctest::Approx(0.4));
  const auto s = make_grid({0.12 + 3.0}, {0.31 + 3.0}, 0.1, 0.0);
  CHECK(s.size() == g.size());
  CHECK_THROWS_AS(make_grid({}, {}, 0.1, 0.0), ShapeError);
}

TEST_CASE("setconv density and normalized value") {
  // One context point on a grid node: density exp(-d^2/(2 l^2)), value y at every node.
  const std::vector<double> grid{0.0, 0.5, 1.0};
  const Tensor log_ell = Tensor::vector({std::log(0.5)});
  const auto e = setconv_encode(grid, {0.5}, {2.0}, log_ell).to_vector();
  CHECK(e[0] == doctest::Approx(std::exp(-0.5)));
  CHECK(e[2] == doctest::Approx(1.0));
  CHECK(e[4] == doctest::Approx(std::exp(-0.5)));
  for (std::size_t i : {1u, 3u, 5u}) CHECK(e[i] == doctest::Approx(2.0 / (1.0 + 1e-8 / e[i - 1])));
  // Empty context: zero density, zero value.
  const auto z = setconv_encode(grid, {}, {}, log_ell).to_vector();
  for (double v : z) CHECK(v == 0.0);
}

TEST_CASE("gaussian_loglik matches the scalar density") {
  const GaussianPrediction p{Tensor::vector({0.0, 1.0}), Tensor::vector({1.0, 0.25})};
  const double expect = 0.5 * (oracle::normal_logpdf(0.5, 0.0, 1.0) + oracle::normal_logpdf(-1.0, 1.0, 0.25));
  CHECK(gaussian_loglik(p, {0.5, -1.0}).item() == doctest::Approx(expect).epsilon(1e-14));
  CHECK(gaussian_loglik({Tensor::vector({0.0}), Tensor::vector({1.0})}, {0.0}).item() ==
        doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
  CHECK_THROWS_AS(gaussian_loglik(p, {1.0}), ShapeError);
}

TEST_CASE("model configuration defaults and rejection") {
  ModelConfig c;
  c.family = Family::tetnp;
  c.tilde = true;
  c.finalize();
  CHECK(c.bank.count == 4);
  CHECK(c.bank.features == "fourier");
  CHECK(c.bank.dropout_prob == 0.5);
  ModelConfig g;
  g.tilde = true;
  g.finalize();
  CHECK(g.bank.count == g.channels);
  CHECK(g.bank.dropout_prob == 0.1);
  ModelConfig bad;
  bad.family = Family::tnp;
  bad.tilde = true;
  CHECK_THROWS_AS(bad.finalize(), ConfigError);
  ModelConfig even;
  even.kernel_size = 4;
  CHECK_THROWS_AS(even.finalize(), ConfigError);
  nlohmann::json j = small_config(Family::pttetnp, true);
  ModelConfig back = j.get<ModelConfig>();
  CHECK(nlohmann::json(back) == j);
  j["bogus"] = 1;
  CHECK_THROWS_AS(j.get<ModelConfig>(), ConfigError);
}

TEST_CASE("all families produce finite predictions with positive variance") {
  std::mt19937_64 gen(5);
  for (Family f : {Family::convcnp, Family::equivcnp, Family::relaxedconvcnp, Family::tetnp,
                   Family::pttetnp, Family::tnp}) {
    for (bool tilde : {false, true}) {
      if (f == Family::tnp && tilde) continue;
      CAPTURE(to_string(f));
      CAPTURE(tilde);
      const auto m = make_model(small_config(f, tilde));
      for (std::size_t nc : {0u, 1u, 9u}) {
        const auto d = make_data(gen, nc, 7);
        const auto p = m->forward(d.xc, d.yc, d.xt);
        REQUIRE(p.mean.numel() == 7);
        for (std::size_t i = 0; i < 7; ++i) {
          CHECK(std::isfinite(p.mean[i]));
          CHECK(p.variance[i] > 0.0);
        }
      }
    }
  }
}

TEST_CASE("strict models commute with translations") {
  std::mt19937_64 gen(21);
  for (Family f : {Family::convcnp, Family::equivcnp, Family::relaxedconvcnp, Family::tetnp,
                   Family::pttetnp}) {
    CAPTURE(to_string(f));
    const auto cfg = small_config(f, false);
    const auto m = make_model(cfg);
    const double cell = 1.0 / cfg.grid_density;
    for (int trial = 0; trial < 3; ++trial) {
      const auto d = make_data(gen, 10, 12);
      const auto base = m->forward(d.xc, d.yc, d.xt);
      for (double delta : {-5.0, -1.3, 2.7}) {
        // Grid models are only equivariant to whole-cell shifts.
        const double s = is_grid_family(f) ? std::round(delta / cell) * cell : delta;
        const auto moved = m->forward(shifted(d.xc, s), d.yc, shifted(d.xt, s));
        CHECK(prediction_diff(base, moved) <= 1e-7);
      }
    }
  }
}

TEST_CASE("EquivCNP commutes with reflection") {
  std::mt19937_64 gen(22);
  const auto m = make_model(small_config(Family::equivcnp, false));
  for (int trial = 0; trial < 3; ++trial) {
    const auto d = make_data(gen, 10, 12);
    const auto base = m->forward(d.xc, d.yc, d.xt);
    const auto flipped = m->forward(negated(d.xc), d.yc, negated(d.xt));
    CHECK(prediction_diff(base, flipped) <= 1e-7);
  }
  // A ConvCNP kernel is not reflection-tied, so the same test must fail.
  const auto c = make_model(small_config(Family::convcnp, false));
  const auto d = make_data(gen, 10, 12);
  CHECK(prediction_diff(c->forward(d.xc, d.yc, d.xt), c->forward(negated(d.xc), d.yc, negated(d.xt))) > 1e-6);
}

TEST_CASE("tilde models break translation equivariance inside the support") {
  std::mt19937_64 gen(23);
  for (Family f : {Family::convcnp, Family::tetnp, Family::pttetnp}) {
    CAPTURE(to_string(f));
    const auto m = make_model(small_config(f, true));
    const auto d = make_data(gen, 10, 12);
    const auto a = m->forward(d.xc, d.yc, d.xt);
    const auto b = m->forward(shifted(d.xc, 1.0), d.yc, shifted(d.xt, 1.0));
    CHECK(prediction_diff(a, b) > 1e-6);
  }
}

TEST_CASE("tilde models collapse to their strict counterpart") {
  std::mt19937_64 gen(24);
  const std::vector<std::pair<Family, Family>> pairs{{Family::convcnp, Family::convcnp},
                                                     {Family::equivcnp, Family::equivcnp},
                                                     {Family::relaxedconvcnp, Family::convcnp},
                                                     {Family::tetnp, Family::tetnp},
                                                     {Family::pttetnp, Family::pttetnp}};
  for (const auto& [tf, sf] : pairs) {
    CAPTURE(to_string(tf));
    const auto tilde = make_model(small_config(tf, true));
    const auto strict = make_model(small_config(sf, false));
    copy_shared(*tilde, *strict);
    for (int trial = 0; trial < 4; ++trial) {
      const auto d = make_data(gen, 1 + trial * 4, 9);
      const auto reference = strict->forward(d.xc, d.yc, d.xt);
      CHECK(bitwise_equal(tilde->forward(d.xc, d.yc, d.xt, BankMode::off), reference));
    }
    zero_bank(*tilde);
    const auto d = make_data(gen, 6, 9);
    CHECK(bitwise_equal(tilde->forward(d.xc, d.yc, d.xt), strict->forward(d.xc, d.yc, d.xt)));
  }
}

TEST_CASE("bank output vanishes outside its support") {
  Rng rng(3, Stream::init);
  ParamStore store;
  BankConfig cfg;
  cfg.count = 3;
  cfg.features = "raw";
  cfg.support_lo = -1.0;
  cfg.support_hi = 1.0;
  const detail::FixedInputBank bank(store, "bank", cfg, 4, 5, rng);
  CHECK(store.contains("bank.projection"));
  const auto t = bank(Tensor::vector({-3.0, -1.0, 0.0, 1.0, 1.0001, 8.0}));
  REQUIRE(t.shape() == Shape{6, 5});
  for (std::size_t c = 0; c < 5; ++c) {
    CHECK(t[0 * 5 + c] == 0.0);
    CHECK(t[4 * 5 + c] == 0.0);
    CHECK(t[5 * 5 + c] == 0.0);
  }
  double inside = 0.0;
  for (std::size_t i = 5; i < 20; ++i) inside += std::abs(t[i]);
  CHECK(inside > 0.0);

  BankConfig fourier = cfg;
  fourier.features = "fourier";
  ParamStore store2;
  const detail::FixedInputBank fb(store2, "bank", fourier, 4, 5, rng);
  CHECK_FALSE(store2.contains("bank.projection"));
  CHECK(fb(Tensor::vector({13.5})).to_vector() == std::vector<double>(5, 0.0));
  // Fourier features repeat with the period.
  fourier.support_hi = 100.0;
  ParamStore store3;
  Rng rng3(4, Stream::init);
  const detail::FixedInputBank wide(store3, "bank", fourier, 4, 5, rng3);
  CHECK(max_abs_diff(wide(Tensor::vector({-0.5})), wide(Tensor::vector({-0.5 + 14.0}))) < 1e-12);
}

TEST_CASE("relaxed convolution identities") {
  std::mt19937_64 gen(30);
  const auto signal = testutil::random_param({3, 20}, gen);
  const auto kernel = testutil::random_param({2, 3, 5}, gen);
  // Zero modulation is the plain convolution, bit for bit.
  CHECK(relaxed_conv1d(signal, Tensor::zeros({1, 20}), kernel).to_vector() == conv1d(signal, kernel).to_vector());
  // A constant modulation c scales the kernel by (1 + c).
  const double c = 0.37;
  const auto lhs = relaxed_conv1d(signal, Tensor::full({1, 20}, c), kernel);
  const auto rhs = conv1d(signal, kernel * (1.0 + c));
  CHECK(max_abs_diff(lhs, rhs) < 1e-13);
  CHECK(gradcheck([](auto& v) { return project(relaxed_conv1d(v[0], v[1], v[2])); },
                  {signal, testutil::random_param({1, 20}, gen), kernel}) < 1e-6);
}

TEST_CASE("relaxed convolution is equivariant when the modulation moves with the input") {
  // Signals supported away from the borders so a roll equals a translation.
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::size_t len = 40, shift = 7;
  std::vector<double> s(2 * len, 0.0), w(len, 0.0);
  for (std::size_t i = 10; i < 20; ++i) {
    s[i] = u(gen);
    s[len + i] = u(gen);
    w[i - 2] = u(gen);
  }
  auto roll = [&](const std::vector<double>& v, std::size_t rows) {
    std::vector<double> out(v.size(), 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i + shift < len; ++i) out[r * len + i + shift] = v[r * len + i];
    return out;
  };
  const auto kernel = testutil::random_param({1, 2, 5}, gen);
  const auto base = relaxed_conv1d(Tensor::from({2, len}, s), Tensor::from({1, len}, w), kernel).to_vector();
  const auto moved = relaxed_conv1d(Tensor::from({2, len}, roll(s, 2)), Tensor::from({1, len}, roll(w, 1)), kernel);
  CHECK(max_abs_diff(moved, Tensor::from({1, len}, roll(base, 1))) < 1e-14);
  // Keeping the modulation fixed breaks it.
  const auto fixed = relaxed_conv1d(Tensor::from({2, len}, roll(s, 2)), Tensor::from({1, len}, w), kernel);
  CHECK(max_abs_diff(fixed, Tensor::from({1, len}, roll(base, 1))) > 1e-3);
}

TEST_CASE("translation-equivariant attention") {
  Rng rng(8, Stream::init);
  ParamStore store;
  const MultiHeadAttention attn(store, "attn", {6, 2, 3, 5}, rng);
  std::mt19937_64 gen(9);
  const auto q = testutil::random_param({4, 6}, gen);
  const auto k = testutil::random_param({5, 6}, gen);
  const std::vector<double> xq{0.1, -0.4, 1.3, 2.0}, xk{0.0, 0.5, -1.0, 1.7, 0.9};
  const auto base = attn(q, k, Tensor::vector(xq), Tensor::vector(xk));
  SUBCASE("shifting every position leaves the output unchanged") {
    for (double delta : {-5.0, -1.3, 2.7}) {
      const auto moved = attn(q, k, Tensor::vector(shifted(xq, delta)), Tensor::vector(shifted(xk, delta)));
      CHECK(max_abs_diff(base, moved) < 1e-12);
    }
  }
  SUBCASE("permuting keys together with their positions") {
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    std::vector<double> kp, xp;
    for (std::size_t i : perm) {
      for (std::size_t c = 0; c < 6; ++c) kp.push_back(k[i * 6 + c]);
      xp.push_back(xk[i]);
    }
    CHECK(max_abs_diff(base, attn(q, Tensor::from({5, 6}, kp), Tensor::vector(xq), Tensor::vector(xp))) < 1e-12);
  }
  SUBCASE("positions matter") {
    const auto other = attn(q, k, Tensor::vector(xq), Tensor::vector(shifted(xk, 0.5)));
    CHECK(max_abs_diff(base, other) > 1e-6);
  }
  SUBCASE("one key gives the same output for every query") {
    const auto one = attn(q, slice(k, 0, 2, 1), Tensor::vector(xq), Tensor::vector({0.3})).to_vector();
    for (std::size_t r = 1; r < 4; ++r)
      for (std::size_t c = 0; c < 6; ++c) CHECK(one[r * 6 + c] == doctest::Approx(one[c]).epsilon(1e-12));
  }
  SUBCASE("no keys gives zeros") {
    const auto none = attn(q, Tensor::zeros({0, 6}), Tensor::vector(xq), Tensor::zeros({0}));
    REQUIRE(none.shape() == Shape{4, 6});
    for (double v : none.data()) CHECK(v == 0.0);
  }
  SUBCASE("gradients") {
    auto f = [&](auto& v) {
      return project(attn(v[0], v[1], Tensor::vector(xq), Tensor::vector(xk)));
    };
    CHECK(gradcheck(f, {q, k}) < 1e-6);
  }
}

TEST_CASE("predictions are invariant to the order of the context") {
  std::mt19937_64 gen(40);
  for (Family f : {Family::convcnp, Family::equivcnp, Family::relaxedconvcnp, Family::tetnp,
                   Family::pttetnp, Family::tnp}) {
    for (bool tilde : {false, true}) {
      if (f == Family::tnp && tilde) continue;
      CAPTURE(to_string(f));
      const auto m = make_model(small_config(f, tilde));
      const auto d = make_data(gen, 11, 8);
      std::vector<std::size_t> idx(11);
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      std::shuffle(idx.begin(), idx.end(), gen);
      Data p = d;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        p.xc[i] = d.xc[idx[i]];
        p.yc[i] = d.yc[idx[i]];
      }
      CHECK(prediction_diff(m->forward(d.xc, d.yc, d.xt), m->forward(p.xc, p.yc, p.xt)) <= 1e-10);
    }
  }
}

TEST_CASE("pseudo-token model never forms context-by-context tensors") {
  auto cfg = small_config(Family::pttetnp, false);
  const auto m = make_model(cfg);
  std::mt19937_64 gen(41);
  const auto d = make_data(gen, 37, 23);
  const auto tape = record_tape(gaussian_loglik(m->forward(d.xc, d.yc, d.xt), std::vector<double>(23, 0.0)));
  for (const auto& e : tape.entries) {
    std::size_t big = 0;
    for (std::size_t s : e.shape)
      if (s == 37) ++big;
    CHECK(big <= 1);
  }
}

TEST_CASE("micro-model gradients match finite differences") {
  // Every parameter group of each micro model, relative tolerance 1e-4.
  std::mt19937_64 gen(50);
  const auto d = make_data(gen, 5, 4);
  std::vector<double> yt{0.3, -0.2, 0.5, 0.1};
  for (Family f : {Family::convcnp, Family::equivcnp, Family::relaxedconvcnp, Family::tetnp,
                   Family::pttetnp, Family::tnp}) {
    for (bool tilde : {false, true}) {
      if (f == Family::tnp && tilde) continue;
      CAPTURE(to_string(f));
      CAPTURE(tilde);
      auto cfg = small_config(f, tilde);
      cfg.channels = 3;
      cfg.conv_layers = 2;
      cfg.kernel_size = 3;
      cfg.grid_density = 4;
      cfg.dz = 8;
      cfg.layers = 2;
      cfg.pseudo_tokens = 3;
      const auto m = make_model(cfg);
      std::vector<Tensor> params;
      for (auto& [name, t] : m->params().items()) params.push_back(t);
      auto loss = [&](const std::vector<Tensor>&) {
        return gaussian_loglik(m->forward(d.xc, d.yc, d.xt), yt);
      };
      CHECK(gradcheck(loss, params) < 1e-4);
    }
  }
}
