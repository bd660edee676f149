#include <algorithm>
#include <cmath>

#include "internal.hpp"

namespace aenp {

namespace {

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool same = false;
};

std::vector<std::size_t> contiguous_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

Broadcast plan_broadcast(const char* op, const Shape& a, const Shape& b) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t nd = std::max(a.size(), b.size());
  Shape pa(nd, 1), pb(nd, 1);
  std::copy(a.begin(), a.end(), pa.begin() + (nd - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + (nd - b.size()));
  p.out.resize(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
    }
    p.out[i] = pa[i] == 1 ? pb[i] : pa[i];
  }
  auto sa = contiguous_strides(pa), sb = contiguous_strides(pb);
  p.stride_a.resize(nd);
  p.stride_b.resize(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    p.stride_a[i] = pa[i] == 1 ? 0 : sa[i];
    p.stride_b[i] = pb[i] == 1 ? 0 : sb[i];
  }
  return p;
}

template <class F>
void for_each_pair(const Broadcast& p, F&& f) {
  const std::size_t n = numel(p.out);
  if (p.same) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t nd = p.out.size();
  if (nd == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<std::size_t> idx(nd, 0);
  std::size_t ia = 0, ib = 0;
  const std::size_t last = nd - 1;
  for (std::size_t i = 0; i < n;) {
    // innermost axis in a tight loop
    const std::size_t len = p.out[last];
    const std::size_t da = p.stride_a[last], db = p.stride_b[last];
    for (std::size_t j = 0; j < len; ++j, ++i) f(i, ia + j * da, ib + j * db);
    // carry
    std::size_t ax = last;
    while (ax > 0) {
      --ax;
      ++idx[ax];
      ia += p.stride_a[ax];
      ib += p.stride_b[ax];
      if (idx[ax] < p.out[ax]) break;
      ia -= p.stride_a[ax] * idx[ax];
      ib -= p.stride_b[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

// f(x, y) -> z;  da(x, y, z) = dz/dx;  db(x, y, z) = dz/dy
template <class F, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  Broadcast plan = plan_broadcast(op, a.shape(), b.shape());
  std::vector<double> out(numel(plan.out));
  const auto xa = a.data();
  const auto xb = b.data();
  for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = f(xa[ia], xb[ib]);
  });
  auto node = detail::make_result(op, plan.out, std::move(out), {&a, &b});
  if (detail::recording(node)) {
    node->backward = [plan, da, db](detail::Node& self) {
      auto& na = *self.parents[0];
      auto& nb = *self.parents[1];
      const auto& g = self.grad;
      const auto& z = self.data;
      if (na.requires_grad) {
        auto& ga = na.grad;
        for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
          ga[ia] += g[i] * da(na.data[ia], nb.data[ib], z[i]);
        });
      }
      if (nb.requires_grad) {
        auto& gb = nb.grad;
        for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
          gb[ib] += g[i] * db(na.data[ia], nb.data[ib], z[i]);
        });
      }
    };
  }
  return Tensor(node);
}

// f(x) -> y; df(x, y) = dy/dx
template <class F, class DF>
Tensor unary(const char* op, const Tensor& a, F f, DF df) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  auto node = detail::make_result(op, a.shape(), std::move(out), {&a});
  if (detail::recording(node)) {
    node->backward = [df](detail::Node& self) {
      auto& p = *self.parents[0];
      for (std::size_t i = 0; i < self.data.size(); ++i)
        p.grad[i] += self.grad[i] * df(p.data[i], self.data[i]);
    };
  }
  return Tensor(node);
}

double softplus_value(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double z) { return -z / y; });
}

Tensor guarded_div(const Tensor& num, const Tensor& den, double eps) {
  return binary(
      "guarded_div", num, den, [eps](double x, double y) { return x / (y + eps); },
      [eps](double, double y, double) { return 1.0 / (y + eps); },
      [eps](double, double y, double z) { return -z / (y + eps); });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary(
      "mul_scalar", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& a) {
  return unary("softplus", a, softplus_value, [](double x, double) { return sigmoid(x); });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor sin(const Tensor& a) {
  return unary(
      "sin", a, [](double x) { return std::sin(x); },
      [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary(
      "cos", a, [](double x) { return std::cos(x); },
      [](double x, double) { return -std::sin(x); });
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  auto node = detail::make_result("sum", {}, {s}, {&a});
  if (detail::recording(node)) {
    node->backward = [](detail::Node& self) {
      auto& p = *self.parents[0];
      const double g = self.grad[0];
      for (auto& v : p.grad) v += g;
    };
  }
  return Tensor(node);
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum(const Tensor& a, std::size_t axis, bool keepdim) {
  const Shape& s = a.shape();
  if (axis >= s.size()) throw ShapeError("sum: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  std::vector<double> out(outer * inner, 0.0);
  const auto x = a.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += x[(o * n + k) * inner + i];
  Shape os;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i == axis) {
      if (keepdim) os.push_back(1);
    } else {
      os.push_back(s[i]);
    }
  }
  auto node = detail::make_result("sum_axis", os, std::move(out), {&a});
  if (detail::recording(node)) {
    node->backward = [outer, inner, n](detail::Node& self) {
      auto& g = self.parents[0]->grad;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < n; ++k)
          for (std::size_t i = 0; i < inner; ++i)
            g[(o * n + k) * inner + i] += self.grad[o * inner + i];
    };
  }
  return Tensor(node);
}

Tensor mean(const Tensor& a, std::size_t axis, bool keepdim) {
  const std::size_t n = a.size(axis);
  if (n == 0) throw ShapeError("mean over empty axis");
  return mul_scalar(sum(a, axis, keepdim), 1.0 / static_cast<double>(n));
}

}  // namespace aenp
