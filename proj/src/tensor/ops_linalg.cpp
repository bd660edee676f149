#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "internal.hpp"

namespace aenp {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

}  // namespace

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  auto node = detail::make_result("reshape", std::move(shape), a.to_vector(), {&a});
  if (detail::recording(node)) {
    node->backward = [](detail::Node& self) {
      auto& g = self.parents[0]->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    };
  }
  return Tensor(node);
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm) {
  const Shape& s = a.shape();
  const std::size_t nd = s.size();
  if (perm.size() != nd) throw ShapeError("permute: rank mismatch");
  std::vector<bool> seen(nd, false);
  for (auto p : perm) {
    if (p >= nd || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape os(nd);
  for (std::size_t i = 0; i < nd; ++i) os[i] = s[perm[i]];
  const auto in_st = strides_of(s);
  // source stride for each output axis
  std::vector<std::size_t> src(nd);
  for (std::size_t i = 0; i < nd; ++i) src[i] = in_st[perm[i]];
  const std::size_t n = a.numel();
  std::vector<std::size_t> map(n);
  {
    std::vector<std::size_t> idx(nd, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) {
      map[i] = off;
      for (std::size_t ax = nd; ax-- > 0;) {
        ++idx[ax];
        off += src[ax];
        if (idx[ax] < os[ax]) break;
        off -= src[ax] * idx[ax];
        idx[ax] = 0;
      }
    }
  }
  std::vector<double> out(n);
  const auto x = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = x[map[i]];
  auto node = detail::make_result("permute", os, std::move(out), {&a});
  if (detail::recording(node)) {
    node->backward = [map = std::move(map)](detail::Node& self) {
      auto& g = self.parents[0]->grad;
      for (std::size_t i = 0; i < map.size(); ++i) g[map[i]] += self.grad[i];
    };
  }
  return Tensor(node);
}

Tensor transpose(const Tensor& a) {
  const std::size_t nd = a.dim();
  if (nd < 2) throw ShapeError("transpose needs rank >= 2");
  std::vector<std::size_t> perm(nd);
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[nd - 1], perm[nd - 2]);
  return permute(a, perm);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != s0[i])
        throw ShapeError("concat: " + shape_str(s) + " vs " + shape_str(s0));
    total += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Shape os = s0;
  os[axis] = total;
  std::vector<double> out(outer * total * inner);
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.shape()[axis];
    const auto x = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(x.begin() + o * len * inner, len * inner,
                  out.begin() + (o * total + offset) * inner);
    offset += len;
  }
  const bool record = grad_enabled() && detail::any_requires_grad(parts);
  std::vector<std::shared_ptr<detail::Node>> parents;
  if (record)
    for (const auto& p : parts) parents.push_back(p.node());
  auto node = detail::make_result("concat", os, std::move(out), parents, record);
  if (record) {
    node->backward = [outer, inner, total, offsets](detail::Node& self) {
      for (std::size_t k = 0; k < self.parents.size(); ++k) {
        auto& p = *self.parents[k];
        if (!p.requires_grad) continue;
        const std::size_t len = p.data.size() / (outer * inner);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < len * inner; ++j)
            p.grad[o * len * inner + j] += self.grad[(o * total + offsets[k]) * inner + j];
      }
    };
  }
  return Tensor(node);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = a.shape();
  if (axis >= s.size() || start + length > s[axis]) {
    throw ShapeError("slice out of range on " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Shape os = s;
  os[axis] = length;
  std::vector<double> out(outer * length * inner);
  const auto x = a.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.begin() + (o * n + start) * inner, length * inner,
                out.begin() + o * length * inner);
  auto node = detail::make_result("slice", os, std::move(out), {&a});
  if (detail::recording(node)) {
    node->backward = [outer, inner, n, start, length](detail::Node& self) {
      auto& g = self.parents[0]->grad;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < length * inner; ++j)
          g[(o * n + start) * inner + j] += self.grad[o * length * inner + j];
    };
  }
  return Tensor(node);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool batched = sa.size() == 3;
  if (!((sa.size() == 2 && sb.size() == 2) || (sa.size() == 3 && sb.size() == 3))) {
    throw ShapeError("matmul: unsupported ranks " + shape_str(sa) + " x " + shape_str(sb));
  }
  const std::size_t batch = batched ? sa[0] : 1;
  if (batched && sb[0] != batch) throw ShapeError("matmul: batch mismatch");
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t k2 = sb[sb.size() - 2], n = sb.back();
  if (k != k2) {
    throw ShapeError("matmul: inner dims differ " + shape_str(sa) + " x " + shape_str(sb));
  }
  std::vector<double> out(batch * m * n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t t = 0; t < batch; ++t) {
    MMap c(out.data() + t * m * n, m, n);
    c.noalias() = CMap(pa + t * m * k, m, k) * CMap(pb + t * k * n, k, n);
  }
  Shape os = batched ? Shape{batch, m, n} : Shape{m, n};
  auto node = detail::make_result("matmul", os, std::move(out), {&a, &b});
  if (detail::recording(node)) {
    node->backward = [batch, m, k, n](detail::Node& self) {
      auto& na = *self.parents[0];
      auto& nb = *self.parents[1];
      for (std::size_t t = 0; t < batch; ++t) {
        CMap g(self.grad.data() + t * m * n, m, n);
        if (na.requires_grad) {
          MMap ga(na.grad.data() + t * m * k, m, k);
          ga.noalias() += g * CMap(nb.data.data() + t * k * n, k, n).transpose();
        }
        if (nb.requires_grad) {
          MMap gb(nb.grad.data() + t * k * n, k, n);
          gb.noalias() += CMap(na.data.data() + t * m * k, m, k).transpose() * g;
        }
      }
    };
  }
  return Tensor(node);
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.dim() != 2 || weight.dim() != 2 || bias.dim() != 1 || x.size(1) != weight.size(0) ||
      bias.size(0) != weight.size(1)) {
    throw ShapeError("linear: " + shape_str(x.shape()) + " x " + shape_str(weight.shape()) +
                     " + " + shape_str(bias.shape()));
  }
  const std::size_t n = x.size(0), in = weight.size(0), out = weight.size(1);
  std::vector<double> y(n * out);
  MMap ym(y.data(), n, out);
  ym.noalias() = CMap(x.data().data(), n, in) * CMap(weight.data().data(), in, out);
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), out);
  auto node = detail::make_result("linear", {n, out}, std::move(y), {&x, &weight, &bias});
  if (detail::recording(node)) {
    node->backward = [n, in, out](detail::Node& self) {
      auto& nx = *self.parents[0];
      auto& nw = *self.parents[1];
      auto& nb = *self.parents[2];
      CMap g(self.grad.data(), n, out);
      if (nx.requires_grad) {
        MMap(nx.grad.data(), n, in).noalias() += g * CMap(nw.data.data(), in, out).transpose();
      }
      if (nw.requires_grad) {
        MMap(nw.grad.data(), in, out).noalias() += CMap(nx.data.data(), n, in).transpose() * g;
      }
      if (nb.requires_grad) {
        Eigen::Map<Eigen::RowVectorXd>(nb.grad.data(), out) += g.colwise().sum();
      }
    };
  }
  return Tensor(node);
}

Tensor softmax(const Tensor& a) {
  if (a.dim() == 0) throw ShapeError("softmax of scalar");
  const std::size_t n = a.shape().back();
  const std::size_t rows = n == 0 ? 0 : a.numel() / n;
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    double* yr = out.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yr[j] /= s;
  }
  auto node = detail::make_result("softmax", a.shape(), std::move(out), {&a});
  if (detail::recording(node)) {
    node->backward = [rows, n](detail::Node& self) {
      auto& g = self.parents[0]->grad;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.data.data() + r * n;
        const double* gy = self.grad.data() + r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
        for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (gy[j] - dot);
      }
    };
  }
  return Tensor(node);
}

Tensor layer_norm(const Tensor& a, double eps) {
  if (a.dim() == 0) throw ShapeError("layer_norm of scalar");
  const std::size_t n = a.shape().back();
  if (n == 0) throw ShapeError("layer_norm over empty axis");
  const std::size_t rows = a.numel() / n;
  std::vector<double> out(a.numel());
  std::vector<double> inv_std(rows);
  const auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = (xr[j] - mu) * inv_std[r];
  }
  auto node = detail::make_result("layer_norm", a.shape(), std::move(out), {&a});
  if (detail::recording(node)) {
    node->backward = [rows, n, inv_std = std::move(inv_std)](detail::Node& self) {
      auto& g = self.parents[0]->grad;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.data.data() + r * n;
        const double* gy = self.grad.data() + r * n;
        double mg = 0.0, mgy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          mg += gy[j];
          mgy += gy[j] * y[j];
        }
        mg /= static_cast<double>(n);
        mgy /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j)
          g[r * n + j] += inv_std[r] * (gy[j] - mg - y[j] * mgy);
      }
    };
  }
  return Tensor(node);
}

namespace {
bool try_cholesky(const std::vector<double>& a, std::size_t n, double jitter,
                  std::vector<double>& l) {
  l.assign(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j] + jitter;
    for (std::size_t k = 0; k < j; ++k) d -= l[j * n + k] * l[j * n + k];
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    l[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
      l[i * n + j] = s / ljj;
    }
  }
  return true;
}
}  // namespace

double cholesky_inplace(std::vector<double>& a, std::size_t n) {
  if (a.size() != n * n) throw ShapeError("cholesky: buffer is not n x n");
  double mean_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_diag += a[i * n + i];
  mean_diag = n ? mean_diag / static_cast<double>(n) : 0.0;
  const double ladder[] = {0.0, 1e-8, 1e-6, 1e-4};
  std::vector<double> l;
  std::ostringstream tried;
  for (double rel : ladder) {
    const double jitter = rel * std::abs(mean_diag);
    if (try_cholesky(a, n, jitter, l)) {
      a = std::move(l);
      return jitter;
    }
    tried << (tried.tellp() > 0 ? ", " : "") << jitter;
  }
  throw NumericalError("cholesky: matrix not positive definite; tried jitter {" + tried.str() +
                       "}");
}

CholeskyResult cholesky(const Tensor& a) {
  if (a.dim() != 2 || a.size(0) != a.size(1)) {
    throw ShapeError("cholesky: expected a square matrix, got " + shape_str(a.shape()));
  }
  const std::size_t n = a.size(0);
  std::vector<double> buf = a.to_vector();
  double scale = 0.0;
  for (double v : buf) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(buf[i * n + j] - buf[j * n + i]) > 1e-12 * std::max(scale, 1.0))
        throw ShapeError("cholesky: matrix is not symmetric");
  const double jitter = cholesky_inplace(buf, n);
  return {Tensor::from({n, n}, std::move(buf)), jitter};
}

}  // namespace aenp
