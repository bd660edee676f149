#include <Eigen/Dense>

#include "internal.hpp"

namespace aenp {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

// cols[(c*K + k), i] = x[c, i + k - pad], zero outside the signal.
void im2col(const double* x, std::size_t cin, std::size_t len, std::size_t k_size,
            std::vector<double>& cols) {
  const auto pad = static_cast<std::ptrdiff_t>(k_size / 2);
  const auto n = static_cast<std::ptrdiff_t>(len);
  cols.assign(cin * k_size * len, 0.0);
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t k = 0; k < k_size; ++k) {
      double* row = cols.data() + (c * k_size + k) * len;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, n - shift);
      for (std::ptrdiff_t i = lo; i < hi; ++i) row[i] = x[c * len + i + shift];
    }
  }
}

void col2im_add(const double* cols, std::size_t cin, std::size_t len, std::size_t k_size,
                double* gx) {
  const auto pad = static_cast<std::ptrdiff_t>(k_size / 2);
  const auto n = static_cast<std::ptrdiff_t>(len);
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t k = 0; k < k_size; ++k) {
      const double* row = cols + (c * k_size + k) * len;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, n - shift);
      for (std::ptrdiff_t i = lo; i < hi; ++i) gx[c * len + i + shift] += row[i];
    }
  }
}

}  // namespace

Tensor conv1d(const Tensor& signal, const Tensor& kernel) {
  const Shape& ss = signal.shape();
  const Shape& ks = kernel.shape();
  if (ss.size() != 2 || ks.size() != 3) {
    throw ShapeError("conv1d: expected signal [C_in, L] and kernel [C_out, C_in, K], got " +
                     shape_str(ss) + " and " + shape_str(ks));
  }
  if (ks[1] != ss[0]) throw ShapeError("conv1d: channel mismatch");
  if (ks[2] % 2 == 0) throw ShapeError("conv1d: kernel size must be odd");
  const std::size_t cin = ss[0], len = ss[1], cout = ks[0], k_size = ks[2];
  std::vector<double> cols;
  im2col(signal.data().data(), cin, len, k_size, cols);
  std::vector<double> out(cout * len);
  MMap(out.data(), cout, len).noalias() =
      CMap(kernel.data().data(), cout, cin * k_size) * CMap(cols.data(), cin * k_size, len);
  auto node = detail::make_result("conv1d", {cout, len}, std::move(out), {&signal, &kernel});
  if (detail::recording(node)) {
    node->backward = [cin, len, cout, k_size, cols = std::move(cols)](detail::Node& self) {
      auto& ns = *self.parents[0];
      auto& nk = *self.parents[1];
      CMap g(self.grad.data(), cout, len);
      if (nk.requires_grad) {
        MMap(nk.grad.data(), cout, cin * k_size).noalias() +=
            g * CMap(cols.data(), cin * k_size, len).transpose();
      }
      if (ns.requires_grad) {
        RowMat gcols = CMap(nk.data.data(), cout, cin * k_size).transpose() * g;
        col2im_add(gcols.data(), cin, len, k_size, ns.grad.data());
      }
    };
  }
  return Tensor(node);
}

Tensor symmetric_kernel(const Tensor& half_kernel) {
  const Shape& hs = half_kernel.shape();
  if (hs.size() != 3 || hs[2] == 0) {
    throw ShapeError("symmetric_kernel: expected [C_out, C_in, H], got " + shape_str(hs));
  }
  const std::size_t rows = hs[0] * hs[1], h = hs[2], k_size = 2 * h - 1;
  std::vector<std::size_t> src(k_size);
  for (std::size_t j = 0; j < k_size; ++j) {
    src[j] = j >= h - 1 ? j - (h - 1) : (h - 1) - j;
  }
  std::vector<double> out(rows * k_size);
  const auto x = half_kernel.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < k_size; ++j) out[r * k_size + j] = x[r * h + src[j]];
  auto node =
      detail::make_result("symmetric_kernel", {hs[0], hs[1], k_size}, std::move(out), {&half_kernel});
  if (detail::recording(node)) {
    node->backward = [rows, h, k_size, src = std::move(src)](detail::Node& self) {
      auto& g = self.parents[0]->grad;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < k_size; ++j) g[r * h + src[j]] += self.grad[r * k_size + j];
    };
  }
  return Tensor(node);
}

Tensor symmetric_conv1d(const Tensor& signal, const Tensor& half_kernel) {
  return conv1d(signal, symmetric_kernel(half_kernel));
}

}  // namespace aenp
