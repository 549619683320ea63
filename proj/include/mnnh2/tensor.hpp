#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "mnnh2/common.hpp"

namespace mnnh2 {

/// Dense multi-dimensional array, column-major (first index fastest).
/// Reshapes reinterpret the shape without touching element order, so a
/// column-major reshape is free. All layer data flows through this type.
template <class Real>
struct TensorT {
  std::vector<std::int64_t> shape;
  std::vector<Real> data;

  TensorT() = default;
  explicit TensorT(std::vector<std::int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), Real(0));
  }
  TensorT(std::vector<std::int64_t> s, std::vector<Real> d) : shape(std::move(s)), data(std::move(d)) {
    check(numel_of(shape) == static_cast<std::int64_t>(data.size()),
          "tensor: shape/data size mismatch");
  }

  static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (auto e : s) {
      check(e > 0, "tensor: extents must be positive");
      n *= e;
    }
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  Real& at(std::int64_t i0, std::int64_t i1) { return data[i0 + shape[0] * i1]; }
  Real at(std::int64_t i0, std::int64_t i1) const { return data[i0 + shape[0] * i1]; }
  Real& at(std::int64_t i0, std::int64_t i1, std::int64_t i2) {
    return data[i0 + shape[0] * (i1 + shape[1] * i2)];
  }
  Real at(std::int64_t i0, std::int64_t i1, std::int64_t i2) const {
    return data[i0 + shape[0] * (i1 + shape[1] * i2)];
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ")";
    return os.str();
  }
};

using Tensor = TensorT<double>;

/// Column-major reshape to an arbitrary shape: element order is untouched.
template <class Real>
TensorT<Real> reshape(const TensorT<Real>& t, std::vector<std::int64_t> new_shape) {
  const std::int64_t n = TensorT<Real>::numel_of(new_shape);
  if (n != t.numel())
    throw shape_error("reshape: " + t.shape_str() + " has " + std::to_string(t.numel()) +
                      " elements, target needs " + std::to_string(n));
  return TensorT<Real>(std::move(new_shape), t.data);
}

template <class Real>
TensorT<Real> reshape(const TensorT<Real>& t, std::int64_t n1, std::int64_t n2) {
  return reshape(t, std::vector<std::int64_t>{n1, n2});
}

/// Inverse pair of the 2D block reshapes: reshape_m_2d turns per-position
/// fibers of length a^2*r into r-channel a-by-a spatial blocks; reshape_t_2d
/// undoes it. Fibers are read column-major as r x a x a, and block (j,k) of
/// the input lands at spatial offset (a*j, a*k) of the output.
template <class Real>
TensorT<Real> reshape_m_2d(const TensorT<Real>& t, std::int64_t a, std::int64_t r, std::int64_t n1,
                           std::int64_t n2) {
  check(a >= 1 && r >= 1 && n1 >= 1 && n2 >= 1, "reshape_m_2d: parameters must be positive");
  const std::vector<std::int64_t> want{a * a * r, n1, n2};
  if (t.shape != want)
    throw shape_error("reshape_m_2d: expected shape (" + std::to_string(a * a * r) + "x" +
                      std::to_string(n1) + "x" + std::to_string(n2) + "), got " + t.shape_str());
  TensorT<Real> out({r, a * n1, a * n2});
  const std::int64_t fiber = a * a * r;
  for (std::int64_t k = 0; k < n2; ++k)
    for (std::int64_t j = 0; j < n1; ++j) {
      const Real* src = t.data.data() + fiber * (j + n1 * k);
      for (std::int64_t q = 0; q < a; ++q)
        for (std::int64_t p = 0; p < a; ++p)
          for (std::int64_t c = 0; c < r; ++c)
            out.at(c, a * j + p, a * k + q) = src[c + r * (p + a * q)];
    }
  return out;
}

template <class Real>
TensorT<Real> reshape_t_2d(const TensorT<Real>& t, std::int64_t a, std::int64_t r, std::int64_t n1,
                           std::int64_t n2) {
  check(a >= 1 && r >= 1 && n1 >= 1 && n2 >= 1, "reshape_t_2d: parameters must be positive");
  const std::vector<std::int64_t> want{r, a * n1, a * n2};
  if (t.shape != want)
    throw shape_error("reshape_t_2d: expected shape (" + std::to_string(r) + "x" +
                      std::to_string(a * n1) + "x" + std::to_string(a * n2) + "), got " +
                      t.shape_str());
  TensorT<Real> out({a * a * r, n1, n2});
  const std::int64_t fiber = a * a * r;
  for (std::int64_t k = 0; k < n2; ++k)
    for (std::int64_t j = 0; j < n1; ++j) {
      Real* dst = out.data.data() + fiber * (j + n1 * k);
      for (std::int64_t q = 0; q < a; ++q)
        for (std::int64_t p = 0; p < a; ++p)
          for (std::int64_t c = 0; c < r; ++c)
            dst[c + r * (p + a * q)] = t.at(c, a * j + p, a * k + q);
    }
  return out;
}

enum class PadMode { periodic, zero };

/// Pad the spatial axes (all axes past the leading channel axis) by `lo`/`hi`
/// entries per side. Periodic wraps cyclically, zero fills zeros.
template <class Real>
TensorT<Real> pad(const TensorT<Real>& t, PadMode mode, std::int64_t lo, std::int64_t hi) {
  check(lo >= 0 && hi >= 0, "pad: amounts must be non-negative");
  check(t.rank() == 2 || t.rank() == 3, "pad: expected channel x spatial tensor");
  if (t.rank() == 2) {
    const std::int64_t a = t.shape[0], nx = t.shape[1];
    TensorT<Real> out({a, nx + lo + hi});
    for (std::int64_t j = 0; j < nx + lo + hi; ++j) {
      const std::int64_t src = j - lo;
      if (mode == PadMode::periodic) {
        const std::int64_t w = ((src % nx) + nx) % nx;
        for (std::int64_t c = 0; c < a; ++c) out.at(c, j) = t.at(c, w);
      } else if (src >= 0 && src < nx) {
        for (std::int64_t c = 0; c < a; ++c) out.at(c, j) = t.at(c, src);
      }
    }
    return out;
  }
  const std::int64_t a = t.shape[0], n1 = t.shape[1], n2 = t.shape[2];
  TensorT<Real> out({a, n1 + lo + hi, n2 + lo + hi});
  for (std::int64_t j2 = 0; j2 < n2 + lo + hi; ++j2)
    for (std::int64_t j1 = 0; j1 < n1 + lo + hi; ++j1) {
      const std::int64_t s1 = j1 - lo, s2 = j2 - lo;
      if (mode == PadMode::periodic) {
        const std::int64_t w1 = ((s1 % n1) + n1) % n1;
        const std::int64_t w2 = ((s2 % n2) + n2) % n2;
        for (std::int64_t c = 0; c < a; ++c) out.at(c, j1, j2) = t.at(c, w1, w2);
      } else if (s1 >= 0 && s1 < n1 && s2 >= 0 && s2 < n2) {
        for (std::int64_t c = 0; c < a; ++c) out.at(c, j1, j2) = t.at(c, s1, s2);
      }
    }
  return out;
}

/// Cyclic shift along a spatial axis: out[..., i, ...] = in[..., i - s, ...].
template <class Real>
TensorT<Real> cyclic_shift(const TensorT<Real>& t, int axis, std::int64_t s) {
  check(axis >= 0 && axis < t.rank(), "cyclic_shift: axis out of range");
  const std::int64_t n = t.shape[axis];
  s = ((s % n) + n) % n;
  if (s == 0) return t;
  TensorT<Real> out(t.shape);
  std::int64_t inner = 1, outer = 1;
  for (int k = 0; k < axis; ++k) inner *= t.shape[k];
  for (int k = axis + 1; k < t.rank(); ++k) outer *= t.shape[k];
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t src = (i - s + n) % n;
      for (std::int64_t c = 0; c < inner; ++c)
        out.data[c + inner * (i + n * o)] = t.data[c + inner * (src + n * o)];
    }
  return out;
}

}  // namespace mnnh2
