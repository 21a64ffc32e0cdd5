#pragma once

// B-spline bases on clamped uniform knot vectors and the KAN edge function
//
//   phi(x) = w * silu(x) + s * sum_r c_r B_{k,r}(clamp(x))
//
// `order` is the polynomial degree k: k = 0 gives indicators, k = 3 cubic pieces.

#include <algorithm>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "pkan/autodiff.hpp"
#include "pkan/error.hpp"

namespace pkan {

class SplineSpec {
 public:
  SplineSpec() : SplineSpec(3, 8, -3.0, 3.0) {}

  SplineSpec(int order, std::size_t num_basis, double grid_min, double grid_max)
      : order_(order), num_basis_(num_basis), grid_min_(grid_min), grid_max_(grid_max) {
    if (order < 0) throw InvalidArgument("SplineSpec: order must be non-negative");
    if (!(grid_min < grid_max)) throw InvalidArgument("SplineSpec: grid_min must be below grid_max");
    if (num_basis < static_cast<std::size_t>(order) + 1) {
      throw InvalidArgument("SplineSpec: num_basis must be at least order + 1");
    }
    const std::size_t k = static_cast<std::size_t>(order);
    const std::size_t intervals = num_basis - k;
    knots_.assign(num_basis + k + 1, grid_min);
    for (std::size_t j = 1; j < intervals; ++j) {
      knots_[k + j] = grid_min + (grid_max - grid_min) * static_cast<double>(j) / static_cast<double>(intervals);
    }
    std::fill(knots_.end() - static_cast<std::ptrdiff_t>(k + 1), knots_.end(), grid_max);
  }

  int order() const noexcept { return order_; }
  std::size_t degree() const noexcept { return static_cast<std::size_t>(order_); }
  std::size_t num_basis() const noexcept { return num_basis_; }
  double grid_min() const noexcept { return grid_min_; }
  double grid_max() const noexcept { return grid_max_; }
  std::span<const double> knots() const noexcept { return knots_; }

  double clamp(double x) const { return std::clamp(x, grid_min_, grid_max_); }

  /// Index m of the knot interval [t_m, t_{m+1}) holding x (x already clamped).
  /// The right end of the grid belongs to the last non-empty interval.
  std::size_t span_index(double x) const {
    const std::size_t k = degree();
    const std::size_t last = num_basis_ - 1;
    if (x >= knots_[last + 1]) return last;
    auto it = std::upper_bound(knots_.begin() + static_cast<std::ptrdiff_t>(k),
                               knots_.begin() + static_cast<std::ptrdiff_t>(last + 1), x);
    return static_cast<std::size_t>(it - knots_.begin()) - 1;
  }

  friend bool operator==(const SplineSpec& a, const SplineSpec& b) {
    return a.order_ == b.order_ && a.num_basis_ == b.num_basis_ && a.grid_min_ == b.grid_min_ &&
           a.grid_max_ == b.grid_max_;
  }

 private:
  int order_;
  std::size_t num_basis_;
  double grid_min_;
  double grid_max_;
  std::vector<double> knots_;
};

namespace detail {

// The p + 1 basis functions of degree p that are nonzero on span m, N_{m-p..m}^p(x).
inline void nonzero_basis(std::span<const double> t, std::size_t m, double x, std::size_t p, double* out) {
  // triangular scheme; left/right hold x - t and t - x distances
  double left[16];
  double right[16];
  out[0] = 1.0;
  for (std::size_t j = 1; j <= p; ++j) {
    left[j] = x - t[m + 1 - j];
    right[j] = t[m + j] - x;
    double saved = 0.0;
    for (std::size_t r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom == 0.0 ? 0.0 : out[r] / denom;
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

// Nonzero values and x-derivatives of the degree-k basis on span m.
inline void basis_and_derivative(const SplineSpec& spec, std::size_t m, double x, double* values, double* derivs) {
  const std::size_t k = spec.degree();
  const auto t = spec.knots();
  nonzero_basis(t, m, x, k, values);
  if (k == 0) {
    derivs[0] = 0.0;
    return;
  }
  double lower[16];
  nonzero_basis(t, m, x, k - 1, lower);  // N_{m-k+1..m}^{k-1}
  const double kk = static_cast<double>(k);
  for (std::size_t j = 0; j <= k; ++j) {
    const std::size_t r = m - k + j;
    // N_r^{k-1} is lower[j-1] when j >= 1; N_{r+1}^{k-1} is lower[j] when j < k
    double d = 0.0;
    if (j >= 1) {
      const double denom = t[r + k] - t[r];
      if (denom > 0.0) d += lower[j - 1] / denom;
    }
    if (j < k) {
      const double denom = t[r + k + 1] - t[r + 1];
      if (denom > 0.0) d -= lower[j] / denom;
    }
    derivs[j] = kk * d;
  }
}

inline void check_spec_degree(const SplineSpec& spec) {
  if (spec.degree() > 14) throw InvalidArgument("SplineSpec: order above 14 is not supported");
}

}  // namespace detail

/// B_{k,1..R}(x) after clamping x to the grid.
inline std::vector<double> basis_eval(const SplineSpec& spec, double x) {
  if (!std::isfinite(x)) throw DomainError("basis_eval", 0, 0, x);
  detail::check_spec_degree(spec);
  const double xc = spec.clamp(x);
  const std::size_t k = spec.degree();
  const std::size_t m = spec.span_index(xc);
  std::vector<double> out(spec.num_basis(), 0.0);
  double local[16];
  detail::nonzero_basis(spec.knots(), m, xc, k, local);
  for (std::size_t j = 0; j <= k; ++j) out[m - k + j] = local[j];
  return out;
}

/// dB_{k,r}/dx at x (clamped to the grid).
inline std::vector<double> basis_derivative(const SplineSpec& spec, double x) {
  detail::check_spec_degree(spec);
  const double xc = spec.clamp(x);
  const std::size_t k = spec.degree();
  const std::size_t m = spec.span_index(xc);
  double values[16];
  double derivs[16];
  detail::basis_and_derivative(spec, m, xc, values, derivs);
  std::vector<double> out(spec.num_basis(), 0.0);
  for (std::size_t j = 0; j <= k; ++j) out[m - k + j] = derivs[j];
  return out;
}

/// Tape op: x of shape S -> basis values of shape S + [R]. Inputs are clamped for evaluation;
/// the derivative is that of the basis at the clamped point, so callers clamp explicitly
/// (via `clamp`) to get zero gradient outside the grid.
inline Var spline_basis(const SplineSpec& spec, const Var& x) {
  detail::check_spec_degree(spec);
  const Tensor& in = x.value();
  const std::size_t n = in.size();
  const std::size_t big_r = spec.num_basis();
  const std::size_t k1 = spec.degree() + 1;
  Shape shape = in.shape();
  shape.push_back(big_r);
  std::vector<double> out(n * big_r, 0.0);
  struct Cache {
    std::vector<std::size_t> first;
    std::vector<double> derivs;
  };
  auto cache = std::make_shared<Cache>();
  cache->first.resize(n);
  cache->derivs.resize(n * k1);
  double values[16];
  for (std::size_t i = 0; i < n; ++i) {
    const double xc = spec.clamp(in[i]);
    const std::size_t m = spec.span_index(xc);
    const std::size_t first = m + 1 - k1;
    detail::basis_and_derivative(spec, m, xc, values, cache->derivs.data() + i * k1);
    std::copy(values, values + k1, out.begin() + static_cast<std::ptrdiff_t>(i * big_r + first));
    cache->first[i] = first;
  }
  return Var::make(Tensor::unchecked(std::move(shape), std::move(out)), {x}, [cache, n, big_r, k1](Node& self) {
    double* gx = self.parents[0]->gradient().data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < n; ++i) {
      const double* gi = g + i * big_r + cache->first[i];
      const double* di = cache->derivs.data() + i * k1;
      double acc = 0.0;
      for (std::size_t j = 0; j < k1; ++j) acc += gi[j] * di[j];
      gx[i] += acc;
    }
  });
}

/// Learnable parameters of one KAN edge.
struct ConnectionParams {
  double w = 0.0;
  double s = 1.0;
  std::vector<double> c;
};

/// The same parameters as tape leaves; `c` has shape [R].
struct ConnectionVars {
  Var w;
  Var s;
  Var c;

  static ConnectionVars from(const ConnectionParams& p) {
    return {Var(Tensor::scalar(p.w)), Var(Tensor::scalar(p.s)), Var(Tensor::vector(p.c))};
  }
};

/// phi on the tape; differentiable in x, w, s and c.
inline Var phi(const SplineSpec& spec, const ConnectionVars& params, const Var& x) {
  if (params.c.size() != spec.num_basis()) {
    throw ShapeError("phi", shape_string(params.c.shape()), "[" + std::to_string(spec.num_basis()) + "]");
  }
  const Var basis = spline_basis(spec, clamp(x, spec.grid_min(), spec.grid_max()));
  return params.w * silu(x) + params.s * sum(params.c * basis);
}

/// phi evaluated directly on doubles.
inline double phi_value(const SplineSpec& spec, const ConnectionParams& params, double x) {
  if (params.c.size() != spec.num_basis()) throw InvalidArgument("phi_value: coefficient count mismatch");
  const auto b = basis_eval(spec, x);
  double spline = 0.0;
  for (std::size_t r = 0; r < b.size(); ++r) spline += params.c[r] * b[r];
  return params.w * x * special::sigmoid(x) + params.s * spline;
}

}  // namespace pkan
