#pragma once

// Test-only quadrature oracles, independent of the library's inference path.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace streamrec::testing {

// Trapezoid rule over [lo, hi] with n panels.
inline double trapezoid(const std::function<double(double)>& f, double lo,
                        double hi, std::size_t n) {
  const double h = (hi - lo) / double(n);
  double s = 0.5 * (f(lo) + f(hi));
  for (std::size_t i = 1; i < n; ++i) s += f(lo + double(i) * h);
  return s * h;
}

struct GaussHermite {
  std::vector<double> nodes;    // roots of the order-n Hermite polynomial
  std::vector<double> weights;  // sum to sqrt(pi)
};

// Orthonormal (physicists') Hermite value p_n(x) and all lower orders.
inline double hermite_orthonormal(std::size_t n, double x,
                                  std::vector<double>* all = nullptr) {
  double pm1 = 0.0;
  double p = 0.7511255444649425;  // pi^{-1/4}
  if (all) all->assign(1, p);
  for (std::size_t k = 0; k < n; ++k) {
    const double next =
        x * std::sqrt(2.0 / double(k + 1)) * p -
        std::sqrt(double(k) / double(k + 1)) * pm1;
    pm1 = p;
    p = next;
    if (all) all->push_back(p);
  }
  return p;
}

// Nodes by bisection + Newton on the orthonormal recurrence; weights are the
// Christoffel numbers 1 / sum_{k<n} p_k(x_i)^2.
inline GaussHermite gauss_hermite(std::size_t n) {
  if (n < 2) throw std::invalid_argument("gauss_hermite: n >= 2");
  const double bound = std::sqrt(2.0 * double(n) + 1.0) + 2.0;
  const std::size_t grid = 40 * n;
  GaussHermite out;
  double prev_x = -bound;
  double prev_v = hermite_orthonormal(n, prev_x);
  for (std::size_t i = 1; i <= grid; ++i) {
    const double x = -bound + 2.0 * bound * double(i) / double(grid);
    const double v = hermite_orthonormal(n, x);
    if (prev_v == 0.0 || v * prev_v < 0.0) {
      double lo = prev_x, hi = x;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double vm = hermite_orthonormal(n, mid);
        if (vm == 0.0) { lo = hi = mid; break; }
        if (vm * hermite_orthonormal(n, lo) < 0.0) hi = mid;
        else lo = mid;
      }
      double root = 0.5 * (lo + hi);
      // Newton polish: p_n'(x) = sqrt(2n) p_{n-1}(x).
      for (int it = 0; it < 5; ++it) {
        std::vector<double> all;
        const double v0 = hermite_orthonormal(n, root, &all);
        const double d = std::sqrt(2.0 * double(n)) * all[n - 1];
        if (d == 0.0) break;
        root -= v0 / d;
      }
      std::vector<double> all;
      hermite_orthonormal(n, root, &all);
      double chr = 0.0;
      for (std::size_t k = 0; k < n; ++k) chr += all[k] * all[k];
      out.nodes.push_back(root);
      out.weights.push_back(1.0 / chr);
    }
    prev_x = x;
    prev_v = v;
  }
  if (out.nodes.size() != n)
    throw std::runtime_error("gauss_hermite: expected " + std::to_string(n) +
                             " roots, found " + std::to_string(out.nodes.size()));
  return out;
}

// E_{t ~ N(mu, var)}[f(t)] via Gauss-Hermite.
inline double gh_gaussian_expect(const GaussHermite& gh,
                                 const std::function<double(double)>& f,
                                 double mu, double var) {
  const double inv_sqrt_pi = 0.5641895835477563;
  const double s = std::sqrt(2.0 * var);
  double acc = 0.0;
  for (std::size_t i = 0; i < gh.nodes.size(); ++i)
    acc += gh.weights[i] * f(mu + s * gh.nodes[i]);
  return acc * inv_sqrt_pi;
}

}  // namespace streamrec::testing
