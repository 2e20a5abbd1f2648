#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ccbo/basis.hpp"

namespace ccbo {

/// One univariate factor of a separable term. Factors that are polynomials carry
/// their degree so the load integral can use an exact Gauss rule; the rest are
/// integrated with a fixed high-order rule split at the listed kinks.
struct Factor1D {
  std::function<double(double)> fn;
  std::optional<int> poly_degree;
  std::vector<double> breakpoints;

  static Factor1D one() { return {[](double) { return 1.0; }, 0, {}}; }
  static Factor1D constant(double c) { return {[c](double) { return c; }, 0, {}}; }
};

/// f(x) = sum_j prod_p factors[j][p](x_p)
struct SeparableForm {
  std::vector<std::vector<Factor1D>> terms;

  std::size_t rank() const { return terms.size(); }

  double eval(std::span<const double> x) const {
    double total = 0.0;
    for (const auto& term : terms) {
      double prod = 1.0;
      for (std::size_t p = 0; p < term.size(); ++p) prod *= term[p].fn(x[p]);
      total += prod;
    }
    return total;
  }
};

struct Objective {
  std::string name;
  std::size_t dim = 0;
  std::function<double(std::span<const double>)> eval;
  std::optional<SeparableForm> separable;
  std::optional<std::vector<double>> minimizer;
  std::optional<double> min_value;

  double operator()(std::span<const double> x) const { return eval(x); }
  double operator()(const Vector& x) const {
    return eval(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  }
};

/// Central-difference gradient. The optimizers never call this; it exists only to
/// drive the plain gradient flow used as a baseline.
inline Vector finite_diff_gradient(const Objective& f, std::span<const double> x, double h) {
  std::vector<double> y(x.begin(), x.end());
  Vector g(static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) {
    y[j] = x[j] + h;
    const double fp = f.eval(y);
    y[j] = x[j] - h;
    const double fm = f.eval(y);
    y[j] = x[j];
    g[static_cast<Eigen::Index>(j)] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline Objective ackley(std::size_t d) {
  if (d == 0) throw std::invalid_argument("ackley: dimension must be >= 1");
  Objective f;
  f.name = "ackley";
  f.dim = d;
  f.eval = [d](std::span<const double> x) {
    double sq = 0.0, cs = 0.0;
    for (double xi : x) {
      sq += xi * xi;
      cs += std::cos(2.0 * std::numbers::pi * xi);
    }
    const double dd = static_cast<double>(d);
    return -20.0 * std::exp(-0.2 * std::sqrt(sq / dd)) - std::exp(cs / dd) + 21.0 +
           std::numbers::e;
  };
  f.minimizer = std::vector<double>(d, 0.0);
  f.min_value = 1.0;
  return f;
}

inline Objective rastrigin(std::size_t d) {
  if (d == 0) throw std::invalid_argument("rastrigin: dimension must be >= 1");
  Objective f;
  f.name = "rastrigin";
  f.dim = d;
  f.eval = [d](std::span<const double> x) {
    double s = 10.0 * static_cast<double>(d + 1);
    for (double xi : x) s += xi * xi - 10.0 * std::cos(2.0 * std::numbers::pi * xi);
    return s;
  };
  SeparableForm sep;
  std::vector<Factor1D> constant_term(d, Factor1D::one());
  constant_term[0] = Factor1D::constant(10.0 * static_cast<double>(d + 1));
  sep.terms.push_back(std::move(constant_term));
  for (std::size_t p = 0; p < d; ++p) {
    std::vector<Factor1D> term(d, Factor1D::one());
    term[p] = {[](double t) { return t * t - 10.0 * std::cos(2.0 * std::numbers::pi * t); },
               std::nullopt,
               {}};
    sep.terms.push_back(std::move(term));
  }
  f.separable = std::move(sep);
  f.minimizer = std::vector<double>(d, 0.0);
  f.min_value = 10.0;
  return f;
}

/// (x^2 - 2.2)^2 - 0.08 x + 0.5: global minimum near 1.48776, local near -1.47867.
inline Objective double_well_1d() {
  Objective f;
  f.name = "double_well";
  f.dim = 1;
  auto g = [](double t) { return (t * t - 2.2) * (t * t - 2.2) - 0.08 * t + 0.5; };
  f.eval = [g](std::span<const double> x) { return g(x[0]); };
  f.separable = SeparableForm{{{Factor1D{g, 4, {}}}}};
  f.minimizer = std::vector<double>{1.4877644263961132};
  f.min_value = g(1.4877644263961132);
  return f;
}

/// Piecewise: x^2 left of -2, flat 4 on [-2, 0], 4(x-1)^2 right of 0.
inline Objective nonsmooth_1d() {
  Objective f;
  f.name = "nonsmooth";
  f.dim = 1;
  auto g = [](double t) {
    if (t < -2.0) return t * t;
    if (t <= 0.0) return 4.0;
    return 4.0 * (t - 1.0) * (t - 1.0);
  };
  f.eval = [g](std::span<const double> x) { return g(x[0]); };
  f.separable = SeparableForm{{{Factor1D{g, std::nullopt, {-2.0, 0.0}}}}};
  f.minimizer = std::vector<double>{1.0};
  f.min_value = 0.0;
  return f;
}

/// x^T Q x for symmetric Q. Always separable: one rank-1 term per nonzero entry.
inline Objective quadratic(const Matrix& q) {
  if (q.rows() != q.cols() || q.rows() == 0)
    throw std::invalid_argument("quadratic: Q must be a nonempty square matrix");
  if ((q - q.transpose()).cwiseAbs().maxCoeff() > 0.0)
    throw std::invalid_argument("quadratic: Q must be symmetric");
  const auto d = static_cast<std::size_t>(q.rows());
  Objective f;
  f.name = "quadratic";
  f.dim = d;
  f.eval = [q](std::span<const double> x) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < q.rows(); ++i)
      for (Eigen::Index j = 0; j < q.cols(); ++j) s += x[i] * q(i, j) * x[j];
    return s;
  };
  SeparableForm sep;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double qij = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (qij == 0.0) continue;
      std::vector<Factor1D> term(d, Factor1D::one());
      if (i == j) {
        term[i] = {[qij](double t) { return qij * t * t; }, 2, {}};
      } else {
        term[i] = {[qij](double t) { return qij * t; }, 1, {}};
        term[j] = {[](double t) { return t; }, 1, {}};
      }
      sep.terms.push_back(std::move(term));
    }
  if (sep.terms.empty()) {
    std::vector<Factor1D> zero(d, Factor1D::one());
    zero[0] = Factor1D::constant(0.0);
    sep.terms.push_back(std::move(zero));
  }
  f.separable = std::move(sep);
  f.minimizer = std::vector<double>(d, 0.0);
  f.min_value = 0.0;
  return f;
}

}  // namespace ccbo
