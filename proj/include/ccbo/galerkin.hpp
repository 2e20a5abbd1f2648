#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ccbo/basis.hpp"
#include "ccbo/objectives.hpp"
#include "ccbo/quadrature.hpp"
#include "ccbo/random.hpp"

namespace ccbo {

class IllConditionedError : public std::runtime_error {
 public:
  IllConditionedError(const std::string& what, double condition)
      : std::runtime_error(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

inline constexpr double kMassConditionWarn = 1e12;
inline constexpr double kMassConditionFail = 1e14;

/// Nonzero entry of W(i,j,k) = sum_p <d_p phi_k * d_p phi_j, phi_i>, stored for j <= k.
struct AdvectionEntry {
  std::uint32_t i, j, k;
  double value;
};

/// Inner-product objects for the projected GHJB equation. The dense n x n x n x d
/// advection tensor is never formed: only the p-summed nonzero pattern is cached,
/// and G(c), L(c) contract against it on demand.
class GalerkinWorkspace {
 public:
  explicit GalerkinWorkspace(MultiIndexBasis basis)
      : GalerkinWorkspace(std::move(basis), std::nullopt) {}

  GalerkinWorkspace(MultiIndexBasis basis, std::optional<Vector> load)
      : basis_(std::move(basis)), tables_(basis_.integral_tables()) {
    const auto n = static_cast<Eigen::Index>(basis_.size());
    load_ = load ? std::move(*load) : Vector::Zero(n);
    if (load_.size() != n) throw std::invalid_argument("GalerkinWorkspace: load has wrong length");
    assemble_mass();
    assemble_advection_pattern();
  }

  const MultiIndexBasis& basis() const { return basis_; }
  const std::vector<Integral1DTables>& tables() const { return tables_; }
  std::size_t size() const { return basis_.size(); }
  /// <phi_i, phi_j>, without the discount factor
  const Matrix& mass() const { return mass_; }
  const Vector& load() const { return load_; }
  double mass_condition() const { return condition_; }
  /// Nonempty when the mass matrix is usable but poorly conditioned.
  const std::string& warning() const { return warning_; }
  const std::vector<AdvectionEntry>& advection_pattern() const { return pattern_; }

  /// Solves mass * a = rhs.
  Vector solve_mass(const Vector& rhs) const { return mass_llt_.solve(rhs); }

  /// G(c)_{ij} = -(1/eps) sum_k c_k W(i,j,k); the projection of DV^T u for u = -(1/eps) DV_c.
  Matrix apply_G(const Vector& c, double epsilon) const {
    check_length(c);
    const auto n = static_cast<Eigen::Index>(size());
    Matrix g = Matrix::Zero(n, n);
    for (const auto& e : pattern_) {
      g(e.i, e.j) += c[e.k] * e.value;
      if (e.j != e.k) g(e.i, e.k) += c[e.j] * e.value;
    }
    g *= -1.0 / epsilon;
    return g;
  }

  /// L(c)_i = (1/(2 eps)) sum_{j,k} c_j c_k W(i,j,k); the projection of (eps/2)|u|^2.
  Vector apply_L(const Vector& c, double epsilon) const {
    check_length(c);
    Vector l = Vector::Zero(static_cast<Eigen::Index>(size()));
    for (const auto& e : pattern_) {
      const double mult = e.j == e.k ? 1.0 : 2.0;
      l[e.i] += mult * c[e.j] * c[e.k] * e.value;
    }
    l *= 0.5 / epsilon;
    return l;
  }

  /// Coefficients of the L2 projection of a function whose load vector is f_load.
  Vector project(const Vector& f_load) const {
    check_length(f_load);
    return solve_mass(f_load);
  }

 private:
  void check_length(const Vector& c) const {
    if (static_cast<std::size_t>(c.size()) != size())
      throw std::invalid_argument("coefficient vector length does not match basis size");
  }

  void assemble_mass() {
    const std::size_t n = size();
    mass_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) {
        double v = 1.0;
        for (std::size_t p = 0; p < basis_.dim(); ++p)
          v *= tables_[p].t2(basis_.index(i)[p], basis_.index(j)[p]);
        mass_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        mass_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
      }
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(mass_, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
    condition_ = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(condition_ <= kMassConditionFail))
      throw IllConditionedError("mass matrix condition number " + std::to_string(condition_) +
                                    " exceeds " + std::to_string(kMassConditionFail),
                                condition_);
    if (condition_ > kMassConditionWarn)
      warning_ = "mass matrix is poorly conditioned (condition number " +
                 std::to_string(condition_) + ")";
    mass_llt_.compute(mass_);
    if (mass_llt_.info() != Eigen::Success)
      throw IllConditionedError("mass matrix is not positive definite", condition_);
  }

  void assemble_advection_pattern() {
    const std::size_t n = size();
    const std::size_t d = basis_.dim();
    // T3 with all-zero degrees is the interval length; dimensions outside the joint
    // support of (i, j, k) contribute exactly that factor.
    std::vector<double> lengths(d);
    for (std::size_t q = 0; q < d; ++q) lengths[q] = tables_[q].t3(0, 0, 0);

    std::vector<char> in_union(d, 0);
    std::vector<std::size_t> joint;
    for (std::size_t j = 0; j < n; ++j) {
      const auto& rj = basis_.index(j);
      for (std::size_t k = j; k < n; ++k) {
        const auto& rk = basis_.index(k);
        // d_p phi_j and d_p phi_k both vanish unless p is in both supports
        std::vector<std::size_t> shared;
        for (std::size_t p : basis_.support(j))
          if (rk[p] != 0) shared.push_back(p);
        if (shared.empty()) continue;

        for (std::size_t i = 0; i < n; ++i) {
          const auto& ri = basis_.index(i);
          joint.clear();
          for (const auto* sup : {&basis_.support(i), &basis_.support(j), &basis_.support(k)})
            for (std::size_t q : *sup)
              if (!in_union[q]) {
                in_union[q] = 1;
                joint.push_back(q);
              }
          double outside = 1.0;
          for (std::size_t q = 0; q < d; ++q)
            if (!in_union[q]) outside *= lengths[q];
          double w = 0.0;
          for (std::size_t p : shared) {
            double v = tables_[p].d2t1(rj[p], rk[p], ri[p]);
            for (std::size_t q : joint)
              if (q != p) v *= tables_[q].t3(ri[q], rj[q], rk[q]);
            w += v;
          }
          for (std::size_t q : joint) in_union[q] = 0;
          w *= outside;
          if (w != 0.0)
            pattern_.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                                static_cast<std::uint32_t>(k), w});
        }
      }
    }
  }

  MultiIndexBasis basis_;
  std::vector<Integral1DTables> tables_;
  Matrix mass_;
  Eigen::LLT<Matrix> mass_llt_;
  Vector load_;
  double condition_ = 0.0;
  std::string warning_;
  std::vector<AdvectionEntry> pattern_;
};

/// Gauss nodes used for factors that are not polynomials.
inline constexpr std::size_t kNonPolynomialNodes = 64;

/// F_i = sum_j prod_p integral of F_{j,p} * phi_i^p over the p-th interval.
inline Vector assemble_load_separable(const MultiIndexBasis& basis, const SeparableForm& sep) {
  const std::size_t d = basis.dim();
  const std::size_t n = basis.size();
  const GaussRule fixed = gauss_legendre(kNonPolynomialNodes);
  Vector load = Vector::Zero(static_cast<Eigen::Index>(n));
  for (const auto& term : sep.terms) {
    if (term.size() != d) throw std::invalid_argument("separable term has wrong dimension");
    // moments[p][r] = integral of term[p] * phi^{(r)} on the p-th interval
    std::vector<std::vector<double>> moments(d);
    for (std::size_t p = 0; p < d; ++p) {
      const Poly1D& poly = basis.poly(p);
      const int max_r = basis.max_degree(p);
      moments[p].resize(static_cast<std::size_t>(max_r) + 1);
      for (int r = 0; r <= max_r; ++r) {
        auto integrand = [&](double x) { return term[p].fn(x) * poly.value(x, r); };
        if (term[p].poly_degree) {
          const auto nodes = static_cast<std::size_t>((*term[p].poly_degree + r + 1 + 1) / 2 + 1);
          moments[p][r] = integrate(integrand, poly.lo, poly.hi, gauss_legendre(nodes));
        } else {
          moments[p][r] = integrate(integrand, poly.lo, poly.hi, fixed, term[p].breakpoints);
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double v = 1.0;
      for (std::size_t p = 0; p < d; ++p) v *= moments[p][basis.index(i)[p]];
      load[static_cast<Eigen::Index>(i)] += v;
    }
  }
  return load;
}

/// F_i = |Omega| / N sum_q f(x_q) phi_i(x_q) with x_q uniform on the domain.
inline Vector assemble_load_montecarlo(const MultiIndexBasis& basis, const Objective& f,
                                       std::size_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw std::invalid_argument("assemble_load_montecarlo: N_mc must be >= 1");
  const std::size_t d = basis.dim();
  const BoxDomain& dom = basis.domain();
  Rng rng(seed);
  std::vector<double> x(d);
  Vector phi;
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t q = 0; q < n_samples; ++q) {
    for (std::size_t p = 0; p < d; ++p) x[p] = rng.uniform(dom.lower(p), dom.upper(p));
    basis.eval_into(x, phi);
    acc += f.eval(x) * phi;
  }
  return acc * dom.volume() / static_cast<double>(n_samples);
}

/// Separable objectives get the exact factored load, the rest Monte Carlo.
inline Vector assemble_load(const MultiIndexBasis& basis, const Objective& f,
                            std::size_t n_samples, std::uint64_t seed) {
  if (f.separable) return assemble_load_separable(basis, *f.separable);
  return assemble_load_montecarlo(basis, f, n_samples, seed);
}

/// Coefficients a of f_approx = Phi^T a, from mass * a = load.
inline Vector project_objective(const GalerkinWorkspace& ws, const Vector& load) {
  return ws.project(load);
}

}  // namespace ccbo
