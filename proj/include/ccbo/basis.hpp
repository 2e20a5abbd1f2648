#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ccbo/quadrature.hpp"

namespace ccbo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Axis-aligned box, the product of [lower_j, upper_j].
class BoxDomain {
 public:
  BoxDomain(std::vector<double> lower, std::vector<double> upper)
      : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.empty()) throw std::invalid_argument("BoxDomain: dimension must be >= 1");
    if (lower_.size() != upper_.size())
      throw std::invalid_argument("BoxDomain: lower/upper length mismatch");
    for (std::size_t j = 0; j < lower_.size(); ++j)
      if (!(lower_[j] < upper_[j]))
        throw std::invalid_argument("BoxDomain: lower must be < upper in every dimension");
  }

  /// [lo, hi]^d
  static BoxDomain cube(std::size_t dim, double lo, double hi) {
    return {std::vector<double>(dim, lo), std::vector<double>(dim, hi)};
  }

  std::size_t dim() const { return lower_.size(); }
  double lower(std::size_t j) const { return lower_[j]; }
  double upper(std::size_t j) const { return upper_[j]; }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }

  double volume() const {
    double v = 1.0;
    for (std::size_t j = 0; j < dim(); ++j) v *= upper_[j] - lower_[j];
    return v;
  }

  bool operator==(const BoxDomain&) const = default;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
};

using MultiIndex = std::vector<int>;

enum class BasisFamily { Monomial, Legendre };

inline std::string_view to_string(BasisFamily f) {
  return f == BasisFamily::Monomial ? "monomial" : "legendre";
}

inline BasisFamily basis_family_from_string(std::string_view s) {
  if (s == "monomial") return BasisFamily::Monomial;
  if (s == "legendre") return BasisFamily::Legendre;
  throw std::invalid_argument("unknown basis family: " + std::string(s));
}

struct Truncation {
  enum class Kind { TotalDegree, HyperbolicCross };
  Kind kind = Kind::TotalDegree;
  /// M for total degree, J for hyperbolic cross
  int degree = 0;

  static Truncation total_degree(int m) { return {Kind::TotalDegree, m}; }
  static Truncation hyperbolic_cross(int j) { return {Kind::HyperbolicCross, j}; }

  bool admits(const MultiIndex& r) const {
    if (kind == Kind::TotalDegree) return std::accumulate(r.begin(), r.end(), 0) <= degree;
    long prod = 1;
    for (int e : r) {
      prod *= e + 1;
      if (prod > degree + 1) return false;
    }
    return true;
  }

  bool operator==(const Truncation&) const = default;
};

inline std::string_view to_string(Truncation::Kind k) {
  return k == Truncation::Kind::TotalDegree ? "total_degree" : "hyperbolic_cross";
}

inline Truncation::Kind truncation_kind_from_string(std::string_view s) {
  if (s == "total_degree") return Truncation::Kind::TotalDegree;
  if (s == "hyperbolic_cross") return Truncation::Kind::HyperbolicCross;
  throw std::invalid_argument("unknown truncation kind: " + std::string(s));
}

/// Graded lexicographic order: total degree first, then the index with the larger
/// leading exponent comes first, so (1,0) precedes (0,1).
inline bool graded_lex_less(const MultiIndex& a, const MultiIndex& b) {
  const int sa = std::accumulate(a.begin(), a.end(), 0);
  const int sb = std::accumulate(b.begin(), b.end(), 0);
  if (sa != sb) return sa < sb;
  return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
}

/// All multi-indices of length dim admitted by the truncation, in graded
/// lexicographic order.
inline std::vector<MultiIndex> enumerate_indices(const Truncation& trunc, std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("enumerate_indices: dimension must be >= 1");
  if (trunc.degree < 0) throw std::invalid_argument("enumerate_indices: degree must be >= 0");

  std::vector<MultiIndex> out;
  MultiIndex cur(dim, 0);
  // Depth-first with pruning; both truncations are downward closed, so a failing
  // prefix can never be extended into an admissible index.
  auto rec = [&](auto&& self, std::size_t pos, int budget_sum, long budget_prod) -> void {
    if (pos == dim) {
      out.push_back(cur);
      return;
    }
    for (int r = 0;; ++r) {
      if (trunc.kind == Truncation::Kind::TotalDegree) {
        if (r > budget_sum) break;
        cur[pos] = r;
        self(self, pos + 1, budget_sum - r, budget_prod);
      } else {
        if ((r + 1) > budget_prod) break;
        cur[pos] = r;
        self(self, pos + 1, budget_sum, budget_prod / (r + 1));
      }
    }
    cur[pos] = 0;
  };
  rec(rec, 0, trunc.degree, static_cast<long>(trunc.degree) + 1);
  std::sort(out.begin(), out.end(), graded_lex_less);
  return out;
}

/// 1D polynomial of degree r and its derivative. Legendre polynomials are the
/// standard P_r (P_r(1) = 1) mapped affinely from [-1, 1] onto [lo, hi].
struct Poly1D {
  BasisFamily family;
  double lo;
  double hi;

  /// values[r] and derivs[r] for r = 0..max_degree
  void eval_all(double x, int max_degree, std::span<double> values,
                std::span<double> derivs) const {
    if (family == BasisFamily::Monomial) {
      values[0] = 1.0;
      derivs[0] = 0.0;
      for (int r = 1; r <= max_degree; ++r) {
        values[r] = values[r - 1] * x;
        derivs[r] = r * values[r - 1];
      }
      return;
    }
    const double scale = 2.0 / (hi - lo);
    const double t = scale * (x - lo) - 1.0;
    values[0] = 1.0;
    derivs[0] = 0.0;
    if (max_degree >= 1) {
      values[1] = t;
      derivs[1] = 1.0;
    }
    for (int r = 2; r <= max_degree; ++r) {
      values[r] = ((2.0 * r - 1.0) * t * values[r - 1] - (r - 1.0) * values[r - 2]) / r;
      // P_r' = P_{r-2}' + (2r-1) P_{r-1}
      derivs[r] = derivs[r - 2] + (2.0 * r - 1.0) * values[r - 1];
    }
    for (int r = 1; r <= max_degree; ++r) derivs[r] *= scale;
  }

  double value(double x, int r) const {
    std::vector<double> v(r + 1), dv(r + 1);
    eval_all(x, r, v, dv);
    return v[r];
  }
};

/// Exact 1D integrals over [lo, hi] of products of basis polynomials, for degrees
/// 0..max_degree in every slot.
class Integral1DTables {
 public:
  Integral1DTables() = default;

  Integral1DTables(const Poly1D& poly, int max_degree) : size_(max_degree + 1) {
    const auto n = static_cast<std::size_t>(size_);
    t1_.assign(n, 0.0);
    t2_.assign(n * n, 0.0);
    t3_.assign(n * n * n, 0.0);
    d2t1_.assign(n * n * n, 0.0);

    if (poly.family == BasisFamily::Monomial) {
      // powers[k] = integral of x^k, k up to 3*max_degree
      std::vector<double> powers(3 * n, 0.0);
      double a = poly.lo, b = poly.hi;
      double ak = a, bk = b;
      for (std::size_t k = 0; k < powers.size(); ++k) {
        powers[k] = (bk - ak) / static_cast<double>(k + 1);
        ak *= a;
        bk *= b;
      }
      for (int r = 0; r < size_; ++r) {
        t1_[r] = powers[r];
        for (int s = 0; s < size_; ++s) {
          t2_[idx2(r, s)] = powers[r + s];
          for (int t = 0; t < size_; ++t) {
            t3_[idx3(r, s, t)] = powers[r + s + t];
            if (r > 0 && s > 0) d2t1_[idx3(r, s, t)] = r * s * powers[r - 1 + s - 1 + t];
          }
        }
      }
      return;
    }

    // Highest integrand degree is 3*max_degree; a rule with q nodes is exact up to 2q-1.
    const auto nodes = static_cast<std::size_t>((3 * max_degree + 1 + 1) / 2 + 1);
    const GaussRule rule = gauss_legendre(nodes);
    const double mid = 0.5 * (poly.lo + poly.hi), half = 0.5 * (poly.hi - poly.lo);
    std::vector<double> v(n), dv(n);
    for (std::size_t q = 0; q < nodes; ++q) {
      const double x = mid + half * rule.nodes[q];
      const double w = half * rule.weights[q];
      poly.eval_all(x, max_degree, v, dv);
      for (int r = 0; r < size_; ++r) {
        t1_[r] += w * v[r];
        for (int s = 0; s < size_; ++s) {
          t2_[idx2(r, s)] += w * v[r] * v[s];
          for (int t = 0; t < size_; ++t) {
            t3_[idx3(r, s, t)] += w * v[r] * v[s] * v[t];
            d2t1_[idx3(r, s, t)] += w * dv[r] * dv[s] * v[t];
          }
        }
      }
    }
    // Orthogonality and parity about the interval midpoint give exact zeros.
    for (int r = 0; r < size_; ++r) {
      if (r > 0) t1_[r] = 0.0;
      for (int s = 0; s < size_; ++s) {
        if (r != s) t2_[idx2(r, s)] = 0.0;
        for (int t = 0; t < size_; ++t)
          if ((r + s + t) % 2 != 0) t3_[idx3(r, s, t)] = d2t1_[idx3(r, s, t)] = 0.0;
      }
    }
    symmetrize();
  }

  int max_degree() const { return size_ - 1; }

  double t1(int r) const { return t1_[r]; }
  double t2(int r, int s) const { return t2_[idx2(r, s)]; }
  double t3(int r, int s, int t) const { return t3_[idx3(r, s, t)]; }
  /// integral of phi_r' * phi_s' * phi_t
  double d2t1(int r, int s, int t) const { return d2t1_[idx3(r, s, t)]; }

 private:
  std::size_t idx2(int r, int s) const { return static_cast<std::size_t>(r * size_ + s); }
  std::size_t idx3(int r, int s, int t) const {
    return static_cast<std::size_t>((r * size_ + s) * size_ + t);
  }

  // Quadrature sums depend on summation order only through rounding; copy the
  // canonical (sorted) entry so stored tables are exactly symmetric.
  void symmetrize() {
    for (int r = 0; r < size_; ++r)
      for (int s = 0; s < size_; ++s) {
        t2_[idx2(r, s)] = t2_[idx2(std::min(r, s), std::max(r, s))];
        for (int t = 0; t < size_; ++t) {
          std::array<int, 3> k{r, s, t};
          std::sort(k.begin(), k.end());
          t3_[idx3(r, s, t)] = t3_[idx3(k[0], k[1], k[2])];
          d2t1_[idx3(r, s, t)] = d2t1_[idx3(std::min(r, s), std::max(r, s), t)];
        }
      }
  }

  int size_ = 0;
  std::vector<double> t1_, t2_, t3_, d2t1_;
};

/// Separable polynomial basis phi_i(x) = prod_j phi^{(r_i^j)}(x_j) over a box.
class MultiIndexBasis {
 public:
  MultiIndexBasis(BasisFamily family, BoxDomain domain, Truncation truncation)
      : MultiIndexBasis(family, domain, truncation,
                        enumerate_indices(truncation, domain.dim())) {}

  /// Explicit index list, validated against the truncation rule.
  MultiIndexBasis(BasisFamily family, BoxDomain domain, Truncation truncation,
                  std::vector<MultiIndex> indices)
      : family_(family),
        domain_(std::move(domain)),
        truncation_(truncation),
        indices_(std::move(indices)) {
    if (indices_.empty()) throw std::invalid_argument("MultiIndexBasis: empty index set");
    for (const auto& r : indices_) {
      if (r.size() != domain_.dim())
        throw std::invalid_argument("MultiIndexBasis: index length does not match dimension");
      for (int e : r)
        if (e < 0) throw std::invalid_argument("MultiIndexBasis: negative exponent");
      if (!truncation_.admits(r))
        throw std::invalid_argument("MultiIndexBasis: index violates truncation rule");
    }
    auto sorted = indices_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw std::invalid_argument("MultiIndexBasis: duplicate index");

    for (std::size_t j = 0; j < dim(); ++j) {
      int m = 0;
      for (const auto& r : indices_) m = std::max(m, r[j]);
      max_degree_.push_back(m);
      polys_.push_back({family_, domain_.lower(j), domain_.upper(j)});
    }
    support_.resize(indices_.size());
    for (std::size_t i = 0; i < indices_.size(); ++i)
      for (std::size_t j = 0; j < dim(); ++j)
        if (indices_[i][j] != 0) support_[i].push_back(j);
  }

  std::size_t size() const { return indices_.size(); }
  std::size_t dim() const { return domain_.dim(); }
  BasisFamily family() const { return family_; }
  const BoxDomain& domain() const { return domain_; }
  const Truncation& truncation() const { return truncation_; }
  const std::vector<MultiIndex>& indices() const { return indices_; }
  const MultiIndex& index(std::size_t i) const { return indices_[i]; }
  /// dimensions with nonzero exponent in index i
  const std::vector<std::size_t>& support(std::size_t i) const { return support_[i]; }
  int max_degree(std::size_t j) const { return max_degree_[j]; }
  int max_degree() const { return *std::max_element(max_degree_.begin(), max_degree_.end()); }
  const Poly1D& poly(std::size_t j) const { return polys_[j]; }

  /// Phi_n(x); evaluation outside the domain is allowed.
  Vector eval(std::span<const double> x) const {
    Vector out(static_cast<Eigen::Index>(size()));
    eval_into(x, out);
    return out;
  }

  void eval_into(std::span<const double> x, Vector& out) const {
    const auto tab = tabulate(x);
    out.resize(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) {
      double v = 1.0;
      for (std::size_t j : support_[i]) v *= tab.value(j, indices_[i][j]);
      out[static_cast<Eigen::Index>(i)] = v;
    }
  }

  /// n x d matrix with entry (i, p) = d phi_i / d x_p.
  Matrix gradient(std::span<const double> x) const {
    const auto tab = tabulate(x);
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(dim()));
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& sup = support_[i];
      for (std::size_t p : sup) {
        double g = tab.deriv(p, indices_[i][p]);
        for (std::size_t q : sup)
          if (q != p) g *= tab.value(q, indices_[i][q]);
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = g;
      }
    }
    return out;
  }

  /// Per-dimension tables covering every product the Galerkin assembly forms.
  std::vector<Integral1DTables> integral_tables() const {
    std::vector<Integral1DTables> tables;
    tables.reserve(dim());
    for (std::size_t j = 0; j < dim(); ++j) tables.emplace_back(polys_[j], max_degree_[j]);
    return tables;
  }

  bool operator==(const MultiIndexBasis& o) const {
    return family_ == o.family_ && domain_ == o.domain_ && truncation_ == o.truncation_ &&
           indices_ == o.indices_;
  }

 private:
  struct Tabulation {
    std::size_t stride;
    std::vector<double> values, derivs;
    double value(std::size_t j, int r) const { return values[j * stride + r]; }
    double deriv(std::size_t j, int r) const { return derivs[j * stride + r]; }
  };

  Tabulation tabulate(std::span<const double> x) const {
    if (x.size() != dim()) throw std::invalid_argument("basis evaluation: dimension mismatch");
    const auto stride = static_cast<std::size_t>(max_degree()) + 1;
    Tabulation tab{stride, std::vector<double>(stride * dim()), std::vector<double>(stride * dim())};
    for (std::size_t j = 0; j < dim(); ++j)
      polys_[j].eval_all(x[j], max_degree_[j],
                         std::span<double>(tab.values).subspan(j * stride, stride),
                         std::span<double>(tab.derivs).subspan(j * stride, stride));
    return tab;
  }

  BasisFamily family_;
  BoxDomain domain_;
  Truncation truncation_;
  std::vector<MultiIndex> indices_;
  std::vector<int> max_degree_;
  std::vector<Poly1D> polys_;
  std::vector<std::vector<std::size_t>> support_;
};

}  // namespace ccbo
