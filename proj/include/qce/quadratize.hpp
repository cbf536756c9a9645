#pragma once

// Quadratic dimension raising for rational-like functions.
//
// A RationalExpr over x_0..x_{n-1} is rewritten as a quadratic polynomial in
// the joint variables z = (x, y), where every auxiliary y_i is tied to earlier
// variables by a constraint G_i(z) = 0 of degree at most two. ExtendedOde
// lifts a vector field on x to the joint space so that each G_i is a first
// integral, and midpoint_step integrates it with the implicit midpoint rule.

#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qce/error.hpp"
#include "qce/fixedpoint.hpp"

namespace qce {

/// Sparse polynomial of degree <= 2 in z: c + sum lin_k z_k + sum quad_ij z_i z_j (i <= j).
class QuadPoly {
 public:
  QuadPoly() = default;
  explicit QuadPoly(double c) : c_(c) {}

  static QuadPoly variable(std::size_t k, double coef = 1.0) {
    QuadPoly p;
    p.lin_[k] = coef;
    return p;
  }

  double constant() const { return c_; }
  const std::map<std::size_t, double>& linear() const { return lin_; }
  const std::map<std::pair<std::size_t, std::size_t>, double>& quadratic() const { return quad_; }

  int degree() const {
    for (const auto& [k, v] : quad_)
      if (v != 0.0) return 2;
    for (const auto& [k, v] : lin_)
      if (v != 0.0) return 1;
    return 0;
  }

  double operator()(const std::vector<double>& z) const {
    double s = c_;
    for (const auto& [k, v] : lin_) s += v * at(z, k);
    for (const auto& [ij, v] : quad_) s += v * at(z, ij.first) * at(z, ij.second);
    return s;
  }

  /// Gradient with respect to z, length z.size().
  std::vector<double> gradient(const std::vector<double>& z) const {
    std::vector<double> g(z.size(), 0.0);
    for (const auto& [k, v] : lin_) g[check(z, k)] += v;
    for (const auto& [ij, v] : quad_) {
      const auto [i, j] = ij;
      if (i == j) {
        g[check(z, i)] += 2.0 * v * z[i];
      } else {
        g[check(z, i)] += v * at(z, j);
        g[check(z, j)] += v * at(z, i);
      }
    }
    return g;
  }

  QuadPoly& operator+=(const QuadPoly& o) {
    c_ += o.c_;
    for (const auto& [k, v] : o.lin_) lin_[k] += v;
    for (const auto& [ij, v] : o.quad_) quad_[ij] += v;
    return *this;
  }
  QuadPoly& operator*=(double s) {
    c_ *= s;
    for (auto& [k, v] : lin_) v *= s;
    for (auto& [ij, v] : quad_) v *= s;
    return *this;
  }
  friend QuadPoly operator+(QuadPoly a, const QuadPoly& b) { return a += b; }
  friend QuadPoly operator-(QuadPoly a, const QuadPoly& b) {
    QuadPoly nb = b;
    nb *= -1.0;
    return a += nb;
  }
  friend QuadPoly operator*(QuadPoly a, double s) { return a *= s; }
  friend QuadPoly operator*(double s, QuadPoly a) { return a *= s; }

  /// Product of two polynomials; the result must stay within degree 2.
  friend QuadPoly operator*(const QuadPoly& a, const QuadPoly& b) {
    if (a.degree() + b.degree() > 2) throw InvalidArgument("QuadPoly product exceeds degree 2");
    QuadPoly r;
    r.c_ = a.c_ * b.c_;
    for (const auto& [k, v] : a.lin_) r.lin_[k] += v * b.c_;
    for (const auto& [k, v] : b.lin_) r.lin_[k] += v * a.c_;
    for (const auto& [ij, v] : a.quad_) r.quad_[ij] += v * b.c_;
    for (const auto& [ij, v] : b.quad_) r.quad_[ij] += v * a.c_;
    for (const auto& [i, vi] : a.lin_)
      for (const auto& [j, vj] : b.lin_) r.quad_[{std::min(i, j), std::max(i, j)}] += vi * vj;
    return r;
  }

  std::string to_string(const std::vector<std::string>& names) const {
    std::ostringstream os;
    os << std::setprecision(17);
    bool first = true;
    auto emit = [&](double v, const std::string& mono) {
      if (v == 0.0) return;
      if (!first) os << (v < 0 ? " - " : " + ");
      else if (v < 0) os << "-";
      const double a = std::abs(v);
      if (mono.empty()) os << a;
      else if (a != 1.0) os << a << "*" << mono;
      else os << mono;
      first = false;
    };
    emit(c_, "");
    for (const auto& [k, v] : lin_) emit(v, name(names, k));
    for (const auto& [ij, v] : quad_) emit(v, name(names, ij.first) + "*" + name(names, ij.second));
    if (first) os << "0";
    return os.str();
  }

 private:
  static double at(const std::vector<double>& z, std::size_t k) {
    if (k >= z.size()) throw InvalidArgument("QuadPoly variable index out of range");
    return z[k];
  }
  static std::size_t check(const std::vector<double>& z, std::size_t k) {
    if (k >= z.size()) throw InvalidArgument("QuadPoly variable index out of range");
    return k;
  }
  static std::string name(const std::vector<std::string>& names, std::size_t k) {
    return k < names.size() ? names[k] : "z" + std::to_string(k);
  }

  double c_ = 0.0;
  std::map<std::size_t, double> lin_;
  std::map<std::pair<std::size_t, std::size_t>, double> quad_;
};

/// Expression tree for rational-like functions.
class RationalExpr {
 public:
  enum class Kind { constant, variable, sum, product, power, reciprocal, root };

  static RationalExpr constant(double c) {
    if (!std::isfinite(c)) throw InvalidArgument("non-finite constant");
    return RationalExpr(Kind::constant, c, 0, {});
  }
  static RationalExpr variable(std::size_t i) { return RationalExpr(Kind::variable, 0.0, i, {}); }
  static RationalExpr sum(std::vector<RationalExpr> terms) {
    if (terms.empty()) throw InvalidArgument("empty sum");
    return RationalExpr(Kind::sum, 0.0, 0, std::move(terms));
  }
  static RationalExpr product(std::vector<RationalExpr> factors) {
    if (factors.empty()) throw InvalidArgument("empty product");
    return RationalExpr(Kind::product, 0.0, 0, std::move(factors));
  }
  static RationalExpr power(RationalExpr base, int n) {
    if (n < 0) throw InvalidArgument("negative integer power; use reciprocal");
    return RationalExpr(Kind::power, 0.0, static_cast<std::size_t>(n), {std::move(base)});
  }
  static RationalExpr reciprocal(RationalExpr e) {
    return RationalExpr(Kind::reciprocal, 0.0, 0, {std::move(e)});
  }
  static RationalExpr root(RationalExpr e, int q) {
    if (q < 2) throw InvalidArgument("root order must be >= 2");
    return RationalExpr(Kind::root, 0.0, static_cast<std::size_t>(q), {std::move(e)});
  }

  Kind kind() const { return node_->kind; }
  double value() const { return node_->value; }
  std::size_t index() const { return node_->index; }  // variable index, power or root order
  const std::vector<RationalExpr>& children() const { return node_->children; }

  /// Number of original variables referenced (max index + 1).
  std::size_t arity() const {
    if (kind() == Kind::variable) return index() + 1;
    std::size_t m = 0;
    for (const auto& c : children()) m = std::max(m, c.arity());
    return m;
  }

  double operator()(const std::vector<double>& x) const {
    switch (kind()) {
      case Kind::constant:
        return value();
      case Kind::variable:
        if (index() >= x.size()) throw InvalidArgument("expression variable index out of range");
        return x[index()];
      case Kind::sum: {
        double s = 0.0;
        for (const auto& c : children()) s += c(x);
        return s;
      }
      case Kind::product: {
        double p = 1.0;
        for (const auto& c : children()) p *= c(x);
        return p;
      }
      case Kind::power: {
        const double b = children()[0](x);
        double p = 1.0;
        for (std::size_t k = 0; k < index(); ++k) p *= b;
        return p;
      }
      case Kind::reciprocal: {
        const double d = children()[0](x);
        if (d == 0.0) throw SingularConstraint("reciprocal of zero");
        return 1.0 / d;
      }
      case Kind::root:
        return real_root(children()[0](x), static_cast<int>(index()));
    }
    return 0.0;
  }

  std::string to_string() const {
    std::ostringstream os;
    os << std::setprecision(17);
    switch (kind()) {
      case Kind::constant: os << value(); break;
      case Kind::variable: os << "x" << index(); break;
      case Kind::sum:
      case Kind::product: {
        os << "(";
        for (std::size_t k = 0; k < children().size(); ++k)
          os << (k ? (kind() == Kind::sum ? " + " : " * ") : "") << children()[k].to_string();
        os << ")";
        break;
      }
      case Kind::power: os << children()[0].to_string() << "^" << index(); break;
      case Kind::reciprocal: os << "1/" << children()[0].to_string(); break;
      case Kind::root: os << "root" << index() << "(" << children()[0].to_string() << ")"; break;
    }
    return os.str();
  }

  /// Real q-th root; negative arguments are allowed for odd q only.
  static double real_root(double v, int q) {
    if (v < 0.0) {
      if (q % 2 == 0) throw InvalidArgument("even root of a negative value has no real branch");
      return -std::pow(-v, 1.0 / q);
    }
    return std::pow(v, 1.0 / q);
  }

 private:
  struct Node {
    Kind kind;
    double value;
    std::size_t index;
    std::vector<RationalExpr> children;
  };
  RationalExpr(Kind k, double v, std::size_t i, std::vector<RationalExpr> ch)
      : node_(std::make_shared<const Node>(Node{k, v, i, std::move(ch)})) {}
  std::shared_ptr<const Node> node_;
};

inline RationalExpr operator+(RationalExpr a, RationalExpr b) {
  return RationalExpr::sum({std::move(a), std::move(b)});
}
inline RationalExpr operator*(RationalExpr a, RationalExpr b) {
  return RationalExpr::product({std::move(a), std::move(b)});
}
inline RationalExpr operator/(RationalExpr a, RationalExpr b) {
  return RationalExpr::product({std::move(a), RationalExpr::reciprocal(std::move(b))});
}

/// Auxiliary variable with its defining constraint and evaluation rule.
struct AuxVar {
  std::string name;
  std::string rule;     // human-readable closed form
  QuadPoly constraint;  // G_i(z), zero on the manifold
  std::function<double(const std::vector<double>&)> phi;  // reads z[0 .. own index)
};

struct QuadratizedSystem {
  std::size_t n = 0;  // original variables
  std::vector<AuxVar> aux;
  QuadPoly energy;  // lifted energy, quadratic in z
  std::function<double(const std::vector<double>&)> original;

  std::size_t d() const { return aux.size(); }
  std::size_t dim() const { return n + aux.size(); }

  std::vector<std::string> names() const {
    std::vector<std::string> s;
    for (std::size_t k = 0; k < n; ++k) s.push_back("x" + std::to_string(k));
    for (const auto& a : aux) s.push_back(a.name);
    return s;
  }

  /// j(x) = (x, phi(x)), filling auxiliaries in order.
  std::vector<double> embed(const std::vector<double>& x) const {
    if (x.size() != n) throw InvalidArgument("embed: expected " + std::to_string(n) + " values");
    std::vector<double> z = x;
    z.reserve(dim());
    for (const auto& a : aux) {
      const double v = a.phi(z);
      if (!std::isfinite(v)) throw NonFinite("auxiliary " + a.name);
      z.push_back(v);
    }
    return z;
  }

  double lifted_energy(const std::vector<double>& z) const { return energy(z); }

  std::string dump() const {
    const auto nm = names();
    std::ostringstream os;
    os << "variables " << n << " auxiliaries " << aux.size() << "\n";
    for (const auto& a : aux) {
      os << "aux " << a.name << " = " << a.rule << "\n";
      os << "constraint " << a.constraint.to_string(nm) << "\n";
    }
    os << "energy " << energy.to_string(nm) << "\n";
    return os.str();
  }
};

inline std::vector<double> casimir_residual(const QuadratizedSystem& sys,
                                            const std::vector<double>& z) {
  if (z.size() != sys.dim()) throw InvalidArgument("casimir_residual: state size mismatch");
  std::vector<double> r;
  r.reserve(sys.d());
  for (const auto& a : sys.aux) r.push_back(a.constraint(z));
  return r;
}

namespace detail {

class Quadratizer {
 public:
  explicit Quadratizer(std::size_t n) : n_(n) {}

  QuadratizedSystem finish(QuadPoly energy, std::function<double(const std::vector<double>&)> h) {
    QuadratizedSystem s;
    s.n = n_;
    s.aux = std::move(aux_);
    s.energy = std::move(energy);
    s.original = std::move(h);
    return s;
  }

  /// Quadratic representation, allowed at the top of the tree and across sums.
  QuadPoly top(const RationalExpr& e) {
    using K = RationalExpr::Kind;
    if (e.kind() == K::sum) {
      QuadPoly s;
      for (const auto& c : e.children()) s += top(c);
      return s;
    }
    if (e.kind() == K::product || e.kind() == K::power) {
      auto [coef, fs] = factors(e);
      return pair_down(std::move(fs), coef, true);
    }
    return linear(e);
  }

  /// Degree <= 1 representation; nonlinear nodes become auxiliaries.
  QuadPoly linear(const RationalExpr& e) {
    using K = RationalExpr::Kind;
    switch (e.kind()) {
      case K::constant:
        return QuadPoly(e.value());
      case K::variable:
        if (e.index() >= n_) throw InvalidArgument("expression variable index out of range");
        return QuadPoly::variable(e.index());
      case K::sum: {
        QuadPoly s;
        for (const auto& c : e.children()) s += linear(c);
        return s;
      }
      case K::product:
      case K::power: {
        auto [coef, fs] = factors(e);
        return pair_down(std::move(fs), coef, false);
      }
      case K::reciprocal:
        return reciprocal(linear(e.children()[0]));
      case K::root:
        return root(linear(e.children()[0]), static_cast<int>(e.index()));
    }
    return QuadPoly();
  }

  /// Aux y = a*b with constraint y - a*b.
  QuadPoly product_aux(const QuadPoly& a, const QuadPoly& b) {
    const auto nm = names();
    return add_aux("(" + a.to_string(nm) + ")*(" + b.to_string(nm) + ")",
                   [a, b](std::size_t k) { return QuadPoly::variable(k) - a * b; },
                   [a, b](const std::vector<double>& z) { return a(z) * b(z); });
  }

  /// Aux y = 1/a with constraint a*y - 1.
  QuadPoly reciprocal(const QuadPoly& a) {
    return add_aux("1/(" + a.to_string(names()) + ")",
                   [a](std::size_t k) { return a * QuadPoly::variable(k) - QuadPoly(1.0); },
                   [a](const std::vector<double>& z) {
                     const double v = a(z);
                     if (v == 0.0) throw SingularConstraint("reciprocal auxiliary at zero");
                     return 1.0 / v;
                   });
  }

  /// Binary-expansion chain for a^(1/q): u_0 = a^(1/q), u_{i+1} = u_i^2,
  /// v_{i+1} = v_i u_i^{b_i} with v_0 = 1, closed by a = v_s u_s^{b_s}.
  QuadPoly root(const QuadPoly& a, int q) {
    if (q < 2) throw InvalidArgument("root order must be >= 2");
    std::vector<int> bits;
    for (int r = q; r > 0; r >>= 1) bits.push_back(r & 1);
    const std::size_t s = bits.size() - 1;
    const std::size_t base = n_ + aux_.size();
    // Layout: u_0..u_s at base..base+s, then v_1..v_s.
    auto u = [base](std::size_t i) { return base + i; };
    auto v = [base, s](std::size_t i) { return base + s + i; };  // i >= 1
    auto vpoly = [&](std::size_t i) { return i == 0 ? QuadPoly(1.0) : QuadPoly::variable(v(i)); };
    const std::string tag = "root" + std::to_string(q);
    const auto nm = names();

    // u_0 is pinned by the terminal constraint a - v_s u_s^{b_s}.
    QuadPoly terminal = a - vpoly(s) * (bits[s] ? QuadPoly::variable(u(s)) : QuadPoly(1.0));
    push(tag + "(" + a.to_string(nm) + ")", "u0", terminal,
         [a, q](const std::vector<double>& z) { return RationalExpr::real_root(a(z), q); });
    for (std::size_t i = 0; i < s; ++i) {
      const std::size_t ui = u(i);
      push("u" + std::to_string(i) + "^2", "u" + std::to_string(i + 1),
           QuadPoly::variable(u(i + 1)) - QuadPoly::variable(ui) * QuadPoly::variable(ui),
           [ui](const std::vector<double>& z) { return z[ui] * z[ui]; });
    }
    for (std::size_t i = 0; i < s; ++i) {
      const QuadPoly prev = vpoly(i);
      const QuadPoly factor = bits[i] ? QuadPoly::variable(u(i)) : QuadPoly(1.0);
      push("v" + std::to_string(i) + (bits[i] ? "*u" + std::to_string(i) : std::string()),
           "v" + std::to_string(i + 1), QuadPoly::variable(v(i + 1)) - prev * factor,
           [prev, factor](const std::vector<double>& z) { return prev(z) * factor(z); });
    }
    return QuadPoly::variable(u(0));
  }

 private:
  std::vector<std::string> names() const {
    std::vector<std::string> s;
    for (std::size_t k = 0; k < n_; ++k) s.push_back("x" + std::to_string(k));
    for (const auto& a : aux_) s.push_back(a.name);
    return s;
  }

  void push(std::string rule, std::string local, QuadPoly g,
            std::function<double(const std::vector<double>&)> phi) {
    aux_.push_back({"y" + std::to_string(aux_.size()) + (local.empty() ? "" : "_" + local),
                    std::move(rule), std::move(g), std::move(phi)});
  }

  template <class MakeG>
  QuadPoly add_aux(std::string rule, MakeG&& make_g,
                   std::function<double(const std::vector<double>&)> phi) {
    const std::size_t k = n_ + aux_.size();
    push(std::move(rule), "", make_g(k), std::move(phi));
    return QuadPoly::variable(k);
  }

  /// Flattens a product/power node into a scalar coefficient and linear factors.
  std::pair<double, std::vector<QuadPoly>> factors(const RationalExpr& e) {
    using K = RationalExpr::Kind;
    double coef = 1.0;
    std::vector<QuadPoly> fs;
    std::function<void(const RationalExpr&, std::size_t)> collect = [&](const RationalExpr& x,
                                                                        std::size_t times) {
      if (times == 0) return;
      if (x.kind() == K::constant) {
        for (std::size_t t = 0; t < times; ++t) coef *= x.value();
      } else if (x.kind() == K::product) {
        for (const auto& c : x.children()) collect(c, times);
      } else if (x.kind() == K::power) {
        collect(x.children()[0], times * x.index());
      } else {
        const QuadPoly l = linear(x);
        for (std::size_t t = 0; t < times; ++t) fs.push_back(l);
      }
    };
    collect(e, 1);
    return {coef, std::move(fs)};
  }

  /// Pairs factors left to right, round by round, until at most `keep`
  /// remain (2 when a quadratic result is allowed, else 1).
  QuadPoly pair_down(std::vector<QuadPoly> fs, double coef, bool allow_quadratic) {
    const std::size_t keep = allow_quadratic ? 2 : 1;
    while (fs.size() > keep) {
      std::vector<QuadPoly> next;
      for (std::size_t i = 0; i + 1 < fs.size(); i += 2) next.push_back(product_aux(fs[i], fs[i + 1]));
      if (fs.size() % 2 == 1) next.push_back(fs.back());
      fs = std::move(next);
    }
    if (fs.empty()) return QuadPoly(coef);
    if (fs.size() == 1) return coef * fs[0];
    return coef * (fs[0] * fs[1]);
  }

  std::size_t n_;
  std::vector<AuxVar> aux_;
};

}  // namespace detail

/// Quadratizes an arbitrary rational-like expression in n variables.
inline QuadratizedSystem quadratize(const RationalExpr& h, std::size_t n) {
  if (h.arity() > n) throw InvalidArgument("expression uses more than n variables");
  detail::Quadratizer q(n);
  QuadPoly e = q.top(h);
  return q.finish(std::move(e), [h](const std::vector<double>& x) { return h(x); });
}

/// prod_i x_i^{e_i}.
inline QuadratizedSystem quadratize_monomial(const std::vector<int>& exponents) {
  if (exponents.empty()) throw InvalidArgument("empty exponent list");
  std::vector<RationalExpr> fs;
  int total = 0;
  for (std::size_t i = 0; i < exponents.size(); ++i) {
    if (exponents[i] < 0) throw InvalidArgument("negative exponent");
    total += exponents[i];
    for (int k = 0; k < exponents[i]; ++k) fs.push_back(RationalExpr::variable(i));
  }
  if (total < 1) throw InvalidArgument("monomial degree must be >= 1");
  return quadratize(RationalExpr::product(std::move(fs)), exponents.size());
}

/// x^(1/q) in one variable.
inline QuadratizedSystem quadratize_root(int q) {
  if (q < 2) throw InvalidArgument("root order must be >= 2");
  return quadratize(RationalExpr::root(RationalExpr::variable(0), q), 1);
}

/// 1/x in one variable.
inline QuadratizedSystem quadratize_reciprocal() {
  return quadratize(RationalExpr::reciprocal(RationalExpr::variable(0)), 1);
}

/// Constraint Jacobian blocks N = dG/dx (d x n) and M = dG/dy (d x d).
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> constraint_jacobian(
    const QuadratizedSystem& sys, const std::vector<double>& z) {
  const std::size_t n = sys.n, d = sys.d();
  Eigen::MatrixXd N(d, n), M(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    const auto g = sys.aux[i].constraint.gradient(z);
    for (std::size_t j = 0; j < n; ++j) N(i, j) = g[j];
    for (std::size_t j = 0; j < d; ++j) M(i, j) = g[n + j];
  }
  return {N, M};
}

namespace detail {

/// Solves M w = r in the least-squares sense; throws SingularLift when M
/// loses column rank at tolerance 1e-10 |M|.
inline Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& M, const Eigen::VectorXd& r) {
  if (M.cols() == 0) return Eigen::VectorXd(0);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
  const Eigen::VectorXd diag = qr.matrixQR().diagonal().cwiseAbs();
  const double dmax = diag.maxCoeff();
  const double dmin = diag.minCoeff();
  if (!(dmax > 0.0) || dmin <= 1e-10 * M.norm()) {
    throw SingularLift("constraint Jacobian block M is rank deficient",
                       dmin > 0.0 ? dmax / dmin : INFINITY);
  }
  return qr.solve(r);
}

}  // namespace detail

/// Lifted vector field F(z) = (f~(z), -M^+ N f~(z)).
class ExtendedOde {
 public:
  using Field = std::function<std::vector<double>(const std::vector<double>&)>;

  ExtendedOde(QuadratizedSystem sys, Field ftilde) : sys_(std::move(sys)), f_(std::move(ftilde)) {}

  const QuadratizedSystem& system() const { return sys_; }

  std::vector<double> operator()(const std::vector<double>& z) const {
    if (z.size() != sys_.dim()) throw InvalidArgument("ExtendedOde: state size mismatch");
    const std::vector<double> fx = f_(z);
    if (fx.size() != sys_.n) throw InvalidArgument("ExtendedOde: field returned wrong size");
    std::vector<double> out(fx);
    if (sys_.d() == 0) return out;
    const auto [N, M] = constraint_jacobian(sys_, z);
    const Eigen::VectorXd r = N * Eigen::Map<const Eigen::VectorXd>(fx.data(), fx.size());
    const Eigen::VectorXd w = detail::pinv_solve(M, r);
    for (Eigen::Index i = 0; i < w.size(); ++i) out.push_back(-w[i]);
    return out;
  }

 private:
  QuadratizedSystem sys_;
  Field f_;
};

/// Lift with f~(x, y) = f(x).
inline ExtendedOde lift(std::function<std::vector<double>(const std::vector<double>&)> f,
                        QuadratizedSystem sys) {
  const std::size_t n = sys.n;
  return ExtendedOde(std::move(sys), [f = std::move(f), n](const std::vector<double>& z) {
    return f(std::vector<double>(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(n)));
  });
}

/// Lift of x' = S grad H(x) with f~ = S (grad_x H~ - (M^+ N)^T grad_y H~).
/// On the manifold this equals S grad H; off it, grad H~ . F = w^T S w, so
/// the midpoint rule conserves H~ for skew S and dissipates it for S <= 0.
inline ExtendedOde lift_structured(QuadratizedSystem sys, Eigen::MatrixXd S) {
  const std::size_t n = sys.n, d = sys.d();
  if (S.rows() != static_cast<Eigen::Index>(n) || S.cols() != static_cast<Eigen::Index>(n))
    throw InvalidArgument("structure matrix must be n x n");
  auto held = std::make_shared<const QuadratizedSystem>(sys);
  auto field = [held, S, n, d](const std::vector<double>& z) {
    const auto g = held->energy.gradient(z);
    Eigen::VectorXd w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = g[i];
    if (d > 0) {
      const auto [N, M] = constraint_jacobian(*held, z);
      Eigen::VectorXd gy(d);
      for (std::size_t i = 0; i < d; ++i) gy[i] = g[n + i];
      const Eigen::MatrixXd Mt = M.transpose();
      w -= N.transpose() * detail::pinv_solve(Mt, gy);
    }
    const Eigen::VectorXd f = S * w;
    return std::vector<double>(f.data(), f.data() + f.size());
  };
  return ExtendedOde(std::move(sys), field);
}

/// One implicit midpoint step z1 = z0 + dt F((z0 + z1)/2).
inline std::vector<double> midpoint_step(const ExtendedOde& ode, const std::vector<double>& z,
                                         double dt, const FixedPointConfig& fp = {},
                                         SolveReport* report = nullptr) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (z.size() != ode.system().dim()) throw InvalidArgument("midpoint_step: state size mismatch");
  auto T = [&](const std::vector<double>& x) {
    std::vector<double> mid(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) mid[k] = 0.5 * (x[k] + z[k]);
    const auto f = ode(mid);
    std::vector<double> out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = z[k] + dt * f[k];
    return out;
  };
  auto [z1, rep] = fixed_point_solve(T, z, fp);
  if (report) *report = rep;
  return z1;
}

}  // namespace qce
