#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hapsnet::conic {

/// Membership ||F x + g|| <= d'x + e.
struct SecondOrderCone {
  Eigen::MatrixXd F;
  Eigen::VectorXd g;
  Eigen::VectorXd d;
  double e = 0.0;
};

/// Membership p'x + q <= log(r'x + s), i.e. exp(p'x + q) <= r'x + s.
/// Covers epigraphs t <= log(u) of the log-rate objective.
struct ExpCone {
  Eigen::VectorXd p;
  double q = 0.0;
  Eigen::VectorXd r;
  double s = 0.0;
};

struct LinearTerm {
  Eigen::VectorXd a;
  double b = 0.0;
};

/// Linear-objective convex program over affine, second-order-cone and
/// exponential-cone constraints. Complex quantities enter through the
/// interleaved re/im lifting documented in beamforming.hpp. Immutable once
/// handed to solve().
class ConeProgram {
 public:
  explicit ConeProgram(int num_vars) : n_(num_vars), c_(Eigen::VectorXd::Zero(num_vars)) {
    if (num_vars < 1) throw std::invalid_argument("ConeProgram: need at least one variable");
  }

  void set_objective(Eigen::VectorXd c) {
    check_dim(c.size(), "objective");
    c_ = std::move(c);
  }

  void add_equality(Eigen::VectorXd a, double b) {
    check_dim(a.size(), "equality");
    eqs_.push_back({std::move(a), b});
  }

  void add_inequality(Eigen::VectorXd a, double b) {
    check_dim(a.size(), "inequality");
    ineqs_.push_back({std::move(a), b});
  }

  void add_soc(SecondOrderCone soc) {
    check_dim(soc.F.cols(), "soc F");
    check_dim(soc.d.size(), "soc d");
    if (soc.F.rows() != soc.g.size())
      throw std::invalid_argument("ConeProgram: soc F/g row mismatch");
    socs_.push_back(std::move(soc));
  }

  void add_soc(Eigen::MatrixXd F, Eigen::VectorXd g, Eigen::VectorXd d, double e) {
    add_soc(SecondOrderCone{std::move(F), std::move(g), std::move(d), e});
  }

  void add_exp(Eigen::VectorXd p, double q, Eigen::VectorXd r, double s) {
    check_dim(p.size(), "exp p");
    check_dim(r.size(), "exp r");
    exps_.push_back(ExpCone{std::move(p), q, std::move(r), s});
  }

  int num_vars() const { return n_; }
  const Eigen::VectorXd& objective() const { return c_; }
  const std::vector<LinearTerm>& equalities() const { return eqs_; }
  const std::vector<LinearTerm>& inequalities() const { return ineqs_; }
  const std::vector<SecondOrderCone>& socs() const { return socs_; }
  const std::vector<ExpCone>& exps() const { return exps_; }

  /// Text dump (objective, then cone blocks) for cross-checking against
  /// external solvers. %.17g fields round-trip exactly.
  void dump(std::ostream& out) const {
    const auto num = [&out](double v) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << buf;
    };
    const auto vec = [&](const Eigen::VectorXd& v) {
      for (int k = 0; k < v.size(); ++k) {
        if (k) out << ' ';
        num(v(k));
      }
      out << '\n';
    };
    out << "hapsnet-coneprogram v1\nvars " << n_ << "\nmaximize\n";
    vec(c_);
    out << "eq " << eqs_.size() << '\n';
    for (const auto& t : eqs_) { vec(t.a); num(t.b); out << '\n'; }
    out << "ineq " << ineqs_.size() << '\n';
    for (const auto& t : ineqs_) { vec(t.a); num(t.b); out << '\n'; }
    out << "soc " << socs_.size() << '\n';
    for (const auto& c : socs_) {
      out << "rows " << c.F.rows() << '\n';
      for (int r = 0; r < c.F.rows(); ++r) vec(c.F.row(r));
      vec(c.g);
      vec(c.d);
      num(c.e);
      out << '\n';
    }
    out << "exp " << exps_.size() << '\n';
    for (const auto& c : exps_) {
      vec(c.p);
      num(c.q);
      out << '\n';
      vec(c.r);
      num(c.s);
      out << '\n';
    }
  }

 private:
  void check_dim(Eigen::Index got, const char* what) const {
    if (got != n_)
      throw std::invalid_argument(std::string("ConeProgram: ") + what + " dimension mismatch");
  }

  int n_;
  Eigen::VectorXd c_;
  std::vector<LinearTerm> eqs_, ineqs_;
  std::vector<SecondOrderCone> socs_;
  std::vector<ExpCone> exps_;
};

/// Rotated-cone identity: ||Ax + b||^2 <= d'x + e becomes the second-order
/// cone ||(2(Ax+b); d'x+e-1)|| <= d'x+e+1 with an identical feasible set.
inline SecondOrderCone quad_to_soc(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                   const Eigen::VectorXd& d, double e) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  SecondOrderCone soc;
  soc.F.resize(m + 1, n);
  soc.F.topRows(m) = 2.0 * A;
  soc.F.row(m) = d.transpose();
  soc.g.resize(m + 1);
  soc.g.head(m) = 2.0 * b;
  soc.g(m) = e - 1.0;
  soc.d = d;
  soc.e = e + 1.0;
  return soc;
}

enum class SolveStatus { optimal, infeasible, unbounded, max_iters };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    default: return "max_iters";
  }
}

/// Normalised KKT residuals; all three are <= the solve tolerance whenever
/// the status is optimal.
struct Residuals {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
};

struct SolverOptions {
  double tol = 1e-8;
  int max_newton = 20000;  // total Newton-step budget across both phases
  double mu = 20.0;        // barrier parameter growth
};

struct ConeSolution {
  Eigen::VectorXd x;
  double objective = 0.0;
  SolveStatus status = SolveStatus::max_iters;
  Residuals residuals;
  int newton_steps = 0;
};

namespace detail {

// Log barrier over the program's inequality/SOC/exp blocks.
//   linear:  -log(b - a'x)                       (nu += 1)
//   soc:     -log((d'x+e)^2 - ||Fx+g||^2)        (nu += 2)
//   exp:     -log(log(v) - u) - log(v)           (nu += 2), u = p'x+q, v = r'x+s
class Barrier {
 public:
  explicit Barrier(const ConeProgram& prog)
      : ineqs_(prog.inequalities()), socs_(prog.socs()), exps_(prog.exps()) {}

  double nu() const {
    return static_cast<double>(ineqs_.size()) + 2.0 * socs_.size() + 2.0 * exps_.size();
  }

  bool empty() const { return ineqs_.empty() && socs_.empty() && exps_.empty(); }

  /// Barrier value; returns false when x is outside the domain.
  bool value(const Eigen::VectorXd& x, double* phi) const {
    double acc = 0.0;
    for (const auto& t : ineqs_) {
      const double slack = t.b - t.a.dot(x);
      if (!(slack > 0.0)) return false;
      acc -= std::log(slack);
    }
    for (const auto& c : socs_) {
      const double ea = c.d.dot(x) + c.e;
      if (!(ea > 0.0)) return false;
      const double dd = ea * ea - (c.F * x + c.g).squaredNorm();
      if (!(dd > 0.0)) return false;
      acc -= std::log(dd);
    }
    for (const auto& c : exps_) {
      const double u = c.p.dot(x) + c.q;
      const double v = c.r.dot(x) + c.s;
      if (!(v > 0.0)) return false;
      const double z = std::log(v) - u;
      if (!(z > 0.0)) return false;
      acc -= std::log(z) + std::log(v);
    }
    if (!std::isfinite(acc)) return false;
    *phi = acc;
    return true;
  }

  void add_grad_hess(const Eigen::VectorXd& x, Eigen::VectorXd& grad,
                     Eigen::MatrixXd& hess) const {
    for (const auto& t : ineqs_) {
      const double slack = t.b - t.a.dot(x);
      grad.noalias() += t.a / slack;
      hess.selfadjointView<Eigen::Lower>().rankUpdate(t.a, 1.0 / (slack * slack));
    }
    for (const auto& c : socs_) {
      const double ea = c.d.dot(x) + c.e;
      const Eigen::VectorXd f = c.F * x + c.g;
      const double dd = ea * ea - f.squaredNorm();
      const Eigen::VectorXd w = c.F.transpose() * f - ea * c.d;
      grad.noalias() += (2.0 / dd) * w;
      hess.selfadjointView<Eigen::Lower>().rankUpdate(c.F.transpose(), 2.0 / dd);
      hess.selfadjointView<Eigen::Lower>().rankUpdate(c.d, -2.0 / dd);
      hess.selfadjointView<Eigen::Lower>().rankUpdate(w, 4.0 / (dd * dd));
    }
    for (const auto& c : exps_) {
      const double u = c.p.dot(x) + c.q;
      const double v = c.r.dot(x) + c.s;
      const double z = std::log(v) - u;
      grad.noalias() += (1.0 / z) * c.p - ((1.0 / z + 1.0) / v) * c.r;
      const double huu = 1.0 / (z * z);
      const double huv = -1.0 / (z * z * v);
      const double hvv = (1.0 + z) / (z * z * v * v) + 1.0 / (v * v);
      // rank-two update in the span of p and r
      hess.selfadjointView<Eigen::Lower>().rankUpdate(c.p, huu);
      hess.selfadjointView<Eigen::Lower>().rankUpdate(c.r, hvv);
      hess.triangularView<Eigen::Lower>() += huv * (c.p * c.r.transpose()) +
                                             huv * (c.r * c.p.transpose());
    }
  }

  /// Worst constraint violation at x (positive means infeasible); used for
  /// the phase-1 start and for primal residual reporting.
  double max_violation(const Eigen::VectorXd& x) const {
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& t : ineqs_) worst = std::max(worst, t.a.dot(x) - t.b);
    for (const auto& c : socs_)
      worst = std::max(worst, (c.F * x + c.g).norm() - (c.d.dot(x) + c.e));
    for (const auto& c : exps_) {
      const double u = c.p.dot(x) + c.q;
      const double v = c.r.dot(x) + c.s;
      worst = std::max(worst, -v);  // need v > 0
      const double ecap = u < 690.0 ? std::exp(u) : std::exp(690.0);
      worst = std::max(worst, ecap - v);
    }
    return worst == -std::numeric_limits<double>::infinity() ? 0.0 : worst;
  }

 private:
  std::vector<LinearTerm> ineqs_;
  std::vector<SecondOrderCone> socs_;
  std::vector<ExpCone> exps_;
};

struct CenterOutcome {
  bool centered = false;
  bool diverged = false;
  bool stalled = false;
  int newton_used = 0;
  Eigen::VectorXd eq_dual;  // multiplier estimates for the equality rows
};

// One centering run: minimize t * c_min'x + Phi(x) subject to Aeq x = beq,
// damped Newton from a strictly feasible x. Early-exit hook for phase 1.
class Centerer {
 public:
  Centerer(const Barrier& barrier, const Eigen::MatrixXd& aeq, const Eigen::VectorXd& beq)
      : barrier_(barrier), aeq_(aeq), beq_(beq) {}

  template <typename EarlyExit>
  CenterOutcome run(const Eigen::VectorXd& c_min, double t, Eigen::VectorXd& x,
                    int newton_budget, const EarlyExit& early_exit) const {
    const int n = static_cast<int>(x.size());
    const int m = static_cast<int>(aeq_.rows());
    CenterOutcome out;
    out.eq_dual = Eigen::VectorXd::Zero(m);

    Eigen::VectorXd grad(n), dx(n);
    Eigen::MatrixXd hess(n, n);
    for (int it = 0; it < kMaxNewtonPerCenter && out.newton_used < newton_budget; ++it) {
      grad = t * c_min;
      hess.setZero();
      barrier_.add_grad_hess(x, grad, hess);
      hess.triangularView<Eigen::StrictlyUpper>() =
          hess.triangularView<Eigen::StrictlyLower>().transpose();

      double reg = 1e-12 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
      Eigen::LLT<Eigen::MatrixXd> llt;
      for (int attempt = 0; attempt < 8; ++attempt) {
        llt.compute(hess + reg * Eigen::MatrixXd::Identity(n, n));
        if (llt.info() == Eigen::Success) break;
        reg *= 100.0;
      }
      if (llt.info() != Eigen::Success) { out.stalled = true; break; }

      if (m == 0) {
        dx = -llt.solve(grad);
      } else {
        const Eigen::VectorXd hi_g = llt.solve(grad);
        const Eigen::MatrixXd hi_at = llt.solve(aeq_.transpose());
        const Eigen::MatrixXd schur = aeq_ * hi_at;
        const Eigen::VectorXd r_eq = beq_ - aeq_ * x;
        out.eq_dual = schur.ldlt().solve(-(aeq_ * hi_g) - r_eq);
        dx = -hi_g - hi_at * out.eq_dual;
      }

      const double lambda2 = std::max(0.0, -grad.dot(dx));
      if (lambda2 * 0.5 <= kCenterTol) { out.centered = true; break; }

      double phi0 = 0.0;
      if (!barrier_.value(x, &phi0)) { out.stalled = true; break; }
      phi0 += t * c_min.dot(x);

      double alpha = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 64; ++ls, alpha *= 0.5) {
        const Eigen::VectorXd cand = x + alpha * dx;
        double phi = 0.0;
        if (!barrier_.value(cand, &phi)) continue;
        phi += t * c_min.dot(cand);
        if (phi <= phi0 - 0.01 * alpha * lambda2) {
          x = cand;
          accepted = true;
          break;
        }
      }
      ++out.newton_used;
      if (!accepted) { out.stalled = true; break; }

      if (x.cwiseAbs().maxCoeff() > kDivergeNorm || std::abs(c_min.dot(x)) > kDivergeObj) {
        out.diverged = true;
        break;
      }
      if (early_exit(x)) { out.centered = true; break; }
    }
    return out;
  }

  static constexpr int kMaxNewtonPerCenter = 200;
  static constexpr double kCenterTol = 1e-13;
  static constexpr double kDivergeNorm = 1e13;
  static constexpr double kDivergeObj = 1e12;

 private:
  const Barrier& barrier_;
  const Eigen::MatrixXd& aeq_;
  const Eigen::VectorXd& beq_;
};

inline void stack_equalities(const ConeProgram& prog, Eigen::MatrixXd& aeq,
                             Eigen::VectorXd& beq) {
  const int m = static_cast<int>(prog.equalities().size());
  aeq.resize(m, prog.num_vars());
  beq.resize(m);
  for (int k = 0; k < m; ++k) {
    aeq.row(k) = prog.equalities()[k].a.transpose();
    beq(k) = prog.equalities()[k].b;
  }
}

// Phase 1: minimize s over (x, s) with every constraint relaxed by s.
// Returns true with a strictly feasible x on success; false means the
// program has no (interior) feasible point.
inline bool phase_one(const ConeProgram& prog, const Barrier& orig_barrier,
                      const Eigen::MatrixXd& aeq, const Eigen::VectorXd& beq,
                      Eigen::VectorXd& x, int newton_budget, int* newton_used) {
  const int n = prog.num_vars();
  ConeProgram relaxed(n + 1);
  for (const auto& t : prog.inequalities()) {
    Eigen::VectorXd a(n + 1);
    a << t.a, -1.0;
    relaxed.add_inequality(std::move(a), t.b);
  }
  for (const auto& c : prog.socs()) {
    SecondOrderCone soc;
    soc.F.resize(c.F.rows(), n + 1);
    soc.F << c.F, Eigen::VectorXd::Zero(c.F.rows());
    soc.g = c.g;
    soc.d.resize(n + 1);
    soc.d << c.d, 1.0;
    soc.e = c.e;
    relaxed.add_soc(std::move(soc));
  }
  for (const auto& c : prog.exps()) {
    Eigen::VectorXd p(n + 1), r(n + 1);
    p << c.p, 0.0;
    r << c.r, 1.0;
    relaxed.add_exp(std::move(p), c.q, std::move(r), c.s);
  }
  Eigen::MatrixXd aeq1(aeq.rows(), n + 1);
  if (aeq.rows() > 0) aeq1 << aeq, Eigen::VectorXd::Zero(aeq.rows());

  const double s0 = 1.0 + std::max(0.0, orig_barrier.max_violation(x));
  Eigen::VectorXd y(n + 1);
  y << x, s0;

  const Barrier barrier(relaxed);
  const Centerer centerer(barrier, aeq1, beq);
  Eigen::VectorXd c_min = Eigen::VectorXd::Zero(n + 1);
  c_min(n) = 1.0;  // minimize s

  const double exit_level = -1e-9 * (1.0 + s0);
  const auto early = [&](const Eigen::VectorXd& cur) { return cur(n) <= exit_level; };

  double t = 1.0;
  const double nu = barrier.nu();
  for (int stage = 0; stage < 64; ++stage) {
    const auto out = centerer.run(c_min, t, y, newton_budget - *newton_used, early);
    *newton_used += out.newton_used;
    if (y(n) <= exit_level) { x = y.head(n); return true; }
    if (out.diverged || *newton_used >= newton_budget) break;
    if (nu / t <= 1e-10 * (1.0 + std::abs(y(n)))) break;
    t *= 20.0;
  }
  if (y(n) < 0.0) {  // feasible but with a thin margin; still usable
    double phi = 0.0;
    if (orig_barrier.value(y.head(n), &phi)) { x = y.head(n); return true; }
  }
  return false;
}

}  // namespace detail

/// Barrier interior-point solve of `prog` (maximisation). Deterministic:
/// identical programs yield identical solutions. Statuses are always
/// explicit; `max_iters` returns the best iterate with its residuals.
/// Programs whose feasible set has an empty interior are reported
/// infeasible.
inline ConeSolution solve(const ConeProgram& prog, const SolverOptions& options = {}) {
  const int n = prog.num_vars();
  ConeSolution sol;
  sol.x = Eigen::VectorXd::Zero(n);

  Eigen::MatrixXd aeq;
  Eigen::VectorXd beq;
  detail::stack_equalities(prog, aeq, beq);

  // Start from the minimum-norm solution of the equality rows (zero without
  // equalities).
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  if (aeq.rows() > 0)
    x = aeq.completeOrthogonalDecomposition().solve(beq);

  const detail::Barrier barrier(prog);
  int newton_used = 0;

  double phi_probe = 0.0;
  const bool start_feasible = barrier.value(x, &phi_probe);
  if (!start_feasible) {
    if (!detail::phase_one(prog, barrier, aeq, beq, x, options.max_newton, &newton_used)) {
      sol.status = newton_used >= options.max_newton ? SolveStatus::max_iters
                                                     : SolveStatus::infeasible;
      sol.x = x;
      sol.newton_steps = newton_used;
      sol.residuals.primal = std::max(0.0, barrier.max_violation(x));
      return sol;
    }
  }

  const Eigen::VectorXd& c = prog.objective();
  const double c_scale = c.size() > 0 ? c.cwiseAbs().maxCoeff() : 0.0;
  const detail::Centerer centerer(barrier, aeq, beq);
  const auto no_exit = [](const Eigen::VectorXd&) { return false; };

  Eigen::VectorXd eq_dual = Eigen::VectorXd::Zero(aeq.rows());
  double t_final = 1.0;

  if (c_scale > 0.0 && !barrier.empty()) {
    const Eigen::VectorXd c_min = -c / c_scale;  // normalised minimisation objective
    const double nu = barrier.nu();
    double t = std::max(1.0, nu / (1.0 + std::abs(c_min.dot(x))));
    bool done = false;
    for (int stage = 0; stage < 128; ++stage) {
      const auto out = centerer.run(c_min, t, x, options.max_newton - newton_used, no_exit);
      newton_used += out.newton_used;
      eq_dual = out.eq_dual;
      t_final = t;
      if (out.diverged) {
        sol.status = SolveStatus::unbounded;
        sol.x = x;
        sol.objective = c.dot(x);
        sol.newton_steps = newton_used;
        return sol;
      }
      if (newton_used >= options.max_newton) break;
      const double gap = nu / t;
      if (gap <= options.tol * (1.0 + std::abs(c_min.dot(x)))) { done = true; break; }
      if (out.stalled && !out.centered) break;
      t *= options.mu;
    }
    sol.status = done ? SolveStatus::optimal : SolveStatus::max_iters;
  } else if (c_scale > 0.0 && barrier.empty()) {
    // No cone terms: the objective is bounded only when c lies in the row
    // space of the equality matrix (constant over the feasible affine set).
    Eigen::VectorXd c_proj = c;
    if (aeq.rows() > 0)
      c_proj -= aeq.transpose() * aeq.transpose().completeOrthogonalDecomposition().solve(c);
    if (c_proj.cwiseAbs().maxCoeff() > 1e-12 * c_scale) {
      sol.status = SolveStatus::unbounded;
      sol.x = x;
      sol.objective = c.dot(x);
      sol.newton_steps = newton_used;
      return sol;
    }
    sol.status = SolveStatus::optimal;
  } else {
    sol.status = SolveStatus::optimal;  // feasibility-only
  }

  sol.x = x;
  sol.objective = c.dot(x);
  sol.newton_steps = newton_used;

  // Residuals at the returned point.
  const double eq_res = aeq.rows() > 0 ? (aeq * x - beq).cwiseAbs().maxCoeff() /
                                             (1.0 + beq.cwiseAbs().maxCoeff())
                                       : 0.0;
  sol.residuals.primal = std::max(eq_res, std::max(0.0, barrier.max_violation(x)));
  if (c_scale > 0.0 && !barrier.empty()) {
    const Eigen::VectorXd c_min = -c / c_scale;
    Eigen::VectorXd grad = t_final * c_min;
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(n, n);
    barrier.add_grad_hess(x, grad, hess);
    if (aeq.rows() > 0) grad.noalias() += aeq.transpose() * eq_dual;
    sol.residuals.dual = grad.cwiseAbs().maxCoeff() / (t_final * (1.0 + 1.0));
    sol.residuals.gap = (barrier.nu() / t_final) / (1.0 + std::abs(c_min.dot(x)));
  }
  if (sol.status == SolveStatus::optimal &&
      (sol.residuals.dual > options.tol || sol.residuals.primal > options.tol))
    sol.status = SolveStatus::max_iters;
  return sol;
}

inline ConeSolution solve(const ConeProgram& prog, double tol) {
  SolverOptions opts;
  opts.tol = tol;
  return solve(prog, opts);
}

}  // namespace hapsnet::conic
