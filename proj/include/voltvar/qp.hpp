#pragma once

// Dense strictly convex QP
//
//   min  1/2 x'Hx + c'x   s.t.  lower <= A x <= upper
//
// solved with the Goldfarb-Idnani dual active-set method, and an independent
// KKT checker that recovers multipliers by nonnegative least squares.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace voltvar::qp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Problem {
  MatrixXd H;      // m x m, positive definite
  VectorXd c;      // m
  MatrixXd A;      // k x m
  VectorXd lower;  // k, -inf allowed
  VectorXd upper;  // k, +inf allowed

  Eigen::Index dim() const { return H.rows(); }
  Eigen::Index rows() const { return A.rows(); }

  double objective(const VectorXd& x) const { return 0.5 * x.dot(H * x) + c.dot(x); }
};

enum class Status { Optimal, Infeasible, MaxIter };

struct Options {
  int max_iter = 0;           // 0 picks 10 * (dim + 2 * rows)
  double feas_tol = 1e-13;    // on row-normalized slacks
};

struct Result {
  VectorXd x;
  Status status = Status::MaxIter;
  /// Signed multiplier per row: positive when the lower side binds,
  /// negative when the upper side binds.
  VectorXd multipliers;
  int iterations = 0;
  /// Row whose constraint could not be satisfied when status is Infeasible.
  Eigen::Index blocking_row = -1;
};

namespace detail {

// One-sided constraint n'x >= b built from a side of a two-sided row,
// normalized so that ||n|| = 1.
struct Side {
  Eigen::Index row;
  double sign;   // +1 lower side, -1 upper side
  double scale;  // 1 / ||a_row||
  double b;
};

}  // namespace detail

/// Goldfarb-Idnani. Starts from the unconstrained minimizer and adds the most
/// violated constraint each outer step, dropping constraints whose multipliers
/// would turn negative. Rows with an all-zero normal are treated as constant
/// constraints and checked up front.
inline Result solve(const Problem& pb, const Options& opt = {}) {
  const Eigen::Index m = pb.dim();
  const Eigen::Index k = pb.rows();
  Result res;
  res.multipliers = VectorXd::Zero(k);

  std::vector<detail::Side> sides;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double norm = pb.A.row(i).norm();
    if (norm == 0.0) {
      if (pb.lower(i) > 0.0 || pb.upper(i) < 0.0) {
        res.x = VectorXd::Zero(m);
        res.status = Status::Infeasible;
        res.blocking_row = i;
        return res;
      }
      continue;
    }
    if (pb.lower(i) > pb.upper(i)) {
      res.x = VectorXd::Zero(m);
      res.status = Status::Infeasible;
      res.blocking_row = i;
      return res;
    }
    if (std::isfinite(pb.lower(i))) sides.push_back({i, 1.0, 1.0 / norm, pb.lower(i) / norm});
    if (std::isfinite(pb.upper(i))) sides.push_back({i, -1.0, 1.0 / norm, -pb.upper(i) / norm});
  }
  auto normal = [&](const detail::Side& s) -> VectorXd {
    return s.sign * s.scale * pb.A.row(s.row).transpose();
  };
  auto slack = [&](const detail::Side& s, const VectorXd& x) {
    return s.sign * s.scale * pb.A.row(s.row).dot(x) - s.b;
  };

  const Eigen::LLT<MatrixXd> llt(pb.H);
  const MatrixXd Linv = llt.matrixL().solve(MatrixXd::Identity(m, m));
  VectorXd x = -llt.solve(pb.c);

  std::vector<std::size_t> active;  // indices into sides
  std::vector<double> u;            // multipliers of active sides
  std::vector<char> in_active(sides.size(), 0);

  const int cap = opt.max_iter > 0 ? opt.max_iter : 10 * static_cast<int>(m + 2 * k) + 10;
  int iter = 0;
  while (true) {
    // most violated inactive constraint
    std::size_t p = sides.size();
    double worst = -opt.feas_tol;
    for (std::size_t i = 0; i < sides.size(); ++i) {
      if (in_active[i]) continue;
      const double s = slack(sides[i], x);
      if (s < worst) {
        worst = s;
        p = i;
      }
    }
    if (p == sides.size()) {
      res.status = Status::Optimal;
      break;
    }
    const VectorXd np = normal(sides[p]);
    double up = 0.0;

    bool added = false;
    while (!added) {
      if (++iter > cap) {
        res.status = Status::MaxIter;
        break;
      }
      const auto q = static_cast<Eigen::Index>(active.size());
      const VectorXd d = Linv * np;
      VectorXd z;
      VectorXd r;
      if (q > 0) {
        MatrixXd B(m, q);
        for (Eigen::Index a = 0; a < q; ++a) B.col(a) = Linv * normal(sides[active[a]]);
        const Eigen::HouseholderQR<MatrixXd> qr(B);
        const MatrixXd Qfull = qr.householderQ();
        const VectorXd proj = Qfull.transpose() * d;
        const auto R = qr.matrixQR().topLeftCorner(q, q).triangularView<Eigen::Upper>();
        r = R.solve(proj.head(q));
        VectorXd tail = VectorXd::Zero(m);
        if (m > q) tail.tail(m - q) = proj.tail(m - q);
        z = Linv.transpose() * (Qfull * tail);
      } else {
        r.resize(0);
        z = Linv.transpose() * d;
      }

      // partial step: first active multiplier to reach zero
      double t1 = kInf;
      Eigen::Index drop = -1;
      for (Eigen::Index a = 0; a < q; ++a) {
        if (r(a) > 1e-14) {
          const double t = u[a] / r(a);
          if (t < t1) {
            t1 = t;
            drop = a;
          }
        }
      }
      // full step: makes constraint p active
      const double zn = z.dot(np);
      const double sp = slack(sides[p], x);
      const double t2 = zn > 1e-12 * d.squaredNorm() ? -sp / zn : kInf;

      if (t1 == kInf && t2 == kInf) {
        res.status = Status::Infeasible;
        res.blocking_row = sides[p].row;
        break;
      }
      if (t2 == kInf) {
        for (Eigen::Index a = 0; a < q; ++a) u[a] -= t1 * r(a);
        up += t1;
      } else {
        const double t = std::min(t1, t2);
        x += t * z;
        for (Eigen::Index a = 0; a < q; ++a) u[a] -= t * r(a);
        up += t;
        if (t2 <= t1) {
          active.push_back(p);
          u.push_back(up);
          in_active[p] = 1;
          added = true;
          continue;
        }
      }
      in_active[active[drop]] = 0;
      active.erase(active.begin() + drop);
      u.erase(u.begin() + drop);
    }
    if (!added) break;
  }

  res.x = x;
  res.iterations = iter;
  for (std::size_t a = 0; a < active.size(); ++a) {
    const auto& s = sides[active[a]];
    res.multipliers(s.row) += s.sign * s.scale * u[a];
  }
  return res;
}

/// Lawson-Hanson nonnegative least squares: min ||M w - g|| over w >= 0.
inline VectorXd nnls(const MatrixXd& M, const VectorXd& g, int max_iter = 0) {
  const Eigen::Index q = M.cols();
  VectorXd w = VectorXd::Zero(q);
  if (q == 0) return w;
  std::vector<char> passive(q, 0);
  const int cap = max_iter > 0 ? max_iter : 3 * static_cast<int>(q) + 10;
  const double tol = 1e-13 * std::max(1.0, M.cwiseAbs().maxCoeff()) * std::max(1.0, g.norm());

  auto solve_passive = [&](VectorXd& out) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < q; ++i)
      if (passive[i]) idx.push_back(i);
    MatrixXd Mp(M.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t a = 0; a < idx.size(); ++a) Mp.col(a) = M.col(idx[a]);
    const VectorXd sol = Mp.colPivHouseholderQr().solve(g);
    out = VectorXd::Zero(q);
    for (std::size_t a = 0; a < idx.size(); ++a) out(idx[a]) = sol(a);
  };

  for (int outer = 0; outer < cap; ++outer) {
    const VectorXd grad = M.transpose() * (g - M * w);
    Eigen::Index best = -1;
    double best_val = tol;
    for (Eigen::Index i = 0; i < q; ++i) {
      if (!passive[i] && grad(i) > best_val) {
        best_val = grad(i);
        best = i;
      }
    }
    if (best < 0) break;
    passive[best] = 1;
    for (int inner = 0; inner < cap; ++inner) {
      VectorXd trial;
      solve_passive(trial);
      bool feasible = true;
      for (Eigen::Index i = 0; i < q; ++i)
        if (passive[i] && trial(i) <= 0.0) feasible = false;
      if (feasible) {
        w = trial;
        break;
      }
      double alpha = 1.0;
      for (Eigen::Index i = 0; i < q; ++i) {
        if (passive[i] && trial(i) <= 0.0) alpha = std::min(alpha, w(i) / (w(i) - trial(i)));
      }
      w += alpha * (trial - w);
      for (Eigen::Index i = 0; i < q; ++i) {
        if (passive[i] && w(i) <= 1e-15) {
          passive[i] = 0;
          w(i) = 0.0;
        }
      }
    }
  }
  return w;
}

struct KktReport {
  double stationarity = 0.0;     // ||Hx + c - sum lambda_i grad g_i||_inf
  double primal = 0.0;           // largest row violation, in row units
  double complementarity = 0.0;  // max lambda_i * slack_i over near-active sides
  int active_rows = 0;

  double max() const { return std::max({stationarity, primal, complementarity}); }
};

/// First-order optimality residuals of `x`. Sides whose slack is at most
/// `active_tol` enter a nonnegative least-squares fit of the gradient.
inline KktReport kkt_check(const Problem& pb, const VectorXd& x, double active_tol) {
  KktReport rep;
  const VectorXd grad = pb.H * x + pb.c;
  const VectorXd ax = pb.A * x;
  std::vector<VectorXd> cols;
  std::vector<double> slacks;
  for (Eigen::Index i = 0; i < pb.rows(); ++i) {
    const double lo_gap = ax(i) - pb.lower(i);
    const double hi_gap = pb.upper(i) - ax(i);
    rep.primal = std::max({rep.primal, -lo_gap, -hi_gap});
    const double norm = pb.A.row(i).norm();
    const double tol = active_tol * std::max(norm, 1.0);
    bool any = false;
    if (std::isfinite(pb.lower(i)) && lo_gap <= tol && norm > 0.0) {
      cols.push_back(pb.A.row(i).transpose());
      slacks.push_back(std::max(lo_gap, 0.0));
      any = true;
    }
    if (std::isfinite(pb.upper(i)) && hi_gap <= tol && norm > 0.0) {
      cols.push_back(-pb.A.row(i).transpose());
      slacks.push_back(std::max(hi_gap, 0.0));
      any = true;
    }
    if (any) ++rep.active_rows;
  }
  MatrixXd N(pb.dim(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t a = 0; a < cols.size(); ++a) N.col(static_cast<Eigen::Index>(a)) = cols[a];
  const VectorXd lambda = nnls(N, grad);
  rep.stationarity = pb.dim() > 0 ? (grad - N * lambda).cwiseAbs().maxCoeff() : 0.0;
  for (std::size_t a = 0; a < cols.size(); ++a) {
    rep.complementarity = std::max(rep.complementarity, lambda(static_cast<Eigen::Index>(a)) * slacks[a]);
  }
  return rep;
}

}  // namespace voltvar::qp
