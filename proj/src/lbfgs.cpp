#include "mqf2/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace mqf2 {

using Eigen::VectorXd;

namespace {

struct Point {
  double step = 0.0;
  double value = 0.0;
  double slope = 0.0;  // directional derivative
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db), kept inside the
// interval with a bisection fallback.
double cubic_step(const Point& a, const Point& b) {
  const double lo = std::min(a.step, b.step), hi = std::max(a.step, b.step);
  const double d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.step - b.step);
  const double disc = d1 * d1 - a.slope * b.slope;
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b.step - a.step);
    const double t = b.step - (b.step - a.step) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
    const double margin = 0.1 * (hi - lo);
    if (std::isfinite(t) && t > lo + margin && t < hi - margin) return t;
  }
  return 0.5 * (lo + hi);
}

class LineSearch {
 public:
  LineSearch(const Objective& f, const VectorXd& x, const VectorXd& dir, const LbfgsOptions& opt, double f0, double d0)
      : f_(f), x_(x), dir_(dir), opt_(opt), zero_{0.0, f0, d0} {}

  // Returns true when a step satisfying the strong Wolfe conditions was found.
  bool run(double initial) {
    Point prev = zero_;
    double step = initial;
    for (int i = 0; i < opt_.max_line_search; ++i) {
      Point cur = probe(step);
      if (!std::isfinite(cur.value) || cur.value > zero_.value + opt_.c1 * step * zero_.slope ||
          (i > 0 && cur.value >= prev.value)) {
        return zoom(prev, cur, i);
      }
      if (std::abs(cur.slope) <= -opt_.c2 * zero_.slope) return accept(cur);
      if (cur.slope >= 0.0) return zoom(cur, prev, i);
      prev = cur;
      step *= 2.0;
    }
    return false;
  }

  VectorXd x, grad;
  double value = 0.0;

 private:
  Point probe(double step) {
    trial_x_ = x_ + step * dir_;
    trial_value_ = f_(trial_x_, trial_grad_);
    return {step, trial_value_, trial_grad_.dot(dir_)};
  }

  bool accept(const Point&) {
    x = trial_x_;
    grad = trial_grad_;
    value = trial_value_;
    return true;
  }

  bool zoom(Point lo, Point hi, int used) {
    for (int i = used; i < opt_.max_line_search; ++i) {
      const double step = std::isfinite(hi.value) && std::isfinite(hi.slope) ? cubic_step(lo, hi)
                                                                             : 0.5 * (lo.step + hi.step);
      Point cur = probe(step);
      if (!std::isfinite(cur.value) || cur.value > zero_.value + opt_.c1 * step * zero_.slope ||
          cur.value >= lo.value) {
        hi = cur;
      } else {
        if (std::abs(cur.slope) <= -opt_.c2 * zero_.slope) return accept(cur);
        if (cur.slope * (hi.step - lo.step) >= 0.0) hi = lo;
        lo = cur;
      }
      if (std::abs(hi.step - lo.step) <= 1e-16 * std::max(1.0, lo.step)) break;
    }
    // Fall back to the best sufficient-decrease point seen, if it improves.
    if (lo.step > 0.0) {
      probe(lo.step);
      return accept(lo);
    }
    return false;
  }

  const Objective& f_;
  const VectorXd& x_;
  const VectorXd& dir_;
  const LbfgsOptions& opt_;
  Point zero_;
  VectorXd trial_x_, trial_grad_;
  double trial_value_ = 0.0;
};

}  // namespace

LbfgsResult lbfgs_minimize(const Objective& f, VectorXd x0, const LbfgsOptions& opt) {
  LbfgsResult r;
  r.x = std::move(x0);
  VectorXd grad;
  r.value = f(r.x, grad);
  r.gradient_norm = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;

  std::deque<VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  for (r.iterations = 0; r.iterations < opt.max_iterations; ++r.iterations) {
    if (r.gradient_norm <= opt.gradient_tol) break;

    // Two-loop recursion.
    VectorXd q = grad;
    std::vector<double> a(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      a[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= a[i] * y_hist[i];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double b = rho_hist[i] * y_hist[i].dot(q);
      q += (a[i] - b) * s_hist[i];
    }
    VectorXd dir = -q;
    double slope = grad.dot(dir);
    if (!(slope < 0.0)) {
      // Lost descent; restart from steepest descent.
      s_hist.clear(), y_hist.clear(), rho_hist.clear();
      dir = -grad;
      slope = grad.dot(dir);
    }
    const double initial = s_hist.empty() ? std::min(1.0, 1.0 / grad.cwiseAbs().sum()) : 1.0;

    LineSearch ls(f, r.x, dir, opt, r.value, slope);
    if (!ls.run(initial)) break;

    VectorXd s = ls.x - r.x, y = ls.grad - grad;
    const double sy = s.dot(y);
    r.x = std::move(ls.x);
    grad = std::move(ls.grad);
    r.value = ls.value;
    r.gradient_norm = grad.cwiseAbs().maxCoeff();
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front(), y_hist.pop_front(), rho_hist.pop_front();
      }
    }
  }
  r.converged = r.gradient_norm <= opt.gradient_tol;
  return r;
}

}  // namespace mqf2
