#include "rasterfix/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "rasterfix/csv.hpp"

namespace rasterfix {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

struct LineSearchResult {
  double alpha = 0.0;
  double f = 0.0;
  int evaluations = 0;
  bool ok = false;
};

// Strong Wolfe line search (Nocedal & Wright, Algorithms 3.5/3.6).
// phi(a) = f(x + a d). Writes the accepted point and gradient into x_out and
// g_out. c1 = 1e-4, c2 = 0.9.
class WolfeSearch {
 public:
  WolfeSearch(const SmoothObjective& obj, std::span<const double> x,
              std::span<const double> d, double f0, double g0_dot_d)
      : obj_(obj), x_(x), d_(d), f0_(f0), dphi0_(g0_dot_d),
        x_trial_(x.size()), g_trial_(x.size()) {}

  LineSearchResult run(double alpha0, std::span<double> x_out, std::span<double> g_out) {
    LineSearchResult res;
    constexpr double c1 = 1e-4;
    constexpr double c2 = 0.9;
    constexpr int max_expand = 20;
    double alpha_prev = 0.0;
    double f_prev = f0_;
    double alpha = alpha0;
    for (int it = 0; it < max_expand; ++it) {
      const double f = eval(alpha);
      ++res.evaluations;
      const double dphi = dot(g_trial_, d_);
      if (f > f0_ + c1 * alpha * dphi0_ || (it > 0 && f >= f_prev)) {
        return zoom(alpha_prev, f_prev, alpha, res, x_out, g_out);
      }
      if (std::abs(dphi) <= -c2 * dphi0_) {
        accept(alpha, f, res, x_out, g_out);
        return res;
      }
      if (dphi >= 0.0) {
        return zoom(alpha, f, alpha_prev, res, x_out, g_out);
      }
      alpha_prev = alpha;
      f_prev = f;
      alpha *= 2.0;
    }
    return res;  // not ok
  }

 private:
  double eval(double alpha) {
    for (size_t i = 0; i < x_.size(); ++i) x_trial_[i] = x_[i] + alpha * d_[i];
    return obj_.value_and_gradient(x_trial_, g_trial_);
  }

  void accept(double alpha, double f, LineSearchResult& res, std::span<double> x_out,
              std::span<double> g_out) {
    res.alpha = alpha;
    res.f = f;
    res.ok = true;
    std::copy(x_trial_.begin(), x_trial_.end(), x_out.begin());
    std::copy(g_trial_.begin(), g_trial_.end(), g_out.begin());
  }

  LineSearchResult zoom(double lo, double f_lo, double hi, LineSearchResult res,
                        std::span<double> x_out, std::span<double> g_out) {
    constexpr double c1 = 1e-4;
    constexpr double c2 = 0.9;
    constexpr int max_zoom = 30;
    for (int it = 0; it < max_zoom; ++it) {
      const double alpha = 0.5 * (lo + hi);
      const double f = eval(alpha);
      ++res.evaluations;
      const double dphi = dot(g_trial_, d_);
      if (f > f0_ + c1 * alpha * dphi0_ || f >= f_lo) {
        hi = alpha;
      } else {
        if (std::abs(dphi) <= -c2 * dphi0_) {
          accept(alpha, f, res, x_out, g_out);
          return res;
        }
        if (dphi * (hi - lo) >= 0.0) hi = lo;
        lo = alpha;
        f_lo = f;
      }
      if (std::abs(hi - lo) < 1e-16 * (1.0 + std::abs(lo))) break;
    }
    // Fall back to the best Armijo point found, if any.
    if (f_lo < f0_ && lo > 0.0) {
      const double f = eval(lo);
      ++res.evaluations;
      accept(lo, f, res, x_out, g_out);
      res.ok = true;
    }
    return res;
  }

  const SmoothObjective& obj_;
  std::span<const double> x_;
  std::span<const double> d_;
  double f0_;
  double dphi0_;
  std::vector<double> x_trial_;
  std::vector<double> g_trial_;
};

void check_start_point(double f0, std::span<const double> g0) {
  require(std::isfinite(f0), ErrorCode::invalid_argument,
          "solver: non-finite objective value at x0");
  for (double g : g0) {
    require(std::isfinite(g), ErrorCode::invalid_argument,
            "solver: non-finite gradient at x0");
  }
}

// Two-loop recursion for the inverse-Hessian action of L-BFGS.
class LbfgsInverse {
 public:
  explicit LbfgsInverse(int memory) : memory_(memory) {}

  bool empty() const { return s_.empty(); }

  void update(std::vector<double> s, std::vector<double> y) {
    const double sy = dot(s, y);
    const double ss = dot(s, s);
    const double yy = dot(y, y);
    if (!(sy > 1e-10 * std::sqrt(ss * yy))) return;  // skip: curvature too weak
    gamma_ = sy / yy;
    s_.push_back(std::move(s));
    y_.push_back(std::move(y));
    rho_.push_back(1.0 / sy);
    if (static_cast<int>(s_.size()) > memory_) {
      s_.pop_front();
      y_.pop_front();
      rho_.pop_front();
    }
  }

  // d = -H g
  void direction(std::span<const double> g, std::span<double> d) const {
    std::copy(g.begin(), g.end(), d.begin());
    const int m = static_cast<int>(s_.size());
    std::vector<double> alpha(m);
    for (int i = m - 1; i >= 0; --i) {
      alpha[i] = rho_[i] * dot(s_[i], d);
      axpy(-alpha[i], y_[i], d);
    }
    for (double& v : d) v *= gamma_;
    for (int i = 0; i < m; ++i) {
      const double beta = rho_[i] * dot(y_[i], d);
      axpy(alpha[i] - beta, s_[i], d);
    }
    for (double& v : d) v = -v;
  }

 private:
  int memory_;
  double gamma_ = 1.0;
  std::deque<std::vector<double>> s_, y_;
  std::deque<double> rho_;
};

// Dense inverse-Hessian BFGS update, used for small problems.
class DenseInverse {
 public:
  explicit DenseInverse(int dim) : dim_(dim), h_(static_cast<size_t>(dim) * dim, 0.0) {
    for (int i = 0; i < dim; ++i) h_[idx(i, i)] = 1.0;
  }

  void update(std::span<const double> s, std::span<const double> y) {
    const double sy = dot(s, y);
    const double ss = dot(s, s);
    const double yy = dot(y, y);
    if (!(sy > 1e-10 * std::sqrt(ss * yy))) return;
    if (first_) {
      const double gamma = sy / yy;
      for (int i = 0; i < dim_; ++i) {
        for (int j = 0; j < dim_; ++j) h_[idx(i, j)] = (i == j) ? gamma : 0.0;
      }
      first_ = false;
    }
    const double rho = 1.0 / sy;
    // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
    std::vector<double> hy(dim_, 0.0);
    for (int i = 0; i < dim_; ++i) {
      double acc = 0.0;
      for (int j = 0; j < dim_; ++j) acc += h_[idx(i, j)] * y[j];
      hy[i] = acc;
    }
    const double yhy = dot(hy, y);
    for (int i = 0; i < dim_; ++i) {
      for (int j = 0; j < dim_; ++j) {
        h_[idx(i, j)] += -rho * (hy[i] * s[j] + s[i] * hy[j]) +
                         rho * rho * yhy * s[i] * s[j] + rho * s[i] * s[j];
      }
    }
  }

  void direction(std::span<const double> g, std::span<double> d) const {
    for (int i = 0; i < dim_; ++i) {
      double acc = 0.0;
      for (int j = 0; j < dim_; ++j) acc += h_[idx(i, j)] * g[j];
      d[i] = -acc;
    }
  }

 private:
  size_t idx(int i, int j) const { return static_cast<size_t>(i) * dim_ + j; }
  int dim_;
  bool first_ = true;
  std::vector<double> h_;
};

}  // namespace

void save_report_csv(const SolverReport& report, const std::filesystem::path& path) {
  CsvWriter csv(path, {"iteration", "value", "gradient_norm", "step"});
  for (const IterationRecord& r : report.history) {
    csv.field(r.iteration).field(r.value).field(r.gradient_norm).field(r.step);
    csv.end_row();
  }
}

SolverResult bfgs_minimize(const SmoothObjective& obj, std::span<const double> x0,
                           const SolverOptions& options) {
  const int dim = obj.dimension();
  require(static_cast<int>(x0.size()) == dim, ErrorCode::invalid_argument,
          "bfgs_minimize: x0 dimension mismatch");
  SolverResult out;
  out.x.assign(x0.begin(), x0.end());
  std::vector<double> g(dim);
  double f = obj.value_and_gradient(out.x, g);
  out.report.evaluations = 1;
  check_start_point(f, g);

  const bool dense = dim <= options.dense_threshold;
  DenseInverse dense_h(dense ? dim : 1);
  LbfgsInverse lbfgs_h(options.lbfgs_memory);

  std::vector<double> d(dim), x_new(dim), g_new(dim), s(dim), y(dim);
  double gnorm = norm2(g);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (gnorm <= options.tolerance) {
      out.report.converged = true;
      break;
    }
    if (dense) {
      dense_h.direction(g, d);
    } else {
      lbfgs_h.direction(g, d);
    }
    double dg = dot(d, g);
    if (!(dg < 0.0)) {  // not a descent direction; reset to steepest descent
      for (int i = 0; i < dim; ++i) d[i] = -g[i];
      dg = -gnorm * gnorm;
    }
    // A gradient-scaled first step keeps the iterate path invariant under
    // scaling of the objective.
    const double alpha0 = (iter == 0) ? 1.0 / std::max(1.0, gnorm) : 1.0;
    WolfeSearch search(obj, out.x, d, f, dg);
    const LineSearchResult ls = search.run(alpha0, x_new, g_new);
    out.report.evaluations += ls.evaluations;
    if (!ls.ok) {
      out.report.message = "line search failed";
      break;
    }
    for (int i = 0; i < dim; ++i) {
      s[i] = x_new[i] - out.x[i];
      y[i] = g_new[i] - g[i];
    }
    if (dense) {
      dense_h.update(s, y);
    } else {
      lbfgs_h.update(s, y);
    }
    std::swap(out.x, x_new);
    std::swap(g, g_new);
    f = ls.f;
    gnorm = norm2(g);
    ++out.report.iterations;
    if (options.record_history) {
      out.report.history.push_back({out.report.iterations, f, gnorm, ls.alpha * norm2(d)});
    }
    if (gnorm <= options.tolerance) {
      out.report.converged = true;
      break;
    }
  }
  out.report.final_value = f;
  out.report.final_gradient_norm = gnorm;
  if (out.report.converged && out.report.message.empty()) out.report.message = "converged";
  return out;
}

namespace {

// Damped limited-memory BFGS approximation of the Hessian itself (the B
// operator), exposed through Hessian-vector products for Steihaug CG.
class LbfgsHessianOperator {
 public:
  LbfgsHessianOperator(int dim, int memory) : dim_(dim), memory_(memory) {}

  void apply(std::span<const double> v, std::span<double> out) const {
    for (int i = 0; i < dim_; ++i) out[i] = gamma_ * v[i];
    const int m = static_cast<int>(s_.size());
    for (int p = 0; p < m; ++p) {
      const double sv = dot(s_[p], out);           // s_p . (B_p v)
      const double yv = dot(y_[p], v);
      axpy(-sv / sbs_[p], bs_[p], out);
      axpy(yv / sy_[p], y_[p], out);
    }
  }

  void update(std::span<const double> s_in, std::span<const double> y_in) {
    std::vector<double> s(s_in.begin(), s_in.end());
    std::vector<double> y(y_in.begin(), y_in.end());
    std::vector<double> bs(dim_);
    apply(s, bs);
    const double sbs = dot(s, bs);
    if (!(sbs > 0.0) || !std::isfinite(sbs)) return;
    double sy = dot(s, y);
    if (sy < 0.2 * sbs) {  // Powell damping keeps B positive definite
      const double theta = 0.8 * sbs / (sbs - sy);
      for (int i = 0; i < dim_; ++i) y[i] = theta * y[i] + (1.0 - theta) * bs[i];
      sy = dot(s, y);
    }
    if (!(sy > 1e-14 * sbs)) return;
    s_.push_back(std::move(s));
    y_.push_back(std::move(y));
    if (static_cast<int>(s_.size()) > memory_) {
      s_.pop_front();
      y_.pop_front();
    }
    gamma_ = std::max(1e-12, dot(y_.back(), y_.back()) / dot(s_.back(), y_.back()));
    rebuild_cache();
  }

 private:
  void rebuild_cache() {
    const int m = static_cast<int>(s_.size());
    bs_.assign(m, {});
    sbs_.assign(m, 0.0);
    sy_.assign(m, 0.0);
    for (int p = 0; p < m; ++p) {
      // B_p s_p using only the first p pairs
      std::vector<double> b(dim_);
      for (int i = 0; i < dim_; ++i) b[i] = gamma_ * s_[p][i];
      for (int q = 0; q < p; ++q) {
        const double sv = dot(s_[q], b);
        const double yv = dot(y_[q], s_[p]);
        axpy(-sv / sbs_[q], bs_[q], b);
        axpy(yv / sy_[q], y_[q], b);
      }
      bs_[p] = std::move(b);
      sbs_[p] = dot(s_[p], bs_[p]);
      sy_[p] = dot(s_[p], y_[p]);
      if (!(sbs_[p] > 0.0)) {  // numerical degeneration: drop this pair
        s_.erase(s_.begin() + p);
        y_.erase(y_.begin() + p);
        rebuild_cache();
        return;
      }
    }
  }

  int dim_;
  int memory_;
  double gamma_ = 1.0;
  std::deque<std::vector<double>> s_, y_;
  std::vector<std::vector<double>> bs_;
  std::vector<double> sbs_, sy_;
};

// Steihaug-Toint truncated CG for min g.p + 0.5 p.Bp subject to |p| <= radius.
std::vector<double> steihaug_cg(const LbfgsHessianOperator& b, std::span<const double> g,
                                double radius, bool* hit_boundary) {
  const int dim = static_cast<int>(g.size());
  std::vector<double> p(dim, 0.0), r(g.begin(), g.end()), d(dim), bd(dim);
  for (int i = 0; i < dim; ++i) d[i] = -r[i];
  *hit_boundary = false;
  const double g_norm = norm2(g);
  const double tol = std::min(0.5, std::sqrt(g_norm)) * g_norm;
  const int max_cg = std::min(dim, 200);

  auto boundary_step = [&](std::span<const double> base, std::span<const double> dir) {
    // tau >= 0 with |base + tau dir| = radius
    const double dd = dot(dir, dir);
    const double bd_ = dot(base, dir);
    const double bb = dot(base, base);
    const double disc = std::max(0.0, bd_ * bd_ - dd * (bb - radius * radius));
    const double tau = (-bd_ + std::sqrt(disc)) / std::max(dd, 1e-300);
    std::vector<double> out(base.begin(), base.end());
    axpy(tau, dir, out);
    return out;
  };

  double rr = dot(r, r);
  for (int it = 0; it < max_cg; ++it) {
    b.apply(d, bd);
    const double dbd = dot(d, bd);
    if (dbd <= 1e-16 * dot(d, d)) {  // non-positive curvature: go to the boundary
      *hit_boundary = true;
      return boundary_step(p, d);
    }
    const double alpha = rr / dbd;
    std::vector<double> p_next(p);
    axpy(alpha, d, p_next);
    if (norm2(p_next) >= radius) {
      *hit_boundary = true;
      return boundary_step(p, d);
    }
    p = std::move(p_next);
    axpy(alpha, bd, r);
    const double rr_next = dot(r, r);
    if (std::sqrt(rr_next) <= tol) break;
    const double beta = rr_next / rr;
    for (int i = 0; i < dim; ++i) d[i] = -r[i] + beta * d[i];
    rr = rr_next;
  }
  return p;
}

}  // namespace

SolverResult trust_region_minimize(const SmoothObjective& obj,
                                   std::span<const double> x0,
                                   const SolverOptions& options) {
  const int dim = obj.dimension();
  require(static_cast<int>(x0.size()) == dim, ErrorCode::invalid_argument,
          "trust_region_minimize: x0 dimension mismatch");
  SolverResult out;
  out.x.assign(x0.begin(), x0.end());
  std::vector<double> g(dim), g_trial(dim), x_trial(dim), bp(dim), s(dim), y(dim);
  double f = obj.value_and_gradient(out.x, g);
  out.report.evaluations = 1;
  check_start_point(f, g);
  double gnorm = norm2(g);

  LbfgsHessianOperator hess(dim, options.lbfgs_memory);
  double radius = options.initial_radius;
  constexpr double kMaxRadius = 1e8;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (gnorm <= options.tolerance) {
      out.report.converged = true;
      break;
    }
    bool hit_boundary = false;
    const std::vector<double> p = steihaug_cg(hess, g, radius, &hit_boundary);
    const double p_norm = norm2(p);
    if (p_norm <= 1e-16 * (1.0 + norm2(out.x))) {
      out.report.message = "trust region step collapsed";
      break;
    }
    hess.apply(p, bp);
    const double predicted = -(dot(g, p) + 0.5 * dot(p, bp));
    for (int i = 0; i < dim; ++i) x_trial[i] = out.x[i] + p[i];
    const double f_trial = obj.value_and_gradient(x_trial, g_trial);
    ++out.report.evaluations;
    const double rho =
        (f - f_trial) / std::max(predicted, 1e-300);

    if (rho < 0.25) {
      radius *= 0.25;
    } else if (rho > 0.75 && hit_boundary) {
      radius = std::min(2.0 * radius, kMaxRadius);
    }
    if (rho > 0.1 && std::isfinite(f_trial)) {
      for (int i = 0; i < dim; ++i) {
        s[i] = p[i];
        y[i] = g_trial[i] - g[i];
      }
      hess.update(s, y);
      out.x = x_trial;
      std::swap(g, g_trial);
      f = f_trial;
      gnorm = norm2(g);
      ++out.report.iterations;
      if (options.record_history) {
        out.report.history.push_back({out.report.iterations, f, gnorm, radius});
      }
    }
    if (radius < 1e-14 * (1.0 + norm2(out.x))) {
      out.report.message = "trust region radius underflow";
      break;
    }
  }
  out.report.final_value = f;
  out.report.final_gradient_norm = gnorm;
  if (gnorm <= options.tolerance) out.report.converged = true;
  if (out.report.converged && out.report.message.empty()) out.report.message = "converged";
  return out;
}

double gradient_check(const SmoothObjective& obj, std::span<const double> x, double h) {
  require(h > 0.0, ErrorCode::invalid_argument, "gradient_check: h must be > 0");
  const int dim = obj.dimension();
  std::vector<double> analytic(dim);
  obj.value_and_gradient(x, analytic);
  std::vector<double> xp(x.begin(), x.end());
  double worst = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double xi = xp[i];
    xp[i] = xi + h;
    const double fp = obj.value(xp);
    xp[i] = xi - h;
    const double fm = obj.value(xp);
    xp[i] = xi;
    const double fd = (fp - fm) / (2.0 * h);
    const double denom = std::max({1.0, std::abs(fd), std::abs(analytic[i])});
    worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace rasterfix
