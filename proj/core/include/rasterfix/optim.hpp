#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rasterfix/error.hpp"

namespace rasterfix {

/// A smooth unconstrained objective. value_and_gradient must be pure: the
/// same x always produces the same value and gradient.
class SmoothObjective {
 public:
  virtual ~SmoothObjective() = default;

  virtual int dimension() const = 0;
  virtual double value_and_gradient(std::span<const double> x,
                                    std::span<double> grad) const = 0;

  double value(std::span<const double> x) const {
    std::vector<double> scratch(dimension());
    return value_and_gradient(x, scratch);
  }
};

struct IterationRecord {
  int iteration = 0;
  double value = 0.0;
  double gradient_norm = 0.0;
  double step = 0.0;  // step length (BFGS) or trust radius (TR)
};

struct SolverReport {
  int iterations = 0;
  int evaluations = 0;
  double final_value = 0.0;
  double final_gradient_norm = 0.0;
  bool converged = false;
  std::string message;
  std::vector<IterationRecord> history;
};

void save_report_csv(const SolverReport& report, const std::filesystem::path& path);

struct SolverOptions {
  double tolerance = 1e-8;       // on the gradient infinity-compatible 2-norm
  int max_iterations = 200;
  double initial_radius = 1.0;   // trust region only
  int lbfgs_memory = 20;
  int dense_threshold = 256;     // BFGS switches to limited memory above this
  bool record_history = true;
};

struct SolverResult {
  std::vector<double> x;
  SolverReport report;
};

/// BFGS quasi-Newton with a strong Wolfe line search (c1 = 1e-4, c2 = 0.9).
/// Uses the dense inverse-Hessian update up to dense_threshold unknowns and
/// a limited-memory two-loop recursion beyond that. Accepted iterates never
/// increase the objective.
SolverResult bfgs_minimize(const SmoothObjective& obj, std::span<const double> x0,
                           const SolverOptions& options = {});

/// Trust-region method with a damped limited-memory BFGS model Hessian and a
/// Steihaug conjugate-gradient subproblem solver. Steps are accepted for
/// rho > 0.1; the radius shrinks for rho < 0.25 and doubles for rho > 0.75
/// when the step hits the boundary.
SolverResult trust_region_minimize(const SmoothObjective& obj,
                                   std::span<const double> x0,
                                   const SolverOptions& options = {});

/// Worst per-coordinate relative error between the analytic gradient and a
/// central finite difference with step h. Error is measured relative to
/// max(1, |analytic|, |numeric|).
double gradient_check(const SmoothObjective& obj, std::span<const double> x, double h);

}  // namespace rasterfix
