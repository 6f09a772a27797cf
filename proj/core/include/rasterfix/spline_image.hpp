#pragma once

#include <span>
#include <vector>

#include "rasterfix/fidelity.hpp"
#include "rasterfix/geometry.hpp"
#include "rasterfix/image.hpp"
#include "rasterfix/optim.hpp"

namespace rasterfix {

/// Clamped cubic B-spline basis on [0,1] with n >= 4 functions and
/// equidistant interior knots. Coincident boundary knots make the basis a
/// partition of unity on the whole interval.
class CubicSplineBasis {
 public:
  explicit CubicSplineBasis(int n);

  int size() const { return n_; }

  struct Support {
    int first = 0;       // index of the first of the four active functions
    double value[4] = {0, 0, 0, 0};
  };

  /// Values of the four basis functions active at t (t clamped to [0,1]).
  Support evaluate(double t) const;
  /// First derivatives of the same four functions.
  Support derivative(double t) const;

 private:
  int span(double t) const;
  int n_;
  std::vector<double> knots_;  // n + 4
};

/// Tensor-product cubic B-spline image f(x1, x2) = sum p_kl b_k(x1) b_l(x2)
/// over an n x n coefficient matrix. Evaluation outside [0,1]^2 clamps the
/// coordinates; position derivatives vanish in clamped directions.
class SplineImage {
 public:
  explicit SplineImage(int n, double fill = 0.0);

  int n() const { return n_; }
  double& coeff(int k, int l) { return coeffs_[static_cast<size_t>(l) * n_ + k]; }
  double coeff(int k, int l) const { return coeffs_[static_cast<size_t>(l) * n_ + k]; }
  std::span<double> coefficients() { return coeffs_; }
  std::span<const double> coefficients() const { return coeffs_; }

  double eval(Vec2 x) const;
  Vec2 position_gradient(Vec2 x) const;

  /// The 4x4 window of coefficient sensitivities d(eval)/d(p_kl).
  struct CoefficientWindow {
    int k0 = 0, l0 = 0;
    double w[16] = {};  // w[4*dl + dk] multiplies p_{k0+dk, l0+dl}
  };
  CoefficientWindow coefficient_gradient(Vec2 x) const;

  struct Evaluation {
    double value = 0.0;
    Vec2 position_gradient;
    CoefficientWindow window;
  };
  Evaluation eval_all(Vec2 x) const;

  /// Rasterizes the spline at pixel centers.
  PixelImage render(int width, int height) const;

 private:
  int n_;
  CubicSplineBasis basis_;
  std::vector<double> coeffs_;
};

enum class FidelityKind { poisson, least_squares };

struct SplineFitResult {
  SplineImage spline;
  SolverReport report;
};

/// Fits the coefficient matrix to a raster by BFGS, starting from the
/// constant mean image. Throws on hard solver failures; a fit that merely
/// exhausts its iteration budget is returned with report.converged = false.
SplineFitResult fit_spline_to_image(const PixelImage& target, int n,
                                    FidelityKind fidelity,
                                    const SolverOptions& options = {});

}  // namespace rasterfix
