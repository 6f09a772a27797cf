#include "rasterfix/spline_image.hpp"

#include <algorithm>
#include <cmath>

namespace rasterfix {

CubicSplineBasis::CubicSplineBasis(int n) : n_(n) {
  require(n >= 4, ErrorCode::invalid_argument,
          "CubicSplineBasis: needs at least 4 basis functions");
  knots_.assign(static_cast<size_t>(n) + 4, 0.0);
  const int intervals = n - 3;
  for (int i = 0; i <= intervals; ++i) {
    knots_[static_cast<size_t>(3 + i)] = static_cast<double>(i) / intervals;
  }
  for (int i = n; i < n + 4; ++i) knots_[static_cast<size_t>(i)] = 1.0;
}

int CubicSplineBasis::span(double t) const {
  const int intervals = n_ - 3;
  const int cell = std::min(intervals - 1, static_cast<int>(t * intervals));
  return 3 + std::max(0, cell);
}

CubicSplineBasis::Support CubicSplineBasis::evaluate(double t) const {
  t = std::clamp(t, 0.0, 1.0);
  const int i = span(t);
  Support out;
  out.first = i - 3;
  // Cox-de Boor triangle for the four nonzero cubic functions.
  double left[4], right[4];
  out.value[0] = 1.0;
  for (int j = 1; j <= 3; ++j) {
    left[j] = t - knots_[static_cast<size_t>(i + 1 - j)];
    right[j] = knots_[static_cast<size_t>(i + j)] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out.value[r] / (right[r + 1] + left[j - r]);
      out.value[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out.value[j] = saved;
  }
  return out;
}

CubicSplineBasis::Support CubicSplineBasis::derivative(double t) const {
  t = std::clamp(t, 0.0, 1.0);
  const int i = span(t);
  // Quadratic basis values N_{i-2,2}, N_{i-1,2}, N_{i,2} at t.
  double q[3] = {1.0, 0.0, 0.0};
  double left[3], right[3];
  for (int j = 1; j <= 2; ++j) {
    left[j] = t - knots_[static_cast<size_t>(i + 1 - j)];
    right[j] = knots_[static_cast<size_t>(i + j)] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = q[r] / (right[r + 1] + left[j - r]);
      q[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    q[j] = saved;
  }
  auto ratio = [&](double quad, int lo, int hi) {
    const double denom = knots_[static_cast<size_t>(hi)] - knots_[static_cast<size_t>(lo)];
    return denom > 0.0 ? quad / denom : 0.0;
  };
  Support out;
  out.first = i - 3;
  const double r0 = ratio(q[0], i - 2, i + 1);
  const double r1 = ratio(q[1], i - 1, i + 2);
  const double r2 = ratio(q[2], i, i + 3);
  out.value[0] = 3.0 * (0.0 - r0);
  out.value[1] = 3.0 * (r0 - r1);
  out.value[2] = 3.0 * (r1 - r2);
  out.value[3] = 3.0 * (r2 - 0.0);
  return out;
}

SplineImage::SplineImage(int n, double fill)
    : n_(n), basis_(n), coeffs_(static_cast<size_t>(n) * n, fill) {}

double SplineImage::eval(Vec2 x) const {
  const auto bx = basis_.evaluate(x.x);
  const auto by = basis_.evaluate(x.y);
  double acc = 0.0;
  for (int dl = 0; dl < 4; ++dl) {
    double row = 0.0;
    for (int dk = 0; dk < 4; ++dk) {
      row += coeff(bx.first + dk, by.first + dl) * bx.value[dk];
    }
    acc += row * by.value[dl];
  }
  return acc;
}

Vec2 SplineImage::position_gradient(Vec2 x) const {
  const bool clamp_x = x.x < 0.0 || x.x > 1.0;
  const bool clamp_y = x.y < 0.0 || x.y > 1.0;
  const auto bx = basis_.evaluate(x.x);
  const auto by = basis_.evaluate(x.y);
  const auto dx = basis_.derivative(x.x);
  const auto dy = basis_.derivative(x.y);
  Vec2 g;
  for (int dl = 0; dl < 4; ++dl) {
    double row_v = 0.0, row_d = 0.0;
    for (int dk = 0; dk < 4; ++dk) {
      const double c = coeff(bx.first + dk, by.first + dl);
      row_v += c * bx.value[dk];
      row_d += c * dx.value[dk];
    }
    g.x += row_d * by.value[dl];
    g.y += row_v * dy.value[dl];
  }
  if (clamp_x) g.x = 0.0;
  if (clamp_y) g.y = 0.0;
  return g;
}

SplineImage::CoefficientWindow SplineImage::coefficient_gradient(Vec2 x) const {
  const auto bx = basis_.evaluate(x.x);
  const auto by = basis_.evaluate(x.y);
  CoefficientWindow out;
  out.k0 = bx.first;
  out.l0 = by.first;
  for (int dl = 0; dl < 4; ++dl) {
    for (int dk = 0; dk < 4; ++dk) {
      out.w[4 * dl + dk] = bx.value[dk] * by.value[dl];
    }
  }
  return out;
}

SplineImage::Evaluation SplineImage::eval_all(Vec2 x) const {
  const bool clamp_x = x.x < 0.0 || x.x > 1.0;
  const bool clamp_y = x.y < 0.0 || x.y > 1.0;
  const auto bx = basis_.evaluate(x.x);
  const auto by = basis_.evaluate(x.y);
  const auto dx = basis_.derivative(x.x);
  const auto dy = basis_.derivative(x.y);
  Evaluation out;
  out.window.k0 = bx.first;
  out.window.l0 = by.first;
  for (int dl = 0; dl < 4; ++dl) {
    double row_v = 0.0, row_d = 0.0;
    for (int dk = 0; dk < 4; ++dk) {
      const double c = coeff(bx.first + dk, by.first + dl);
      row_v += c * bx.value[dk];
      row_d += c * dx.value[dk];
      out.window.w[4 * dl + dk] = bx.value[dk] * by.value[dl];
    }
    out.value += row_v * by.value[dl];
    out.position_gradient.x += row_d * by.value[dl];
    out.position_gradient.y += row_v * dy.value[dl];
  }
  if (clamp_x) out.position_gradient.x = 0.0;
  if (clamp_y) out.position_gradient.y = 0.0;
  return out;
}

PixelImage SplineImage::render(int width, int height) const {
  PixelImage out(width, height);
  for (int j = 0; j < height; ++j) {
    for (int i = 0; i < width; ++i) {
      out.at(i, j) = eval(pixel_center(i, j, width, height));
    }
  }
  return out;
}

namespace {

class SplineFitObjective : public SmoothObjective {
 public:
  SplineFitObjective(const PixelImage& target, int n, FidelityKind fidelity)
      : target_(target), n_(n), fidelity_(fidelity),
        poisson_(std::max(0.0, target.max_value())) {
    // Pixel -> active window assignments are fixed; precompute them once.
    windows_.reserve(static_cast<size_t>(target.width()) * target.height());
    SplineImage probe(n);
    for (int j = 0; j < target_.height(); ++j) {
      for (int i = 0; i < target_.width(); ++i) {
        windows_.push_back(probe.coefficient_gradient(target_.pixel_center(i, j)));
      }
    }
  }

  int dimension() const override { return n_ * n_; }

  double value_and_gradient(std::span<const double> x,
                            std::span<double> grad) const override {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> terms;
    terms.reserve(windows_.size());
    size_t idx = 0;
    for (int j = 0; j < target_.height(); ++j) {
      for (int i = 0; i < target_.width(); ++i, ++idx) {
        const auto& win = windows_[idx];
        double u = 0.0;
        for (int dl = 0; dl < 4; ++dl) {
          for (int dk = 0; dk < 4; ++dk) {
            u += x[static_cast<size_t>(win.l0 + dl) * n_ + win.k0 + dk] *
                 win.w[4 * dl + dk];
          }
        }
        const double v = target_.at(i, j);
        double dcost_du;
        double cost;
        if (fidelity_ == FidelityKind::poisson) {
          cost = poisson_.value_and_derivative(u, v, &dcost_du);
        } else {
          const double r = u - v;
          cost = 0.5 * r * r;
          dcost_du = r;
        }
        terms.push_back(cost);
        for (int dl = 0; dl < 4; ++dl) {
          for (int dk = 0; dk < 4; ++dk) {
            grad[static_cast<size_t>(win.l0 + dl) * n_ + win.k0 + dk] +=
                dcost_du * win.w[4 * dl + dk];
          }
        }
      }
    }
    return pairwise_sum(terms);
  }

 private:
  const PixelImage& target_;
  int n_;
  FidelityKind fidelity_;
  PoissonFidelity poisson_;
  std::vector<SplineImage::CoefficientWindow> windows_;
};

}  // namespace

SplineFitResult fit_spline_to_image(const PixelImage& target, int n,
                                    FidelityKind fidelity,
                                    const SolverOptions& options) {
  target.require_finite("fit_spline_to_image");
  SplineFitObjective objective(target, n, fidelity);
  std::vector<double> x0(static_cast<size_t>(n) * n, target.mean_value());
  SolverResult solved = bfgs_minimize(objective, x0, options);
  if (!solved.report.converged && solved.report.message == "line search failed" &&
      solved.report.iterations == 0) {
    fail(ErrorCode::solver_failure,
         "fit_spline_to_image: BFGS made no progress (value " +
             std::to_string(solved.report.final_value) + ", gradient norm " +
             std::to_string(solved.report.final_gradient_norm) + ")");
  }
  SplineFitResult out{SplineImage(n), std::move(solved.report)};
  std::copy(solved.x.begin(), solved.x.end(), out.spline.coefficients().begin());
  return out;
}

}  // namespace rasterfix
