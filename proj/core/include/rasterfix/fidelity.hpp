#pragma once

#include <vector>

#include "rasterfix/image.hpp"

namespace rasterfix {

/// Mean, standard deviation (population convention, 1/|D| inside the root)
/// and measure of a function over a possibly masked domain.
struct DomainStats {
  double mean = 0.0;
  double sigma = 0.0;
  double count = 0.0;
};

DomainStats domain_stats(const PixelImage& u, const ImageDomain* mask = nullptr);

/// Poisson negative log likelihood u - v log(u) with the factorial term
/// dropped. The model intensity is floored at eps = 1e-8 * (1 + max observed
/// count) to keep the log finite when the image model dips near zero; the
/// derivative is zero where the floor is active.
class PoissonFidelity {
 public:
  explicit PoissonFidelity(double max_observed_count);

  double floor() const { return floor_; }
  double value(double u, double v) const;
  double derivative(double u, double v) const;  // d/du
  double value_and_derivative(double u, double v, double* deriv) const;

 private:
  double floor_;
};

enum class DomainPolicy { intersection, union_mean_extension };

/// Negative normalized cross correlation in [-1, 1]; -1 means perfectly
/// correlated. Masks mark where each function is defined (weight > 0). Under
/// the union policy each function keeps its own-domain statistics and is
/// extended by its mean, so the product vanishes outside the overlap but the
/// normalization runs over the union.
double ncc_distance(const PixelImage& u, const PixelImage& v,
                    DomainPolicy policy = DomainPolicy::union_mean_extension,
                    const ImageDomain* mask_u = nullptr,
                    const ImageDomain* mask_v = nullptr);

/// NCC distance plus its derivative with respect to every pixel of the second
/// image (the statistics of the second image are differentiated through).
/// This is the data-term building block for registration gradients.
struct NccWithGradient {
  double cost = 0.0;
  std::vector<double> d_cost_d_second;
};

NccWithGradient ncc_value_and_gradient_wrt_second(const PixelImage& u,
                                                  const PixelImage& w);

}  // namespace rasterfix
