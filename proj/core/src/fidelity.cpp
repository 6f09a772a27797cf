#include "rasterfix/fidelity.hpp"

#include <cmath>
#include <vector>

namespace rasterfix {

namespace {

constexpr double kSigmaDegenerate = 1e-14;

bool in_domain(const ImageDomain* mask, int i, int j) {
  return mask == nullptr || mask->covered(i, j);
}

}  // namespace

DomainStats domain_stats(const PixelImage& u, const ImageDomain* mask) {
  const int w = u.width();
  const int h = u.height();
  std::vector<double> vals;
  vals.reserve(static_cast<size_t>(w) * h);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      if (in_domain(mask, i, j)) vals.push_back(u.at(i, j));
    }
  }
  require(!vals.empty(), ErrorCode::empty_overlap, "domain_stats: empty domain");
  DomainStats s;
  s.count = static_cast<double>(vals.size());
  s.mean = pairwise_sum(vals) / s.count;
  for (double& v : vals) {
    const double d = v - s.mean;
    v = d * d;
  }
  s.sigma = std::sqrt(pairwise_sum(vals) / s.count);
  return s;
}

PoissonFidelity::PoissonFidelity(double max_observed_count) {
  require(std::isfinite(max_observed_count) && max_observed_count >= 0.0,
          ErrorCode::invalid_argument, "PoissonFidelity: bad max observed count");
  floor_ = 1e-8 * (1.0 + max_observed_count);
}

double PoissonFidelity::value(double u, double v) const {
  require(v >= 0.0, ErrorCode::invalid_argument,
          "poisson_nll: observed count must be >= 0");
  const double uf = u > floor_ ? u : floor_;
  return uf - v * std::log(uf);
}

double PoissonFidelity::derivative(double u, double v) const {
  require(v >= 0.0, ErrorCode::invalid_argument,
          "poisson_nll: observed count must be >= 0");
  if (u <= floor_) return 0.0;
  return 1.0 - v / u;
}

double PoissonFidelity::value_and_derivative(double u, double v, double* deriv) const {
  require(v >= 0.0, ErrorCode::invalid_argument,
          "poisson_nll: observed count must be >= 0");
  if (u <= floor_) {
    *deriv = 0.0;
    return floor_ - v * std::log(floor_);
  }
  *deriv = 1.0 - v / u;
  return u - v * std::log(u);
}

double ncc_distance(const PixelImage& u, const PixelImage& v, DomainPolicy policy,
                    const ImageDomain* mask_u, const ImageDomain* mask_v) {
  require(u.same_size(v), ErrorCode::invalid_argument, "ncc_distance: size mismatch");
  const int w = u.width();
  const int h = u.height();

  if (policy == DomainPolicy::intersection) {
    // Stats and sum both over the overlap.
    PixelImage overlap_weights(w, h, 0.0);
    int overlap = 0;
    for (int j = 0; j < h; ++j) {
      for (int i = 0; i < w; ++i) {
        if (in_domain(mask_u, i, j) && in_domain(mask_v, i, j)) {
          overlap_weights.at(i, j) = 1.0;
          ++overlap;
        }
      }
    }
    require(overlap > 0, ErrorCode::empty_overlap, "ncc_distance: empty overlap");
    const ImageDomain overlap_mask(std::move(overlap_weights));
    const DomainStats su = domain_stats(u, &overlap_mask);
    const DomainStats sv = domain_stats(v, &overlap_mask);
    const double scale_u = std::max(1.0, std::abs(su.mean));
    const double scale_v = std::max(1.0, std::abs(sv.mean));
    require(su.sigma > kSigmaDegenerate * scale_u, ErrorCode::degenerate_image,
            "ncc_distance: degenerate image (sigma = 0) in first argument");
    require(sv.sigma > kSigmaDegenerate * scale_v, ErrorCode::degenerate_image,
            "ncc_distance: degenerate image (sigma = 0) in second argument");
    std::vector<double> products;
    products.reserve(static_cast<size_t>(overlap));
    for (int j = 0; j < h; ++j) {
      for (int i = 0; i < w; ++i) {
        if (overlap_mask.covered(i, j)) {
          products.push_back((u.at(i, j) - su.mean) / su.sigma *
                             ((v.at(i, j) - sv.mean) / sv.sigma));
        }
      }
    }
    return -pairwise_sum(products) / static_cast<double>(overlap);
  }

  // Union policy: per-function statistics over each function's own domain;
  // each function is extended by its mean outside it, so the product only
  // accumulates over the overlap while |D| is the union measure.
  const DomainStats su = domain_stats(u, mask_u);
  const DomainStats sv = domain_stats(v, mask_v);
  require(su.sigma > kSigmaDegenerate * std::max(1.0, std::abs(su.mean)),
          ErrorCode::degenerate_image,
          "ncc_distance: degenerate image (sigma = 0) in first argument");
  require(sv.sigma > kSigmaDegenerate * std::max(1.0, std::abs(sv.mean)),
          ErrorCode::degenerate_image,
          "ncc_distance: degenerate image (sigma = 0) in second argument");
  std::vector<double> products;
  double union_count = 0.0;
  bool any_overlap = false;
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const bool du = in_domain(mask_u, i, j);
      const bool dv = in_domain(mask_v, i, j);
      if (du || dv) union_count += 1.0;
      if (du && dv) {
        any_overlap = true;
        products.push_back((u.at(i, j) - su.mean) / su.sigma *
                           ((v.at(i, j) - sv.mean) / sv.sigma));
      }
    }
  }
  require(any_overlap, ErrorCode::empty_overlap, "ncc_distance: empty overlap");
  return -pairwise_sum(products) / union_count;
}

NccWithGradient ncc_value_and_gradient_wrt_second(const PixelImage& u,
                                                  const PixelImage& w) {
  require(u.same_size(w), ErrorCode::invalid_argument,
          "ncc_value_and_gradient_wrt_second: size mismatch");
  const DomainStats su = domain_stats(u);
  const DomainStats sw = domain_stats(w);
  require(su.sigma > kSigmaDegenerate * std::max(1.0, std::abs(su.mean)),
          ErrorCode::degenerate_image, "ncc gradient: degenerate first image");
  require(sw.sigma > kSigmaDegenerate * std::max(1.0, std::abs(sw.mean)),
          ErrorCode::degenerate_image, "ncc gradient: degenerate second image");
  const size_t n = u.values().size();
  const double count = static_cast<double>(n);

  std::vector<double> u_hat(n), w_hat(n), products(n);
  for (size_t idx = 0; idx < n; ++idx) {
    u_hat[idx] = (u.values()[idx] - su.mean) / su.sigma;
    w_hat[idx] = (w.values()[idx] - sw.mean) / sw.sigma;
    products[idx] = u_hat[idx] * w_hat[idx];
  }
  const double corr = pairwise_sum(products) / count;

  NccWithGradient out;
  out.cost = -corr;
  out.d_cost_d_second.resize(n);
  // d(-corr)/dw_a = -(u_hat_a - corr * w_hat_a) / (count * sigma_w); the mean
  // of u_hat vanishes because u's statistics are taken over the full domain.
  const double scale = 1.0 / (count * sw.sigma);
  for (size_t idx = 0; idx < n; ++idx) {
    out.d_cost_d_second[idx] = -(u_hat[idx] - corr * w_hat[idx]) * scale;
  }
  return out;
}

}  // namespace rasterfix
