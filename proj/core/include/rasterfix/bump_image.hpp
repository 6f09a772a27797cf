#pragma once

#include <span>
#include <vector>

#include "rasterfix/geometry.hpp"
#include "rasterfix/image.hpp"

namespace rasterfix {

struct GaussianAtom {
  Vec2 center;       // in domain units
  double amplitude;  // > 0
  double sigma;      // > 0, isotropic width in domain units
};

/// Sum of isotropic Gaussians plus a constant background offset:
/// f(x) = sum_l a_l exp(-|x - y_l|^2 / (2 sigma_l^2)) + o.
class BumpImage {
 public:
  BumpImage() = default;
  BumpImage(std::vector<GaussianAtom> atoms, double offset);

  int atom_count() const { return static_cast<int>(atoms_.size()); }
  const std::vector<GaussianAtom>& atoms() const { return atoms_; }
  double offset() const { return offset_; }

  double eval(Vec2 x) const;
  Vec2 position_gradient(Vec2 x) const;

  /// Number of scalar parameters: 4 per atom (y_x, y_y, a, sigma) plus the
  /// offset.
  int parameter_count() const { return 4 * atom_count() + 1; }
  /// d(eval at x)/d(parameters), packed atom-major then offset.
  void parameter_gradient(Vec2 x, std::span<double> out) const;

  PixelImage render(int width, int height) const;

 private:
  std::vector<GaussianAtom> atoms_;
  double offset_ = 0.0;
};

struct PeakDetectionConfig {
  double smooth_sigma_px = 1.5;
  double relative_threshold = 0.35;  // fraction of (max - background) above background
  double min_separation_px = 4.0;
  int moment_window_px = 6;
};

/// A detected peak in pixel coordinates with moment-based seed parameters.
struct PeakSeed {
  Vec2 center_px;
  double amplitude = 0.0;
  double sigma_px = 1.0;
  double background = 0.0;
};

/// Gaussian-smoothed local-maxima detection with greedy minimum-separation
/// suppression (strongest peak first). Throws no_peaks if nothing clears the
/// threshold.
std::vector<PeakSeed> detect_peaks(const PixelImage& img, const PeakDetectionConfig& cfg);

/// Initial bump model from detected peaks; centers and widths are converted
/// to domain units using the image width.
BumpImage detect_atoms_for_init(const PixelImage& img, const PeakDetectionConfig& cfg = {});

/// Separable Gaussian blur with reflected boundaries.
PixelImage gaussian_blur(const PixelImage& img, double sigma_px);

}  // namespace rasterfix
