#pragma once

#include <span>
#include <vector>

#include "rasterfix/error.hpp"
#include "rasterfix/geometry.hpp"

namespace rasterfix {

/// Raster of f64 intensities on the unit square. The fast scan index i runs
/// along x (width M), the slow index j along y (height N); scan line j is
/// contiguous in memory. Pixel (i, j) sits at the continuous coordinate
/// ((i + 1/2)/M, (j + 1/2)/N).
class PixelImage {
 public:
  PixelImage() = default;
  PixelImage(int width, int height, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  int pixel_count() const { return width_ * height_; }

  double& at(int i, int j) { return values_[static_cast<size_t>(j) * width_ + i]; }
  double at(int i, int j) const { return values_[static_cast<size_t>(j) * width_ + i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  Vec2 pixel_center(int i, int j) const;

  double min_value() const;
  double max_value() const;
  double mean_value() const;

  /// Throws if any value is non-finite.
  void require_finite(const char* context) const;
  /// Throws if any value is negative or non-finite (measured count frames).
  void require_counts(const char* context) const;

  bool same_size(const PixelImage& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

/// Center coordinate of pixel (i, j) in a width x height raster.
Vec2 pixel_center(int i, int j, int width, int height);

/// Index <-> coordinate mapping plus a per-pixel coverage weight map
/// (e.g. the number of frames covering a pixel after deformation).
class ImageDomain {
 public:
  ImageDomain(int width, int height, double fill = 1.0);
  explicit ImageDomain(PixelImage weights);

  int width() const { return weights_.width(); }
  int height() const { return weights_.height(); }
  double weight(int i, int j) const { return weights_.at(i, j); }
  void set_weight(int i, int j, double w);
  bool covered(int i, int j) const { return weights_.at(i, j) > 0.0; }
  const PixelImage& weights() const { return weights_; }

  Vec2 pixel_center(int i, int j) const {
    return rasterfix::pixel_center(i, j, width(), height());
  }

 private:
  PixelImage weights_;
};

/// Deterministic pairwise-tree sum; used for all image-sized reductions so
/// results do not depend on threading or traversal batching.
double pairwise_sum(std::span<const double> values);

/// Bilinear interpolation of img at p in [0,1]^2, clamped at the boundary.
/// Reproduces pixel values at pixel centers and is C^0 everywhere.
double bilinear_interpolate(const PixelImage& img, Vec2 p);

struct BilinearSample {
  double value = 0.0;
  Vec2 gradient;  // d(value)/dp; components are 0 where p was clamped
};

BilinearSample bilinear_sample(const PixelImage& img, Vec2 p);

/// True iff p lies inside the closed unit square.
bool in_unit_square(Vec2 p);

enum class AverageMethod { mean, median };

/// Pixel-wise mean or median of equally sized frames. The even-count median
/// is the mean of the two middle values.
PixelImage average_frames(std::span<const PixelImage> frames, AverageMethod method);

/// Weighted variant: weighted mean, or weights-as-multiplicity median. Pixels
/// with zero total weight are invalid: value 0, coverage weight 0.
PixelImage average_frames(std::span<const PixelImage> frames, AverageMethod method,
                          std::span<const ImageDomain> weights,
                          ImageDomain* coverage_out = nullptr);

/// 2x2 block-average downsampling (trailing odd row/column dropped).
PixelImage downsample_2x(const PixelImage& img);

/// ||a - b||_2 / ||b||_2 over all pixels.
double relative_rms_difference(const PixelImage& a, const PixelImage& b);

}  // namespace rasterfix
