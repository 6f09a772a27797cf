#include "rasterfix/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rasterfix {

PixelImage::PixelImage(int width, int height, double fill)
    : width_(width), height_(height) {
  require(width >= 2 && height >= 2, ErrorCode::invalid_argument,
          "PixelImage requires width >= 2 and height >= 2, got " +
              std::to_string(width) + "x" + std::to_string(height));
  values_.assign(static_cast<size_t>(width) * height, fill);
}

Vec2 PixelImage::pixel_center(int i, int j) const {
  return rasterfix::pixel_center(i, j, width_, height_);
}

double PixelImage::min_value() const {
  return *std::min_element(values_.begin(), values_.end());
}

double PixelImage::max_value() const {
  return *std::max_element(values_.begin(), values_.end());
}

double PixelImage::mean_value() const {
  return pairwise_sum(values_) / static_cast<double>(values_.size());
}

void PixelImage::require_finite(const char* context) const {
  for (double v : values_) {
    require(std::isfinite(v), ErrorCode::invalid_argument,
            std::string(context) + ": non-finite pixel value");
  }
}

void PixelImage::require_counts(const char* context) const {
  for (double v : values_) {
    require(std::isfinite(v) && v >= 0.0, ErrorCode::invalid_argument,
            std::string(context) + ": pixel values must be finite and >= 0");
  }
}

Vec2 pixel_center(int i, int j, int width, int height) {
  return {(i + 0.5) / width, (j + 0.5) / height};
}

ImageDomain::ImageDomain(int width, int height, double fill)
    : weights_(width, height, fill) {
  require(fill >= 0.0, ErrorCode::invalid_argument, "ImageDomain: negative fill weight");
}

ImageDomain::ImageDomain(PixelImage weights) : weights_(std::move(weights)) {
  for (double w : weights_.values()) {
    require(std::isfinite(w) && w >= 0.0, ErrorCode::invalid_argument,
            "ImageDomain: weights must be finite and >= 0");
  }
}

void ImageDomain::set_weight(int i, int j, double w) {
  require(std::isfinite(w) && w >= 0.0, ErrorCode::invalid_argument,
          "ImageDomain: weights must be finite and >= 0");
  weights_.at(i, j) = w;
}

double pairwise_sum(std::span<const double> values) {
  const size_t n = values.size();
  if (n <= 32) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const size_t half = n / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace {

struct AxisLookup {
  int i0;
  double frac;
  bool clamped;
};

AxisLookup axis_lookup(double coord, int size) {
  const double u_raw = coord * size - 0.5;
  const double hi = static_cast<double>(size - 1);
  const bool clamped = u_raw < 0.0 || u_raw > hi;
  const double u = std::clamp(u_raw, 0.0, hi);
  int i0 = static_cast<int>(std::floor(u));
  i0 = std::min(i0, size - 2);
  return {i0, u - i0, clamped};
}

}  // namespace

bool in_unit_square(Vec2 p) {
  return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0;
}

double bilinear_interpolate(const PixelImage& img, Vec2 p) {
  require(std::isfinite(p.x) && std::isfinite(p.y), ErrorCode::invalid_argument,
          "bilinear_interpolate: non-finite query point");
  const AxisLookup ax = axis_lookup(p.x, img.width());
  const AxisLookup ay = axis_lookup(p.y, img.height());
  const double v00 = img.at(ax.i0, ay.i0);
  const double v10 = img.at(ax.i0 + 1, ay.i0);
  const double v01 = img.at(ax.i0, ay.i0 + 1);
  const double v11 = img.at(ax.i0 + 1, ay.i0 + 1);
  const double top = v00 + ax.frac * (v10 - v00);
  const double bot = v01 + ax.frac * (v11 - v01);
  return top + ay.frac * (bot - top);
}

BilinearSample bilinear_sample(const PixelImage& img, Vec2 p) {
  require(std::isfinite(p.x) && std::isfinite(p.y), ErrorCode::invalid_argument,
          "bilinear_sample: non-finite query point");
  const AxisLookup ax = axis_lookup(p.x, img.width());
  const AxisLookup ay = axis_lookup(p.y, img.height());
  const double v00 = img.at(ax.i0, ay.i0);
  const double v10 = img.at(ax.i0 + 1, ay.i0);
  const double v01 = img.at(ax.i0, ay.i0 + 1);
  const double v11 = img.at(ax.i0 + 1, ay.i0 + 1);
  BilinearSample out;
  const double top = v00 + ax.frac * (v10 - v00);
  const double bot = v01 + ax.frac * (v11 - v01);
  out.value = top + ay.frac * (bot - top);
  out.gradient.x = ax.clamped ? 0.0
                              : ((1.0 - ay.frac) * (v10 - v00) + ay.frac * (v11 - v01)) *
                                    img.width();
  out.gradient.y = ay.clamped ? 0.0 : (bot - top) * img.height();
  return out;
}

namespace {

double median_of_sorted(std::span<const double> v) {
  const size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Weighted median with weights as multiplicity; at an exact half-weight
/// split, the two adjacent values are averaged (matches the even-count rule).
double weighted_median(std::span<const std::pair<double, double>> value_weight,
                       double total_weight) {
  const double half = 0.5 * total_weight;
  double cum = 0.0;
  for (size_t a = 0; a < value_weight.size(); ++a) {
    cum += value_weight[a].second;
    if (cum > half) return value_weight[a].first;
    if (cum == half) {
      if (a + 1 < value_weight.size()) {
        return 0.5 * (value_weight[a].first + value_weight[a + 1].first);
      }
      return value_weight[a].first;
    }
  }
  return value_weight.back().first;
}

}  // namespace

PixelImage average_frames(std::span<const PixelImage> frames, AverageMethod method) {
  require(!frames.empty(), ErrorCode::invalid_argument, "average_frames: empty frame list");
  const PixelImage& first = frames[0];
  for (const PixelImage& f : frames) {
    require(f.same_size(first), ErrorCode::invalid_argument,
            "average_frames: frames differ in size");
  }
  const int w = first.width();
  const int h = first.height();
  PixelImage out(w, h);
  std::vector<double> column(frames.size());
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      for (size_t k = 0; k < frames.size(); ++k) column[k] = frames[k].at(i, j);
      if (method == AverageMethod::mean) {
        out.at(i, j) = pairwise_sum(column) / static_cast<double>(column.size());
      } else {
        std::sort(column.begin(), column.end());
        out.at(i, j) = median_of_sorted(column);
      }
    }
  }
  return out;
}

PixelImage average_frames(std::span<const PixelImage> frames, AverageMethod method,
                          std::span<const ImageDomain> weights,
                          ImageDomain* coverage_out) {
  require(!frames.empty(), ErrorCode::invalid_argument, "average_frames: empty frame list");
  require(weights.size() == frames.size(), ErrorCode::invalid_argument,
          "average_frames: one weight map per frame required");
  const PixelImage& first = frames[0];
  for (size_t k = 0; k < frames.size(); ++k) {
    require(frames[k].same_size(first), ErrorCode::invalid_argument,
            "average_frames: frames differ in size");
    require(weights[k].width() == first.width() && weights[k].height() == first.height(),
            ErrorCode::invalid_argument, "average_frames: weight map size mismatch");
  }
  const int w = first.width();
  const int h = first.height();
  PixelImage out(w, h);
  PixelImage total(w, h);
  std::vector<std::pair<double, double>> vw;
  std::vector<double> contrib(frames.size());
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      double wsum = 0.0;
      vw.clear();
      for (size_t k = 0; k < frames.size(); ++k) {
        const double wk = weights[k].weight(i, j);
        wsum += wk;
        contrib[k] = wk * frames[k].at(i, j);
        if (wk > 0.0) vw.emplace_back(frames[k].at(i, j), wk);
      }
      total.at(i, j) = wsum;
      if (wsum <= 0.0) {
        out.at(i, j) = 0.0;
        continue;
      }
      if (method == AverageMethod::mean) {
        out.at(i, j) = pairwise_sum(contrib) / wsum;
      } else {
        std::sort(vw.begin(), vw.end());
        out.at(i, j) = weighted_median(vw, wsum);
      }
    }
  }
  if (coverage_out != nullptr) *coverage_out = ImageDomain(std::move(total));
  return out;
}

PixelImage downsample_2x(const PixelImage& img) {
  const int w = std::max(2, img.width() / 2);
  const int h = std::max(2, img.height() / 2);
  PixelImage out(w, h);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      out.at(i, j) = 0.25 * (img.at(2 * i, 2 * j) + img.at(2 * i + 1, 2 * j) +
                             img.at(2 * i, 2 * j + 1) + img.at(2 * i + 1, 2 * j + 1));
    }
  }
  return out;
}

double relative_rms_difference(const PixelImage& a, const PixelImage& b) {
  require(a.same_size(b), ErrorCode::invalid_argument,
          "relative_rms_difference: size mismatch");
  std::vector<double> diff_sq(a.values().size());
  std::vector<double> ref_sq(a.values().size());
  for (size_t idx = 0; idx < diff_sq.size(); ++idx) {
    const double d = a.values()[idx] - b.values()[idx];
    diff_sq[idx] = d * d;
    ref_sq[idx] = b.values()[idx] * b.values()[idx];
  }
  const double ref = pairwise_sum(ref_sq);
  if (ref <= 0.0) return std::sqrt(pairwise_sum(diff_sq));
  return std::sqrt(pairwise_sum(diff_sq) / ref);
}

}  // namespace rasterfix
