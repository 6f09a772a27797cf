#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "rasterfix/error.hpp"
#include "rasterfix/image.hpp"

namespace rasterfix {

struct SeriesMetadata {
  double dwell_time_s = 1e-6;    // time to scan one pixel
  double flyback_time_s = 1e-3;  // time between two consecutive lines
  std::optional<double> pixel_pitch_pm;  // nominal pixel size, in-memory only
};

/// A stack of equally sized count frames acquired from the same specimen.
class ImageSeries {
 public:
  ImageSeries(std::vector<PixelImage> frames, SeriesMetadata meta)
      : frames_(std::move(frames)), meta_(meta) {
    require(!frames_.empty(), ErrorCode::invalid_argument, "ImageSeries: no frames");
    require(meta_.dwell_time_s > 0.0 && meta_.flyback_time_s > 0.0,
            ErrorCode::invalid_argument, "ImageSeries: dwell/flyback times must be > 0");
    for (const PixelImage& f : frames_) {
      require(f.same_size(frames_.front()), ErrorCode::invalid_argument,
              "ImageSeries: frames differ in size");
      f.require_counts("ImageSeries");
    }
  }

  int frame_count() const { return static_cast<int>(frames_.size()); }
  int width() const { return frames_.front().width(); }
  int height() const { return frames_.front().height(); }

  const PixelImage& frame(int k) const { return frames_[k]; }
  const std::vector<PixelImage>& frames() const { return frames_; }
  const SeriesMetadata& metadata() const { return meta_; }

  double max_count() const {
    double m = 0.0;
    for (const PixelImage& f : frames_) m = std::max(m, f.max_value());
    return m;
  }

  /// Sub-series with the given frame indices (metadata shared).
  ImageSeries subset(std::span<const int> indices) const {
    std::vector<PixelImage> picked;
    picked.reserve(indices.size());
    for (int k : indices) {
      require(k >= 0 && k < frame_count(), ErrorCode::invalid_argument,
              "ImageSeries::subset: index out of range");
      picked.push_back(frames_[k]);
    }
    return ImageSeries(std::move(picked), meta_);
  }

 private:
  std::vector<PixelImage> frames_;
  SeriesMetadata meta_;
};

}  // namespace rasterfix
