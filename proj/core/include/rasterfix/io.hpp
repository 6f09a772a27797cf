#pragma once

#include <filesystem>
#include <vector>

#include "rasterfix/image.hpp"
#include "rasterfix/series.hpp"

namespace rasterfix {

/// Native container: magic ("RSIS" for stacks, "RSIM" for single images),
/// u32 version=1, u32 K, u32 M, u32 N, f64 dwell time, f64 flyback time,
/// then K*N*M little-endian f64 values (frame-major, then scan-line-major).
/// Values are written bit-exactly regardless of host endianness.
struct RawContainer {
  std::vector<PixelImage> frames;
  double dwell_time_s = 0.0;
  double flyback_time_s = 0.0;
};

void save_raw_container(const RawContainer& c, const std::filesystem::path& path,
                        bool single_image_magic);
RawContainer load_raw_container(const std::filesystem::path& path,
                                bool single_image_magic);

void save_series(const ImageSeries& series, const std::filesystem::path& path);
ImageSeries load_series(const std::filesystem::path& path);

void save_image(const PixelImage& img, const std::filesystem::path& path);
PixelImage load_image(const std::filesystem::path& path);

/// Binary PGM (P5) interop. Import keeps 16-bit counts lossless as f64;
/// export rounds to the nearest count and clamps to [0, 65535].
void save_pgm16(const PixelImage& img, const std::filesystem::path& path);
PixelImage load_pgm(const std::filesystem::path& path);

}  // namespace rasterfix
