#include "rasterfix/bump_image.hpp"

#include <algorithm>
#include <cmath>

namespace rasterfix {

BumpImage::BumpImage(std::vector<GaussianAtom> atoms, double offset)
    : atoms_(std::move(atoms)), offset_(offset) {
  require(offset >= 0.0, ErrorCode::invalid_argument, "BumpImage: offset must be >= 0");
  for (const GaussianAtom& a : atoms_) {
    require(a.amplitude > 0.0, ErrorCode::invalid_argument,
            "BumpImage: amplitudes must be > 0");
    require(a.sigma > 0.0, ErrorCode::invalid_argument, "BumpImage: widths must be > 0");
  }
}

double BumpImage::eval(Vec2 x) const {
  double acc = offset_;
  for (const GaussianAtom& a : atoms_) {
    const double r2 = (x - a.center).norm_sq();
    acc += a.amplitude * std::exp(-r2 / (2.0 * a.sigma * a.sigma));
  }
  return acc;
}

Vec2 BumpImage::position_gradient(Vec2 x) const {
  Vec2 g;
  for (const GaussianAtom& a : atoms_) {
    const Vec2 d = x - a.center;
    const double s2 = a.sigma * a.sigma;
    const double e = a.amplitude * std::exp(-d.norm_sq() / (2.0 * s2));
    g += d * (-e / s2);
  }
  return g;
}

void BumpImage::parameter_gradient(Vec2 x, std::span<double> out) const {
  require(static_cast<int>(out.size()) == parameter_count(), ErrorCode::invalid_argument,
          "BumpImage::parameter_gradient: output size mismatch");
  for (int l = 0; l < atom_count(); ++l) {
    const GaussianAtom& a = atoms_[static_cast<size_t>(l)];
    const Vec2 d = x - a.center;
    const double s2 = a.sigma * a.sigma;
    const double e = std::exp(-d.norm_sq() / (2.0 * s2));
    out[static_cast<size_t>(4 * l) + 0] = a.amplitude * e * d.x / s2;
    out[static_cast<size_t>(4 * l) + 1] = a.amplitude * e * d.y / s2;
    out[static_cast<size_t>(4 * l) + 2] = e;
    out[static_cast<size_t>(4 * l) + 3] =
        a.amplitude * e * d.norm_sq() / (s2 * a.sigma);
  }
  out[static_cast<size_t>(4 * atom_count())] = 1.0;
}

PixelImage BumpImage::render(int width, int height) const {
  PixelImage out(width, height);
  for (int j = 0; j < height; ++j) {
    for (int i = 0; i < width; ++i) {
      out.at(i, j) = eval(pixel_center(i, j, width, height));
    }
  }
  return out;
}

PixelImage gaussian_blur(const PixelImage& img, double sigma_px) {
  if (sigma_px <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_px)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius) + 1);
  double norm = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    const double v = std::exp(-0.5 * (t / sigma_px) * (t / sigma_px));
    kernel[static_cast<size_t>(t + radius)] = v;
    norm += v;
  }
  for (double& v : kernel) v /= norm;

  const int w = img.width();
  const int h = img.height();
  auto reflect = [](int idx, int size) {
    if (idx < 0) idx = -idx - 1;
    if (idx >= size) idx = 2 * size - idx - 1;
    return std::clamp(idx, 0, size - 1);
  };
  PixelImage tmp(w, h), out(w, h);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        acc += kernel[static_cast<size_t>(t + radius)] * img.at(reflect(i + t, w), j);
      }
      tmp.at(i, j) = acc;
    }
  }
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        acc += kernel[static_cast<size_t>(t + radius)] * tmp.at(i, reflect(j + t, h));
      }
      out.at(i, j) = acc;
    }
  }
  return out;
}

std::vector<PeakSeed> detect_peaks(const PixelImage& img, const PeakDetectionConfig& cfg) {
  const PixelImage smooth = gaussian_blur(img, cfg.smooth_sigma_px);
  const int w = img.width();
  const int h = img.height();

  // Background from a low quantile of the smoothed image.
  std::vector<double> sorted(smooth.values().begin(), smooth.values().end());
  std::sort(sorted.begin(), sorted.end());
  const double background = sorted[sorted.size() / 10];
  const double peak = sorted.back();
  const double threshold = background + cfg.relative_threshold * (peak - background);

  struct Candidate {
    int i, j;
    double value;
  };
  std::vector<Candidate> candidates;
  for (int j = 1; j < h - 1; ++j) {
    for (int i = 1; i < w - 1; ++i) {
      const double v = smooth.at(i, j);
      if (v < threshold) continue;
      bool is_max = true;
      for (int dj = -1; dj <= 1 && is_max; ++dj) {
        for (int di = -1; di <= 1; ++di) {
          if (di == 0 && dj == 0) continue;
          if (smooth.at(i + di, j + dj) >= v) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) candidates.push_back({i, j, v});
    }
  }
  require(!candidates.empty(), ErrorCode::no_peaks, "detect_peaks: no peaks found");

  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.value != b.value) return a.value > b.value;
    if (a.j != b.j) return a.j < b.j;
    return a.i < b.i;
  });
  std::vector<Candidate> kept;
  const double min_sep_sq = cfg.min_separation_px * cfg.min_separation_px;
  for (const Candidate& c : candidates) {
    bool ok = true;
    for (const Candidate& k : kept) {
      const double dx = c.i - k.i;
      const double dy = c.j - k.j;
      if (dx * dx + dy * dy < min_sep_sq) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(c);
  }

  // Moment-based seed parameters in a local window around each peak.
  std::vector<PeakSeed> seeds;
  seeds.reserve(kept.size());
  const int r = cfg.moment_window_px;
  for (const Candidate& c : kept) {
    double local_min = smooth.at(c.i, c.j);
    for (int dj = -r; dj <= r; ++dj) {
      for (int di = -r; di <= r; ++di) {
        const int ii = std::clamp(c.i + di, 0, w - 1);
        const int jj = std::clamp(c.j + dj, 0, h - 1);
        local_min = std::min(local_min, smooth.at(ii, jj));
      }
    }
    double mass = 0.0, mx = 0.0, my = 0.0, mrr = 0.0;
    for (int dj = -r; dj <= r; ++dj) {
      for (int dii = -r; dii <= r; ++dii) {
        const int ii = std::clamp(c.i + dii, 0, w - 1);
        const int jj = std::clamp(c.j + dj, 0, h - 1);
        const double v = std::max(0.0, smooth.at(ii, jj) - local_min);
        mass += v;
        mx += v * ii;
        my += v * jj;
      }
    }
    PeakSeed seed;
    if (mass > 0.0) {
      seed.center_px = {mx / mass, my / mass};
      for (int dj = -r; dj <= r; ++dj) {
        for (int dii = -r; dii <= r; ++dii) {
          const int ii = std::clamp(c.i + dii, 0, w - 1);
          const int jj = std::clamp(c.j + dj, 0, h - 1);
          const double v = std::max(0.0, smooth.at(ii, jj) - local_min);
          const double dx = ii - seed.center_px.x;
          const double dy = jj - seed.center_px.y;
          mrr += v * (dx * dx + dy * dy);
        }
      }
      // For a 2D Gaussian the radial second moment is 2 sigma^2.
      seed.sigma_px = std::max(0.5, std::sqrt(std::max(1e-12, mrr / mass / 2.0)));
    } else {
      seed.center_px = {static_cast<double>(c.i), static_cast<double>(c.j)};
      seed.sigma_px = 1.0;
    }
    seed.background = local_min;
    seed.amplitude = std::max(1e-12, img.at(c.i, c.j) - local_min);
    seeds.push_back(seed);
  }
  return seeds;
}

BumpImage detect_atoms_for_init(const PixelImage& img, const PeakDetectionConfig& cfg) {
  const std::vector<PeakSeed> seeds = detect_peaks(img, cfg);
  std::vector<GaussianAtom> atoms;
  atoms.reserve(seeds.size());
  const double w = img.width();
  const double h = img.height();
  double background = seeds.front().background;
  for (const PeakSeed& s : seeds) {
    GaussianAtom a;
    a.center = {(s.center_px.x + 0.5) / w, (s.center_px.y + 0.5) / h};
    a.amplitude = s.amplitude;
    a.sigma = s.sigma_px / w;
    atoms.push_back(a);
    background = std::min(background, s.background);
  }
  return BumpImage(std::move(atoms), std::max(0.0, background));
}

}  // namespace rasterfix
