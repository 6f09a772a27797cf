#pragma once

#include <cstdint>
#include <vector>

#include "rasterfix/bump_image.hpp"
#include "rasterfix/deform.hpp"
#include "rasterfix/series.hpp"

namespace rasterfix {

/// Deterministic counter-based random stream (SplitMix64 over a keyed
/// counter). Identical (seed, stream) pairs produce identical draws on every
/// platform, independent of how many values other streams consumed.
class CounterRng {
 public:
  CounterRng(uint64_t seed, uint64_t stream);

  double uniform();                // [0, 1)
  double normal(double stddev);    // Box-Muller
  uint64_t poisson(double mean);   // inversion for small means, PTRS above

 private:
  uint64_t next_u64();
  uint64_t key_;
  uint64_t counter_ = 0;
};

struct LatticeSpec {
  Vec2 cell_a{13.0, 0.0};   // unit cell vectors in pixels
  Vec2 cell_b{0.0, 24.0};
  Vec2 origin_px{6.5, 12.0};
  std::vector<Vec2> basis_offsets_px{{0.0, 0.0}};
  std::vector<double> basis_amplitudes{1.0};
};

struct SynthConfig {
  int width = 64;
  int height = 64;
  int frame_count = 64;
  LatticeSpec lattice;
  double sigma_gen_px = 4.25;    // Gaussian size used to build the ground truth
  double background = 0.1;       // relative to unit amplitude
  double dose = 200.0;           // expected counts at a unit-amplitude peak
  double brownian_stddev_px = 4.0;  // increment std per sqrt(second)
  double dwell_time_s = 1e-6;
  double flyback_time_s = 1e-3;
  double frame_gap_time_s = 1e-3;   // Brownian step between frames
  double drift_per_frame_px = 0.0;  // extra deterministic-std drift per frame
  bool poisson_noise = true;
  uint64_t seed = 1;
};

struct SynthOutput {
  ImageSeries series;
  BumpImage ground_truth;               // domain units
  PixelImage ground_truth_render;
  std::vector<ScanlineShiftField> true_shifts;  // zero-mean per frame, domain units
  std::vector<RigidMotion> true_rigid;          // per-frame mean drift
};

/// Builds the Gaussian-lattice ground truth, walks a Brownian position path
/// in raster-scan order (variance per step proportional to the dwell time
/// within lines and to the flyback time across lines) and draws Poisson
/// counts at the displaced sample positions.
SynthOutput generate_series(const SynthConfig& cfg);

/// Renders frames of the ground truth sampled at x_ij + s_ij, with no noise
/// and no rigid part; used for shift-recovery experiments.
ImageSeries inject_known_shifts(const BumpImage& truth, int width, int height,
                                const SeriesMetadata& meta,
                                std::span<const ScanlineShiftField> shifts,
                                double dose = 1.0, double background = 0.0);

/// Ground-truth sidecar files: bump CSV, per-frame shift CSV, rigid CSV.
void save_ground_truth(const SynthOutput& out, const std::filesystem::path& dir);

void save_bumps_csv(const BumpImage& bumps, const std::filesystem::path& path);
void save_shifts_csv(std::span<const ScanlineShiftField> shifts,
                     const std::filesystem::path& path);
std::vector<ScanlineShiftField> load_shifts_csv(const std::filesystem::path& path);
void save_rigid_csv(std::span<const RigidMotion> rigid,
                    const std::filesystem::path& path);

}  // namespace rasterfix
