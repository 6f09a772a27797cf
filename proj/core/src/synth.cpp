#include "rasterfix/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rasterfix/csv.hpp"
#include "rasterfix/parallel.hpp"

namespace rasterfix {

namespace {

uint64_t splitmix_finalize(uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

}  // namespace

CounterRng::CounterRng(uint64_t seed, uint64_t stream)
    : key_(splitmix_finalize(seed + kGolden) ^
           splitmix_finalize(stream * 0xD1B54A32D192ED03ULL + 1)) {}

uint64_t CounterRng::next_u64() {
  ++counter_;
  return splitmix_finalize(key_ + counter_ * kGolden);
}

double CounterRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::normal(double stddev) {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return stddev * std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t CounterRng::poisson(double mean) {
  require(std::isfinite(mean) && mean >= 0.0, ErrorCode::invalid_argument,
          "poisson: mean must be finite and >= 0");
  if (mean == 0.0) return 0;
  if (mean < 30.0) {
    // Inversion by sequential search.
    const double l = std::exp(-mean);
    double p = l;
    double f = l;
    uint64_t k = 0;
    const double u = uniform();
    while (u > f && k < static_cast<uint64_t>(mean) + 1000) {
      ++k;
      p *= mean / static_cast<double>(k);
      f += p;
    }
    return k;
  }
  // PTRS transformed rejection (Hormann 1993).
  const double b = 0.931 + 2.53 * std::sqrt(mean);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mean = std::log(mean);
  while (true) {
    const double u = uniform() - 0.5;
    const double v = uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        k * log_mean - mean - std::lgamma(k + 1.0)) {
      return static_cast<uint64_t>(k);
    }
  }
}

namespace {

BumpImage build_ground_truth(const SynthConfig& cfg) {
  require(cfg.sigma_gen_px > 0.0, ErrorCode::invalid_argument,
          "generate_series: sigma_gen must be > 0");
  require(cfg.dose > 0.0, ErrorCode::invalid_argument, "generate_series: dose must be > 0");
  require(cfg.lattice.basis_offsets_px.size() == cfg.lattice.basis_amplitudes.size(),
          ErrorCode::invalid_argument, "generate_series: lattice basis size mismatch");
  const double margin = 2.0 * cfg.sigma_gen_px;
  const Vec2 a = cfg.lattice.cell_a;
  const Vec2 b = cfg.lattice.cell_b;
  require(std::abs(a.x * b.y - a.y * b.x) > 1e-9, ErrorCode::invalid_argument,
          "generate_series: degenerate lattice cell");
  std::vector<GaussianAtom> atoms;
  const int reach = 1 + static_cast<int>(
                            std::ceil((cfg.width + cfg.height) /
                                      std::min(std::max(1e-9, a.norm()), b.norm())));
  for (int vb = -reach; vb <= reach; ++vb) {
    for (int va = -reach; va <= reach; ++va) {
      for (size_t site = 0; site < cfg.lattice.basis_offsets_px.size(); ++site) {
        const Vec2 c = cfg.lattice.origin_px + static_cast<double>(va) * a +
                       static_cast<double>(vb) * b + cfg.lattice.basis_offsets_px[site];
        if (c.x < -margin || c.x > cfg.width + margin || c.y < -margin ||
            c.y > cfg.height + margin) {
          continue;
        }
        GaussianAtom atom;
        atom.center = {(c.x + 0.5) / cfg.width, (c.y + 0.5) / cfg.height};
        atom.amplitude = cfg.dose * cfg.lattice.basis_amplitudes[site];
        atom.sigma = cfg.sigma_gen_px / cfg.width;
        atoms.push_back(atom);
      }
    }
  }
  require(!atoms.empty(), ErrorCode::invalid_argument,
          "generate_series: lattice places no atoms in the image");
  return BumpImage(std::move(atoms), cfg.dose * cfg.background);
}

}  // namespace

SynthOutput generate_series(const SynthConfig& cfg) {
  require(cfg.width >= 2 && cfg.height >= 2, ErrorCode::invalid_argument,
          "generate_series: image too small");
  require(cfg.frame_count >= 1, ErrorCode::invalid_argument,
          "generate_series: frame count must be >= 1");
  require(cfg.dwell_time_s > 0.0 && cfg.flyback_time_s > 0.0, ErrorCode::invalid_argument,
          "generate_series: times must be > 0");

  const BumpImage truth = build_ground_truth(cfg);
  const int w = cfg.width;
  const int h = cfg.height;
  const int k_count = cfg.frame_count;

  // Frame start offsets continue the Brownian path across frames; the
  // per-frame totals are accumulated sequentially so frame generation itself
  // can run in parallel afterwards.
  const double sdt = cfg.brownian_stddev_px * std::sqrt(cfg.dwell_time_s);
  const double sdT = cfg.brownian_stddev_px * std::sqrt(cfg.flyback_time_s);
  const double sgap = cfg.brownian_stddev_px * std::sqrt(cfg.frame_gap_time_s);

  std::vector<std::vector<Vec2>> paths(static_cast<size_t>(k_count));
  for (int k = 0; k < k_count; ++k) {
    CounterRng rng(cfg.seed, 2 * static_cast<uint64_t>(k));
    std::vector<Vec2>& path = paths[static_cast<size_t>(k)];
    path.resize(static_cast<size_t>(w) * h);
    Vec2 p{0.0, 0.0};
    for (int j = 0; j < h; ++j) {
      const double step = (j == 0) ? sdt : sdT;
      p += Vec2{rng.normal(step), rng.normal(step)};
      path[static_cast<size_t>(j) * w] = p;
      for (int i = 1; i < w; ++i) {
        p += Vec2{rng.normal(sdt), rng.normal(sdt)};
        path[static_cast<size_t>(j) * w + i] = p;
      }
    }
  }
  // Chain the frames: each frame starts where the previous one ended, plus a
  // gap step and an optional per-frame drift kick.
  Vec2 carry{0.0, 0.0};
  for (int k = 0; k < k_count; ++k) {
    CounterRng rng(cfg.seed, 2 * static_cast<uint64_t>(k) + 1);
    if (k > 0) {
      carry += Vec2{rng.normal(sgap), rng.normal(sgap)};
      carry += Vec2{rng.normal(cfg.drift_per_frame_px), rng.normal(cfg.drift_per_frame_px)};
    }
    for (Vec2& v : paths[static_cast<size_t>(k)]) v += carry;
    carry = paths[static_cast<size_t>(k)].back();
  }

  std::vector<PixelImage> frames(static_cast<size_t>(k_count), PixelImage(w, h));
  std::vector<ScanlineShiftField> true_shifts;
  std::vector<RigidMotion> true_rigid(static_cast<size_t>(k_count));
  true_shifts.reserve(static_cast<size_t>(k_count));
  for (int k = 0; k < k_count; ++k) true_shifts.emplace_back(w, h, /*per_line=*/false);

  parallel_for(0, k_count, [&](int k) {
    const std::vector<Vec2>& path = paths[static_cast<size_t>(k)];
    CounterRng noise(cfg.seed, 1000000 + static_cast<uint64_t>(k));
    PixelImage& frame = frames[static_cast<size_t>(k)];
    ScanlineShiftField& shifts = true_shifts[static_cast<size_t>(k)];
    Vec2 mean{0.0, 0.0};
    for (const Vec2& v : path) mean += v;
    mean = mean / static_cast<double>(path.size());
    true_rigid[static_cast<size_t>(k)] =
        RigidMotion{0.0, Vec2{mean.x / w, mean.y / h}};
    for (int j = 0; j < h; ++j) {
      for (int i = 0; i < w; ++i) {
        const Vec2 wobble = path[static_cast<size_t>(j) * w + i];
        shifts.slot(i, j) = Vec2{(wobble.x - mean.x) / w, (wobble.y - mean.y) / h};
        const Vec2 x = pixel_center(i, j, w, h);
        const Vec2 sample_pos = x + Vec2{wobble.x / w, wobble.y / h};
        const double clean = truth.eval(sample_pos);
        frame.at(i, j) = cfg.poisson_noise
                             ? static_cast<double>(noise.poisson(std::max(0.0, clean)))
                             : clean;
      }
    }
  });

  SeriesMetadata meta;
  meta.dwell_time_s = cfg.dwell_time_s;
  meta.flyback_time_s = cfg.flyback_time_s;
  SynthOutput out{ImageSeries(std::move(frames), meta), truth, truth.render(w, h),
                  std::move(true_shifts), std::move(true_rigid)};
  return out;
}

ImageSeries inject_known_shifts(const BumpImage& truth, int width, int height,
                                const SeriesMetadata& meta,
                                std::span<const ScanlineShiftField> shifts,
                                double dose, double background) {
  require(!shifts.empty(), ErrorCode::invalid_argument,
          "inject_known_shifts: no shift fields");
  std::vector<PixelImage> frames;
  frames.reserve(shifts.size());
  for (const ScanlineShiftField& field : shifts) {
    require(field.width() == width && field.height() == height,
            ErrorCode::invalid_argument, "inject_known_shifts: shift field size mismatch");
    PixelImage frame(width, height);
    for (int j = 0; j < height; ++j) {
      for (int i = 0; i < width; ++i) {
        const Vec2 x = pixel_center(i, j, width, height);
        frame.at(i, j) = dose * truth.eval(x + field.shift(i, j)) + background;
      }
    }
    frames.push_back(std::move(frame));
  }
  return ImageSeries(std::move(frames), meta);
}

void save_bumps_csv(const BumpImage& bumps, const std::filesystem::path& path) {
  CsvWriter csv(path, {"l", "y_x", "y_y", "a", "sigma"});
  for (int l = 0; l < bumps.atom_count(); ++l) {
    const GaussianAtom& a = bumps.atoms()[static_cast<size_t>(l)];
    csv.field(l + 1).field(a.center.x).field(a.center.y).field(a.amplitude).field(a.sigma);
    csv.end_row();
  }
  csv.field("offset").field(bumps.offset()).field(0.0).field(0.0).field(0.0);
  csv.end_row();
}

void save_shifts_csv(std::span<const ScanlineShiftField> shifts,
                     const std::filesystem::path& path) {
  CsvWriter csv(path, {"k", "i", "j", "s_x", "s_y"});
  for (size_t k = 0; k < shifts.size(); ++k) {
    const ScanlineShiftField& f = shifts[k];
    for (int j = 0; j < f.height(); ++j) {
      if (f.per_line()) {
        const Vec2 s = f.shift(0, j);
        csv.field(static_cast<int>(k) + 1).field(0).field(j + 1).field(s.x).field(s.y);
        csv.end_row();
        continue;
      }
      for (int i = 0; i < f.width(); ++i) {
        const Vec2 s = f.shift(i, j);
        csv.field(static_cast<int>(k) + 1).field(i + 1).field(j + 1).field(s.x).field(s.y);
        csv.end_row();
      }
    }
  }
}

void save_rigid_csv(std::span<const RigidMotion> rigid,
                    const std::filesystem::path& path) {
  CsvWriter csv(path, {"k", "theta", "v_x", "v_y"});
  for (size_t k = 0; k < rigid.size(); ++k) {
    csv.field(static_cast<int>(k) + 1)
        .field(rigid[k].angle)
        .field(rigid[k].translation.x)
        .field(rigid[k].translation.y);
    csv.end_row();
  }
}

void save_ground_truth(const SynthOutput& out, const std::filesystem::path& dir) {
  save_bumps_csv(out.ground_truth, dir / "truth_bumps.csv");
  save_shifts_csv(out.true_shifts, dir / "truth_shifts.csv");
  save_rigid_csv(out.true_rigid, dir / "truth_rigid.csv");
}

std::vector<ScanlineShiftField> load_shifts_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  require(table.header.size() == 5, ErrorCode::invalid_argument,
          "load_shifts_csv: expected 5 columns");
  // First pass: dimensions.
  int max_k = 0, max_i = 0, max_j = 0;
  bool per_line = true;
  for (const auto& row : table.rows) {
    const int k = static_cast<int>(parse_double(row[0]));
    const int i = static_cast<int>(parse_double(row[1]));
    const int j = static_cast<int>(parse_double(row[2]));
    max_k = std::max(max_k, k);
    max_i = std::max(max_i, i);
    max_j = std::max(max_j, j);
    if (i > 0) per_line = false;
  }
  require(max_k >= 1 && max_j >= 1, ErrorCode::invalid_argument,
          "load_shifts_csv: empty table");
  const int width = per_line ? 2 : max_i;
  std::vector<ScanlineShiftField> out(static_cast<size_t>(max_k),
                                      ScanlineShiftField(width, max_j, per_line));
  for (const auto& row : table.rows) {
    const int k = static_cast<int>(parse_double(row[0]));
    const int i = static_cast<int>(parse_double(row[1]));
    const int j = static_cast<int>(parse_double(row[2]));
    const Vec2 s{parse_double(row[3]), parse_double(row[4])};
    out[static_cast<size_t>(k - 1)].slot(per_line ? 0 : i - 1, j - 1) = s;
  }
  return out;
}

}  // namespace rasterfix
