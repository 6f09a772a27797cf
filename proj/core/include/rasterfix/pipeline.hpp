#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rasterfix/deform.hpp"
#include "rasterfix/fidelity.hpp"
#include "rasterfix/optim.hpp"
#include "rasterfix/series.hpp"
#include "rasterfix/spline_image.hpp"

namespace rasterfix {

struct LossConfig {
  // Deformation regularization weight for the NCC methods; < 0 selects the
  // balance rule (data and regularizer of similar magnitude at the coarsest
  // pyramid level).
  double lambda = -1.0;
  // Image-norm weight of the general multi-frame loss; no concrete norm is
  // configured and the joint model drops the term, so 0 is the only value.
  double mu = 0.0;
  // Brownian scaling Lambda; < 0 derives it from Lambda/(2 dwell) = 50.
  double lambda_brownian = -1.0;
  double nu_hor = 25.9;
  double nu_vert = 71.4;
  int spline_n = 64;
  // Dwell/flyback overrides; <= 0 takes them from the series metadata.
  double dwell_override_s = -1.0;
  double flyback_override_s = -1.0;
  AverageMethod averaging = AverageMethod::median;
  DomainPolicy domain_policy = DomainPolicy::union_mean_extension;
  bool strict_r1 = false;

  int pyramid_levels = 3;
  int pixels_per_node = 8;
  int inner_iterations_per_level = 50;
  int max_outer = 20;
  double outer_tolerance = 1e-4;
  int stage_max_iterations = 200;
  double stage_tolerance_scale = 1e-6;  // gradient tol = scale * (1 + |f(x0)|)
};

struct LossTraceEntry {
  std::string label;
  double value = 0.0;
  bool accepted = true;
};

struct StageReport {
  std::string stage;
  SolverReport report;
};

struct PsiDiagnostic {
  int outer_iteration = 0;
  double residual_identity = 0.0;  // sum_k ||phi_k - id||^2 (node sum)
  double residual_psi = 0.0;       // sum_k ||phi_k o psi - id||^2
};

struct ReconstructionResult {
  std::string method;
  PixelImage reconstruction;
  std::optional<SplineImage> spline_model;
  std::vector<GridDeformation> grid_deformations;  // NRR / NRR+
  std::vector<RigidMotion> rigid_motions;          // JUD
  std::vector<ScanlineShiftField> shift_fields;    // JUD, gauge-fixed
  std::vector<LossTraceEntry> loss_trace;
  std::vector<StageReport> stage_reports;
  std::vector<PsiDiagnostic> psi_trace;
  bool converged = false;
  std::string failed_stage;  // nonempty when a stage failed; partial result kept
};

/// Balance rule for the NCC deformation weight, evaluated on the given pair:
/// |data term at init| / R(perturbed init).
double auto_lambda(const PixelImage& u, const PixelImage& v,
                   const GridDeformation& init);

/// Minimizes NCC(u, v o phi) + lambda R(phi) plus the Jacobian positivity
/// penalty, coarse to fine over a block-average pyramid with an exhaustive
/// rigid search on the coarsest level. Never returns a deformation whose
/// loss exceeds the loss of init.
GridDeformation register_pair(const PixelImage& u, const PixelImage& v, double lambda,
                              const GridDeformation& init, const LossConfig& cfg = {});

/// Rigid-model variant used for the joint method's initialization; returns
/// the pullback motion T with NCC(u, v o T) minimized.
RigidMotion register_rigid_pullback(const PixelImage& u, const PixelImage& v,
                                    const LossConfig& cfg = {});

/// NCC data term of the registration loss and its gradient with respect to
/// the grid node displacements (packed x0,y0,x1,y1,...).
double registration_ncc_term(const PixelImage& u, const PixelImage& v,
                             const GridDeformation& phi);
std::vector<double> registration_ncc_gradient(const PixelImage& u, const PixelImage& v,
                                              const GridDeformation& phi);

std::vector<double> pack_grid(const GridDeformation& phi);
GridDeformation unpack_grid(std::span<const double> x, int cells_x, int cells_y);

/// Full registration objective (data + lambda R + positivity penalty) over
/// packed node displacements; exposed for gradient checking.
std::unique_ptr<SmoothObjective> make_registration_objective(
    const PixelImage& u, const PixelImage& v, int cells_x, int cells_y, double lambda,
    double penalty_weight);

ReconstructionResult nrr_reconstruct(const ImageSeries& series,
                                     const LossConfig& cfg = {});
ReconstructionResult nrr_plus_reconstruct(const ImageSeries& series,
                                          const LossConfig& cfg = {});
ReconstructionResult jud_reconstruct(const ImageSeries& series,
                                     const LossConfig& cfg = {});

/// Joint-model state: spline coefficients, per-frame rigid motions and
/// per-frame scanline shift fields.
struct JudState {
  SplineImage spline;
  std::vector<RigidMotion> rigid;
  std::vector<ScanlineShiftField> shifts;
};

JudState make_initial_jud_state(const ImageSeries& series, const LossConfig& cfg,
                                bool per_line_shifts);

struct JudBreakdown {
  double total = 0.0;
  double data = 0.0;
  double r1 = 0.0;
  double r2 = 0.0;
};

struct JudGradient {
  std::vector<double> spline;               // n*n, matches coefficient layout
  std::vector<double> rigid;                // theta, v_x, v_y per frame
  std::vector<std::vector<Vec2>> shifts;    // per frame, one entry per slot
};

/// Joint objective: per-frame Poisson data term of the spline sampled at
/// R_k(x_ij + s_ij) + v_k, plus Brownian and Tikhonov shift regularizers.
/// The measured counts are never interpolated.
JudBreakdown jud_objective(const ImageSeries& series, const LossConfig& cfg,
                           const JudState& state, JudGradient* gradient = nullptr);

struct JudBlocks {
  bool spline = true;
  bool rigid = false;
  bool shifts = false;
};

/// Stage objective over the selected free blocks (others fixed at the base
/// state), with internal per-block parameter scaling.
std::unique_ptr<SmoothObjective> make_jud_stage_objective(const ImageSeries& series,
                                                          const LossConfig& cfg,
                                                          const JudState& base,
                                                          JudBlocks blocks);

/// Samples the continuous model at pixel centers (spline render for the
/// joint method, raster resample otherwise).
PixelImage render_model(const ReconstructionResult& result, int width, int height);

/// Persists a reconstruction as a directory: rendered image, model file,
/// deformation CSVs/containers, loss trace, solver reports and the effective
/// configuration snapshot.
void save_result(const ReconstructionResult& result, const std::filesystem::path& dir,
                 const std::vector<std::pair<std::string, std::string>>& config_snapshot);

}  // namespace rasterfix
