#pragma once

#include <span>
#include <vector>

#include "rasterfix/geometry.hpp"
#include "rasterfix/image.hpp"

namespace rasterfix {

/// Piecewise-bilinear deformation of the unit square, stored as displacement
/// vectors on an (m+1) x (n+1) node grid. phi(p) = p + bilinear(disp, p).
class GridDeformation {
 public:
  GridDeformation(int cells_x, int cells_y);
  static GridDeformation identity(int cells_x, int cells_y) {
    return GridDeformation(cells_x, cells_y);
  }

  int cells_x() const { return cells_x_; }
  int cells_y() const { return cells_y_; }
  int nodes_x() const { return cells_x_ + 1; }
  int nodes_y() const { return cells_y_ + 1; }
  int node_count() const { return nodes_x() * nodes_y(); }
  bool same_grid(const GridDeformation& o) const {
    return cells_x_ == o.cells_x_ && cells_y_ == o.cells_y_;
  }

  Vec2 node_position(int a, int b) const {
    return {static_cast<double>(a) / cells_x_, static_cast<double>(b) / cells_y_};
  }
  Vec2& displacement(int a, int b) { return disp_[static_cast<size_t>(b) * nodes_x() + a]; }
  Vec2 displacement(int a, int b) const {
    return disp_[static_cast<size_t>(b) * nodes_x() + a];
  }
  std::span<Vec2> displacements() { return disp_; }
  std::span<const Vec2> displacements() const { return disp_; }

  Vec2 apply(Vec2 p) const;

  /// Bilinear node weights used when evaluating at p (for chain rules).
  struct CellWeights {
    int a0 = 0, b0 = 0;
    double w[4] = {0, 0, 0, 0};  // (a0,b0), (a0+1,b0), (a0,b0+1), (a0+1,b0+1)
  };
  CellWeights basis(Vec2 p) const;

  /// Jacobian of the displacement field at p (add I for the full Jacobian).
  Mat2 displacement_jacobian(Vec2 p) const;

  /// Nodes whose image under phi leaves the closed unit square.
  std::vector<bool> nodes_leaving_domain() const;

  double max_displacement_norm() const;

 private:
  int cells_x_;
  int cells_y_;
  std::vector<Vec2> disp_;
};

/// Rotation by angle about the origin followed by a translation, in domain
/// units. R is orthonormal with det = 1 by construction.
struct RigidMotion {
  double angle = 0.0;
  Vec2 translation;

  Mat2 rotation() const { return Mat2::rotation(angle); }
  Vec2 apply(Vec2 p) const { return rotation() * p + translation; }
};

RigidMotion rigid_inverse(const RigidMotion& m);

/// Per-pixel shift field s_ij in domain units, optionally constrained to be
/// constant within each scan line (one shift per j).
class ScanlineShiftField {
 public:
  ScanlineShiftField(int width, int height, bool per_line);

  int width() const { return width_; }
  int height() const { return height_; }
  bool per_line() const { return per_line_; }
  int parameter_count() const { return static_cast<int>(s_.size()); }

  Vec2 shift(int i, int j) const { return per_line_ ? s_[j] : s_[index(i, j)]; }
  Vec2& slot(int i, int j) { return per_line_ ? s_[j] : s_[index(i, j)]; }
  std::span<Vec2> slots() { return s_; }
  std::span<const Vec2> slots() const { return s_; }

  /// Expands a per-line field to per-pixel; returns a copy otherwise.
  ScanlineShiftField expanded() const;

  Vec2 mean_shift() const;
  void subtract(Vec2 delta);

 private:
  size_t index(int i, int j) const { return static_cast<size_t>(j) * width_ + i; }
  int width_;
  int height_;
  bool per_line_;
  std::vector<Vec2> s_;
};

struct CostAndGradient {
  double cost = 0.0;
  std::vector<Vec2> gradient;  // one entry per parameter slot of the input
};

/// Integral of ||J(phi) - I||_F^2 over the unit square, evaluated exactly by
/// per-cell 2x2 Gauss quadrature, with the analytic gradient with respect to
/// the node displacements.
CostAndGradient jacobian_regularizer(const GridDeformation& phi);

/// Penalty w * sum over quadrature points of max(0, -det J(phi))^2, keeping
/// the Jacobian positivity constraint smooth for quasi-Newton solvers.
CostAndGradient jacobian_positivity_penalty(const GridDeformation& phi, double weight);

/// Brownian-motion prior on shifts, chained in raster-scan order: squared
/// increments weighted 1/dwell within a line and 1/flyback across lines, with
/// the |s_11|^2/dwell anchor. include_first_line_increments adds the in-line
/// terms of the first scan line (raster order implies them); disable it for a
/// strict transcription of the printed formula.
CostAndGradient brownian_regularizer_r1(const ScanlineShiftField& s, double lambda,
                                        double dwell_time, double flyback_time,
                                        bool include_first_line_increments = true);

/// 0.5 * sum of nu_hor * s_x^2 + nu_vert * s_y^2 over all pixels.
CostAndGradient tikhonov_regularizer_r2(const ScanlineShiftField& s, double nu_hor,
                                        double nu_vert);

/// Raster position of pixel (i, j) under the joint deformation:
/// R (x_ij + s_ij) + v.
Vec2 apply_jud_deformation(const RigidMotion& rigid, const ScanlineShiftField& s,
                           int i, int j);

/// (a o b)(p) = a(b(p)), evaluated by resampling node positions on b's grid.
GridDeformation compose_grid(const GridDeformation& a, const GridDeformation& b);

/// Deformation grid sampling a rigid motion at the node positions.
GridDeformation grid_from_rigid(const RigidMotion& rigid, int cells_x, int cells_y);

/// Resamples the displacement field onto a different grid resolution.
GridDeformation resample_grid(const GridDeformation& phi, int cells_x, int cells_y);

/// Node-sum discretization of sum_k ||phi_k o psi - id||^2.
double psi_alignment_residual(std::span<const GridDeformation> phis,
                              const GridDeformation& psi);

/// Change of variables psi minimizing sum_k ||phi_k o psi - id||^2 over the
/// node-sum discretization. Solved per node by two fixed-point sweeps of the
/// linearized composition; a per-node safeguard guarantees the residual never
/// exceeds its value at psi = id.
GridDeformation bias_correction_psi(std::span<const GridDeformation> phis);

}  // namespace rasterfix
