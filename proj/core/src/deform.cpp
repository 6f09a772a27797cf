#include "rasterfix/deform.hpp"

#include <algorithm>
#include <cmath>

namespace rasterfix {

GridDeformation::GridDeformation(int cells_x, int cells_y)
    : cells_x_(cells_x), cells_y_(cells_y) {
  require(cells_x >= 1 && cells_y >= 1, ErrorCode::invalid_argument,
          "GridDeformation: needs at least one cell per direction");
  disp_.assign(static_cast<size_t>(nodes_x()) * nodes_y(), Vec2{});
}

GridDeformation::CellWeights GridDeformation::basis(Vec2 p) const {
  const double cx = std::clamp(p.x, 0.0, 1.0) * cells_x_;
  const double cy = std::clamp(p.y, 0.0, 1.0) * cells_y_;
  CellWeights cw;
  cw.a0 = std::min(static_cast<int>(cx), cells_x_ - 1);
  cw.b0 = std::min(static_cast<int>(cy), cells_y_ - 1);
  const double fx = cx - cw.a0;
  const double fy = cy - cw.b0;
  cw.w[0] = (1.0 - fx) * (1.0 - fy);
  cw.w[1] = fx * (1.0 - fy);
  cw.w[2] = (1.0 - fx) * fy;
  cw.w[3] = fx * fy;
  return cw;
}

Vec2 GridDeformation::apply(Vec2 p) const {
  const CellWeights cw = basis(p);
  const Vec2 d = cw.w[0] * displacement(cw.a0, cw.b0) +
                 cw.w[1] * displacement(cw.a0 + 1, cw.b0) +
                 cw.w[2] * displacement(cw.a0, cw.b0 + 1) +
                 cw.w[3] * displacement(cw.a0 + 1, cw.b0 + 1);
  return p + d;
}

Mat2 GridDeformation::displacement_jacobian(Vec2 p) const {
  const CellWeights cw = basis(p);
  const double cx = std::clamp(p.x, 0.0, 1.0) * cells_x_;
  const double cy = std::clamp(p.y, 0.0, 1.0) * cells_y_;
  const double fx = cx - cw.a0;
  const double fy = cy - cw.b0;
  const Vec2 d00 = displacement(cw.a0, cw.b0);
  const Vec2 d10 = displacement(cw.a0 + 1, cw.b0);
  const Vec2 d01 = displacement(cw.a0, cw.b0 + 1);
  const Vec2 d11 = displacement(cw.a0 + 1, cw.b0 + 1);
  const Vec2 ddx = ((1.0 - fy) * (d10 - d00) + fy * (d11 - d01)) * cells_x_;
  const Vec2 ddy = ((1.0 - fx) * (d01 - d00) + fx * (d11 - d10)) * cells_y_;
  return {ddx.x, ddy.x, ddx.y, ddy.y};
}

std::vector<bool> GridDeformation::nodes_leaving_domain() const {
  std::vector<bool> out(disp_.size(), false);
  for (int b = 0; b < nodes_y(); ++b) {
    for (int a = 0; a < nodes_x(); ++a) {
      const Vec2 q = node_position(a, b) + displacement(a, b);
      out[static_cast<size_t>(b) * nodes_x() + a] = !in_unit_square(q);
    }
  }
  return out;
}

double GridDeformation::max_displacement_norm() const {
  double m = 0.0;
  for (const Vec2& d : disp_) m = std::max(m, d.norm());
  return m;
}

RigidMotion rigid_inverse(const RigidMotion& m) {
  RigidMotion inv;
  inv.angle = -m.angle;
  inv.translation = -(Mat2::rotation(-m.angle) * m.translation);
  return inv;
}

ScanlineShiftField::ScanlineShiftField(int width, int height, bool per_line)
    : width_(width), height_(height), per_line_(per_line) {
  require(width >= 1 && height >= 1, ErrorCode::invalid_argument,
          "ScanlineShiftField: empty grid");
  s_.assign(per_line ? static_cast<size_t>(height)
                     : static_cast<size_t>(width) * height,
            Vec2{});
}

ScanlineShiftField ScanlineShiftField::expanded() const {
  if (!per_line_) return *this;
  ScanlineShiftField out(width_, height_, false);
  for (int j = 0; j < height_; ++j) {
    for (int i = 0; i < width_; ++i) out.slot(i, j) = s_[j];
  }
  return out;
}

Vec2 ScanlineShiftField::mean_shift() const {
  Vec2 acc;
  for (int j = 0; j < height_; ++j) {
    for (int i = 0; i < width_; ++i) acc += shift(i, j);
  }
  return acc / (static_cast<double>(width_) * height_);
}

void ScanlineShiftField::subtract(Vec2 delta) {
  for (Vec2& v : s_) v -= delta;
}

namespace {

// 2-point Gauss nodes on [0,1]; exact for the quadratic integrands of the
// bilinear Jacobian terms.
constexpr double kGaussA = 0.21132486540518711775;  // (1 - 1/sqrt(3)) / 2
constexpr double kGaussB = 0.78867513459481288225;

struct QuadPoint {
  double fx, fy;
};

constexpr QuadPoint kQuad[4] = {
    {kGaussA, kGaussA}, {kGaussB, kGaussA}, {kGaussA, kGaussB}, {kGaussB, kGaussB}};

}  // namespace

CostAndGradient jacobian_regularizer(const GridDeformation& phi) {
  const int m = phi.cells_x();
  const int n = phi.cells_y();
  const double cell_area = 1.0 / (static_cast<double>(m) * n);
  CostAndGradient out;
  out.gradient.assign(static_cast<size_t>(phi.node_count()), Vec2{});
  std::vector<double> cell_costs;
  cell_costs.reserve(static_cast<size_t>(m) * n);

  auto node_index = [&](int a, int b) { return static_cast<size_t>(b) * (m + 1) + a; };

  for (int b = 0; b < n; ++b) {
    for (int a = 0; a < m; ++a) {
      const Vec2 d00 = phi.displacement(a, b);
      const Vec2 d10 = phi.displacement(a + 1, b);
      const Vec2 d01 = phi.displacement(a, b + 1);
      const Vec2 d11 = phi.displacement(a + 1, b + 1);
      double cell_cost = 0.0;
      for (const QuadPoint& q : kQuad) {
        const Vec2 ddx = ((1.0 - q.fy) * (d10 - d00) + q.fy * (d11 - d01)) *
                         static_cast<double>(m);
        const Vec2 ddy = ((1.0 - q.fx) * (d01 - d00) + q.fx * (d11 - d10)) *
                         static_cast<double>(n);
        // J(phi) - I equals the displacement Jacobian [ddx | ddy].
        cell_cost += 0.25 * (ddx.norm_sq() + ddy.norm_sq());

        const double wq = 0.25 * cell_area;
        // d(cell term)/d(node displacement): 2 (J - I) : dJ/d(node).
        const double gx00 = -(1.0 - q.fy) * m, gx10 = (1.0 - q.fy) * m;
        const double gx01 = -q.fy * m, gx11 = q.fy * m;
        const double gy00 = -(1.0 - q.fx) * n, gy01 = (1.0 - q.fx) * n;
        const double gy10 = -q.fx * n, gy11 = q.fx * n;
        out.gradient[node_index(a, b)] += 2.0 * wq * (ddx * gx00 + ddy * gy00);
        out.gradient[node_index(a + 1, b)] += 2.0 * wq * (ddx * gx10 + ddy * gy10);
        out.gradient[node_index(a, b + 1)] += 2.0 * wq * (ddx * gx01 + ddy * gy01);
        out.gradient[node_index(a + 1, b + 1)] += 2.0 * wq * (ddx * gx11 + ddy * gy11);
      }
      cell_costs.push_back(cell_cost * cell_area);
    }
  }
  out.cost = pairwise_sum(cell_costs);
  return out;
}

CostAndGradient jacobian_positivity_penalty(const GridDeformation& phi, double weight) {
  const int m = phi.cells_x();
  const int n = phi.cells_y();
  const double cell_area = 1.0 / (static_cast<double>(m) * n);
  CostAndGradient out;
  out.gradient.assign(static_cast<size_t>(phi.node_count()), Vec2{});
  std::vector<double> cell_costs;
  cell_costs.reserve(static_cast<size_t>(m) * n);

  auto node_index = [&](int a, int b) { return static_cast<size_t>(b) * (m + 1) + a; };

  for (int b = 0; b < n; ++b) {
    for (int a = 0; a < m; ++a) {
      const Vec2 d00 = phi.displacement(a, b);
      const Vec2 d10 = phi.displacement(a + 1, b);
      const Vec2 d01 = phi.displacement(a, b + 1);
      const Vec2 d11 = phi.displacement(a + 1, b + 1);
      double cell_cost = 0.0;
      for (const QuadPoint& q : kQuad) {
        const Vec2 ddx = ((1.0 - q.fy) * (d10 - d00) + q.fy * (d11 - d01)) *
                         static_cast<double>(m);
        const Vec2 ddy = ((1.0 - q.fx) * (d01 - d00) + q.fx * (d11 - d10)) *
                         static_cast<double>(n);
        const Mat2 jac{1.0 + ddx.x, ddy.x, ddx.y, 1.0 + ddy.y};
        const double det = jac.det();
        if (det >= 0.0) continue;
        const double wq = 0.25 * cell_area;
        cell_cost += wq * weight * det * det;
        // d(det)/dJ = adj(J)^T entries
        const double c = 2.0 * wq * weight * det;
        const double dJ00 = jac.a11, dJ01 = -jac.a10, dJ10 = -jac.a01, dJ11 = jac.a00;
        const double gx00 = -(1.0 - q.fy) * m, gx10 = (1.0 - q.fy) * m;
        const double gx01 = -q.fy * m, gx11 = q.fy * m;
        const double gy00 = -(1.0 - q.fx) * n, gy01 = (1.0 - q.fx) * n;
        const double gy10 = -q.fx * n, gy11 = q.fx * n;
        // J00 = 1 + ddx.x depends on node x-components via gx**; J01 = ddy.x
        // via gy**; J10 = ddx.y via gx**; J11 = 1 + ddy.y via gy**.
        auto add = [&](int a_, int b_, double gx, double gy) {
          out.gradient[node_index(a_, b_)] +=
              Vec2{c * (dJ00 * gx + dJ01 * gy), c * (dJ10 * gx + dJ11 * gy)};
        };
        add(a, b, gx00, gy00);
        add(a + 1, b, gx10, gy10);
        add(a, b + 1, gx01, gy01);
        add(a + 1, b + 1, gx11, gy11);
      }
      cell_costs.push_back(cell_cost);
    }
  }
  out.cost = pairwise_sum(cell_costs);
  return out;
}

CostAndGradient brownian_regularizer_r1(const ScanlineShiftField& s, double lambda,
                                        double dwell_time, double flyback_time,
                                        bool include_first_line_increments) {
  require(lambda > 0.0 && dwell_time > 0.0 && flyback_time > 0.0,
          ErrorCode::invalid_argument, "brownian_regularizer_r1: nonpositive parameter");
  const int w = s.width();
  const int h = s.height();
  const double half_lambda = 0.5 * lambda;
  const double w_dwell = half_lambda / dwell_time;
  const double w_fly = half_lambda / flyback_time;

  CostAndGradient out;
  out.gradient.assign(static_cast<size_t>(s.parameter_count()), Vec2{});
  std::vector<double> terms;
  terms.reserve(static_cast<size_t>(w) * h + 1);

  // Gradient accumulation respects the per-line parameterization: slot (i,j)
  // maps to parameter j in per-line mode.
  auto grad_slot = [&](int i, int j) -> Vec2& {
    return out.gradient[s.per_line() ? static_cast<size_t>(j)
                                     : static_cast<size_t>(j) * w + i];
  };

  // Anchor: the first sample of the scan.
  {
    const Vec2 s00 = s.shift(0, 0);
    terms.push_back(w_dwell * s00.norm_sq());
    grad_slot(0, 0) += 2.0 * w_dwell * s00;
  }
  for (int j = 0; j < h; ++j) {
    if (j > 0) {
      const Vec2 d = s.shift(0, j) - s.shift(w - 1, j - 1);
      terms.push_back(w_fly * d.norm_sq());
      grad_slot(0, j) += 2.0 * w_fly * d;
      grad_slot(w - 1, j - 1) -= 2.0 * w_fly * d;
    }
    if (j == 0 && !include_first_line_increments) continue;
    for (int i = 1; i < w; ++i) {
      const Vec2 d = s.shift(i, j) - s.shift(i - 1, j);
      terms.push_back(w_dwell * d.norm_sq());
      grad_slot(i, j) += 2.0 * w_dwell * d;
      grad_slot(i - 1, j) -= 2.0 * w_dwell * d;
    }
  }
  out.cost = pairwise_sum(terms);
  return out;
}

CostAndGradient tikhonov_regularizer_r2(const ScanlineShiftField& s, double nu_hor,
                                        double nu_vert) {
  require(nu_hor > 0.0 && nu_vert > 0.0, ErrorCode::invalid_argument,
          "tikhonov_regularizer_r2: scaling factors must be > 0");
  const int w = s.width();
  const int h = s.height();
  CostAndGradient out;
  out.gradient.assign(static_cast<size_t>(s.parameter_count()), Vec2{});
  std::vector<double> terms;
  terms.reserve(static_cast<size_t>(w) * h);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const Vec2 v = s.shift(i, j);
      terms.push_back(0.5 * (nu_hor * v.x * v.x + nu_vert * v.y * v.y));
      Vec2& g = out.gradient[s.per_line() ? static_cast<size_t>(j)
                                          : static_cast<size_t>(j) * w + i];
      g += Vec2{nu_hor * v.x, nu_vert * v.y};
    }
  }
  out.cost = pairwise_sum(terms);
  return out;
}

Vec2 apply_jud_deformation(const RigidMotion& rigid, const ScanlineShiftField& s,
                           int i, int j) {
  const Vec2 x = pixel_center(i, j, s.width(), s.height());
  return rigid.rotation() * (x + s.shift(i, j)) + rigid.translation;
}

GridDeformation compose_grid(const GridDeformation& a, const GridDeformation& b) {
  GridDeformation out(b.cells_x(), b.cells_y());
  for (int nb = 0; nb < b.nodes_y(); ++nb) {
    for (int na = 0; na < b.nodes_x(); ++na) {
      const Vec2 p = b.node_position(na, nb);
      out.displacement(na, nb) = a.apply(b.apply(p)) - p;
    }
  }
  return out;
}

GridDeformation grid_from_rigid(const RigidMotion& rigid, int cells_x, int cells_y) {
  GridDeformation out(cells_x, cells_y);
  for (int b = 0; b < out.nodes_y(); ++b) {
    for (int a = 0; a < out.nodes_x(); ++a) {
      const Vec2 p = out.node_position(a, b);
      out.displacement(a, b) = rigid.apply(p) - p;
    }
  }
  return out;
}

GridDeformation resample_grid(const GridDeformation& phi, int cells_x, int cells_y) {
  GridDeformation out(cells_x, cells_y);
  for (int b = 0; b < out.nodes_y(); ++b) {
    for (int a = 0; a < out.nodes_x(); ++a) {
      const Vec2 p = out.node_position(a, b);
      out.displacement(a, b) = phi.apply(p) - p;
    }
  }
  return out;
}

double psi_alignment_residual(std::span<const GridDeformation> phis,
                              const GridDeformation& psi) {
  std::vector<double> terms;
  terms.reserve(phis.size() * static_cast<size_t>(psi.node_count()));
  for (const GridDeformation& phi : phis) {
    for (int b = 0; b < psi.nodes_y(); ++b) {
      for (int a = 0; a < psi.nodes_x(); ++a) {
        const Vec2 p = psi.node_position(a, b);
        terms.push_back((phi.apply(psi.apply(p)) - p).norm_sq());
      }
    }
  }
  return pairwise_sum(terms);
}

GridDeformation bias_correction_psi(std::span<const GridDeformation> phis) {
  require(!phis.empty(), ErrorCode::invalid_argument,
          "bias_correction_psi: needs at least one deformation");
  for (const GridDeformation& phi : phis) {
    require(phi.same_grid(phis.front()), ErrorCode::invalid_argument,
            "bias_correction_psi: deformations on different grids");
  }
  const double frame_count = static_cast<double>(phis.size());
  GridDeformation psi(phis.front().cells_x(), phis.front().cells_y());

  // The node-sum objective decouples per node: minimize over w the sum of
  // |phi_k(p + w) - p|^2. Two fixed-point sweeps of the linearized (J ~ I)
  // normal equations, i.e. mean-residual updates.
  for (int sweep = 0; sweep < 2; ++sweep) {
    for (int b = 0; b < psi.nodes_y(); ++b) {
      for (int a = 0; a < psi.nodes_x(); ++a) {
        const Vec2 p = psi.node_position(a, b);
        const Vec2 w = psi.displacement(a, b);
        Vec2 mean_residual;
        for (const GridDeformation& phi : phis) {
          mean_residual += p - phi.apply(p + w);
        }
        psi.displacement(a, b) = w + mean_residual / frame_count;
      }
    }
  }

  // Per-node safeguard: never leave a node worse than psi = id there.
  for (int b = 0; b < psi.nodes_y(); ++b) {
    for (int a = 0; a < psi.nodes_x(); ++a) {
      const Vec2 p = psi.node_position(a, b);
      const Vec2 w = psi.displacement(a, b);
      double with_w = 0.0;
      double with_id = 0.0;
      for (const GridDeformation& phi : phis) {
        with_w += (phi.apply(p + w) - p).norm_sq();
        with_id += (phi.apply(p) - p).norm_sq();
      }
      if (with_w > with_id) psi.displacement(a, b) = Vec2{};
    }
  }
  return psi;
}

}  // namespace rasterfix
