#include "bccmesh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace bccmesh {

namespace {

constexpr double kDegrees = 180.0 / std::numbers::pi;

double unit_det(const Vec3& o, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ea = a - o, eb = b - o, ec = c - o;
  const double la = norm(ea), lb = norm(eb), lc = norm(ec);
  if (la == 0.0 || lb == 0.0 || lc == 0.0) throw Error("coincident corner vertices");
  return triple(ea, eb, ec) / (la * lb * lc);
}

}  // namespace

std::array<double, 6> dihedral_angles(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const Vec3 p[4] = {a, b, c, d};
  const double v6 = signed_volume6(a, b, c, d);
  double scale = 0.0;
  for (const auto& [i, j] : kTetEdges) scale = std::max(scale, distance(p[i], p[j]));
  if (scale == 0.0 || std::abs(v6) <= 1e-14 * scale * scale * scale) throw Error("degenerate tetrahedron");
  std::array<double, 6> out{};
  for (int e = 0; e < 6; ++e) {
    const int i = kTetEdges[e][0], j = kTetEdges[e][1];
    int k = -1, l = -1;
    for (int n = 0; n < 4; ++n)
      if (n != i && n != j) (k < 0 ? k : l) = n;
    const Vec3 u = (p[j] - p[i]) / distance(p[i], p[j]);
    Vec3 x = p[k] - p[i], y = p[l] - p[i];
    x -= u * dot(x, u);
    y -= u * dot(y, u);
    out[e] = std::atan2(norm(cross(x, y)), dot(x, y)) * kDegrees;
  }
  return out;
}

double scaled_jacobian_hex(const std::array<Vec3, 8>& p) {
  constexpr int kCorners[8][3] = {{1, 3, 4}, {2, 0, 5}, {3, 1, 6}, {0, 2, 7}, {7, 5, 0}, {4, 6, 1}, {5, 7, 2}, {6, 4, 3}};
  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 8; ++i)
    worst = std::min(worst, unit_det(p[i], p[kCorners[i][0]], p[kCorners[i][1]], p[kCorners[i][2]]));
  return worst;
}

double scaled_jacobian_pyramid(const std::array<Vec3, 5>& p) {
  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i) worst = std::min(worst, unit_det(p[i], p[(i + 1) % 4], p[(i + 3) % 4], p[4]));
  return worst;
}

double scaled_jacobian(const MixedMesh& mesh, std::size_t cell) {
  const Cell& c = mesh.cells[cell];
  auto p = [&](int i) { return mesh.vertices[c.v[i]]; };
  switch (c.kind) {
    case CellKind::tet: return std::sqrt(2.0) * unit_det(p(0), p(1), p(2), p(3));
    case CellKind::pyramid: return scaled_jacobian_pyramid({p(0), p(1), p(2), p(3), p(4)});
    case CellKind::hex: return scaled_jacobian_hex({p(0), p(1), p(2), p(3), p(4), p(5), p(6), p(7)});
  }
  return 0.0;
}

int histogram_bin(double degrees) {
  const int bin = static_cast<int>(std::floor((degrees + 1e-9) / 5.0));
  return std::clamp(bin, 0, kHistogramBins - 1);
}

AngleHistogram angle_histogram(const MixedMesh& mesh) {
  AngleHistogram h{};
  std::size_t total = 0;
  for (const auto& c : mesh.cells) {
    if (c.kind != CellKind::tet) continue;
    for (double a : dihedral_angles(mesh.vertices[c.v[0]], mesh.vertices[c.v[1]], mesh.vertices[c.v[2]],
                                    mesh.vertices[c.v[3]])) {
      h[histogram_bin(a)] += 1.0;
      ++total;
    }
  }
  if (total > 0)
    for (auto& x : h) x /= static_cast<double>(total);
  return h;
}

AngleHistogram angle_histogram(const TetMesh& mesh) { return angle_histogram(MixedMesh::from_tets(mesh)); }

QualityReport quality_report(const MixedMesh& mesh) {
  QualityReport r;
  r.vertices = mesh.vertices.size();
  r.min_dihedral = std::numeric_limits<double>::infinity();
  r.max_dihedral = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mesh.cells.size(); ++i) {
    const Cell& c = mesh.cells[i];
    if (c.kind == CellKind::tet) {
      ++r.tets;
      for (double a : dihedral_angles(mesh.vertices[c.v[0]], mesh.vertices[c.v[1]], mesh.vertices[c.v[2]],
                                      mesh.vertices[c.v[3]])) {
        r.min_dihedral = std::min(r.min_dihedral, a);
        r.max_dihedral = std::max(r.max_dihedral, a);
      }
      continue;
    }
    (c.kind == CellKind::hex ? r.hexes : r.pyramids) += 1;
    const double sj = scaled_jacobian(mesh, i);
    r.min_scaled_jacobian = r.min_scaled_jacobian ? std::min(*r.min_scaled_jacobian, sj) : sj;
  }
  if (r.tets == 0) r.min_dihedral = r.max_dihedral = 0.0;
  r.histogram = angle_histogram(mesh);
  return r;
}

double directed_hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw Error("empty point set");
  Vec3 lo = b[0], hi = b[0];
  for (const auto& p : b)
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], p[k]);
      hi[k] = std::max(hi[k], p[k]);
    }
  const Vec3 ext = hi - lo;
  const double span = std::max({ext.x, ext.y, ext.z, 1e-12});
  // Roughly two points per occupied bin along a surface-like set.
  double h = span / std::max(1.0, std::sqrt(static_cast<double>(b.size()) / 2.0));
  std::array<std::int64_t, 3> n{};
  for (int k = 0; k < 3; ++k) n[k] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(ext[k] / h)) + 1);
  while (n[0] * n[1] * n[2] > static_cast<std::int64_t>(8 * b.size() + 64)) {
    h *= 1.5;
    for (int k = 0; k < 3; ++k) n[k] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(ext[k] / h)) + 1);
  }
  auto cell_of = [&](const Vec3& p, int k) {
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((p[k] - lo[k]) / h)), 0, n[k] - 1);
  };
  auto linear = [&](std::int64_t i, std::int64_t j, std::int64_t k) { return static_cast<std::size_t>(i + n[0] * (j + n[1] * k)); };
  std::vector<std::uint32_t> start(static_cast<std::size_t>(n[0] * n[1] * n[2]) + 1, 0);
  for (const auto& p : b) ++start[linear(cell_of(p, 0), cell_of(p, 1), cell_of(p, 2)) + 1];
  for (std::size_t i = 0; i + 1 < start.size(); ++i) start[i + 1] += start[i];
  std::vector<Vec3> sorted(b.size());
  {
    auto fill = start;
    for (const auto& p : b) sorted[fill[linear(cell_of(p, 0), cell_of(p, 1), cell_of(p, 2))]++] = p;
  }

  double worst = 0.0;
  for (const auto& p : a) {
    const std::int64_t c[3] = {cell_of(p, 0), cell_of(p, 1), cell_of(p, 2)};
    double best = std::numeric_limits<double>::infinity();
    for (std::int64_t r = 0;; ++r) {
      for (std::int64_t k = std::max<std::int64_t>(0, c[2] - r); k <= std::min(n[2] - 1, c[2] + r); ++k)
        for (std::int64_t j = std::max<std::int64_t>(0, c[1] - r); j <= std::min(n[1] - 1, c[1] + r); ++j)
          for (std::int64_t i = std::max<std::int64_t>(0, c[0] - r); i <= std::min(n[0] - 1, c[0] + r); ++i) {
            const bool shell = std::abs(i - c[0]) == r || std::abs(j - c[1]) == r || std::abs(k - c[2]) == r;
            if (!shell) continue;
            const auto cell = linear(i, j, k);
            for (auto q = start[cell]; q < start[cell + 1]; ++q) best = std::min(best, squared_norm(p - sorted[q]));
          }
      // Anything not scanned lies beyond one of the block's faces that still has cells behind it.
      double bound = std::numeric_limits<double>::infinity();
      for (int k = 0; k < 3; ++k) {
        if (c[k] - r > 0) bound = std::min(bound, p[k] - (lo[k] + static_cast<double>(c[k] - r) * h));
        if (c[k] + r < n[k] - 1) bound = std::min(bound, lo[k] + static_cast<double>(c[k] + r + 1) * h - p[k]);
      }
      if (bound == std::numeric_limits<double>::infinity()) break;
      if (bound > 0.0 && best <= bound * bound) break;
    }
    worst = std::max(worst, best);
  }
  return std::sqrt(worst);
}

std::vector<VertexId> material_surface_vertices(const MixedMesh& mesh, Label material) {
  const auto adj = mesh.face_adjacency();
  std::vector<std::uint8_t> on(mesh.vertices.size(), 0);
  for (std::size_t c = 0; c < mesh.cells.size(); ++c) {
    if (mesh.cells[c].label != material) continue;
    const auto fs = mesh.faces(c);
    for (std::size_t f = 0; f < fs.size(); ++f) {
      const auto n = adj[c][f];
      if (n >= 0 && mesh.cells[n].label == material) continue;
      for (VertexId v : fs[f])
        if (v != kNoVertex) on[v] = 1;
    }
  }
  std::vector<VertexId> out;
  for (std::size_t v = 0; v < on.size(); ++v)
    if (on[v]) out.push_back(static_cast<VertexId>(v));
  return out;
}

std::vector<Vec3> boundary_voxel_centers(const DistanceField& f) {
  std::vector<Vec3> out;
  for (std::int64_t k = 0; k < f.dims[2]; ++k)
    for (std::int64_t j = 0; j < f.dims[1]; ++j)
      for (std::int64_t i = 0; i < f.dims[0]; ++i)
        if (f.at(i, j, k) == 0.0)
          out.push_back({f.origin.x + static_cast<double>(i) * f.spacing.x, f.origin.y + static_cast<double>(j) * f.spacing.y,
                         f.origin.z + static_cast<double>(k) * f.spacing.z});
  return out;
}

FidelityReport hausdorff(const MixedMesh& mesh, const FieldSet& fields) {
  FidelityReport report;
  for (const auto& [m, field] : fields) {
    std::vector<Vec3> surface;
    for (VertexId v : material_surface_vertices(mesh, m)) surface.push_back(mesh.vertices[v]);
    const auto boundary = boundary_voxel_centers(field);
    if (surface.empty() || boundary.empty())
      throw Error("empty point set for material " + std::to_string(m));
    MaterialHausdorff h;
    h.mesh_to_image = directed_hausdorff(surface, boundary);
    h.image_to_mesh = directed_hausdorff(boundary, surface);
    h.two_sided = std::max(h.mesh_to_image, h.image_to_mesh);
    report.hd = std::max(report.hd, h.two_sided);
    report.materials[m] = h;
  }
  return report;
}

}  // namespace bccmesh
