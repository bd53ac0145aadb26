#include "bccmesh/deform.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <algorithm>
#include <cmath>
#include <limits>

#include "bccmesh/metrics.hpp"

namespace bccmesh {

ConnectivityPattern parse_pattern(const std::string& name) {
  if (name == "vertex") return ConnectivityPattern::vertex;
  if (name == "edge") return ConnectivityPattern::edge;
  if (name == "face") return ConnectivityPattern::face;
  if (name == "no") return ConnectivityPattern::no;
  throw Error("unknown connectivity pattern '" + name + "' (vertex, edge, face, no)");
}

std::string to_string(ConnectivityPattern p) {
  switch (p) {
    case ConnectivityPattern::vertex: return "vertex";
    case ConnectivityPattern::edge: return "edge";
    case ConnectivityPattern::face: return "face";
    case ConnectivityPattern::no: return "no";
  }
  return "no";
}

SearchRegion parse_search_region(const std::string& name) {
  if (name == "cube") return SearchRegion::cube;
  if (name == "sphere") return SearchRegion::sphere;
  throw Error("unknown search region '" + name + "' (cube, sphere)");
}

std::string to_string(SearchRegion r) { return r == SearchRegion::cube ? "cube" : "sphere"; }

std::vector<SourcePoint> extract_source_points(const MixedMesh& mesh) {
  const auto adj = mesh.face_adjacency();
  std::vector<std::uint8_t> surface(mesh.vertices.size(), 0);
  std::vector<LabelSet> labels(mesh.vertices.size());
  for (std::size_t c = 0; c < mesh.cells.size(); ++c) {
    const Cell& cell = mesh.cells[c];
    for (int i = 0; i < cell.size(); ++i) {
      auto& ls = labels[cell.v[i]];
      if (cell.label != kBackground && std::find(ls.begin(), ls.end(), cell.label) == ls.end()) ls.push_back(cell.label);
    }
    const auto fs = mesh.faces(c);
    for (std::size_t f = 0; f < fs.size(); ++f) {
      const auto n = adj[c][f];
      if (n >= 0 && mesh.cells[n].label == cell.label) continue;
      for (VertexId v : fs[f])
        if (v != kNoVertex) surface[v] = 1;
    }
  }
  std::vector<SourcePoint> out;
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    if (!surface[v] && labels[v].size() < 2) continue;
    if (labels[v].empty()) continue;
    std::sort(labels[v].begin(), labels[v].end());
    out.push_back({static_cast<VertexId>(v), mesh.vertices[v], labels[v]});
  }
  return out;
}

std::vector<TargetPoint> extract_target_points(const LabeledVolume& vol, const FieldSet& fields,
                                               ConnectivityPattern pattern) {
  std::vector<std::uint8_t> boundary(vol.size(), 0);
  for (const auto& [m, f] : fields) {
    if (f.dims != vol.dims()) throw Error("distance field does not match the volume grid");
    for (std::size_t i = 0; i < vol.size(); ++i)
      if (f.values[i] == 0.0) boundary[i] = 1;
  }

  std::vector<std::array<int, 3>> forbidden;
  if (pattern != ConnectivityPattern::no) {
    const int reach = pattern == ConnectivityPattern::vertex ? 3 : pattern == ConnectivityPattern::edge ? 2 : 1;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int nonzero = (dx != 0) + (dy != 0) + (dz != 0);
          if (nonzero > 0 && nonzero <= reach) forbidden.push_back({dx, dy, dz});
        }
  }

  std::vector<std::uint8_t> selected(vol.size(), 0);
  std::vector<TargetPoint> out;
  const auto& d = vol.dims();
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i) {
        const std::size_t idx = vol.linear(i, j, k);
        if (!boundary[idx]) continue;
        bool blocked = false;
        for (const auto& o : forbidden) {
          const std::int64_t x = i + o[0], y = j + o[1], z = k + o[2];
          if (vol.contains(x, y, z) && selected[vol.linear(x, y, z)]) {
            blocked = true;
            break;
          }
        }
        if (blocked) continue;
        selected[idx] = 1;
        TargetPoint t;
        t.position = vol.physical(Index3{i, j, k});
        for (std::int64_t z = k - 1; z <= k + 1; ++z)
          for (std::int64_t y = j - 1; y <= j + 1; ++y)
            for (std::int64_t x = i - 1; x <= i + 1; ++x) {
              if (!vol.contains(x, y, z)) continue;
              const Label l = vol.at(x, y, z);
              if (l != kBackground && std::find(t.labels.begin(), t.labels.end(), l) == t.labels.end()) t.labels.push_back(l);
            }
        std::sort(t.labels.begin(), t.labels.end());
        out.push_back(std::move(t));
      }
  return out;
}

std::vector<double> local_sizes(const MixedMesh& mesh, const std::vector<SourcePoint>& sources) {
  std::vector<std::uint64_t> edges;
  for (const auto& cell : mesh.cells)
    for (const auto& e : cell_edges(cell.kind)) {
      const VertexId a = std::min(cell.v[e[0]], cell.v[e[1]]), b = std::max(cell.v[e[0]], cell.v[e[1]]);
      edges.push_back((static_cast<std::uint64_t>(a) << 32) | b);
    }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  std::vector<double> sum(mesh.vertices.size(), 0.0);
  std::vector<int> count(mesh.vertices.size(), 0);
  for (auto key : edges) {
    const auto a = static_cast<VertexId>(key >> 32), b = static_cast<VertexId>(key & 0xffffffffu);
    const double len = distance(mesh.vertices[a], mesh.vertices[b]);
    sum[a] += len;
    sum[b] += len;
    ++count[a];
    ++count[b];
  }
  std::vector<double> out;
  out.reserve(sources.size());
  for (const auto& s : sources) out.push_back(count[s.vertex] ? sum[s.vertex] / count[s.vertex] : 0.0);
  return out;
}

std::size_t Correspondences::active_count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), 1));
}

Correspondences compute_correspondences(const std::vector<SourcePoint>& sources, const std::vector<TargetPoint>& targets,
                                        const std::vector<double>& half_widths, SearchRegion region) {
  if (half_widths.size() != sources.size()) throw Error("one search half-width per source expected");
  Correspondences out;
  out.d.assign(sources.size(), Vec3{});
  out.active.assign(sources.size(), 0);
  if (targets.empty() || sources.empty()) return out;

  // Uniform bins over the targets, about one search width wide.
  Vec3 lo = targets[0].position, hi = lo;
  for (const auto& t : targets)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], t.position[a]);
      hi[a] = std::max(hi[a], t.position[a]);
    }
  double bin = 0.0;
  for (double h : half_widths) bin = std::max(bin, h);
  bin = std::max(bin, 1e-9);
  std::array<std::int64_t, 3> n{};
  auto size_grid = [&] {
    for (int a = 0; a < 3; ++a) n[a] = static_cast<std::int64_t>(std::floor((hi[a] - lo[a]) / bin)) + 1;
  };
  size_grid();
  while (n[0] * n[1] * n[2] > static_cast<std::int64_t>(8 * targets.size() + 64)) {
    bin *= 1.5;
    size_grid();
  }
  auto cell = [&](double x, int a) {
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((x - lo[a]) / bin)), 0, n[a] - 1);
  };
  std::vector<std::uint32_t> start(static_cast<std::size_t>(n[0] * n[1] * n[2]) + 1, 0);
  auto linear = [&](std::int64_t i, std::int64_t j, std::int64_t k) { return static_cast<std::size_t>(i + n[0] * (j + n[1] * k)); };
  auto bin_of = [&](const Vec3& p) { return linear(cell(p.x, 0), cell(p.y, 1), cell(p.z, 2)); };
  for (const auto& t : targets) ++start[bin_of(t.position) + 1];
  for (std::size_t i = 0; i + 1 < start.size(); ++i) start[i + 1] += start[i];
  std::vector<std::uint32_t> order(targets.size());
  {
    auto fill = start;
    for (std::size_t t = 0; t < targets.size(); ++t) order[fill[bin_of(targets[t].position)]++] = static_cast<std::uint32_t>(t);
  }

  for (std::size_t s = 0; s < sources.size(); ++s) {
    const Vec3 p = sources[s].position;
    const double h = half_widths[s];
    Vec3 sum{};
    std::size_t hits = 0;
    for (std::int64_t k = cell(p.z - h, 2); k <= cell(p.z + h, 2); ++k)
      for (std::int64_t j = cell(p.y - h, 1); j <= cell(p.y + h, 1); ++j)
        for (std::int64_t i = cell(p.x - h, 0); i <= cell(p.x + h, 0); ++i) {
          const auto b = linear(i, j, k);
          for (auto q = start[b]; q < start[b + 1]; ++q) {
            const auto& t = targets[order[q]];
            const Vec3 d = t.position - p;
            const bool inside = region == SearchRegion::cube
                                    ? std::abs(d.x) <= h && std::abs(d.y) <= h && std::abs(d.z) <= h
                                    : squared_norm(d) <= h * h;
            if (!inside || t.labels != sources[s].labels) continue;
            sum += d;
            ++hits;
          }
        }
    if (hits == 0) continue;
    out.d[s] = sum / static_cast<double>(hits);
    out.active[s] = 1;
  }
  return out;
}

const Material& MaterialTable::at(Label l) const {
  auto it = overrides.find(l);
  return it == overrides.end() ? fallback : it->second;
}

namespace {

Eigen::Matrix<double, 6, 6> elasticity(const Material& m) {
  if (!(m.youngs > 0.0) || !(m.poisson > -1.0 && m.poisson < 0.5)) throw Error("invalid material parameters");
  const double e = m.youngs, nu = m.poisson;
  const double lambda = e * nu / ((1 + nu) * (1 - 2 * nu)), mu = e / (2 * (1 + nu));
  Eigen::Matrix<double, 6, 6> d = Eigen::Matrix<double, 6, 6>::Zero();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) d(i, j) = lambda;
    d(i, i) = lambda + 2 * mu;
    d(3 + i, 3 + i) = mu;
  }
  return d;
}

// Adds w * B^T D B for shape gradients g (n x 3, physical coordinates).
void accumulate(Eigen::MatrixXd& ke, const Eigen::MatrixXd& g, const Eigen::Matrix<double, 6, 6>& d, double w) {
  const auto n = g.rows();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(6, 3 * n);
  for (Eigen::Index a = 0; a < n; ++a) {
    const double x = g(a, 0), y = g(a, 1), z = g(a, 2);
    b(0, 3 * a) = x;
    b(1, 3 * a + 1) = y;
    b(2, 3 * a + 2) = z;
    b(3, 3 * a) = y;
    b(3, 3 * a + 1) = x;
    b(4, 3 * a + 1) = z;
    b(4, 3 * a + 2) = y;
    b(5, 3 * a) = z;
    b(5, 3 * a + 2) = x;
  }
  ke.noalias() += w * b.transpose() * d * b;
}

constexpr int kHexSigns[8][3] = {{-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
                                 {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1}};

// Trilinear element over `nodes` (8 positions; a pyramid repeats its apex four times), with node
// gradients folded onto `owner` to merge repeated nodes.
Eigen::MatrixXd hex_rule(const std::array<Vec3, 8>& nodes, const std::array<int, 8>& owner, int n,
                         const Eigen::Matrix<double, 6, 6>& d) {
  Eigen::MatrixXd ke = Eigen::MatrixXd::Zero(3 * n, 3 * n);
  const double gp = 1.0 / std::sqrt(3.0);
  for (int q = 0; q < 8; ++q) {
    const double xi[3] = {kHexSigns[q][0] * gp, kHexSigns[q][1] * gp, kHexSigns[q][2] * gp};
    Eigen::Matrix<double, 8, 3> dn;
    for (int a = 0; a < 8; ++a) {
      const double f[3] = {1 + kHexSigns[a][0] * xi[0], 1 + kHexSigns[a][1] * xi[1], 1 + kHexSigns[a][2] * xi[2]};
      dn(a, 0) = kHexSigns[a][0] * f[1] * f[2] / 8;
      dn(a, 1) = kHexSigns[a][1] * f[0] * f[2] / 8;
      dn(a, 2) = kHexSigns[a][2] * f[0] * f[1] / 8;
    }
    Eigen::Matrix3d j = Eigen::Matrix3d::Zero();  // j(r, c) = d x_c / d xi_r
    for (int a = 0; a < 8; ++a)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) j(r, c) += dn(a, r) * nodes[a][c];
    const double det = j.determinant();
    if (!(det > 0.0)) throw Error("inverted element");
    const Eigen::Matrix<double, 8, 3> g8 = dn * j.inverse().transpose();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, 3);
    for (int a = 0; a < 8; ++a) g.row(owner[a]) += g8.row(a);
    accumulate(ke, g, d, det);
  }
  return ke;
}

}  // namespace

Eigen::MatrixXd element_stiffness(const MixedMesh& mesh, std::size_t cell, const Material& material) {
  const Cell& c = mesh.cells[cell];
  const auto d = elasticity(material);
  auto p = [&](int i) { return mesh.vertices[c.v[i]]; };
  switch (c.kind) {
    case CellKind::tet: {
      Eigen::Matrix3d e;
      for (int i = 0; i < 3; ++i) {
        const Vec3 x = p(i + 1) - p(0);
        e.col(i) << x.x, x.y, x.z;
      }
      const double det = e.determinant();
      if (!(det > 0.0)) throw Error("inverted element");
      // Rows of e^-1 are the gradients of the barycentric coordinates 1..3.
      const Eigen::Matrix3d inv = e.inverse();
      Eigen::MatrixXd g(4, 3);
      g.row(0) = -(inv.row(0) + inv.row(1) + inv.row(2));
      g.bottomRows(3) = inv;
      Eigen::MatrixXd ke = Eigen::MatrixXd::Zero(12, 12);
      accumulate(ke, g, d, det / 6.0);
      return ke;
    }
    case CellKind::hex:
      return hex_rule({p(0), p(1), p(2), p(3), p(4), p(5), p(6), p(7)}, {0, 1, 2, 3, 4, 5, 6, 7}, 8, d);
    case CellKind::pyramid:
      return hex_rule({p(0), p(1), p(2), p(3), p(4), p(4), p(4), p(4)}, {0, 1, 2, 3, 4, 4, 4, 4}, 5, d);
  }
  return {};
}

Eigen::SparseMatrix<double> assemble_stiffness(const MixedMesh& mesh, const MaterialTable& materials) {
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t c = 0; c < mesh.cells.size(); ++c) {
    const Cell& cell = mesh.cells[c];
    const auto ke = element_stiffness(mesh, c, materials.at(cell.label));
    const int n = cell.size();
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int r = 0; r < 3; ++r)
          for (int s = 0; s < 3; ++s)
            triplets.emplace_back(3 * static_cast<int>(cell.v[a]) + r, 3 * static_cast<int>(cell.v[b]) + s,
                                  ke(3 * a + r, 3 * b + s));
  }
  const auto dofs = static_cast<Eigen::Index>(3 * mesh.vertices.size());
  Eigen::SparseMatrix<double> k(dofs, dofs);
  k.setFromTriplets(triplets.begin(), triplets.end());
  return k;
}

namespace {

Eigen::VectorXd data_rhs(Eigen::Index dofs, const std::vector<SourcePoint>& sources, const Correspondences& corr) {
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dofs);
  for (std::size_t s = 0; s < sources.size(); ++s) {
    if (!corr.active[s]) continue;
    for (int a = 0; a < 3; ++a) rhs(3 * sources[s].vertex + a) = corr.d[s][a];
  }
  return rhs;
}

}  // namespace

SolveResult solve_step(const Eigen::SparseMatrix<double>& k, const std::vector<SourcePoint>& sources,
                       const Correspondences& corr, double tolerance, int max_iterations) {
  if (corr.d.size() != sources.size() || corr.active.size() != sources.size())
    throw Error("correspondences do not match the sources");
  const auto dofs = k.rows();
  double max_diag = 0.0;
  for (Eigen::Index i = 0; i < dofs; ++i) max_diag = std::max(max_diag, k.coeff(i, i));
  const double eps = 1e-8 * (max_diag > 0.0 ? max_diag : 1.0);

  Eigen::VectorXd diag = Eigen::VectorXd::Constant(dofs, eps);
  for (std::size_t s = 0; s < sources.size(); ++s)
    if (corr.active[s])
      for (int a = 0; a < 3; ++a) diag(3 * sources[s].vertex + a) += 1.0;
  Eigen::SparseMatrix<double> op = k;
  op += Eigen::SparseMatrix<double>(diag.asDiagonal());

  SolveResult out;
  const Eigen::VectorXd rhs = data_rhs(dofs, sources, corr);
  if (rhs.squaredNorm() == 0.0) {
    out.u = Eigen::VectorXd::Zero(dofs);
    return out;
  }
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg;
  cg.setTolerance(tolerance);
  cg.setMaxIterations(max_iterations);
  cg.compute(op);
  out.u = cg.solve(rhs);
  out.iterations = static_cast<int>(cg.iterations());
  out.residual = (op * out.u - rhs).norm() / rhs.norm();
  if (cg.info() != Eigen::Success || !(out.residual <= tolerance * 1.0001))
    throw Error("linear solve did not converge (relative residual " + std::to_string(out.residual) + ")");
  return out;
}

double deformation_energy(const Eigen::SparseMatrix<double>& k, const std::vector<SourcePoint>& sources,
                          const Correspondences& corr, const Eigen::VectorXd& u) {
  double w = u.dot(k * u);
  for (std::size_t s = 0; s < sources.size(); ++s) {
    if (!corr.active[s]) continue;
    for (int a = 0; a < 3; ++a) {
      const double r = u(3 * sources[s].vertex + a) - corr.d[s][a];
      w += r * r;
    }
  }
  return w;
}

std::vector<std::size_t> violating_cells(const MixedMesh& mesh, const QualityGate& gate) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < mesh.cells.size(); ++c) {
    const Cell& cell = mesh.cells[c];
    bool bad = false;
    try {
      if (cell.kind == CellKind::tet) {
        const auto& v = cell.v;
        bad = !(mesh.volume(c) > 0.0);
        if (!bad) {
          const auto a = dihedral_angles(mesh.vertices[v[0]], mesh.vertices[v[1]], mesh.vertices[v[2]], mesh.vertices[v[3]]);
          bad = *std::min_element(a.begin(), a.end()) < gate.min_dihedral;
        }
      } else {
        bad = !(scaled_jacobian(mesh, c) >= gate.min_scaled_jacobian);
      }
    } catch (const Error&) {
      bad = true;
    }
    if (bad) out.push_back(c);
  }
  return out;
}

DeformResult deform(const MixedMesh& mesh, const LabeledVolume& vol, const FieldSet& fields, const DeformConfig& config) {
  const auto& gate = config.gate;
  if (config.iterations < 0) throw Error("iterations must be non-negative");
  if (!(gate.scale_factor > 0.0 && gate.scale_factor < 1.0)) throw Error("scale factor must lie in (0, 1)");
  if (gate.max_attempts < 1) throw Error("max_attempts must be at least 1");

  DeformResult result;
  result.mesh = mesh;
  const auto sources_at_start = extract_source_points(mesh);
  const auto targets = extract_target_points(vol, fields, config.pattern);
  result.sources = sources_at_start.size();
  result.targets = targets.size();
  result.hd_before = hausdorff(mesh, fields).hd;

  std::vector<SourcePoint> sources = sources_at_start;
  for (int it = 0; it < config.iterations; ++it) {
    MixedMesh& current = result.mesh;
    for (auto& s : sources) s.position = current.vertices[s.vertex];
    Correspondences corr = compute_correspondences(sources, targets, local_sizes(current, sources), config.region);
    const auto k = assemble_stiffness(current, config.materials);

    DeformIteration step;
    step.active_sources = corr.active_count();
    MixedMesh trial = current;
    bool accepted = false;
    for (int attempt = 0; attempt < gate.max_attempts; ++attempt) {
      ++step.attempts;
      const auto solved = solve_step(k, sources, corr);
      step.solver_iterations += solved.iterations;
      for (std::size_t v = 0; v < trial.vertices.size(); ++v)
        trial.vertices[v] = current.vertices[v] + Vec3{solved.u(3 * v), solved.u(3 * v + 1), solved.u(3 * v + 2)};
      const auto bad = violating_cells(trial, gate);
      if (bad.empty()) {
        step.energy_zero = deformation_energy(k, sources, corr, Eigen::VectorXd::Zero(solved.u.size()));
        step.energy = deformation_energy(k, sources, corr, solved.u);
        accepted = true;
        break;
      }
      std::vector<std::uint8_t> touched(current.vertices.size(), 0);
      for (auto c : bad)
        for (int i = 0; i < trial.cells[c].size(); ++i) touched[trial.cells[c].v[i]] = 1;
      for (std::size_t s = 0; s < sources.size(); ++s)
        if (touched[sources[s].vertex]) corr.d[s] *= gate.scale_factor;
    }
    if (!accepted) {
      step.hd = result.iterations.empty() ? result.hd_before : result.iterations.back().hd;
      result.iterations.push_back(step);
      result.reverted = true;
      break;
    }
    current.vertices = std::move(trial.vertices);
    step.committed = true;
    step.hd = hausdorff(current, fields).hd;
    result.iterations.push_back(step);
  }
  return result;
}

}  // namespace bccmesh
