#include <algorithm>
#include <cmath>

#include "bccmesh/lattice.hpp"

namespace bccmesh {

namespace {

int sign(double x) { return (x > 0.0) - (x < 0.0); }

bool changes_sign(const DistanceField& f, const TetMesh& mesh, const Tet& t, const Vec3& c) {
  const int sc = sign(f.sample(c));
  for (VertexId v : t.v)
    if (sign(f.sample(mesh.vertices[v])) != sc) return true;
  return false;
}

}  // namespace

std::optional<Label> refinement_trigger(const TetMesh& mesh, std::size_t tet, const FieldSet& fields) {
  if (fields.empty()) return std::nullopt;
  const Tet& t = mesh.tets[tet];
  const Vec3 c = mesh.centroid(tet);
  if (!fields.begin()->second.covers(c)) return std::nullopt;
  if (t.label != kBackground) {
    auto it = fields.find(t.label);
    if (it == fields.end()) return std::nullopt;
    return changes_sign(it->second, mesh, t, c) ? std::optional<Label>(t.label) : std::nullopt;
  }
  for (const auto& [m, f] : fields)
    if (changes_sign(f, mesh, t, c)) return m;
  return std::nullopt;
}

bool needs_refinement(const TetMesh& mesh, std::size_t tet, const FieldSet& fields) {
  return refinement_trigger(mesh, tet, fields).has_value();
}

std::vector<Label> rasterize_labels(const TetMesh& mesh, const LabeledVolume& vol) {
  std::vector<Label> owner(vol.size(), kBackground);
  std::vector<std::uint8_t> taken(vol.size(), 0);
  const auto& d = vol.dims();
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    const auto& v = mesh.tets[t].v;
    const Vec3 p[4] = {mesh.vertices[v[0]], mesh.vertices[v[1]], mesh.vertices[v[2]], mesh.vertices[v[3]]};
    Vec3 lo = p[0], hi = p[0];
    for (const auto& x : p)
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], x[a]);
        hi[a] = std::max(hi[a], x[a]);
      }
    const Vec3 clo = vol.continuous_index(lo), chi = vol.continuous_index(hi);
    std::int64_t from[3], to[3];
    bool empty = false;
    for (int a = 0; a < 3; ++a) {
      from[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(clo[a] - 1e-9)));
      to[a] = std::min<std::int64_t>(d[a] - 1, static_cast<std::int64_t>(std::floor(chi[a] + 1e-9)));
      empty = empty || from[a] > to[a];
    }
    if (empty) continue;
    const double vol6 = signed_volume6(p[0], p[1], p[2], p[3]);
    const double tol = -1e-12 * std::abs(vol6);
    const Label label = mesh.tets[t].label;
    for (std::int64_t k = from[2]; k <= to[2]; ++k)
      for (std::int64_t j = from[1]; j <= to[1]; ++j)
        for (std::int64_t i = from[0]; i <= to[0]; ++i) {
          const std::size_t idx = vol.linear(i, j, k);
          if (taken[idx]) continue;
          const Vec3 x = vol.physical(Index3{i, j, k});
          if (signed_volume6(x, p[1], p[2], p[3]) * (vol6 > 0 ? 1 : -1) < tol) continue;
          if (signed_volume6(p[0], x, p[2], p[3]) * (vol6 > 0 ? 1 : -1) < tol) continue;
          if (signed_volume6(p[0], p[1], x, p[3]) * (vol6 > 0 ? 1 : -1) < tol) continue;
          if (signed_volume6(p[0], p[1], p[2], x) * (vol6 > 0 ? 1 : -1) < tol) continue;
          taken[idx] = 1;
          owner[idx] = label;
        }
  }
  return owner;
}

std::map<Label, FidelityRatios> fidelity_ratios(const TetMesh& mesh, const LabeledVolume& vol) {
  const auto owner = rasterize_labels(mesh, vol);
  std::map<Label, FidelityRatios> out;
  for (Label m : vol.materials()) out[m];
  for (const auto& t : mesh.tets)
    if (t.label != kBackground) out[t.label];
  const auto labels = vol.labels();
  for (std::size_t i = 0; i < owner.size(); ++i) {
    if (owner[i] != kBackground) ++out[owner[i]].s1;
    if (labels[i] != kBackground) ++out[labels[i]].s2;
    if (owner[i] != kBackground && owner[i] == labels[i]) ++out[owner[i]].common;
  }
  for (auto& [m, r] : out) {
    r.f1 = r.s1 ? static_cast<double>(r.common) / static_cast<double>(r.s1) : 0.0;
    r.f2 = r.s2 && r.s1 ? static_cast<double>(r.common) / static_cast<double>(r.s2) : 0.0;
  }
  return out;
}

FidelityRatios fidelity_ratios(const TetMesh& mesh, const LabeledVolume& vol, Label material) {
  const auto all = fidelity_ratios(mesh, vol);
  auto it = all.find(material);
  return it == all.end() ? FidelityRatios{} : it->second;
}

double RefinementConfig::fidelity_for(Label m) const {
  auto it = material_fidelity.find(m);
  return it == material_fidelity.end() ? fidelity : it->second;
}

RefinementResult refine_lattice(const LabeledVolume& vol, const FieldSet& fields, const RefinementConfig& config) {
  auto valid_f = [](double f) { return f > 0.0 && f <= 1.0; };
  if (!valid_f(config.fidelity)) throw Error("fidelity must lie in (0, 1]");
  for (const auto& [m, f] : config.material_fidelity) {
    if (!valid_f(f)) throw Error("fidelity must lie in (0, 1]");
    if (m == kBackground || !vol.has_label(m)) throw Error("fidelity given for absent material " + std::to_string(m));
  }
  if (config.max_levels < 0 || config.max_levels > kMaxRefinementLevel)
    throw Error("max_levels must lie in [0, " + std::to_string(kMaxRefinementLevel) + "]");

  RefinementResult result;
  AdaptiveLattice lattice(vol, config.lattice_sp);

  auto regenerate = [&] {
    TetMesh mesh = lattice.close_green();
    assign_centroid_labels(mesh, vol);
    result.cycles.push_back(check_conformity(mesh));
    return mesh;
  };
  auto subdivide = [&](std::vector<std::int32_t> marks) {
    std::sort(marks.begin(), marks.end());
    marks.erase(std::unique(marks.begin(), marks.end()), marks.end());
    std::size_t done = 0;
    for (auto id : marks)
      if (lattice.is_leaf(id) && lattice.nodes()[id].level < config.max_levels) {
        lattice.subdivide_red(id);
        ++done;
      }
    return done;
  };

  TetMesh mesh = regenerate();
  while (true) {
    result.fidelity = fidelity_ratios(mesh, vol);
    std::set<Label> failing;
    for (const auto& [m, r] : result.fidelity) {
      if (!fields.count(m)) continue;
      const double f = config.fidelity_for(m);
      if (f > r.f1 || f > r.f2) failing.insert(m);
    }
    if (failing.empty()) break;
    std::vector<std::int32_t> marks;
    for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
      const auto trigger = refinement_trigger(mesh, t, fields);
      if (trigger && failing.count(*trigger)) marks.push_back(mesh.tets[t].origin);
    }
    if (subdivide(std::move(marks)) == 0) break;
    ++result.iterations;
    mesh = regenerate();
  }

  TetMesh candidate = select_candidate_mesh(mesh);
  if (config.topo_checks) {
    while (true) {
      TopologyReport report = check_topology(candidate);
      ++result.topology_rounds;
      const bool last = report.clean() || result.topology_rounds > config.max_topology_rounds;
      std::vector<std::int32_t> marks;
      if (!last) {
        for (auto t : report.local_marks) marks.push_back(candidate.tets[t].origin);
        for (const auto& t : candidate.tets)
          if (report.global_marks.count(t.label)) marks.push_back(t.origin);
      }
      if (last || subdivide(std::move(marks)) == 0) {
        result.topology = std::move(report);
        break;
      }
      mesh = regenerate();
      result.fidelity = fidelity_ratios(mesh, vol);
      candidate = select_candidate_mesh(mesh);
    }
  }

  for (const auto& t : candidate.tets) result.max_level = std::max<int>(result.max_level, t.level);
  result.mesh = std::move(candidate);
  return result;
}

}  // namespace bccmesh
