#include <algorithm>
#include <unordered_map>

#include "bccmesh/mixed.hpp"

namespace bccmesh {

namespace {

constexpr std::array<std::array<int, 3>, 4> kTetOutward{{{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}}};
constexpr std::array<std::array<int, 4>, 5> kPyramidOutward{{{0, 3, 2, 1}, {0, 1, 4, -1}, {1, 2, 4, -1}, {2, 3, 4, -1}, {3, 0, 4, -1}}};
constexpr std::array<std::array<int, 4>, 6> kHexOutward{
    {{0, 3, 2, 1}, {4, 5, 6, 7}, {0, 1, 5, 4}, {1, 2, 6, 5}, {2, 3, 7, 6}, {3, 0, 4, 7}}};

FaceLoop sorted_key(FaceLoop f) {
  std::sort(f.begin(), f.end());
  return f;
}

}  // namespace

std::span<const std::array<int, 2>> cell_edges(CellKind kind) {
  static constexpr std::array<std::array<int, 2>, 6> kTet{{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
  static constexpr std::array<std::array<int, 2>, 8> kPyramid{{{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 4}, {1, 4}, {2, 4}, {3, 4}}};
  static constexpr std::array<std::array<int, 2>, 12> kHex{
      {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}}};
  switch (kind) {
    case CellKind::tet: return kTet;
    case CellKind::pyramid: return kPyramid;
    case CellKind::hex: return kHex;
  }
  return {};
}

int node_count(CellKind kind) {
  switch (kind) {
    case CellKind::tet: return 4;
    case CellKind::pyramid: return 5;
    case CellKind::hex: return 8;
  }
  return 0;
}

MixedMesh MixedMesh::from_tets(const TetMesh& mesh) {
  MixedMesh out;
  out.vertices = mesh.vertices;
  out.lattice = mesh.lattice;
  out.cells.reserve(mesh.tets.size());
  for (const auto& t : mesh.tets) {
    Cell c;
    c.kind = CellKind::tet;
    c.label = t.label;
    std::copy(t.v.begin(), t.v.end(), c.v.begin());
    out.cells.push_back(c);
  }
  return out;
}

std::size_t MixedMesh::count(CellKind kind) const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [kind](const Cell& c) { return c.kind == kind; }));
}

std::vector<FaceLoop> MixedMesh::faces(std::size_t cell) const {
  const Cell& c = cells[cell];
  std::vector<FaceLoop> out;
  auto add = [&](const auto& table) {
    for (const auto& f : table) {
      FaceLoop loop{kNoVertex, kNoVertex, kNoVertex, kNoVertex};
      for (std::size_t i = 0; i < f.size(); ++i)
        if (f[i] >= 0) loop[i] = c.v[f[i]];
      out.push_back(loop);
    }
  };
  switch (c.kind) {
    case CellKind::tet: add(kTetOutward); break;
    case CellKind::pyramid: add(kPyramidOutward); break;
    case CellKind::hex: add(kHexOutward); break;
  }
  return out;
}

std::vector<std::vector<std::int32_t>> MixedMesh::face_adjacency() const {
  std::vector<std::vector<std::int32_t>> adj(cells.size());
  std::vector<std::pair<FaceLoop, std::pair<std::uint32_t, std::uint32_t>>> all;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto fs = faces(c);
    adj[c].assign(fs.size(), -1);
    for (std::size_t f = 0; f < fs.size(); ++f)
      all.push_back({sorted_key(fs[f]), {static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(f)}});
  }
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i + 1 < all.size(); ++i) {
    if (all[i].first != all[i + 1].first) continue;
    const auto [c1, f1] = all[i].second;
    const auto [c2, f2] = all[i + 1].second;
    adj[c1][f1] = static_cast<std::int32_t>(c2);
    adj[c2][f2] = static_cast<std::int32_t>(c1);
    ++i;
  }
  return adj;
}

double MixedMesh::volume(std::size_t cell) const {
  const Cell& c = cells[cell];
  auto p = [&](int i) { return vertices[c.v[i]]; };
  switch (c.kind) {
    case CellKind::tet: return signed_volume(p(0), p(1), p(2), p(3));
    case CellKind::pyramid: return signed_volume(p(0), p(1), p(2), p(4)) + signed_volume(p(0), p(2), p(3), p(4));
    case CellKind::hex: {
      constexpr int kSplit[6][2] = {{1, 2}, {2, 3}, {3, 7}, {7, 4}, {4, 5}, {5, 1}};
      double v = 0.0;
      for (const auto& s : kSplit) v += signed_volume(p(0), p(s[0]), p(s[1]), p(6));
      return v;
    }
  }
  return 0.0;
}

double MixedMesh::total_volume() const {
  double v = 0.0;
  for (std::size_t c = 0; c < cells.size(); ++c) v += volume(c);
  return v;
}

std::vector<std::array<VertexId, 3>> interface_triangles(const MixedMesh& mesh) {
  const auto adj = mesh.face_adjacency();
  std::vector<std::array<VertexId, 3>> out;
  for (std::size_t c = 0; c < mesh.cells.size(); ++c) {
    const auto fs = mesh.faces(c);
    for (std::size_t f = 0; f < fs.size(); ++f) {
      if (fs[f][3] != kNoVertex) continue;
      const auto n = adj[c][f];
      if (n >= 0 && mesh.cells[n].label == mesh.cells[c].label) continue;
      std::array<VertexId, 3> tri{fs[f][0], fs[f][1], fs[f][2]};
      std::sort(tri.begin(), tri.end());
      out.push_back(tri);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

MixedMesh convert_to_mixed(const TetMesh& mesh, MixedConversionStats* stats) {
  MixedMesh out = MixedMesh::from_tets(mesh);
  MixedConversionStats local;
  local.vertices_before = mesh.vertices.size();
  local.vertices_after = mesh.vertices.size();
  if (mesh.lattice.empty()) {
    if (stats) *stats = local;
    return out;
  }

  const std::size_t nv = mesh.vertices.size();
  std::vector<std::uint32_t> offset(nv + 1, 0);
  for (const auto& t : mesh.tets)
    for (VertexId v : t.v) ++offset[v + 1];
  for (std::size_t i = 0; i < nv; ++i) offset[i + 1] += offset[i];
  std::vector<std::uint32_t> incident(offset.back());
  {
    auto fill = offset;
    for (std::size_t t = 0; t < mesh.tets.size(); ++t)
      for (VertexId v : mesh.tets[t].v) incident[fill[v]++] = static_cast<std::uint32_t>(t);
  }
  std::unordered_map<LatticeCoord, VertexId, LatticeCoordHash> at;
  at.reserve(nv);
  for (std::size_t i = 0; i < nv; ++i) at.emplace(mesh.lattice[i], static_cast<VertexId>(i));

  std::vector<std::uint8_t> consumed(mesh.tets.size(), 0);
  std::vector<Cell> added;

  for (std::size_t c = 0; c < nv; ++c) {
    if (offset[c + 1] - offset[c] != 24) continue;
    const Tet& first = mesh.tets[incident[offset[c]]];
    if (first.label == kBackground) continue;
    bool uniform = true;
    for (auto i = offset[c]; i < offset[c + 1] && uniform; ++i) {
      const Tet& t = mesh.tets[incident[i]];
      uniform = !consumed[incident[i]] && t.color == TetColor::red && t.label == first.label && t.level == first.level;
    }
    if (!uniform) continue;

    const std::int64_t h = (std::int64_t{1} << kLatticeDepth) >> first.level;
    const LatticeCoord& q = mesh.lattice[c];
    bool center_role = true;
    for (int a = 0; a < 3; ++a) center_role = center_role && ((q[a] % h) + h) % h == h / 2;
    if (!center_role) continue;

    // Every star tet must be (c, c + h*e_d, two adjacent cube corners on that face), all distinct.
    std::vector<std::pair<int, std::array<VertexId, 2>>> seen;
    bool valid = true;
    for (auto i = offset[c]; i < offset[c + 1] && valid; ++i) {
      const Tet& t = mesh.tets[incident[i]];
      int dir = -1;
      std::vector<VertexId> corners;
      for (VertexId v : t.v) {
        if (v == c) continue;
        LatticeCoord d{mesh.lattice[v][0] - q[0], mesh.lattice[v][1] - q[1], mesh.lattice[v][2] - q[2]};
        int axis_hits = 0, axis = -1, half_hits = 0;
        for (int a = 0; a < 3; ++a) {
          if (d[a] == h || d[a] == -h) {
            ++axis_hits;
            axis = a;
          } else if (d[a] == h / 2 || d[a] == -h / 2) {
            ++half_hits;
          } else if (d[a] != 0) {
            valid = false;
          }
        }
        if (axis_hits == 1 && half_hits == 0 && d[(axis + 1) % 3] == 0 && d[(axis + 2) % 3] == 0)
          dir = 2 * axis + (d[axis] > 0 ? 1 : 0);
        else if (half_hits == 3)
          corners.push_back(v);
        else
          valid = false;
      }
      if (!valid || dir < 0 || corners.size() != 2) {
        valid = false;
        break;
      }
      const int axis = dir / 2;
      const std::int64_t sgn = (dir % 2) ? 1 : -1;
      for (VertexId v : corners) valid = valid && (mesh.lattice[v][axis] - q[axis]) == sgn * h / 2;
      std::array<VertexId, 2> key{std::min(corners[0], corners[1]), std::max(corners[0], corners[1])};
      const auto entry = std::pair{dir, key};
      valid = valid && std::find(seen.begin(), seen.end(), entry) == seen.end();
      seen.push_back(entry);
    }
    if (!valid) continue;

    auto corner_id = [&](int sx, int sy, int sz) {
      const LatticeCoord k{q[0] + sx * h / 2, q[1] + sy * h / 2, q[2] + sz * h / 2};
      return at.at(k);
    };
    Cell hex;
    hex.kind = CellKind::hex;
    hex.label = first.label;
    hex.v = {corner_id(-1, -1, -1), corner_id(1, -1, -1), corner_id(1, 1, -1), corner_id(-1, 1, -1),
             corner_id(-1, -1, 1),  corner_id(1, -1, 1),  corner_id(1, 1, 1),  corner_id(-1, 1, 1)};
    added.push_back(hex);

    for (int axis = 0; axis < 3; ++axis)
      for (int s : {-1, 1}) {
        LatticeCoord apex_q = q;
        apex_q[axis] += s * h;
        const int u = (axis + 1) % 3, w = (axis + 2) % 3;
        Cell pyr;
        pyr.kind = CellKind::pyramid;
        pyr.label = first.label;
        const int loop[4][2] = {{-1, -1}, {1, -1}, {1, 1}, {-1, 1}};
        for (int n = 0; n < 4; ++n) {
          LatticeCoord k = q;
          k[axis] += s * h / 2;
          k[u] += loop[n][0] * h / 2;
          k[w] += loop[n][1] * h / 2;
          pyr.v[n] = at.at(k);
        }
        pyr.v[4] = at.at(apex_q);
        // (u, w, axis) is right-handed, so the loop's normal is +axis; flip when the apex lies below.
        if (s < 0) std::swap(pyr.v[1], pyr.v[3]);
        added.push_back(pyr);
      }
    for (auto i = offset[c]; i < offset[c + 1]; ++i) consumed[incident[i]] = 1;
    ++local.converted;
  }

  if (local.converted > 0) {
    std::vector<Cell> cells;
    cells.reserve(out.cells.size() - 24 * local.converted + added.size());
    for (std::size_t t = 0; t < out.cells.size(); ++t)
      if (!consumed[t]) cells.push_back(out.cells[t]);
    cells.insert(cells.end(), added.begin(), added.end());
    out.cells = std::move(cells);

    std::vector<VertexId> remap(nv, kNoVertex);
    for (const auto& cell : out.cells)
      for (int i = 0; i < cell.size(); ++i) remap[cell.v[i]] = 0;
    VertexId next = 0;
    for (std::size_t i = 0; i < nv; ++i) {
      if (remap[i] == kNoVertex) continue;
      remap[i] = next;
      out.vertices[next] = out.vertices[i];
      out.lattice[next] = out.lattice[i];
      ++next;
    }
    out.vertices.resize(next);
    out.lattice.resize(next);
    for (auto& cell : out.cells)
      for (int i = 0; i < cell.size(); ++i) cell.v[i] = remap[cell.v[i]];
    local.vertices_after = next;
  }
  if (stats) *stats = local;
  return out;
}

}  // namespace bccmesh
