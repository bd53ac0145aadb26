#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_set>

#include "bccmesh/lattice.hpp"

namespace bccmesh {

namespace {

constexpr std::int64_t kUnit = std::int64_t{1} << kLatticeDepth;


__int128 squared_length(const LatticeCoord& a, const LatticeCoord& b) {
  __int128 s = 0;
  for (int i = 0; i < 3; ++i) {
    const __int128 d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Weighted dyadic combination sum(w_i * q_i) / denom if it lands on the integer lattice.
std::optional<LatticeCoord> combine(std::initializer_list<std::pair<std::int64_t, const LatticeCoord*>> terms,
                                    std::int64_t denom) {
  // denom is a power of two, so an exact quotient is an arithmetic shift.
  const int shift = std::countr_zero(static_cast<std::uint64_t>(denom));
  LatticeCoord out{};
  for (int i = 0; i < 3; ++i) {
    std::int64_t s = 0;
    for (const auto& [w, q] : terms) s += w * (*q)[i];
    if (s & (denom - 1)) return std::nullopt;
    out[i] = s >> shift;
  }
  return out;
}

using FaceKey = std::array<VertexId, 3>;

FaceKey face_key(const Tet& t, int f) {
  FaceKey k{t.v[kTetFaces[f][0]], t.v[kTetFaces[f][1]], t.v[kTetFaces[f][2]]};
  std::sort(k.begin(), k.end());
  return k;
}

}  // namespace

Vec3 LatticeFrame::position(const LatticeCoord& q) const {
  const double u = unit();
  return {origin.x + u * static_cast<double>(q[0]), origin.y + u * static_cast<double>(q[1]),
          origin.z + u * static_cast<double>(q[2])};
}

double LatticeFrame::unit() const { return std::ldexp(spacing, -kLatticeDepth); }

// ---------------------------------------------------------------------------------------------
// TetMesh

std::vector<std::array<std::int32_t, 4>> TetMesh::face_adjacency() const {
  std::vector<std::array<std::int32_t, 4>> adj(tets.size(), {-1, -1, -1, -1});
  std::vector<std::pair<FaceKey, std::uint32_t>> faces;
  faces.reserve(tets.size() * 4);
  for (std::size_t t = 0; t < tets.size(); ++t)
    for (int f = 0; f < 4; ++f) faces.emplace_back(face_key(tets[t], f), static_cast<std::uint32_t>(t * 4 + f));
  std::sort(faces.begin(), faces.end());
  for (std::size_t i = 0; i + 1 < faces.size(); ++i) {
    if (faces[i].first != faces[i + 1].first) continue;
    const auto a = faces[i].second, b = faces[i + 1].second;
    adj[a / 4][a % 4] = static_cast<std::int32_t>(b / 4);
    adj[b / 4][b % 4] = static_cast<std::int32_t>(a / 4);
    ++i;
  }
  return adj;
}

double TetMesh::signed_volume(std::size_t t) const {
  const auto& v = tets[t].v;
  return bccmesh::signed_volume(vertices[v[0]], vertices[v[1]], vertices[v[2]], vertices[v[3]]);
}

Vec3 TetMesh::centroid(std::size_t t) const {
  const auto& v = tets[t].v;
  return (vertices[v[0]] + vertices[v[1]] + vertices[v[2]] + vertices[v[3]]) * 0.25;
}

void TetMesh::compact_vertices() {
  constexpr VertexId kUnused = ~VertexId{0};
  std::vector<VertexId> remap(vertices.size(), kUnused);
  for (const auto& t : tets)
    for (VertexId v : t.v) remap[v] = 0;
  VertexId next = 0;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (remap[i] == kUnused) continue;
    remap[i] = next;
    vertices[next] = vertices[i];
    if (!lattice.empty()) lattice[next] = lattice[i];
    ++next;
  }
  vertices.resize(next);
  if (!lattice.empty()) lattice.resize(next);
  for (auto& t : tets)
    for (auto& v : t.v) v = remap[v];
}

// ---------------------------------------------------------------------------------------------
// AdaptiveLattice

std::size_t LatticeCoordHash::operator()(const LatticeCoord& q) const {
  std::uint64_t h = 1469598103934665603ull;
  for (auto c : q) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 1099511628211ull;
    h ^= h >> 29;
  }
  return static_cast<std::size_t>(h);
}

VertexId AdaptiveLattice::vertex(const LatticeCoord& q) {
  auto [it, inserted] = lookup_.try_emplace(q, static_cast<VertexId>(coords_.size()));
  if (inserted) coords_.push_back(q);
  return it->second;
}

VertexId AdaptiveLattice::midpoint(VertexId a, VertexId b) {
  const auto q = combine({{1, &coords_[a]}, {1, &coords_[b]}}, 2);
  if (!q) throw Error("lattice resolution exhausted");
  return vertex(*q);
}

std::optional<VertexId> AdaptiveLattice::find_midpoint(VertexId a, VertexId b) const {
  const auto q = combine({{1, &coords_[a]}, {1, &coords_[b]}}, 2);
  if (!q) return std::nullopt;
  auto it = lookup_.find(*q);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

AdaptiveLattice::AdaptiveLattice(const LabeledVolume& vol, double lattice_sp) {
  if (!(lattice_sp > 0.0)) throw Error("lattice spacing must be positive");
  std::vector<std::uint8_t> foreground(vol.size());
  bool any = false;
  for (std::size_t i = 0; i < vol.size(); ++i) {
    foreground[i] = vol.labels()[i] != kBackground;
    any = any || foreground[i];
  }
  if (!any) throw Error("no intersecting tetrahedra");
  const DistanceField fg = signed_distance(vol, foreground);
  const Vec3 s = vol.spacing();
  const double voxel_diag = std::sqrt(s.x * s.x + s.y * s.y + s.z * s.z);

  const auto [lo, hi] = vol.bounds();
  frame_.spacing = lattice_sp;
  frame_.origin = lo - Vec3{lattice_sp, lattice_sp, lattice_sp};
  std::array<std::int64_t, 3> cells{};
  for (int a = 0; a < 3; ++a) cells[a] = static_cast<std::int64_t>(std::ceil((hi[a] - lo[a]) / lattice_sp)) + 2;

  auto corner = [](std::int64_t i, std::int64_t j, std::int64_t k) { return LatticeCoord{i * kUnit, j * kUnit, k * kUnit}; };
  auto center = [](std::int64_t i, std::int64_t j, std::int64_t k) {
    return LatticeCoord{i * kUnit + kUnit / 2, j * kUnit + kUnit / 2, k * kUnit + kUnit / 2};
  };

  // Every pair of face-adjacent cell centers spans four tets, one per edge of the shared square.
  for (int d = 0; d < 3; ++d) {
    const int e1 = (d + 1) % 3, e2 = (d + 2) % 3;
    for (std::int64_t k = 0; k < cells[2]; ++k)
      for (std::int64_t j = 0; j < cells[1]; ++j)
        for (std::int64_t i = 0; i < cells[0]; ++i) {
          std::array<std::int64_t, 3> c{i, j, k};
          if (c[d] + 1 >= cells[d]) continue;
          std::array<std::int64_t, 3> c2 = c;
          ++c2[d];
          const LatticeCoord b1 = center(c[0], c[1], c[2]);
          const LatticeCoord b2 = center(c2[0], c2[1], c2[2]);
          // Square corners on the plane between the two cells, cyclic order.
          std::array<LatticeCoord, 4> sq;
          for (int n = 0; n < 4; ++n) {
            std::array<std::int64_t, 3> p = c2;
            p[e1] += (n == 1 || n == 2) ? 1 : 0;
            p[e2] += (n >= 2) ? 1 : 0;
            sq[n] = corner(p[0], p[1], p[2]);
          }
          for (int n = 0; n < 4; ++n) {
            std::array<LatticeCoord, 4> q{b1, b2, sq[n], sq[(n + 1) % 4]};
            std::array<Vec3, 4> p;
            for (int m = 0; m < 4; ++m) p[m] = frame_.position(q[m]);
            const Vec3 centroid = (p[0] + p[1] + p[2] + p[3]) * 0.25;
            double radius = 0.0;
            for (const auto& x : p) radius = std::max(radius, distance(x, centroid));
            if (fg.sample(centroid) < -(radius + voxel_diag)) continue;
            if (signed_volume6(p[0], p[1], p[2], p[3]) < 0.0) std::swap(q[2], q[3]);
            Node node;
            for (int m = 0; m < 4; ++m) node.v[m] = vertex(q[m]);
            nodes_.push_back(node);
          }
        }
  }
  if (nodes_.empty()) throw Error("no intersecting tetrahedra");
  roots_ = nodes_.size();
}

AdaptiveLattice::AdaptiveLattice(const LatticeFrame& frame, const std::vector<std::array<LatticeCoord, 4>>& roots)
    : frame_(frame) {
  if (roots.empty()) throw Error("no intersecting tetrahedra");
  for (auto q : roots) {
    const double v6 = signed_volume6(frame_.position(q[0]), frame_.position(q[1]), frame_.position(q[2]),
                                     frame_.position(q[3]));
    if (v6 == 0.0) throw Error("degenerate root tetrahedron");
    if (v6 < 0.0) std::swap(q[2], q[3]);
    Node node;
    for (int m = 0; m < 4; ++m) node.v[m] = vertex(q[m]);
    nodes_.push_back(node);
  }
  roots_ = nodes_.size();
}

std::size_t AdaptiveLattice::leaf_count() const {
  std::size_t n = 0;
  for (const auto& node : nodes_) n += node.first_child < 0;
  return n;
}

std::array<std::int32_t, 8> AdaptiveLattice::subdivide_red(std::int32_t id) {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) throw Error("tet id out of range");
  if (!is_leaf(id)) throw Error("tet already subdivided");
  if (nodes_[id].level >= kMaxRefinementLevel) throw Error("refinement level cap reached");
  const auto v = nodes_[id].v;
  const auto level = static_cast<std::uint8_t>(nodes_[id].level + 1);
  std::array<VertexId, 6> m;
  for (int e = 0; e < 6; ++e) m[e] = midpoint(v[kTetEdges[e][0]], v[kTetEdges[e][1]]);
  // Edge index by endpoint pair.
  auto em = [&](int a, int b) {
    if (a > b) std::swap(a, b);
    for (int e = 0; e < 6; ++e)
      if (kTetEdges[e][0] == a && kTetEdges[e][1] == b) return m[e];
    return m[0];
  };

  std::array<std::array<VertexId, 4>, 8> kids;
  for (int i = 0; i < 4; ++i) {
    std::array<VertexId, 4> c{};
    int n = 0;
    c[n++] = v[i];
    for (int j = 0; j < 4; ++j)
      if (j != i) c[n++] = em(i, j);
    kids[i] = c;
  }

  // Octahedron diagonals join midpoints of opposite edges: (01,23), (02,13), (03,12).
  constexpr std::array<std::array<int, 2>, 3> kDiagonals{{{0, 5}, {1, 4}, {2, 3}}};
  int best = 0;
  for (int d = 1; d < 3; ++d) {
    const auto ld = squared_length(coords_[m[kDiagonals[d][0]]], coords_[m[kDiagonals[d][1]]]);
    const auto lb = squared_length(coords_[m[kDiagonals[best][0]]], coords_[m[kDiagonals[best][1]]]);
    if (ld < lb) {
      best = d;
    } else if (ld == lb) {
      auto key = [&](int dd) {
        VertexId a = m[kDiagonals[dd][0]], b = m[kDiagonals[dd][1]];
        return std::pair{std::min(a, b), std::max(a, b)};
      };
      if (key(d) < key(best)) best = d;
    }
  }
  const VertexId p = m[kDiagonals[best][0]], q = m[kDiagonals[best][1]];
  const auto& o1 = kDiagonals[(best + 1) % 3];
  const auto& o2 = kDiagonals[(best + 2) % 3];
  const std::array<VertexId, 4> ring{m[o1[0]], m[o2[0]], m[o1[1]], m[o2[1]]};
  for (int r = 0; r < 4; ++r) kids[4 + r] = {p, q, ring[r], ring[(r + 1) % 4]};

  const auto first = static_cast<std::int32_t>(nodes_.size());
  for (auto& c : kids) {
    const Vec3 a = frame_.position(coords_[c[0]]), b = frame_.position(coords_[c[1]]);
    const Vec3 cc = frame_.position(coords_[c[2]]), d = frame_.position(coords_[c[3]]);
    if (signed_volume6(a, b, cc, d) < 0.0) std::swap(c[2], c[3]);
    Node node;
    node.v = c;
    node.parent = id;
    node.level = level;
    nodes_.push_back(node);
  }
  nodes_[id].first_child = first;
  std::array<std::int32_t, 8> ids;
  std::iota(ids.begin(), ids.end(), first);
  return ids;
}

AdaptiveLattice::Upgrade AdaptiveLattice::needs_upgrade(std::int32_t id) const {
  const auto& v = nodes_[id].v;
  const LatticeCoord* q[4] = {&coords_[v[0]], &coords_[v[1]], &coords_[v[2]], &coords_[v[3]]};
  auto exists = [&](const std::optional<LatticeCoord>& c) { return c && lookup_.count(*c) > 0; };

  int mask = 0, count = 0;
  for (int e = 0; e < 6; ++e) {
    const auto* a = q[kTetEdges[e][0]];
    const auto* b = q[kTetEdges[e][1]];
    if (!exists(combine({{1, a}, {1, b}}, 2))) continue;
    mask |= 1 << e;
    ++count;
    // A split half-edge means the neighbor is two levels finer.
    if (exists(combine({{3, a}, {1, b}}, 4)) || exists(combine({{1, a}, {3, b}}, 4))) return Upgrade::forced;
  }
  if (count == 0) return Upgrade::none;
  for (const auto& f : kTetFaces) {
    const auto* a = q[f[0]];
    const auto* b = q[f[1]];
    const auto* c = q[f[2]];
    if (exists(combine({{2, a}, {1, b}, {1, c}}, 4)) || exists(combine({{1, a}, {2, b}, {1, c}}, 4)) ||
        exists(combine({{1, a}, {1, b}, {2, c}}, 4)))
      return Upgrade::forced;
  }
  if (count == 1) return Upgrade::none;
  if (count == 2)
    return mask == 0b100001 || mask == 0b010010 || mask == 0b001100 ? Upgrade::none : Upgrade::deferrable;
  if (count == 3) {
    for (int f = 0; f < 4; ++f) {
      int fm = 0;
      for (int e = 0; e < 6; ++e)
        if (kTetEdges[e][0] != f && kTetEdges[e][1] != f) fm |= 1 << e;
      if (mask == fm) return Upgrade::none;
    }
  }
  return Upgrade::forced;
}

TetMesh AdaptiveLattice::close_green() {
  // Forced upgrades hold in every closure, so they run first; a deferrable one is committed only
  // when nothing else is pending, smallest id first. Splitting a tet can only change the pattern of
  // leaves touching its closure.
  std::vector<std::vector<std::int32_t>> incident(coords_.size());
  std::vector<std::uint8_t> queued(nodes_.size(), 0);
  std::vector<std::int32_t> forced;
  std::set<std::int32_t> deferred;
  auto visit = [&](std::int32_t id) {
    if (!is_leaf(id)) return;
    switch (needs_upgrade(id)) {
      case Upgrade::forced:
        if (!queued[id]) forced.push_back(id);
        queued[id] = 1;
        break;
      case Upgrade::deferrable: deferred.insert(id); break;
      case Upgrade::none: break;
    }
  };
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto id = static_cast<std::int32_t>(i);
    if (!is_leaf(id)) continue;
    for (VertexId v : nodes_[i].v) incident[v].push_back(id);
    visit(id);
  }
  bool changed = false;
  auto split = [&](std::int32_t id) {
    changed = true;
    const auto kids = subdivide_red(id);
    incident.resize(coords_.size());
    queued.resize(nodes_.size(), 0);
    for (auto k : kids)
      for (VertexId v : nodes_[k].v) incident[v].push_back(k);
    for (auto k : kids) {
      visit(k);
      for (VertexId v : nodes_[k].v)
        for (auto n : incident[v]) visit(n);
    }
  };
  while (true) {
    while (!forced.empty()) {
      const auto id = forced.back();
      forced.pop_back();
      queued[id] = 0;
      if (is_leaf(id) && needs_upgrade(id) == Upgrade::forced) split(id);
    }
    bool progressed = false;
    while (!deferred.empty() && forced.empty()) {
      const auto id = *deferred.begin();
      deferred.erase(deferred.begin());
      if (!is_leaf(id)) continue;
      if (needs_upgrade(id) == Upgrade::none) continue;
      split(id);
      progressed = true;
    }
    if (!forced.empty() || progressed) continue;
    // A face point between two existing midpoints is not adjacent to the split tet by vertex.
    if (!changed) break;
    changed = false;
    for (std::size_t i = 0; i < nodes_.size(); ++i) visit(static_cast<std::int32_t>(i));
    if (forced.empty() && deferred.empty()) break;
  }

  TetMesh mesh;
  mesh.frame = frame_;
  mesh.lattice = coords_;
  mesh.vertices.reserve(coords_.size());
  for (const auto& q : coords_) mesh.vertices.push_back(frame_.position(q));

  auto emit = [&](std::array<VertexId, 4> v, TetColor color, const Node& node, std::int32_t id) {
    if (signed_volume6(mesh.vertices[v[0]], mesh.vertices[v[1]], mesh.vertices[v[2]], mesh.vertices[v[3]]) < 0.0)
      std::swap(v[2], v[3]);
    Tet t;
    t.v = v;
    t.color = color;
    t.level = node.level;
    t.origin = id;
    mesh.tets.push_back(t);
  };

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto id = static_cast<std::int32_t>(i);
    if (!is_leaf(id)) continue;
    const Node& node = nodes_[i];
    const auto& v = node.v;
    std::array<std::optional<VertexId>, 6> m;
    int mask = 0;
    for (int e = 0; e < 6; ++e) {
      m[e] = find_midpoint(v[kTetEdges[e][0]], v[kTetEdges[e][1]]);
      if (m[e]) mask |= 1 << e;
    }
    if (mask == 0) {
      emit(v, TetColor::red, node, id);
      continue;
    }
    const int count = std::popcount(static_cast<unsigned>(mask));
    if (count == 1) {
      const int e = std::countr_zero(static_cast<unsigned>(mask));
      const int a = kTetEdges[e][0], b = kTetEdges[e][1];
      int others[2], n = 0;
      for (int k = 0; k < 4; ++k)
        if (k != a && k != b) others[n++] = k;
      emit({v[a], *m[e], v[others[0]], v[others[1]]}, TetColor::green, node, id);
      emit({*m[e], v[b], v[others[0]], v[others[1]]}, TetColor::green, node, id);
    } else if (count == 2) {
      const int e1 = std::countr_zero(static_cast<unsigned>(mask));
      const int e2 = 5 - e1;
      const VertexId mm = *m[e1], nn = *m[e2];
      const VertexId a = v[kTetEdges[e1][0]], b = v[kTetEdges[e1][1]];
      const VertexId c = v[kTetEdges[e2][0]], d = v[kTetEdges[e2][1]];
      emit({mm, nn, a, c}, TetColor::green, node, id);
      emit({mm, nn, a, d}, TetColor::green, node, id);
      emit({mm, nn, b, c}, TetColor::green, node, id);
      emit({mm, nn, b, d}, TetColor::green, node, id);
    } else {
      // Three split edges on the face opposite `apex`.
      int apex = 0;
      for (int f = 0; f < 4; ++f) {
        bool touches = false;
        for (int e = 0; e < 6; ++e)
          if ((mask >> e) & 1) touches = touches || kTetEdges[e][0] == f || kTetEdges[e][1] == f;
        if (!touches) apex = f;
      }
      const auto& fv = kTetFaces[apex];
      auto mid = [&](int x, int y) {
        if (x > y) std::swap(x, y);
        for (int e = 0; e < 6; ++e)
          if (kTetEdges[e][0] == x && kTetEdges[e][1] == y) return *m[e];
        return *m[0];
      };
      const VertexId d = v[apex];
      const VertexId mab = mid(fv[0], fv[1]), mbc = mid(fv[1], fv[2]), mca = mid(fv[0], fv[2]);
      emit({v[fv[0]], mab, mca, d}, TetColor::green, node, id);
      emit({v[fv[1]], mbc, mab, d}, TetColor::green, node, id);
      emit({v[fv[2]], mca, mbc, d}, TetColor::green, node, id);
      emit({mab, mbc, mca, d}, TetColor::green, node, id);
    }
  }
  return mesh;
}

// ---------------------------------------------------------------------------------------------

void assign_centroid_labels(TetMesh& mesh, const LabeledVolume& vol) {
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) mesh.tets[t].label = vol.label_at(mesh.centroid(t));
}

TetMesh build_bcc(const LabeledVolume& vol, double lattice_sp) {
  AdaptiveLattice lattice(vol, lattice_sp);
  TetMesh mesh = lattice.close_green();
  assign_centroid_labels(mesh, vol);
  return mesh;
}

ConformityReport check_conformity(const TetMesh& mesh) {
  ConformityReport report;
  std::vector<FaceKey> faces;
  faces.reserve(mesh.tets.size() * 4);
  for (const auto& t : mesh.tets)
    for (int f = 0; f < 4; ++f) faces.push_back(face_key(t, f));
  std::sort(faces.begin(), faces.end());
  for (std::size_t i = 0; i < faces.size();) {
    std::size_t j = i;
    while (j < faces.size() && faces[j] == faces[i]) ++j;
    if (j - i > 2) ++report.overshared_faces;
    i = j;
  }
  for (std::size_t t = 0; t < mesh.tets.size(); ++t)
    if (!(mesh.signed_volume(t) > 0.0)) ++report.inverted;

  if (mesh.lattice.empty()) return report;
  std::unordered_map<LatticeCoord, VertexId, LatticeCoordHash> used;
  for (const auto& t : mesh.tets)
    for (VertexId v : t.v) used.emplace(mesh.lattice[v], v);
  std::unordered_set<VertexId> hanging;
  auto probe = [&](const std::optional<LatticeCoord>& c) {
    if (!c) return;
    auto it = used.find(*c);
    if (it != used.end()) hanging.insert(it->second);
  };
  for (const auto& t : mesh.tets) {
    const LatticeCoord* q[4] = {&mesh.lattice[t.v[0]], &mesh.lattice[t.v[1]], &mesh.lattice[t.v[2]],
                                &mesh.lattice[t.v[3]]};
    for (const auto& e : kTetEdges) {
      probe(combine({{1, q[e[0]]}, {1, q[e[1]]}}, 2));
      probe(combine({{3, q[e[0]]}, {1, q[e[1]]}}, 4));
      probe(combine({{1, q[e[0]]}, {3, q[e[1]]}}, 4));
    }
    for (const auto& f : kTetFaces) {
      probe(combine({{2, q[f[0]]}, {1, q[f[1]]}, {1, q[f[2]]}}, 4));
      probe(combine({{1, q[f[0]]}, {2, q[f[1]]}, {1, q[f[2]]}}, 4));
      probe(combine({{1, q[f[0]]}, {1, q[f[1]]}, {2, q[f[2]]}}, 4));
    }
  }
  report.t_junctions = hanging.size();
  return report;
}

}  // namespace bccmesh
