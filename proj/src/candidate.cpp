#include <algorithm>
#include <numeric>

#include "bccmesh/lattice.hpp"

namespace bccmesh {

namespace {

using Adjacency = std::vector<std::array<std::int32_t, 4>>;

Label neighbor_label(const Adjacency& adj, const std::vector<Label>& labels, std::size_t t, int f) {
  const auto n = adj[t][f];
  return n < 0 ? kBackground : labels[n];
}

void drop_background(TetMesh& mesh) {
  std::erase_if(mesh.tets, [](const Tet& t) { return t.label == kBackground; });
  mesh.compact_vertices();
}

struct UnionFind {
  std::vector<std::uint32_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// Incidence lists: for every vertex (or edge), the tets of one label touching it.
struct Sites {
  std::vector<VertexId> vertices;
  std::vector<std::array<VertexId, 2>> edges;
  std::vector<std::size_t> tets;  ///< tets incident to any site
};

Sites nonmanifold_sites(const TetMesh& mesh, const Adjacency& adj, Label m) {
  Sites sites;
  std::vector<std::pair<VertexId, std::uint32_t>> by_vertex;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> by_edge;
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    if (mesh.tets[t].label != m) continue;
    const auto& v = mesh.tets[t].v;
    for (VertexId x : v) by_vertex.emplace_back(x, static_cast<std::uint32_t>(t));
    for (const auto& e : kTetEdges) {
      const VertexId a = std::min(v[e[0]], v[e[1]]), b = std::max(v[e[0]], v[e[1]]);
      by_edge.emplace_back((static_cast<std::uint64_t>(a) << 32) | b, static_cast<std::uint32_t>(t));
    }
  }
  std::sort(by_vertex.begin(), by_vertex.end());
  std::sort(by_edge.begin(), by_edge.end());

  // Tets of one group are split when face adjacency inside the group leaves more than one class.
  auto split = [&](auto begin, auto end) {
    const auto n = static_cast<std::size_t>(end - begin);
    if (n < 2) return false;
    UnionFind uf(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto ti = begin[i].second, tj = begin[j].second;
        for (int f = 0; f < 4; ++f)
          if (adj[ti][f] == static_cast<std::int32_t>(tj)) uf.unite(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
      }
    for (std::size_t i = 1; i < n; ++i)
      if (uf.find(static_cast<std::uint32_t>(i)) != 0) return true;
    return false;
  };

  std::vector<std::uint8_t> flagged(mesh.tets.size(), 0);
  for (std::size_t i = 0; i < by_edge.size();) {
    std::size_t j = i;
    while (j < by_edge.size() && by_edge[j].first == by_edge[i].first) ++j;
    if (split(by_edge.begin() + i, by_edge.begin() + j)) {
      const auto key = by_edge[i].first;
      sites.edges.push_back({static_cast<VertexId>(key >> 32), static_cast<VertexId>(key & 0xffffffffu)});
      for (std::size_t k = i; k < j; ++k) flagged[by_edge[k].second] = 1;
    }
    i = j;
  }
  for (std::size_t i = 0; i < by_vertex.size();) {
    std::size_t j = i;
    while (j < by_vertex.size() && by_vertex[j].first == by_vertex[i].first) ++j;
    if (split(by_vertex.begin() + i, by_vertex.begin() + j)) {
      sites.vertices.push_back(by_vertex[i].first);
      for (std::size_t k = i; k < j; ++k) flagged[by_vertex[k].second] = 1;
    }
    i = j;
  }
  for (std::size_t t = 0; t < flagged.size(); ++t)
    if (flagged[t]) sites.tets.push_back(t);
  return sites;
}

std::size_t site_count(const TetMesh& mesh, const Adjacency& adj, Label m) {
  if (m == kBackground) return 0;
  const auto s = nonmanifold_sites(mesh, adj, m);
  return s.vertices.size() + s.edges.size();
}

// Vertex-connected regions of one label; returns region id per tet (-1 for other labels).
std::vector<std::int32_t> vertex_components(const TetMesh& mesh, Label m, std::int32_t& count) {
  UnionFind uf(mesh.tets.size());
  constexpr std::uint32_t kNone = ~std::uint32_t{0};
  std::vector<std::uint32_t> first(mesh.vertices.size(), kNone);
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    if (mesh.tets[t].label != m) continue;
    for (VertexId v : mesh.tets[t].v) {
      if (first[v] == kNone)
        first[v] = static_cast<std::uint32_t>(t);
      else
        uf.unite(first[v], static_cast<std::uint32_t>(t));
    }
  }
  std::vector<std::int32_t> region(mesh.tets.size(), -1);
  std::map<std::uint32_t, std::int32_t> ids;
  count = 0;
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    if (mesh.tets[t].label != m) continue;
    auto [it, inserted] = ids.try_emplace(uf.find(static_cast<std::uint32_t>(t)), count);
    if (inserted) ++count;
    region[t] = it->second;
  }
  return region;
}

std::set<Label> labels_of(const TetMesh& mesh) {
  std::set<Label> out;
  for (const auto& t : mesh.tets)
    if (t.label != kBackground) out.insert(t.label);
  return out;
}

}  // namespace

std::vector<Label> redistribute_labels(const TetMesh& mesh) {
  const auto adj = mesh.face_adjacency();
  std::vector<Label> labels(mesh.tets.size());
  for (std::size_t t = 0; t < labels.size(); ++t) labels[t] = mesh.tets[t].label;

  std::set<Label> present(labels.begin(), labels.end());
  // Labels are inspected in ascending order; a label is finalized once its tets have been examined.
  for (Label current : present) {
    for (std::size_t t = 0; t < labels.size(); ++t) {
      if (mesh.tets[t].label != current) continue;
      std::array<std::pair<Label, int>, 4> counts{};
      int distinct = 0, differing = 0;
      for (int f = 0; f < 4; ++f) {
        const Label n = neighbor_label(adj, labels, t, f);
        if (n == labels[t]) continue;
        ++differing;
        auto it = std::find_if(counts.begin(), counts.begin() + distinct, [n](const auto& c) { return c.first == n; });
        if (it == counts.begin() + distinct)
          counts[distinct++] = {n, 1};
        else
          ++it->second;
      }
      if (differing < 2) continue;
      auto pick = [&](bool open_only) -> std::optional<Label> {
        std::optional<Label> best;
        int best_count = 0;
        for (int c = 0; c < distinct; ++c) {
          const auto [l, n] = counts[c];
          if (open_only && l <= current) continue;
          if (!best || n > best_count || (n == best_count && l < *best)) {
            best = l;
            best_count = n;
          }
        }
        return best;
      };
      auto chosen = pick(true);
      if (!chosen) chosen = pick(false);
      labels[t] = *chosen;
    }
  }
  return labels;
}

TetMesh select_candidate_mesh(const TetMesh& input) {
  TetMesh mesh = input;
  const auto adj = mesh.face_adjacency();
  auto labels = redistribute_labels(mesh);

  // Surface tets touching background through two or more faces go to background, to a fixpoint.
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t t = 0; t < labels.size(); ++t) {
      if (labels[t] == kBackground) continue;
      int exposed = 0;
      for (int f = 0; f < 4; ++f) exposed += neighbor_label(adj, labels, t, f) == kBackground;
      if (exposed >= 2) {
        labels[t] = kBackground;
        changed = true;
      }
    }
  }

  for (std::size_t t = 0; t < labels.size(); ++t) mesh.tets[t].label = labels[t];
  drop_background(mesh);
  return mesh;
}

int max_boundary_faces(const TetMesh& mesh) {
  const auto adj = mesh.face_adjacency();
  int worst = 0;
  for (const auto& a : adj) worst = std::max<int>(worst, static_cast<int>(std::count(a.begin(), a.end(), -1)));
  return worst;
}

std::size_t TopologyReport::nonmanifold_count() const {
  std::size_t n = 0;
  for (const auto& [m, v] : nonmanifold_vertices) n += v.size();
  for (const auto& [m, e] : nonmanifold_edges) n += e.size();
  return n;
}

TopologyReport check_topology(TetMesh& mesh, double small_fraction) {
  TopologyReport report;
  auto adj = mesh.face_adjacency();
  bool removed = false;

  for (Label m : labels_of(mesh)) {
    std::int32_t count = 0;
    const auto region = vertex_components(mesh, m, count);
    if (count < 2) continue;
    std::vector<double> volume(count, 0.0);
    double total = 0.0;
    for (std::size_t t = 0; t < mesh.tets.size(); ++t)
      if (region[t] >= 0) {
        const double v = mesh.signed_volume(t);
        volume[region[t]] += v;
        total += v;
      }
    const auto largest = static_cast<std::int32_t>(std::max_element(volume.begin(), volume.end()) - volume.begin());
    for (std::int32_t r = 0; r < count; ++r) {
      if (r == largest || volume[r] >= small_fraction * total) continue;
      // Dominant label across the region's outer faces.
      std::map<Label, int> votes;
      std::vector<std::size_t> members;
      for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
        if (region[t] != r) continue;
        members.push_back(t);
        for (int f = 0; f < 4; ++f) {
          const auto n = adj[t][f];
          if (n >= 0 && region[n] == r) continue;
          ++votes[n < 0 ? kBackground : mesh.tets[n].label];
        }
      }
      Label target = kBackground;
      int best = -1;
      for (const auto& [l, c] : votes)
        if (l != m && c > best) {
          target = l;
          best = c;
        }
      const std::size_t before = site_count(mesh, adj, target) + site_count(mesh, adj, m);
      for (auto t : members) mesh.tets[t].label = target;
      const std::size_t after = site_count(mesh, adj, target) + site_count(mesh, adj, m);
      if (after > before) {
        for (auto t : members) mesh.tets[t].label = m;
        continue;
      }
      report.relabeled.emplace_back(m, target);
      removed = removed || target == kBackground;
    }
  }
  if (removed) {
    drop_background(mesh);
    adj = mesh.face_adjacency();
  }

  std::vector<std::uint8_t> marked(mesh.tets.size(), 0);
  for (Label m : labels_of(mesh)) {
    auto sites = nonmanifold_sites(mesh, adj, m);
    if (!sites.vertices.empty()) report.nonmanifold_vertices[m] = std::move(sites.vertices);
    if (!sites.edges.empty()) report.nonmanifold_edges[m] = std::move(sites.edges);
    for (auto t : sites.tets) marked[t] = 1;
    std::int32_t count = 0;
    vertex_components(mesh, m, count);
    report.components[m] = static_cast<std::size_t>(count);
    if (count > 1) report.global_marks.insert(m);
  }
  // Marks cover every tet around a site, whatever its label.
  std::vector<std::uint8_t> around(mesh.vertices.size(), 0);
  for (const auto& [m, vs] : report.nonmanifold_vertices)
    for (auto v : vs) around[v] = 1;
  for (const auto& [m, es] : report.nonmanifold_edges)
    for (const auto& e : es) around[e[0]] = around[e[1]] = 1;
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    for (VertexId v : mesh.tets[t].v) marked[t] |= around[v];
    if (marked[t]) report.local_marks.push_back(t);
  }
  return report;
}

}  // namespace bccmesh
