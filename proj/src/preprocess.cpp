#include "bccmesh/preprocess.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <random>

namespace bccmesh {

void PreprocessReport::merge(const PreprocessReport& o) {
  noisy_type1 += o.noisy_type1;
  noisy_type2 += o.noisy_type2;
  for (const auto& [m, labels] : o.regions_split) {
    auto& dst = regions_split[m];
    dst.insert(dst.end(), labels.begin(), labels.end());
  }
  regions_culled.insert(regions_culled.end(), o.regions_culled.begin(), o.regions_culled.end());
  vertex_pairs_fixed += o.vertex_pairs_fixed;
  edge_pairs_fixed += o.edge_pairs_fixed;
  residual_vertex_pairs = o.residual_vertex_pairs;
  residual_edge_pairs = o.residual_edge_pairs;
  iterations += o.iterations;
  if (o.seed != 0) seed = o.seed;
}

// ---------------------------------------------------------------------------------------------
// Noisy voxels

PreprocessReport relabel_noisy_voxels(LabeledVolume& vol, NoisyMode mode) {
  PreprocessReport report;
  const auto& d = vol.dims();
  const bool fix1 = mode != NoisyMode::type2;
  const bool fix2 = mode != NoisyMode::type1;
  std::vector<std::pair<Label, int>> counts;
  counts.reserve(26);

  bool changed = true;
  while (changed) {
    changed = false;
    for (std::int64_t k = 0; k < d[2]; ++k)
      for (std::int64_t j = 0; j < d[1]; ++j)
        for (std::int64_t i = 0; i < d[0]; ++i) {
          const Label self = vol.at(i, j, k);
          const bool background = self == kBackground;
          if ((background && !fix1) || (!background && !fix2)) continue;
          counts.clear();
          bool isolated = true;
          for (int dz = -1; dz <= 1 && isolated; ++dz)
            for (int dy = -1; dy <= 1 && isolated; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0 && dz == 0) continue;
                const Label n = vol.label_or_background(i + dx, j + dy, k + dz);
                if (n == self) {
                  isolated = false;
                  break;
                }
                auto it = std::find_if(counts.begin(), counts.end(), [n](const auto& c) { return c.first == n; });
                if (it == counts.end())
                  counts.emplace_back(n, 1);
                else
                  ++it->second;
              }
          if (!isolated) continue;
          // Majority label, ties to the smallest id.
          Label best = counts.front().first;
          int best_count = 0;
          for (const auto& [l, c] : counts)
            if (c > best_count || (c == best_count && l < best)) {
              best = l;
              best_count = c;
            }
          vol.set({i, j, k}, best);
          (background ? report.noisy_type1 : report.noisy_type2) += 1;
          changed = true;
        }
    ++report.iterations;
  }
  return report;
}

// ---------------------------------------------------------------------------------------------
// Disconnected regions

PreprocessReport relabel_disconnected_regions(LabeledVolume& vol, double s_tol, CullRule rule) {
  if (!(s_tol > 0.0 && s_tol < 1.0)) throw Error("s_tol must lie in (0, 1)");
  PreprocessReport report;
  const auto labels = vol.labels();
  constexpr std::int32_t kUnset = -1;
  std::vector<std::int32_t> component(vol.size(), kUnset);

  struct Region {
    Label material;
    std::size_t first;
    std::uint64_t size;
  };
  std::vector<Region> regions;
  std::deque<std::size_t> queue;
  static constexpr int kFace[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};

  for (std::size_t seed = 0; seed < labels.size(); ++seed) {
    if (labels[seed] == kBackground || component[seed] != kUnset) continue;
    const Label m = labels[seed];
    const auto id = static_cast<std::int32_t>(regions.size());
    regions.push_back({m, seed, 0});
    component[seed] = id;
    queue.push_back(seed);
    while (!queue.empty()) {
      const std::size_t cur = queue.front();
      queue.pop_front();
      ++regions[id].size;
      const Index3 v = vol.unravel(cur);
      for (const auto& o : kFace) {
        const Index3 n{v.i + o[0], v.j + o[1], v.k + o[2]};
        if (!vol.contains(n)) continue;
        const auto ni = vol.linear(n);
        if (labels[ni] == m && component[ni] == kUnset) {
          component[ni] = id;
          queue.push_back(ni);
        }
      }
    }
  }

  std::map<Label, std::vector<std::int32_t>> by_material;
  for (std::int32_t r = 0; r < static_cast<std::int32_t>(regions.size()); ++r)
    by_material[regions[r].material].push_back(r);

  Label next_label = 0;
  for (Label l : labels) next_label = std::max(next_label, l);

  std::vector<Label> relabel(regions.size());
  for (auto& [m, ids] : by_material) {
    std::uint64_t total = 0;
    for (auto r : ids) total += regions[r].size;
    std::stable_sort(ids.begin(), ids.end(), [&](auto a, auto b) { return regions[a].size > regions[b].size; });
    relabel[ids.front()] = m;
    for (std::size_t n = 1; n < ids.size(); ++n) {
      const auto& reg = regions[ids[n]];
      const double ratio = rule == CullRule::region_fraction
                               ? static_cast<double>(reg.size) / static_cast<double>(total)
                               : static_cast<double>(total - reg.size) / static_cast<double>(total);
      if (ratio < s_tol) {
        relabel[ids[n]] = kBackground;
        report.regions_culled.emplace_back(m, reg.size);
      } else {
        if (next_label == std::numeric_limits<Label>::max()) throw Error("label space exhausted while splitting regions");
        relabel[ids[n]] = ++next_label;
        report.regions_split[m].push_back(next_label);
      }
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (component[i] != kUnset) labels[i] = relabel[component[i]];
  return report;
}

// ---------------------------------------------------------------------------------------------
// Non-manifold voxel adjacency

namespace {

// 2x2x2 cluster corner c = dx + 2*dy + 4*dz.
Index3 corner(const Index3& base, int c) { return {base.i + (c & 1), base.j + ((c >> 1) & 1), base.k + ((c >> 2) & 1)}; }

bool cluster_face_path(const LabeledVolume& vol, const Index3& base, int from, int to, Label l) {
  std::uint8_t seen = static_cast<std::uint8_t>(1u << from);
  int stack[8];
  int top = 0;
  stack[top++] = from;
  while (top > 0) {
    const int c = stack[--top];
    if (c == to) return true;
    for (int bit = 1; bit < 8; bit <<= 1) {
      const int n = c ^ bit;
      if (seen & (1u << n)) continue;
      if (vol.at(corner(base, n)) != l) continue;
      seen |= static_cast<std::uint8_t>(1u << n);
      stack[top++] = n;
    }
  }
  return false;
}

// Vertex pair: diagonal corners c and 7-c of the cluster at `base`.
bool is_vertex_pair(const LabeledVolume& vol, const Index3& base, int c) {
  const Label l = vol.at(corner(base, c));
  if (l == kBackground || vol.at(corner(base, 7 - c)) != l) return false;
  return !cluster_face_path(vol, base, c, 7 - c, l);
}

// 2x2 cluster in the plane spanned by axes (u, w) at `base`; q = du + 2*dw.
Index3 plane_corner(const Index3& base, int u, int w, int q) {
  Index3 v = base;
  auto bump = [&](int axis, int by) {
    if (axis == 0) v.i += by;
    if (axis == 1) v.j += by;
    if (axis == 2) v.k += by;
  };
  bump(u, q & 1);
  bump(w, (q >> 1) & 1);
  return v;
}

// Edge pair: diagonal q and 3-q of the plane cluster with both other voxels of a different label.
bool is_edge_pair(const LabeledVolume& vol, const Index3& base, int u, int w, int q) {
  const Label l = vol.at(plane_corner(base, u, w, q));
  if (l == kBackground || vol.at(plane_corner(base, u, w, 3 - q)) != l) return false;
  return vol.at(plane_corner(base, u, w, q ^ 1)) != l && vol.at(plane_corner(base, u, w, q ^ 2)) != l;
}

constexpr int kPlanes[3][2] = {{0, 1}, {0, 2}, {1, 2}};

void detect_vertex_pairs(const LabeledVolume& vol, std::vector<NonManifoldPair>& out) {
  const auto& d = vol.dims();
  for (std::int64_t k = 0; k + 1 < d[2]; ++k)
    for (std::int64_t j = 0; j + 1 < d[1]; ++j)
      for (std::int64_t i = 0; i + 1 < d[0]; ++i) {
        const Index3 base{i, j, k};
        for (int c = 0; c < 4; ++c)
          if (is_vertex_pair(vol, base, c)) out.push_back({corner(base, c), corner(base, 7 - c), Adjacency::vertex});
      }
}

void detect_edge_pairs(const LabeledVolume& vol, std::vector<NonManifoldPair>& out) {
  const auto& d = vol.dims();
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i) {
        const Index3 base{i, j, k};
        const std::int64_t idx[3] = {i, j, k};
        for (const auto& p : kPlanes) {
          if (idx[p[0]] + 1 >= d[p[0]] || idx[p[1]] + 1 >= d[p[1]]) continue;
          for (int q = 0; q < 2; ++q)
            if (is_edge_pair(vol, base, p[0], p[1], q))
              out.push_back({plane_corner(base, p[0], p[1], q), plane_corner(base, p[0], p[1], 3 - q), Adjacency::edge});
        }
      }
}

Index3 min_corner(const Index3& a, const Index3& b) {
  return {std::min(a.i, b.i), std::min(a.j, b.j), std::min(a.k, b.k)};
}

int corner_code(const Index3& base, const Index3& v) {
  return static_cast<int>((v.i - base.i) + 2 * (v.j - base.j) + 4 * (v.k - base.k));
}

}  // namespace

std::vector<NonManifoldPair> find_nonmanifold_voxel_pairs(const LabeledVolume& vol) {
  std::vector<NonManifoldPair> out;
  detect_vertex_pairs(vol, out);
  detect_edge_pairs(vol, out);
  return out;
}

NonManifoldResidualError::NonManifoldResidualError(std::vector<NonManifoldPair> residual, int passes)
    : Error("non-manifold voxel elimination did not converge after " + std::to_string(passes) + " passes (" +
            std::to_string(residual.size()) + " residual pairs)"),
      residual_(std::move(residual)) {}

PreprocessReport eliminate_nonmanifold_voxels(LabeledVolume& vol, std::uint64_t seed, int max_passes) {
  PreprocessReport report;
  report.seed = seed;
  std::mt19937_64 rng(seed);
  std::vector<NonManifoldPair> pairs;

  for (int pass = 1; pass <= max_passes; ++pass) {
    pairs.clear();
    detect_vertex_pairs(vol, pairs);
    for (const auto& p : pairs) {
      const Index3 base = min_corner(p.a, p.b);
      const int from = corner_code(base, p.a);
      if (!is_vertex_pair(vol, base, std::min(from, 7 - from))) continue;
      const Label l = vol.at(p.a);
      // The six monotone face paths from `from` to its antipode, one per axis ordering.
      static constexpr int kOrders[6][3] = {{1, 2, 4}, {1, 4, 2}, {2, 1, 4}, {2, 4, 1}, {4, 1, 2}, {4, 2, 1}};
      const auto& order = kOrders[rng() % 6];
      const int first = from ^ order[0];
      const int second = first ^ order[1];
      vol.set(corner(base, first), l);
      vol.set(corner(base, second), l);
      ++report.vertex_pairs_fixed;
    }

    pairs.clear();
    detect_edge_pairs(vol, pairs);
    for (const auto& p : pairs) {
      const Index3 base = min_corner(p.a, p.b);
      // Plane axes: the two axes along which a and b differ.
      int axes[2], n = 0;
      if (p.a.i != p.b.i) axes[n++] = 0;
      if (p.a.j != p.b.j) axes[n++] = 1;
      if (p.a.k != p.b.k) axes[n++] = 2;
      int q = 0;
      const std::int64_t da[3] = {p.a.i - base.i, p.a.j - base.j, p.a.k - base.k};
      q = static_cast<int>(da[axes[0]] + 2 * da[axes[1]]);
      if (!is_edge_pair(vol, base, axes[0], axes[1], std::min(q, 3 - q))) continue;
      const Label l = vol.at(p.a);
      const int bridge = (rng() % 2 == 0) ? (q ^ 1) : (q ^ 2);
      vol.set(plane_corner(base, axes[0], axes[1], bridge), l);
      ++report.edge_pairs_fixed;
    }

    pairs.clear();
    detect_vertex_pairs(vol, pairs);
    const auto vertex_left = pairs.size();
    detect_edge_pairs(vol, pairs);
    report.iterations = pass;
    report.residual_vertex_pairs = vertex_left;
    report.residual_edge_pairs = pairs.size() - vertex_left;
    if (pairs.empty()) return report;
  }
  throw NonManifoldResidualError(find_nonmanifold_voxel_pairs(vol), max_passes);
}

}  // namespace bccmesh
