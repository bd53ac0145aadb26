#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "bccmesh/volume.hpp"

namespace bccmesh {

using LatticeCoord = std::array<std::int64_t, 3>;

/// Lattice vertices carry exact integer coordinates in units of spacing / 2^kLatticeDepth, so edge
/// midpoints never round.
inline constexpr int kLatticeDepth = 24;
inline constexpr int kMaxRefinementLevel = 20;

struct LatticeCoordHash {
  std::size_t operator()(const LatticeCoord& q) const;
};

struct LatticeFrame {
  Vec3 origin{};
  double spacing = 1.0;  ///< level-0 cell edge (mm)
  Vec3 position(const LatticeCoord& q) const;
  /// Length of one lattice unit (mm).
  double unit() const;
};

enum class TetColor : std::uint8_t { red, green };

struct Tet {
  std::array<VertexId, 4> v{};
  Label label = kBackground;
  TetColor color = TetColor::red;
  std::uint8_t level = 0;
  std::int32_t origin = -1;  ///< hierarchy node: the tet itself when red, its red parent when green
};

inline constexpr std::array<std::array<int, 2>, 6> kTetEdges{{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
/// Face i is opposite vertex i.
inline constexpr std::array<std::array<int, 3>, 4> kTetFaces{{{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}};

struct TetMesh {
  std::vector<Vec3> vertices;
  std::vector<LatticeCoord> lattice;  ///< exact lattice position per vertex (empty for non-lattice meshes)
  std::vector<Tet> tets;
  LatticeFrame frame;

  /// neighbor[t][i] is the tet across face i of t, or -1 on the boundary.
  std::vector<std::array<std::int32_t, 4>> face_adjacency() const;
  double signed_volume(std::size_t t) const;
  Vec3 centroid(std::size_t t) const;
  /// Drops unused vertices, keeping the relative order of the rest.
  void compact_vertices();
};

/// Nested red hierarchy over a BCC lattice. Leaves are the current red tets; green closure tets are
/// derived from leaves on demand and never stored.
class AdaptiveLattice {
 public:
  struct Node {
    std::array<VertexId, 4> v{};
    std::int32_t parent = -1;
    std::int32_t first_child = -1;
    std::uint8_t level = 0;
  };

  /// Interlaced corner/center grids covering the volume's cell bounds plus one cell of margin.
  /// Tets that cannot reach any material voxel are dropped.
  AdaptiveLattice(const LabeledVolume& vol, double lattice_sp);
  /// Arbitrary root tets on the integer lattice (reoriented to positive volume).
  AdaptiveLattice(const LatticeFrame& frame, const std::vector<std::array<LatticeCoord, 4>>& roots);

  const LatticeFrame& frame() const { return frame_; }
  const std::vector<LatticeCoord>& coords() const { return coords_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t root_count() const { return roots_; }
  bool is_leaf(std::int32_t id) const { return nodes_[id].first_child < 0; }

  /// Regular 1:8 split through the shortest octahedron diagonal. Children are ids first_child..+7.
  std::array<std::int32_t, 8> subdivide_red(std::int32_t id);

  /// Upgrades every leaf whose hanging-node pattern has no green template to red, to a fixpoint,
  /// then emits red leaves and green closure tets. Labels are left at background.
  TetMesh close_green();

  std::size_t leaf_count() const;

 private:
  VertexId vertex(const LatticeCoord& q);
  VertexId midpoint(VertexId a, VertexId b);
  std::optional<VertexId> find_midpoint(VertexId a, VertexId b) const;
  /// none, deferrable (two adjacent split edges, which a third split on their face would fix) or forced.
  enum class Upgrade : std::uint8_t { none, deferrable, forced };
  Upgrade needs_upgrade(std::int32_t id) const;

  LatticeFrame frame_;
  std::vector<LatticeCoord> coords_;
  std::vector<Node> nodes_;
  std::size_t roots_ = 0;
  absl::flat_hash_map<LatticeCoord, VertexId, LatticeCoordHash> lookup_;
};

/// Uniform lattice with centroid labels.
TetMesh build_bcc(const LabeledVolume& vol, double lattice_sp);

/// Label of the voxel containing each tet centroid (background outside the grid).
void assign_centroid_labels(TetMesh& mesh, const LabeledVolume& vol);

/// Sign-change test of the field belonging to the centroid's material. Background tets inside the
/// grid test every field; tets whose centroid lies outside the grid return false.
bool needs_refinement(const TetMesh& mesh, std::size_t tet, const FieldSet& fields);
/// Material whose field triggered the sign change, if any.
std::optional<Label> refinement_trigger(const TetMesh& mesh, std::size_t tet, const FieldSet& fields);

struct FidelityRatios {
  double f1 = 0.0;
  double f2 = 0.0;
  std::uint64_t s1 = 0;      ///< voxel centers inside the sub-mesh
  std::uint64_t s2 = 0;      ///< voxels of the material
  std::uint64_t common = 0;
};

/// Owning tet label per voxel center (first containing tet in tet order, background if none).
std::vector<Label> rasterize_labels(const TetMesh& mesh, const LabeledVolume& vol);
std::map<Label, FidelityRatios> fidelity_ratios(const TetMesh& mesh, const LabeledVolume& vol);
FidelityRatios fidelity_ratios(const TetMesh& mesh, const LabeledVolume& vol, Label material);

struct ConformityReport {
  std::size_t overshared_faces = 0;  ///< faces referenced by more than two tets
  std::size_t t_junctions = 0;       ///< vertices lying inside another tet's edge or face
  std::size_t inverted = 0;          ///< tets with non-positive volume
  bool ok() const { return overshared_faces == 0 && t_junctions == 0 && inverted == 0; }
};

/// Exact check on lattice coordinates: hanging vertices are searched at the dyadic points of every
/// edge and face down to quarter resolution.
ConformityReport check_conformity(const TetMesh& mesh);

/// Label per tet after the neighbor vote: labels are visited in ascending order, and a tet with two or
/// more differently labeled faces (boundary faces count as background) takes the most frequent of
/// those labels not yet visited, else the most frequent overall; ties go to the smaller label.
std::vector<Label> redistribute_labels(const TetMesh& mesh);

/// Relabels surface tets so that every material tet has at most one face on background or the
/// boundary, then discards background tets.
TetMesh select_candidate_mesh(const TetMesh& mesh);

/// Largest number of boundary faces on any tet (0 for an empty mesh).
int max_boundary_faces(const TetMesh& mesh);

struct TopologyReport {
  std::map<Label, std::vector<VertexId>> nonmanifold_vertices;
  std::map<Label, std::vector<std::array<VertexId, 2>>> nonmanifold_edges;
  std::map<Label, std::size_t> components;           ///< vertex-connected regions per material
  std::vector<std::pair<Label, Label>> relabeled;    ///< (from, to) per small region moved
  std::vector<std::size_t> local_marks;              ///< tets around non-manifold sites
  std::set<Label> global_marks;                      ///< materials still disconnected
  std::size_t nonmanifold_count() const;
  bool clean() const { return nonmanifold_count() == 0 && global_marks.empty(); }
};

/// Non-manifold sites and disconnected regions per material. Regions under `small_fraction` of
/// their sub-mesh volume are moved to the dominant neighboring label unless that adds non-manifold
/// sites. Background relabels delete the tets.
TopologyReport check_topology(TetMesh& mesh, double small_fraction = 0.01);

struct RefinementConfig {
  double lattice_sp = 10.0;
  double fidelity = 0.95;
  std::map<Label, double> material_fidelity;  ///< overrides the global value
  bool topo_checks = false;
  int max_levels = 10;
  int max_topology_rounds = 8;
  int threads = 1;

  double fidelity_for(Label m) const;
};

struct RefinementResult {
  TetMesh mesh;  ///< candidate mesh (background discarded)
  std::map<Label, FidelityRatios> fidelity;
  int iterations = 0;
  int max_level = 0;
  std::vector<ConformityReport> cycles;  ///< conformity after every refine/close cycle
  std::optional<TopologyReport> topology;
  int topology_rounds = 0;
};

RefinementResult refine_lattice(const LabeledVolume& vol, const FieldSet& fields, const RefinementConfig& config);

}  // namespace bccmesh
