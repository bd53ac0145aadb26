#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "bccmesh/lattice.hpp"

namespace bccmesh {

/// Values are the legacy VTK cell type codes.
enum class CellKind : std::uint8_t { tet = 10, hex = 12, pyramid = 14 };

int node_count(CellKind kind);

/// Edges of a cell as local node pairs.
std::span<const std::array<int, 2>> cell_edges(CellKind kind);

/// Node order follows VTK: tets positively oriented, pyramid base 0-3 with the apex (4) on the side
/// of (p1-p0)x(p3-p0), hex bottom 0-3 then top 4-7.
struct Cell {
  CellKind kind = CellKind::tet;
  Label label = kBackground;
  std::array<VertexId, 8> v{};
  int size() const { return node_count(kind); }
};

/// A face of a cell as a vertex loop (3 or 4 entries; unused slots hold kNoVertex).
inline constexpr VertexId kNoVertex = ~VertexId{0};
using FaceLoop = std::array<VertexId, 4>;

struct MixedMesh {
  std::vector<Vec3> vertices;
  std::vector<LatticeCoord> lattice;  ///< exact lattice positions when the mesh came from a lattice
  std::vector<Cell> cells;

  static MixedMesh from_tets(const TetMesh& mesh);

  std::size_t count(CellKind kind) const;
  /// Outward-oriented faces of a cell.
  std::vector<FaceLoop> faces(std::size_t cell) const;
  /// Neighbor across each face (same order as faces()), -1 on the boundary.
  std::vector<std::vector<std::int32_t>> face_adjacency() const;
  double volume(std::size_t cell) const;
  double total_volume() const;
};

/// Triangles on the outer boundary or between cells of different labels, each as a sorted vertex
/// triple. Quad faces are not included.
std::vector<std::array<VertexId, 3>> interface_triangles(const MixedMesh& mesh);

struct MixedConversionStats {
  std::size_t converted = 0;   ///< cell-center vertices replaced by a hex
  std::size_t vertices_before = 0;
  std::size_t vertices_after = 0;
  double reduction() const {
    return vertices_before ? 1.0 - static_cast<double>(vertices_after) / static_cast<double>(vertices_before) : 0.0;
  }
};

/// Replaces every uniform 24-tet star around a cell-center vertex (all red, one label, one level,
/// none consumed yet; scanned in ascending vertex id) with its cube as a hex plus six pyramids
/// capping the cube faces toward the neighboring centers.
MixedMesh convert_to_mixed(const TetMesh& mesh, MixedConversionStats* stats = nullptr);

}  // namespace bccmesh
