#pragma once

#include <array>
#include <map>
#include <optional>
#include <vector>

#include "bccmesh/mixed.hpp"
#include "bccmesh/volume.hpp"

namespace bccmesh {

/// Interior dihedral angles (degrees) at edges 01, 02, 03, 12, 13, 23.
std::array<double, 6> dihedral_angles(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

/// Minimum over corners of the determinant of the unit edge vectors at that corner.
double scaled_jacobian_hex(const std::array<Vec3, 8>& p);
/// Base corners only (the apex has four edges and no unique frame).
double scaled_jacobian_pyramid(const std::array<Vec3, 5>& p);
/// Tets use their single corner frame scaled by the regular-tet normalization (1 for a regular tet).
double scaled_jacobian(const MixedMesh& mesh, std::size_t cell);

inline constexpr int kHistogramBins = 36;
using AngleHistogram = std::array<double, kHistogramBins>;

/// Bin of an angle: [5k, 5k+5) degrees, an exact boundary going to the upper bin.
int histogram_bin(double degrees);
/// Fraction of all tet dihedral angles per 5-degree bin.
AngleHistogram angle_histogram(const MixedMesh& mesh);
AngleHistogram angle_histogram(const TetMesh& mesh);

struct QualityReport {
  std::size_t tets = 0;
  std::size_t pyramids = 0;
  std::size_t hexes = 0;
  std::size_t vertices = 0;
  double min_dihedral = 0.0;
  double max_dihedral = 0.0;
  std::optional<double> min_scaled_jacobian;  ///< over hexes and pyramids
  AngleHistogram histogram{};
};

QualityReport quality_report(const MixedMesh& mesh);

/// Directed Hausdorff distance max_a min_b |a - b|, exact, using a uniform bin grid over b.
double directed_hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

struct MaterialHausdorff {
  double image_to_mesh = 0.0;
  double mesh_to_image = 0.0;
  double two_sided = 0.0;
};

struct FidelityReport {
  std::map<Label, MaterialHausdorff> materials;
  double hd = 0.0;  ///< max over materials
};

/// Vertices on the boundary of the cells of one material (outer surface or interface).
std::vector<VertexId> material_surface_vertices(const MixedMesh& mesh, Label material);
/// Voxel centers with zero distance value in the material's field.
std::vector<Vec3> boundary_voxel_centers(const DistanceField& field);

FidelityReport hausdorff(const MixedMesh& mesh, const FieldSet& fields);

}  // namespace bccmesh
