#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <map>
#include <string>
#include <vector>

#include "bccmesh/mixed.hpp"
#include "bccmesh/volume.hpp"

namespace bccmesh {

/// Sorted, background excluded.
using LabelSet = std::vector<Label>;

struct SourcePoint {
  VertexId vertex = 0;
  Vec3 position{};
  LabelSet labels;
};

struct TargetPoint {
  Vec3 position{};
  LabelSet labels;
};

/// Which neighbors of an already selected target voxel are barred from selection.
enum class ConnectivityPattern { vertex, edge, face, no };
ConnectivityPattern parse_pattern(const std::string& name);
std::string to_string(ConnectivityPattern p);

enum class SearchRegion { cube, sphere };
SearchRegion parse_search_region(const std::string& name);
std::string to_string(SearchRegion r);

/// Vertices on the outer surface or shared by cells of different labels, ascending id.
std::vector<SourcePoint> extract_source_points(const MixedMesh& mesh);

/// Boundary voxel centers (zero in some field), visited in storage order (x fastest). A voxel is
/// skipped when one of its 26 (vertex), 18 (edge) or 6 (face) neighbors is already selected.
std::vector<TargetPoint> extract_target_points(const LabeledVolume& vol, const FieldSet& fields,
                                               ConnectivityPattern pattern);

/// Mean length of the edges incident to each source vertex.
std::vector<double> local_sizes(const MixedMesh& mesh, const std::vector<SourcePoint>& sources);

struct Correspondences {
  std::vector<Vec3> d;               ///< mean (target - source) per source
  std::vector<std::uint8_t> active;  ///< 0 when no target matched
  std::size_t active_count() const;
};

Correspondences compute_correspondences(const std::vector<SourcePoint>& sources, const std::vector<TargetPoint>& targets,
                                        const std::vector<double>& half_widths, SearchRegion region = SearchRegion::cube);

struct Material {
  double youngs = 1.0;
  double poisson = 0.45;
};

struct MaterialTable {
  Material fallback;
  std::map<Label, Material> overrides;
  const Material& at(Label l) const;
};

/// Linear isotropic element matrix (3 dofs per node, node-major). Tets use one point, hexes 2x2x2
/// Gauss points, pyramids the hex rule on a hex whose top face collapses onto the apex.
Eigen::MatrixXd element_stiffness(const MixedMesh& mesh, std::size_t cell, const Material& material);
Eigen::SparseMatrix<double> assemble_stiffness(const MixedMesh& mesh, const MaterialTable& materials);

struct SolveResult {
  Eigen::VectorXd u;  ///< 3 per vertex
  int iterations = 0;
  double residual = 0.0;
};

/// Solves (K + H^T H + eps I) U = H^T D where H selects the active sources' components and
/// eps = 1e-8 * max diag K. Throws when the residual does not reach `tolerance` within `max_iterations`.
SolveResult solve_step(const Eigen::SparseMatrix<double>& k, const std::vector<SourcePoint>& sources,
                       const Correspondences& corr, double tolerance = 1e-6, int max_iterations = 5000);

/// U^T K U + |H U - D|^2.
double deformation_energy(const Eigen::SparseMatrix<double>& k, const std::vector<SourcePoint>& sources,
                          const Correspondences& corr, const Eigen::VectorXd& u);

struct QualityGate {
  double min_dihedral = 5.0;
  double min_scaled_jacobian = 0.2;
  double scale_factor = 0.2;
  int max_attempts = 3;
};

/// Cells under the gate's thresholds (inverted or degenerate cells included).
std::vector<std::size_t> violating_cells(const MixedMesh& mesh, const QualityGate& gate);

struct DeformConfig {
  int iterations = 5;
  ConnectivityPattern pattern = ConnectivityPattern::no;
  SearchRegion region = SearchRegion::cube;
  QualityGate gate;
  MaterialTable materials;
};

struct DeformIteration {
  std::size_t active_sources = 0;
  int attempts = 0;        ///< solves tried
  int solver_iterations = 0;
  double energy_zero = 0.0;  ///< W(0) = |D|^2 of the committed attempt
  double energy = 0.0;       ///< W(U) of the committed attempt
  bool committed = false;
  double hd = 0.0;  ///< after this iteration (unchanged when not committed)
};

struct DeformResult {
  MixedMesh mesh;
  std::size_t sources = 0;
  std::size_t targets = 0;
  double hd_before = 0.0;
  std::vector<DeformIteration> iterations;
  bool reverted = false;  ///< the gate gave up and the last committed coordinates were kept
};

DeformResult deform(const MixedMesh& mesh, const LabeledVolume& vol, const FieldSet& fields, const DeformConfig& config);

}  // namespace bccmesh
