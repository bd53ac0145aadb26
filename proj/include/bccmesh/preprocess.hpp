#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "bccmesh/volume.hpp"

namespace bccmesh {

struct PreprocessReport {
  std::uint64_t noisy_type1 = 0;  ///< background voxels fully enclosed by material
  std::uint64_t noisy_type2 = 0;  ///< material voxels with no same-label 26-neighbor
  std::map<Label, std::vector<Label>> regions_split;         ///< material -> labels created for its extra regions
  std::vector<std::pair<Label, std::uint64_t>> regions_culled;  ///< (material, voxel count) sent to background
  std::uint64_t vertex_pairs_fixed = 0;
  std::uint64_t edge_pairs_fixed = 0;
  std::uint64_t residual_vertex_pairs = 0;
  std::uint64_t residual_edge_pairs = 0;
  int iterations = 0;
  std::uint64_t seed = 0;

  void merge(const PreprocessReport& other);
};

enum class NoisyMode { type1, type2, both };

/// Relabels isolated voxels to the majority label of their 26-neighborhood (ties to the smallest
/// label; out-of-grid neighbors count as background). Sweeps in (k,j,i) order, updating in place,
/// until a sweep changes nothing.
PreprocessReport relabel_noisy_voxels(LabeledVolume& vol, NoisyMode mode);

/// Which fraction decides that a face-connected region is too small to keep.
enum class CullRule {
  region_fraction,    ///< cull region j when |S_ij| / |S_i| < s_tol
  remainder_fraction  ///< cull region j when (|S_i| - |S_ij|) / |S_i| < s_tol (formula as printed)
};

/// Splits every material into its 6-connected components. Components below the size threshold
/// become background; every other component except the largest receives a fresh label.
PreprocessReport relabel_disconnected_regions(LabeledVolume& vol, double s_tol = 1e-4,
                                              CullRule rule = CullRule::region_fraction);

enum class Adjacency { vertex, edge };

struct NonManifoldPair {
  Index3 a;
  Index3 b;
  Adjacency kind;
  friend bool operator==(const NonManifoldPair&, const NonManifoldPair&) = default;
};

/// Same-label, non-background voxel pairs that touch only at a grid vertex (diagonal of a 2x2x2
/// cluster) or a grid edge (diagonal of a 2x2 cluster) with no face path of that label inside the
/// cluster. Ordered by cluster in (k,j,i) order; vertex pairs first.
std::vector<NonManifoldPair> find_nonmanifold_voxel_pairs(const LabeledVolume& vol);

/// Raised when template relabeling does not converge within the pass cap.
class NonManifoldResidualError : public Error {
 public:
  NonManifoldResidualError(std::vector<NonManifoldPair> residual, int passes);
  const std::vector<NonManifoldPair>& residual() const { return residual_; }

 private:
  std::vector<NonManifoldPair> residual_;
};

/// Removes non-manifold voxel adjacencies with randomized face-path templates: one of six
/// two-voxel paths for vertex pairs, one of two single-voxel bridges for edge pairs. Deterministic
/// for a given seed.
PreprocessReport eliminate_nonmanifold_voxels(LabeledVolume& vol, std::uint64_t seed, int max_passes = 1000);

}  // namespace bccmesh
