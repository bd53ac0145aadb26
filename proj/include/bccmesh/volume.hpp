#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "bccmesh/types.hpp"

namespace bccmesh {

struct Index3 {
  std::int64_t i = 0;
  std::int64_t j = 0;
  std::int64_t k = 0;
  friend constexpr bool operator==(const Index3&, const Index3&) = default;
  friend constexpr auto operator<=>(const Index3&, const Index3&) = default;
};

/// Dense 3D grid of material labels with an affine index-to-physical map:
/// p(i,j,k) = origin + (i*sx, j*sy, k*sz). Physical units are millimetres.
class LabeledVolume {
 public:
  LabeledVolume() = default;
  LabeledVolume(std::array<std::int64_t, 3> dims, Vec3 spacing, Vec3 origin = {});
  LabeledVolume(std::array<std::int64_t, 3> dims, Vec3 spacing, Vec3 origin, std::vector<Label> labels);

  const std::array<std::int64_t, 3>& dims() const { return dims_; }
  const Vec3& spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  std::size_t size() const { return labels_.size(); }

  std::span<const Label> labels() const { return labels_; }
  std::span<Label> labels() { return labels_; }

  bool contains(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims_[0] && j < dims_[1] && k < dims_[2];
  }
  bool contains(const Index3& v) const { return contains(v.i, v.j, v.k); }

  std::size_t linear(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return static_cast<std::size_t>(i + dims_[0] * (j + dims_[1] * k));
  }
  std::size_t linear(const Index3& v) const { return linear(v.i, v.j, v.k); }
  Index3 unravel(std::size_t idx) const;

  Label at(std::int64_t i, std::int64_t j, std::int64_t k) const { return labels_[linear(i, j, k)]; }
  Label at(const Index3& v) const { return labels_[linear(v)]; }
  void set(const Index3& v, Label l) { labels_[linear(v)] = l; }

  /// Out-of-grid voxels read as background.
  Label label_or_background(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return contains(i, j, k) ? at(i, j, k) : kBackground;
  }

  Vec3 physical(const Index3& v) const;
  /// Physical position of a fractional index.
  Vec3 physical(const Vec3& continuous_index) const;
  Vec3 continuous_index(const Vec3& p) const;
  /// Voxel whose cell (center +- spacing/2) contains p, if any.
  std::optional<Index3> voxel_at(const Vec3& p) const;
  /// Label of the voxel containing p, background outside the grid.
  Label label_at(const Vec3& p) const;

  /// Sorted distinct labels present in the grid (background included only if present).
  std::vector<Label> inventory() const;
  /// Inventory without background.
  std::vector<Label> materials() const;
  bool has_label(Label l) const;

  /// Physical bounding box of the voxel cells (not just centers).
  std::pair<Vec3, Vec3> bounds() const;

  friend bool operator==(const LabeledVolume&, const LabeledVolume&) = default;

 private:
  std::array<std::int64_t, 3> dims_{0, 0, 0};
  Vec3 spacing_{1, 1, 1};
  Vec3 origin_{};
  std::vector<Label> labels_;
};

enum class ScalarType { uint8, uint16 };

/// Reads the header+raw volume format: text `KEY: value` lines (DIMS, SPACING, ORIGIN, TYPE,
/// DATA_OFFSET) terminated by an empty line, then a little-endian label buffer starting at
/// DATA_OFFSET bytes from the start of the file.
LabeledVolume read_volume(const std::filesystem::path& path);
/// Writes the same format. The scalar width defaults to the narrowest one that fits.
void write_volume(const LabeledVolume& vol, const std::filesystem::path& path,
                  std::optional<ScalarType> type = std::nullopt);
LabeledVolume parse_volume(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_volume(const LabeledVolume& vol, std::optional<ScalarType> type = std::nullopt);

/// Signed Euclidean distance (mm) to the nearest boundary voxel center of one material.
/// Positive inside the material, negative outside, zero on boundary voxels (material voxels with a
/// 6-neighbor of another label or outside the grid).
struct DistanceField {
  std::array<std::int64_t, 3> dims{0, 0, 0};
  Vec3 spacing{1, 1, 1};
  Vec3 origin{};
  Label material = kBackground;
  std::vector<double> values;

  double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return values[static_cast<std::size_t>(i + dims[0] * (j + dims[1] * k))];
  }
  /// Trilinear interpolation at a physical point; coordinates are clamped to the grid of centers.
  double sample(const Vec3& p) const;
  /// True when p lies within the voxel cells of the grid.
  bool covers(const Vec3& p) const;
};

using FieldSet = std::map<Label, DistanceField>;

/// Marks material voxels that carry the zero level (a 6-neighbor differs or is outside the grid).
std::vector<std::uint8_t> boundary_mask(const LabeledVolume& vol, Label material);

/// Exact signed EDT of a voxel mask. Distances are measured between voxel centers with the
/// volume's (possibly anisotropic) spacing. `threads` partitions each separable pass by lines.
DistanceField signed_distance(const LabeledVolume& vol, std::span<const std::uint8_t> inside, int threads = 1);

DistanceField compute_edt(const LabeledVolume& vol, Label material, int threads = 1);
/// One field per non-background material.
FieldSet compute_all_edts(const LabeledVolume& vol, int threads = 1);

enum class PhantomKind { sphere, two_spheres, cube_with_inclusion, thin_tube };

/// Shape parameters, all lengths in voxels and measured from the grid center.
struct PhantomParams {
  double radius = 20.0;       ///< sphere radius, per-sphere radius, cube half-width, or tube radius
  double inner_radius = 0.0;  ///< inclusion radius for cube_with_inclusion (0 = solid cube)
  double gap = 1.0;           ///< two_spheres: diagonal voxel steps between the spheres' closest voxels
  Label label = 1;
  Label second_label = 2;     ///< second sphere / inclusion label
};

LabeledVolume generate_phantom(PhantomKind kind, std::array<std::int64_t, 3> dims, Vec3 spacing,
                               const PhantomParams& params);

PhantomKind parse_phantom_kind(const std::string& name);
std::string to_string(PhantomKind kind);

}  // namespace bccmesh
