#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "bccmesh/mixed.hpp"

namespace bccmesh {

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so readers never see a
/// partial file. The temporary is removed on failure.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

/// Legacy ASCII unstructured grid: points, cells with type codes 10/14/12, and one integer cell
/// array named "material". Coordinates are printed in shortest round-trip form.
std::string serialize_vtk(const MixedMesh& mesh);
void write_vtk(const MixedMesh& mesh, const std::filesystem::path& path);
void write_vtk(const TetMesh& mesh, const std::filesystem::path& path);

/// Reads back what serialize_vtk produces (ASCII, unstructured grid, tet/pyramid/hex cells).
MixedMesh parse_vtk(std::string_view text);
MixedMesh read_vtk(const std::filesystem::path& path);

}  // namespace bccmesh
