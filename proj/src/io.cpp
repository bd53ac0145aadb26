#include "bccmesh/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

namespace bccmesh {

void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".part";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error("cannot move output into place: " + path.string());
  }
}

namespace {

void put(std::string& out, double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  out.append(buf, end);
}

void put(std::string& out, std::uint64_t x) {
  char buf[24];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  out.append(buf, end);
}

}  // namespace

std::string serialize_vtk(const MixedMesh& mesh) {
  std::string out = "# vtk DataFile Version 3.0\nbccmesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out += "POINTS " + std::to_string(mesh.vertices.size()) + " double\n";
  for (const auto& p : mesh.vertices) {
    put(out, p.x);
    out += ' ';
    put(out, p.y);
    out += ' ';
    put(out, p.z);
    out += '\n';
  }
  std::size_t entries = 0;
  for (const auto& c : mesh.cells) entries += 1 + static_cast<std::size_t>(c.size());
  out += "CELLS " + std::to_string(mesh.cells.size()) + " " + std::to_string(entries) + "\n";
  for (const auto& c : mesh.cells) {
    put(out, static_cast<std::uint64_t>(c.size()));
    for (int i = 0; i < c.size(); ++i) {
      out += ' ';
      put(out, static_cast<std::uint64_t>(c.v[i]));
    }
    out += '\n';
  }
  out += "CELL_TYPES " + std::to_string(mesh.cells.size()) + "\n";
  for (const auto& c : mesh.cells) out += std::to_string(static_cast<int>(c.kind)) + "\n";
  out += "CELL_DATA " + std::to_string(mesh.cells.size()) + "\nSCALARS material int 1\nLOOKUP_TABLE default\n";
  for (const auto& c : mesh.cells) out += std::to_string(c.label) + "\n";
  return out;
}

void write_vtk(const MixedMesh& mesh, const std::filesystem::path& path) { atomic_write(path, serialize_vtk(mesh)); }

void write_vtk(const TetMesh& mesh, const std::filesystem::path& path) { write_vtk(MixedMesh::from_tets(mesh), path); }

MixedMesh parse_vtk(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  auto fail = [](const std::string& what) { return Error("malformed mesh file: " + what); };
  for (int i = 0; i < 2; ++i)
    if (!std::getline(in, line)) throw fail("truncated header");
  std::string word, kind;
  in >> word;
  if (word != "ASCII") throw fail("only ASCII files are supported");
  in >> word >> kind;
  if (word != "DATASET" || kind != "UNSTRUCTURED_GRID") throw fail("expected an unstructured grid");

  MixedMesh mesh;
  std::vector<std::vector<std::uint64_t>> conn;
  while (in >> word) {
    std::size_t n = 0;
    if (word == "POINTS") {
      std::string type;
      in >> n >> type;
      mesh.vertices.resize(n);
      for (auto& p : mesh.vertices)
        if (!(in >> p.x >> p.y >> p.z)) throw fail("bad point list");
    } else if (word == "CELLS") {
      std::size_t entries = 0;
      in >> n >> entries;
      conn.resize(n);
      for (auto& c : conn) {
        std::size_t k = 0;
        if (!(in >> k) || k > 8) throw fail("bad cell list");
        c.resize(k);
        for (auto& v : c) in >> v;
      }
      if (!in) throw fail("bad cell list");
    } else if (word == "CELL_TYPES") {
      in >> n;
      if (n != conn.size()) throw fail("cell type count mismatch");
      mesh.cells.resize(n);
      for (std::size_t c = 0; c < n; ++c) {
        int code = 0;
        in >> code;
        if (code != 10 && code != 12 && code != 14) throw fail("unsupported cell type " + std::to_string(code));
        Cell& cell = mesh.cells[c];
        cell.kind = static_cast<CellKind>(code);
        if (conn[c].size() != static_cast<std::size_t>(cell.size())) throw fail("cell size does not match its type");
        for (int i = 0; i < cell.size(); ++i) {
          if (conn[c][i] >= mesh.vertices.size()) throw fail("vertex index out of range");
          cell.v[i] = static_cast<VertexId>(conn[c][i]);
        }
      }
    } else if (word == "CELL_DATA") {
      in >> n;
      std::string scalars, name, type;
      in >> scalars >> name >> type;
      if (scalars != "SCALARS" || name != "material") throw fail("expected the material array");
      in >> word;
      if (word != "LOOKUP_TABLE") in >> word;  // skip the optional component count
      if (word != "LOOKUP_TABLE") throw fail("expected LOOKUP_TABLE");
      in >> word;
      if (n != mesh.cells.size()) throw fail("material count mismatch");
      for (auto& c : mesh.cells) {
        unsigned label = 0;
        if (!(in >> label)) throw fail("bad material array");
        c.label = static_cast<Label>(label);
      }
    } else {
      throw fail("unexpected section " + word);
    }
  }
  if (mesh.cells.size() != conn.size()) throw fail("missing cell types");
  return mesh;
}

MixedMesh read_vtk(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_vtk(ss.str());
}

}  // namespace bccmesh
