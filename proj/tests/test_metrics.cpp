#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bccmesh/metrics.hpp"
#include "oracles.hpp"

using namespace bccmesh;

namespace {

std::array<Vec3, 8> unit_cube() {
  return {Vec3{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
}

}  // namespace

TEST(Dihedral, RegularTet) {
  const auto a = dihedral_angles({1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1});
  const double expect = std::acos(1.0 / 3.0) * 180.0 / std::numbers::pi;
  for (double x : a) EXPECT_NEAR(x, expect, 1e-12);
  EXPECT_NEAR(expect, 70.5288, 1e-4);
}

TEST(Dihedral, MatchesFaceNormalFormulaOnRandomTets) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 500; ++trial) {
    const std::array<Vec3, 4> p{Vec3{u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)},
                                {u(rng), u(rng), u(rng)}};
    if (std::abs(signed_volume6(p[0], p[1], p[2], p[3])) < 1e-2) continue;
    auto a = dihedral_angles(p[0], p[1], p[2], p[3]);
    std::sort(a.begin(), a.end());
    const auto b = oracle::dihedral_multiset(p);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(a[i], b[i], 1e-7);
  }
}

TEST(Dihedral, DegenerateTetThrows) {
  EXPECT_THROW(dihedral_angles({0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}), Error);
  EXPECT_THROW(dihedral_angles({0, 0, 0}, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}), Error);
}

TEST(ScaledJacobian, Hexes) {
  EXPECT_NEAR(scaled_jacobian_hex(unit_cube()), 1.0, 1e-15);
  auto box = unit_cube();
  for (auto& p : box) p = {p.x * 3, p.y * 0.5, p.z * 7};
  EXPECT_NEAR(scaled_jacobian_hex(box), 1.0, 1e-15);

  // Shear by 45 degrees in the x-z plane.
  auto sheared = unit_cube();
  for (auto& p : sheared) p.x += p.z;
  EXPECT_NEAR(scaled_jacobian_hex(sheared), std::sqrt(2.0) / 2.0, 1e-12);

  // Mirror the node order: every corner frame turns left-handed.
  auto inverted = unit_cube();
  std::swap(inverted[1], inverted[3]);
  std::swap(inverted[5], inverted[7]);
  EXPECT_LT(scaled_jacobian_hex(inverted), 0.0);

  // One corner pushed through the opposite face.
  auto folded = unit_cube();
  folded[6] = {0.2, 0.2, 0.2};
  EXPECT_LT(scaled_jacobian_hex(folded), 0.0);
}

TEST(ScaledJacobian, PyramidsAndTets) {
  // Unit square base, apex above its center at height a: base corner frame has the two base edges
  // and the edge to the apex.
  for (double a : {0.5, 1.0, 2.0}) {
    const std::array<Vec3, 5> p{Vec3{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0.5, 0.5, a}};
    const double expect = a / std::sqrt(0.5 + a * a);
    EXPECT_NEAR(scaled_jacobian_pyramid(p), expect, 1e-12);
  }
  // Apex below the base: inverted.
  EXPECT_LT(scaled_jacobian_pyramid({Vec3{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0.5, 0.5, -1}}), 0.0);

  MixedMesh m;
  m.vertices = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  m.cells.push_back(Cell{CellKind::tet, 1, {0, 1, 2, 3}});
  if (m.volume(0) < 0) std::swap(m.cells[0].v[2], m.cells[0].v[3]);
  EXPECT_NEAR(scaled_jacobian(m, 0), 1.0, 1e-12);
}

TEST(Histogram, BinEdges) {
  EXPECT_EQ(histogram_bin(0.0), 0);
  EXPECT_EQ(histogram_bin(4.999), 0);
  EXPECT_EQ(histogram_bin(5.0), 1);
  EXPECT_EQ(histogram_bin(60.0), 12);
  EXPECT_EQ(histogram_bin(59.99999999999), 12);  // rounding noise stays with the exact value
  EXPECT_EQ(histogram_bin(90.0), 18);
  EXPECT_EQ(histogram_bin(179.9), 35);
  EXPECT_EQ(histogram_bin(180.0), 35);
}

TEST(Histogram, BccLatticeHasTwoSpikes) {
  LabeledVolume vol({10, 10, 10}, {1, 1, 1});
  std::fill(vol.labels().begin(), vol.labels().end(), 1);
  const auto mesh = build_bcc(vol, 2.0);
  const auto h = angle_histogram(mesh);
  double sum = 0.0;
  for (double x : h) sum += x;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_NEAR(h[12], 4.0 / 6.0, 1e-12);
  EXPECT_NEAR(h[18], 2.0 / 6.0, 1e-12);

  const auto q = quality_report(MixedMesh::from_tets(mesh));
  EXPECT_EQ(q.tets, mesh.tets.size());
  EXPECT_NEAR(q.min_dihedral, 60.0, 1e-9);
  EXPECT_NEAR(q.max_dihedral, 90.0, 1e-9);
  EXPECT_FALSE(q.min_scaled_jacobian);
}

TEST(Hausdorff, MatchesBruteForce) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-10, 10);
  std::normal_distribution<double> g(0, 1);
  auto cloud = [&](std::size_t n, int shape) {
    std::vector<Vec3> out;
    for (std::size_t i = 0; i < n; ++i) {
      if (shape == 0) {
        out.push_back({u(rng), u(rng), u(rng)});
      } else if (shape == 1) {  // sphere surface
        Vec3 v{g(rng), g(rng), g(rng)};
        out.push_back(v / norm(v) * 8.0);
      } else if (shape == 2) {  // a tight cluster plus far stragglers
        out.push_back(i % 50 ? Vec3{g(rng) * 0.01, g(rng) * 0.01, g(rng) * 0.01} : Vec3{u(rng) * 30, u(rng), 0});
      } else {  // collinear
        out.push_back({u(rng), 0, 0});
      }
    }
    return out;
  };
  for (int shape = 0; shape < 4; ++shape)
    for (std::size_t n : {1u, 17u, 1000u}) {
      const auto a = cloud(n, shape), b = cloud(n + 3, (shape + 1) % 4);
      EXPECT_DOUBLE_EQ(directed_hausdorff(a, b), oracle::brute_directed_hd(a, b)) << shape << " " << n;
      EXPECT_DOUBLE_EQ(directed_hausdorff(b, a), oracle::brute_directed_hd(b, a)) << shape << " " << n;
    }
  const auto big_a = cloud(10000, 1), big_b = cloud(10000, 0);
  EXPECT_DOUBLE_EQ(directed_hausdorff(big_a, big_b), oracle::brute_directed_hd(big_a, big_b));
  EXPECT_DOUBLE_EQ(directed_hausdorff(big_b, big_a), oracle::brute_directed_hd(big_b, big_a));

  const std::vector<Vec3> same(5, Vec3{1, 2, 3});
  EXPECT_EQ(directed_hausdorff(same, same), 0.0);
  EXPECT_THROW(directed_hausdorff({}, same), Error);
  EXPECT_THROW(directed_hausdorff(same, {}), Error);
}

TEST(Hausdorff, MeshAgainstImage) {
  const auto vol = generate_phantom(PhantomKind::sphere, {24, 24, 24}, {1, 1, 1}, PhantomParams{.radius = 8});
  const auto fields = compute_all_edts(vol);
  const auto mesh = MixedMesh::from_tets(select_candidate_mesh(build_bcc(vol, 3.0)));
  const auto rep = hausdorff(mesh, fields);
  std::vector<Vec3> surface;
  for (VertexId v : material_surface_vertices(mesh, 1)) surface.push_back(mesh.vertices[v]);
  const auto boundary = boundary_voxel_centers(fields.at(1));
  const auto mask = boundary_mask(vol, 1);
  EXPECT_EQ(boundary.size(), static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)));
  const auto& m = rep.materials.at(1);
  EXPECT_DOUBLE_EQ(m.mesh_to_image, oracle::brute_directed_hd(surface, boundary));
  EXPECT_DOUBLE_EQ(m.image_to_mesh, oracle::brute_directed_hd(boundary, surface));
  EXPECT_EQ(m.two_sided, std::max(m.mesh_to_image, m.image_to_mesh));
  EXPECT_EQ(rep.hd, m.two_sided);
  EXPECT_GT(rep.hd, 0.0);
  EXPECT_LT(rep.hd, 3.0 * std::sqrt(3.0));

  // Every surface vertex sits on a face with a single owner.
  const auto adj = mesh.face_adjacency();
  std::vector<std::uint8_t> expect(mesh.vertices.size(), 0);
  for (std::size_t c = 0; c < mesh.cells.size(); ++c) {
    const auto fs = mesh.faces(c);
    for (std::size_t f = 0; f < fs.size(); ++f)
      if (adj[c][f] < 0)
        for (int i = 0; i < 3; ++i) expect[fs[f][i]] = 1;
  }
  EXPECT_EQ(surface.size(), static_cast<std::size_t>(std::count(expect.begin(), expect.end(), 1)));
}
