// mesh: labeled volume -> adaptive tet / mixed mesh.
//
//   mesh phantom --kind sphere --dims 64,64,64 --radius 20 -o sphere.vol
//   mesh convert -i sphere.vol -o sphere.vtk -r report.json --lattice-spacing 8 --iterations 10
//   mesh metrics --mesh sphere.vtk --volume sphere.vol

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "bccmesh/io.hpp"
#include "bccmesh/pipeline.hpp"
#include "json.hpp"

using namespace bccmesh;

namespace {

struct Flags {
  std::vector<std::string> preprocess;
  std::string cull_rule = "region";
  std::string fidelity;
  std::string topo_checks = "off";
  std::string mixed = "on";
  std::string connectivity = "no";
  std::string search_region = "cube";
  std::string youngs, poisson;
  std::string config_file;
};

void add_pipeline_flags(CLI::App* cmd, PipelineConfig& c, Flags& f) {
  const auto on_off = CLI::IsMember({"on", "off"});
  cmd->add_option("--preprocess", f.preprocess,
                  "noisy[=type1|type2|both], disconnected[=s_tol], nonmanifold (repeatable)");
  cmd->add_option("--cull-rule", f.cull_rule, "disconnected-region rule: region or remainder")
      ->check(CLI::IsMember({"region", "remainder"}));
  cmd->add_option("--seed", c.seed, "RNG seed for the non-manifold templates");
  cmd->add_option("--lattice-spacing", c.refinement.lattice_sp, "BCC spacing in mm")->capture_default_str();
  cmd->add_option("--fidelity", f.fidelity, "F or label=F[,label=F...] (default 0.95)");
  cmd->add_option("--topo-checks", f.topo_checks, "on|off")->check(on_off)->capture_default_str();
  cmd->add_option("--max-levels", c.refinement.max_levels, "refinement depth cap")->capture_default_str();
  cmd->add_option("--mixed", f.mixed, "convert to tet/pyramid/hex: on|off")->check(on_off)->capture_default_str();
  cmd->add_flag("--deform-first", c.deform_first, "deform the tet mesh, then convert");
  cmd->add_option("--iterations", c.deform.iterations, "deformation iterations (0 skips deformation)")
      ->capture_default_str();
  cmd->add_option("--connectivity", f.connectivity, "target thinning: vertex|edge|face|no")
      ->check(CLI::IsMember({"vertex", "edge", "face", "no"}))
      ->capture_default_str();
  cmd->add_option("--search-region", f.search_region, "correspondence region: cube|sphere")
      ->check(CLI::IsMember({"cube", "sphere"}))
      ->capture_default_str();
  cmd->add_option("--min-dihedral", c.deform.gate.min_dihedral, "gate threshold in degrees")->capture_default_str();
  cmd->add_option("--min-scaled-jacobian", c.deform.gate.min_scaled_jacobian, "gate threshold")->capture_default_str();
  cmd->add_option("--youngs", f.youngs, "E or label=E[,label=E...] (default 1)");
  cmd->add_option("--poisson", f.poisson, "v or label=v[,label=v...] (default 0.45)");
  cmd->add_option("--threads", c.threads, "worker threads")->capture_default_str();
  cmd->add_option("--config", f.config_file, "flat key=value file; command-line flags win");
}

// Options not given on the command line are filled from the config file, keyed by long name.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  if (path.empty()) return;
  for (const auto& item : CLI::ConfigINI().from_file(path)) {
    if (!item.parents.empty()) throw CLI::ConfigError("sections are not supported: " + item.fullname());
    if (item.name == "config") throw CLI::ConfigError("config files cannot nest");
    auto* opt = cmd->get_option_no_throw("--" + item.name);
    if (!opt) throw CLI::ConfigError::Extras(item.name);
    if (opt->count() > 0) continue;
    opt->add_result(item.inputs);
    opt->run_callback();
  }
}

void finish(PipelineConfig& c, const Flags& f) {
  for (const auto& s : f.preprocess) add_preprocess_step(c.preprocess, s);
  c.preprocess.cull_rule = parse_cull_rule(f.cull_rule);
  if (!f.fidelity.empty()) parse_fidelity(c.refinement, f.fidelity);
  c.refinement.topo_checks = f.topo_checks == "on";
  c.mixed = f.mixed == "on";
  c.deform.pattern = parse_pattern(f.connectivity);
  c.deform.region = parse_search_region(f.search_region);
  if (!f.youngs.empty()) parse_material_values(c.deform.materials, f.youngs, true);
  if (!f.poisson.empty()) parse_material_values(c.deform.materials, f.poisson, false);
  c.validate();
}

int run_metrics(const std::string& mesh_path, const std::string& volume_path, const std::string& report_path) {
  const MixedMesh mesh = read_vtk(mesh_path);
  const auto q = quality_report(mesh);
  nlohmann::json j;
  j["quality"] = {{"tets", q.tets},
                  {"pyramids", q.pyramids},
                  {"hexes", q.hexes},
                  {"vertices", q.vertices},
                  {"min_dihedral", q.min_dihedral},
                  {"max_dihedral", q.max_dihedral},
                  {"min_scaled_jacobian", q.min_scaled_jacobian ? nlohmann::json(*q.min_scaled_jacobian) : nlohmann::json(nullptr)},
                  {"histogram", q.histogram}};
  if (!volume_path.empty()) {
    const auto fields = compute_all_edts(read_volume(volume_path));
    const auto h = hausdorff(mesh, fields);
    nlohmann::json mats = nlohmann::json::object();
    for (const auto& [m, x] : h.materials)
      mats[std::to_string(m)] = {{"image_to_mesh", x.image_to_mesh}, {"mesh_to_image", x.mesh_to_image}, {"hd", x.two_sided}};
    j["fidelity"] = {{"hd", h.hd}, {"materials", mats}};
  }
  const std::string text = j.dump(2) + "\n";
  if (report_path.empty()) std::cout << text;
  else atomic_write(report_path, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive BCC tetrahedral and mixed-element meshing of labeled volumes"};
  app.require_subcommand(1);

  PipelineConfig config;
  Flags flags;
  auto* convert = app.add_subcommand("convert", "mesh a labeled volume file");
  convert->add_option("-i,--input", config.input, "labeled volume file")->required()->check(CLI::ExistingFile);
  convert->add_option("-o,--output", config.output, "mesh file (legacy VTK)");
  convert->add_option("-r,--report", config.report, "JSON run report");
  add_pipeline_flags(convert, config, flags);

  std::string kind = "sphere", volume_out;
  std::array<std::int64_t, 3> dims{64, 64, 64};
  std::array<double, 3> spacing{1, 1, 1};
  PhantomParams params;
  auto* phantom = app.add_subcommand("phantom", "write a synthetic labeled volume");
  phantom->add_option("--kind", kind, "sphere|two-spheres|cube-with-inclusion|thin-tube")->capture_default_str();
  phantom->add_option("--dims", dims, "grid size")->delimiter(',')->capture_default_str();
  phantom->add_option("--spacing", spacing, "voxel spacing in mm")->delimiter(',')->capture_default_str();
  phantom->add_option("--radius", params.radius, "sphere radius, cube half-width or tube radius (voxels)")
      ->capture_default_str();
  phantom->add_option("--inner-radius", params.inner_radius, "inclusion radius (0 = solid cube)")->capture_default_str();
  phantom->add_option("--gap", params.gap, "two-spheres diagonal gap in voxel steps")->capture_default_str();
  phantom->add_option("-o,--output", volume_out, "volume file")->required();

  std::string mesh_in, volume_in, report_out;
  auto* metrics = app.add_subcommand("metrics", "quality and fidelity of an existing mesh");
  metrics->add_option("--mesh", mesh_in, "legacy VTK mesh")->required()->check(CLI::ExistingFile);
  metrics->add_option("--volume", volume_in, "labeled volume for the Hausdorff distance")->check(CLI::ExistingFile);
  metrics->add_option("-r,--report", report_out, "write JSON here instead of stdout");

  try {
    app.parse(argc, argv);
    if (*convert) {
      apply_config_file(convert, flags.config_file);
      finish(config, flags);
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mesh: config: %s\n", e.what());
    return 2;
  }

  try {
    if (*convert) {
      const auto result = run_pipeline(config);
      const auto& q = *result.report.quality;
      std::printf("%zu tets, %zu pyramids, %zu hexes, %zu vertices; dihedral %.2f..%.2f deg; HD %.4f mm (%s)\n",
                  q.tets, q.pyramids, q.hexes, q.vertices, q.min_dihedral, q.max_dihedral, result.report.fidelity->hd,
                  result.report.deform ? "post-deformation" : "pre-deformation");
    } else if (*phantom) {
      const auto vol =
          generate_phantom(parse_phantom_kind(kind), dims, Vec3{spacing[0], spacing[1], spacing[2]}, params);
      write_volume(vol, volume_out);
    } else if (*metrics) {
      return run_metrics(mesh_in, volume_in, report_out);
    }
  } catch (const StageError& e) {
    std::fprintf(stderr, "mesh: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mesh: %s\n", e.what());
    return 1;
  }
  return 0;
}
