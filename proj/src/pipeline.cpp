#include "bccmesh/pipeline.hpp"

#include <chrono>
#include <charconv>
#include <set>

#include "bccmesh/io.hpp"
#include "json.hpp"

namespace bccmesh {

namespace {

double parse_number(const std::string& s, const std::string& what) {
  double x = 0.0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, x);
  if (ec != std::errc() || p != end) throw Error("bad " + what + " value '" + s + "'");
  return x;
}

Label parse_label(const std::string& s) {
  unsigned x = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, x);
  if (ec != std::errc() || p != end || x == 0 || x > 65535) throw Error("bad material label '" + s + "'");
  return static_cast<Label>(x);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string to_string(NoisyMode m) {
  return m == NoisyMode::type1 ? "type1" : m == NoisyMode::type2 ? "type2" : "both";
}

std::string to_string(CullRule r) { return r == CullRule::region_fraction ? "region" : "remainder"; }

}  // namespace

void add_preprocess_step(PreprocessSteps& steps, const std::string& spec) {
  const auto eq = spec.find('=');
  const std::string name = spec.substr(0, eq);
  const std::string arg = eq == std::string::npos ? "" : spec.substr(eq + 1);
  if (name == "noisy") {
    if (arg.empty() || arg == "both") steps.noisy = NoisyMode::both;
    else if (arg == "type1") steps.noisy = NoisyMode::type1;
    else if (arg == "type2") steps.noisy = NoisyMode::type2;
    else throw Error("unknown noisy mode '" + arg + "' (type1, type2, both)");
  } else if (name == "disconnected") {
    const double tol = arg.empty() ? 1e-4 : parse_number(arg, "s_tol");
    if (!(tol > 0.0 && tol < 1.0)) throw Error("s_tol must lie in (0, 1)");
    steps.disconnected = tol;
  } else if (name == "nonmanifold") {
    if (!arg.empty()) throw Error("nonmanifold takes no value");
    steps.nonmanifold = true;
  } else {
    throw Error("unknown preprocess step '" + name + "' (noisy, disconnected, nonmanifold)");
  }
}

CullRule parse_cull_rule(const std::string& name) {
  if (name == "region") return CullRule::region_fraction;
  if (name == "remainder") return CullRule::remainder_fraction;
  throw Error("unknown cull rule '" + name + "' (region, remainder)");
}

void parse_fidelity(RefinementConfig& config, const std::string& spec) {
  for (const auto& item : split(spec, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      config.fidelity = parse_number(item, "fidelity");
    } else {
      config.material_fidelity[parse_label(item.substr(0, eq))] = parse_number(item.substr(eq + 1), "fidelity");
    }
  }
}

void parse_material_values(MaterialTable& table, const std::string& spec, bool youngs) {
  auto set = [&](Material& m, double x) { (youngs ? m.youngs : m.poisson) = x; };
  for (const auto& item : split(spec, ',')) {
    const auto eq = item.find('=');
    const std::string what = youngs ? "Young's modulus" : "Poisson ratio";
    if (eq == std::string::npos) {
      set(table.fallback, parse_number(item, what));
    } else {
      const Label l = parse_label(item.substr(0, eq));
      auto it = table.overrides.try_emplace(l, table.fallback).first;
      set(it->second, parse_number(item.substr(eq + 1), what));
    }
  }
}

void PipelineConfig::validate() const {
  auto check_f = [](double f) {
    if (!(f > 0.0 && f <= 1.0)) throw Error("fidelity must lie in (0, 1]");
  };
  check_f(refinement.fidelity);
  for (const auto& [l, f] : refinement.material_fidelity) check_f(f);
  if (!(refinement.lattice_sp > 0.0)) throw Error("lattice spacing must be positive");
  if (refinement.max_levels < 0) throw Error("max levels must be non-negative");
  if (deform.iterations < 0) throw Error("iterations must be non-negative");
  const auto& g = deform.gate;
  if (!(g.scale_factor > 0.0 && g.scale_factor < 1.0)) throw Error("scale factor must lie in (0, 1)");
  if (g.max_attempts < 1) throw Error("max attempts must be at least 1");
  if (!(g.min_dihedral >= 0.0 && g.min_dihedral < 180.0)) throw Error("min dihedral must lie in [0, 180)");
  if (!(g.min_scaled_jacobian >= -1.0 && g.min_scaled_jacobian <= 1.0)) throw Error("min scaled Jacobian must lie in [-1, 1]");
  auto check_m = [](const Material& m) {
    if (!(m.youngs > 0.0)) throw Error("Young's modulus must be positive");
    if (!(m.poisson > -1.0 && m.poisson < 0.5)) throw Error("Poisson ratio must lie in (-1, 0.5)");
  };
  check_m(deform.materials.fallback);
  for (const auto& [l, m] : deform.materials.overrides) check_m(m);
  if (threads < 1) throw Error("threads must be at least 1");
}

namespace {

void validate_labels(const PipelineConfig& config, const LabeledVolume& vol) {
  std::set<Label> present(vol.labels().begin(), vol.labels().end());
  for (const auto& [l, f] : config.refinement.material_fidelity)
    if (!present.count(l)) throw Error("fidelity given for material " + std::to_string(l) + ", which is not in the volume");
  for (const auto& [l, m] : config.deform.materials.overrides)
    if (!present.count(l)) throw Error("material parameters given for " + std::to_string(l) + ", which is not in the volume");
}

class Stages {
 public:
  explicit Stages(RunReport& report) : report_(report) {}

  template <class F>
  auto run(const std::string& name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(body())>) {
        body();
        done(name, t0);
      } else {
        auto out = body();
        done(name, t0);
        return out;
      }
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      report_.failed_stage = name;
      report_.error = e.what();
      throw StageError(name, e.what());
    }
  }

 private:
  void done(const std::string& name, std::chrono::steady_clock::time_point t0) {
    report_.timings.emplace_back(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  RunReport& report_;
};

PipelineResult execute(const PipelineConfig& config, std::optional<LabeledVolume> preloaded) {
  PipelineResult result;
  RunReport& rep = result.report;
  rep.config = config;
  Stages stages(rep);

  auto write_report = [&] {
    if (!config.report.empty()) atomic_write(config.report, report_json(rep));
  };

  try {
    stages.run("config", [&] { config.validate(); });
    LabeledVolume vol = preloaded ? std::move(*preloaded) : stages.run("load", [&] { return read_volume(config.input); });
    rep.dims = vol.dims();

    if (config.preprocess.any()) {
      rep.preprocess = stages.run("preprocess", [&] {
        PreprocessReport pr;
        pr.seed = config.seed;
        const auto& steps = config.preprocess;
        if (steps.noisy) pr.merge(relabel_noisy_voxels(vol, *steps.noisy));
        if (steps.disconnected) pr.merge(relabel_disconnected_regions(vol, *steps.disconnected, steps.cull_rule));
        if (steps.nonmanifold) pr.merge(eliminate_nonmanifold_voxels(vol, config.seed));
        return pr;
      });
    }
    stages.run("config", [&] { validate_labels(config, vol); });

    const FieldSet fields = stages.run("edt", [&] { return compute_all_edts(vol, config.threads); });
    if (fields.empty()) {
      rep.failed_stage = "edt";
      rep.error = "volume has no material voxels";
      throw StageError("edt", rep.error);
    }

    RefinementConfig rc = config.refinement;
    rc.threads = config.threads;
    RefinementResult refined = stages.run("lattice", [&] { return refine_lattice(vol, fields, rc); });
    TetMesh tets = std::move(refined.mesh);
    refined.mesh = TetMesh{};
    rep.refinement = std::move(refined);

    const bool deforming = config.deform.iterations > 0;
    auto run_deform = [&](const MixedMesh& in) {
      DeformResult d = stages.run("deform", [&] { return deform(in, vol, fields, config.deform); });
      MixedMesh out = std::move(d.mesh);
      d.mesh = MixedMesh{};
      rep.deform = std::move(d);
      return out;
    };
    auto run_mixed = [&](const TetMesh& in) {
      return stages.run("mixed", [&] {
        MixedConversionStats st;
        MixedMesh out = convert_to_mixed(in, &st);
        rep.mixed = st;
        return out;
      });
    };

    MixedMesh mesh;
    if (config.mixed && !(config.deform_first && deforming)) {
      mesh = run_mixed(tets);
      if (deforming) mesh = run_deform(mesh);
    } else {
      mesh = MixedMesh::from_tets(tets);
      if (deforming) mesh = run_deform(mesh);
      if (config.mixed) {
        tets.vertices = mesh.vertices;  // connectivity comes from the lattice, positions from the deformed mesh
        mesh = run_mixed(tets);
      }
    }

    stages.run("metrics", [&] {
      rep.quality = quality_report(mesh);
      rep.fidelity = hausdorff(mesh, fields);
    });
    if (!config.output.empty()) stages.run("write", [&] { write_vtk(mesh, config.output); });
    result.mesh = std::move(mesh);
  } catch (const StageError&) {
    write_report();
    throw;
  }
  write_report();
  return result;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) { return execute(config, std::nullopt); }

PipelineResult run_pipeline(const PipelineConfig& config, LabeledVolume vol) { return execute(config, std::move(vol)); }

namespace {

using nlohmann::json;

json optional_number(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

json config_json(const PipelineConfig& c) {
  json j;
  j["input"] = c.input.string();
  j["output"] = c.output.string();
  j["report"] = c.report.string();
  j["preprocess"] = {{"noisy", c.preprocess.noisy ? json(to_string(*c.preprocess.noisy)) : json(nullptr)},
                     {"disconnected", optional_number(c.preprocess.disconnected)},
                     {"nonmanifold", c.preprocess.nonmanifold},
                     {"cull_rule", to_string(c.preprocess.cull_rule)}};
  j["seed"] = c.seed;
  const auto& r = c.refinement;
  json mf = json::object();
  for (const auto& [l, f] : r.material_fidelity) mf[std::to_string(l)] = f;
  j["lattice"] = {{"lattice_spacing", r.lattice_sp}, {"fidelity", r.fidelity},      {"material_fidelity", mf},
                  {"topo_checks", r.topo_checks},    {"max_levels", r.max_levels}};
  j["mixed"] = c.mixed;
  j["deform_first"] = c.deform_first;
  const auto& d = c.deform;
  json mats = {{"default", {{"youngs", d.materials.fallback.youngs}, {"poisson", d.materials.fallback.poisson}}}};
  for (const auto& [l, m] : d.materials.overrides) mats[std::to_string(l)] = {{"youngs", m.youngs}, {"poisson", m.poisson}};
  j["deform"] = {{"iterations", d.iterations},
                 {"connectivity", to_string(d.pattern)},
                 {"search_region", to_string(d.region)},
                 {"min_dihedral", d.gate.min_dihedral},
                 {"min_scaled_jacobian", d.gate.min_scaled_jacobian},
                 {"scale_factor", d.gate.scale_factor},
                 {"max_attempts", d.gate.max_attempts},
                 {"materials", mats}};
  j["threads"] = c.threads;
  return j;
}

}  // namespace

std::string report_json(const RunReport& rep, bool timings) {
  json j;
  j["config"] = config_json(rep.config);
  j["volume"] = {{"dims", rep.dims}};
  j["status"] = rep.failed_stage ? "failed" : "ok";
  if (rep.failed_stage) j["error"] = {{"stage", *rep.failed_stage}, {"message", rep.error}};

  if (rep.preprocess) {
    const auto& p = *rep.preprocess;
    json split = json::object();
    for (const auto& [m, labels] : p.regions_split) split[std::to_string(m)] = labels;
    json culled = json::array();
    for (const auto& [m, n] : p.regions_culled) culled.push_back({{"material", m}, {"voxels", n}});
    j["preprocess"] = {{"noisy_relabeled", {{"type1", p.noisy_type1}, {"type2", p.noisy_type2}}},
                       {"regions_split", split},
                       {"regions_culled", culled},
                       {"nonmanifold_fixed", {{"vertex", p.vertex_pairs_fixed}, {"edge", p.edge_pairs_fixed}}},
                       {"nonmanifold_residual", {{"vertex", p.residual_vertex_pairs}, {"edge", p.residual_edge_pairs}}},
                       {"iterations", p.iterations},
                       {"seed", p.seed}};
  }

  if (rep.refinement) {
    const auto& r = *rep.refinement;
    json fid = json::object();
    for (const auto& [m, f] : r.fidelity)
      fid[std::to_string(m)] = {{"f1", f.f1}, {"f2", f.f2}, {"s1", f.s1}, {"s2", f.s2}, {"common", f.common}};
    json cycles = json::array();
    for (const auto& c : r.cycles)
      cycles.push_back({{"overshared_faces", c.overshared_faces}, {"t_junctions", c.t_junctions}, {"inverted", c.inverted}});
    json lattice = {{"iterations", r.iterations}, {"max_level", r.max_level}, {"fidelity", fid}, {"cycles", cycles}};
    if (r.topology) {
      std::size_t nv = 0, ne = 0;
      for (const auto& [m, v] : r.topology->nonmanifold_vertices) nv += v.size();
      for (const auto& [m, e] : r.topology->nonmanifold_edges) ne += e.size();
      json comps = json::object();
      for (const auto& [m, n] : r.topology->components) comps[std::to_string(m)] = n;
      json moved = json::array();
      for (const auto& [a, b] : r.topology->relabeled) moved.push_back({a, b});
      lattice["topology"] = {{"rounds", r.topology_rounds},
                             {"nonmanifold_vertices", nv},
                             {"nonmanifold_edges", ne},
                             {"components", comps},
                             {"relabeled", moved}};
    }
    j["lattice"] = lattice;
  }

  if (rep.mixed)
    j["mixed"] = {{"converted", rep.mixed->converted},
                  {"vertices_before", rep.mixed->vertices_before},
                  {"vertices_after", rep.mixed->vertices_after},
                  {"reduction", rep.mixed->reduction()}};

  if (rep.deform) {
    const auto& d = *rep.deform;
    json its = json::array();
    for (const auto& it : d.iterations)
      its.push_back({{"active_sources", it.active_sources},
                     {"attempts", it.attempts},
                     {"solver_iterations", it.solver_iterations},
                     {"energy_zero", it.energy_zero},
                     {"energy", it.energy},
                     {"committed", it.committed},
                     {"hd", it.hd}});
    j["deform"] = {{"sources", d.sources}, {"targets", d.targets}, {"hd_before", d.hd_before},
                   {"reverted", d.reverted}, {"iterations", its}};
  }

  if (rep.quality) {
    const auto& q = *rep.quality;
    j["quality"] = {{"tets", q.tets},
                    {"pyramids", q.pyramids},
                    {"hexes", q.hexes},
                    {"vertices", q.vertices},
                    {"min_dihedral", q.min_dihedral},
                    {"max_dihedral", q.max_dihedral},
                    {"min_scaled_jacobian", optional_number(q.min_scaled_jacobian)},
                    {"histogram", q.histogram}};
  }
  if (rep.fidelity) {
    json mats = json::object();
    for (const auto& [m, h] : rep.fidelity->materials)
      mats[std::to_string(m)] = {{"image_to_mesh", h.image_to_mesh}, {"mesh_to_image", h.mesh_to_image}, {"hd", h.two_sided}};
    j["fidelity"] = {{"stage", rep.deform ? "post-deformation" : "pre-deformation"}, {"hd", rep.fidelity->hd}, {"materials", mats}};
  }

  if (timings) {
    json t = json::array();
    for (const auto& [stage, s] : rep.timings) t.push_back({{"stage", stage}, {"seconds", s}});
    j["timings"] = t;
  }
  return j.dump(2) + "\n";
}

}  // namespace bccmesh
