#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bccmesh/deform.hpp"
#include "bccmesh/lattice.hpp"
#include "bccmesh/metrics.hpp"
#include "bccmesh/mixed.hpp"
#include "bccmesh/preprocess.hpp"

namespace bccmesh {

/// Preprocessing always runs in the order noisy, disconnected, nonmanifold.
struct PreprocessSteps {
  std::optional<NoisyMode> noisy;
  std::optional<double> disconnected;  ///< s_tol
  bool nonmanifold = false;
  CullRule cull_rule = CullRule::region_fraction;
  bool any() const { return noisy || disconnected || nonmanifold; }
};

/// Accepts "noisy", "noisy=type1|type2|both", "disconnected", "disconnected=s_tol", "nonmanifold".
void add_preprocess_step(PreprocessSteps& steps, const std::string& spec);
CullRule parse_cull_rule(const std::string& name);

/// "F", "label=F" or a comma list mixing both; bare values set the global fidelity.
void parse_fidelity(RefinementConfig& config, const std::string& spec);
/// "E" or "label=E[,label=E]" for Young's modulus; same form for Poisson's ratio.
void parse_material_values(MaterialTable& table, const std::string& spec, bool youngs);

struct PipelineConfig {
  std::filesystem::path input;
  std::filesystem::path output;  ///< mesh; empty skips writing
  std::filesystem::path report;  ///< empty skips writing
  PreprocessSteps preprocess;
  std::uint64_t seed = 0;
  RefinementConfig refinement;
  bool mixed = true;
  bool deform_first = false;
  DeformConfig deform;
  int threads = 1;

  /// Checks settings that do not depend on the volume.
  void validate() const;
};

struct StageError : Error {
  StageError(std::string stage, const std::string& message)
      : Error(stage + ": " + message), stage(std::move(stage)) {}
  std::string stage;
};

struct RunReport {
  PipelineConfig config;
  std::array<std::int64_t, 3> dims{};
  std::optional<PreprocessReport> preprocess;
  std::optional<RefinementResult> refinement;  ///< mesh cleared
  std::optional<MixedConversionStats> mixed;
  std::optional<DeformResult> deform;          ///< mesh cleared
  std::optional<QualityReport> quality;
  std::optional<FidelityReport> fidelity;
  std::vector<std::pair<std::string, double>> timings;  ///< seconds per executed stage
  std::optional<std::string> failed_stage;
  std::string error;
};

struct PipelineResult {
  RunReport report;
  MixedMesh mesh;
};

/// Runs load, preprocess, edt, lattice, [mixed], [deform], metrics in order and writes the mesh and the
/// report when their paths are set. On a stage error the partial report is still written and a
/// StageError is thrown; the mesh file is left untouched.
PipelineResult run_pipeline(const PipelineConfig& config);
/// Same, starting from an in-memory volume (config.input is ignored).
PipelineResult run_pipeline(const PipelineConfig& config, LabeledVolume vol);

/// JSON with sorted keys. Timings are left out when `timings` is false, which makes reports of
/// identical runs byte-identical.
std::string report_json(const RunReport& report, bool timings = true);

}  // namespace bccmesh
