#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "evac3d/geometry.hpp"
#include "evac3d/simulator.hpp"
#include "evac3d/surface.hpp"

namespace evac3d {

using Json = nlohmann::json;

// ---- scene manifest -------------------------------------------------------

Json to_json(const CameraIntrinsics& intr);
CameraIntrinsics intrinsics_from_json(const Json& j);
Json to_json(const OrbitSpec& spec);
OrbitSpec orbit_from_json(const Json& j);
Json to_json(const EmitterSpec& spec);
EmitterSpec emitter_from_json(const Json& j);

/// {"type": "sphere" | "box" | "cylinder" | "mesh", ...}. Mesh shapes carry a
/// "path", resolved against base_dir when relative. Throws ConfigError.
SceneSurface shape_from_json(const Json& j, const std::filesystem::path& base_dir = {});

struct Scene {
  SceneSurface surface;
  CameraIntrinsics intrinsics;
  Json manifest;
};

/// Manifest JSON with "shape", "intrinsics" and optional "orbit", "emitter",
/// "seed" entries. Throws ConfigError.
Scene read_scene(const std::filesystem::path& path);
void write_scene(const std::filesystem::path& path, const Json& manifest);

// ---- evaluation -----------------------------------------------------------

struct Evaluation {
  double chamfer_mm = 0.0;
  double normal_cos = 0.0;
  std::size_t n_samples = 0;
  std::size_t k = 0;
};

/// Chamfer (reported in 1e-3 scene units) and normal consistency between
/// n area-uniform samples of the ground-truth surface and of the mesh, with
/// PCA normals from k neighbors on both sides.
Evaluation evaluate_mesh(const TriMesh& mesh, const SceneSurface& truth, std::size_t n, std::size_t k,
                         std::uint64_t seed);

/// Volume of the symmetric difference between the occupancy and the voxels
/// whose centers lie inside `truth`, over the volume of the latter.
double occupancy_volume_error(const OccupancyGrid& occupancy, const SceneSurface& truth);

// ---- runs -----------------------------------------------------------------

/// One end-to-end reconstruction. Text form is "key = value" per line with
/// '#' comments; relative paths resolve against the config file's directory.
struct RunConfig {
  std::filesystem::path events;
  std::filesystem::path trajectory;
  std::filesystem::path scene;
  std::filesystem::path output_dir = "out";

  std::string method = "evac3d";  // or "mask-N"
  int mask_scale = 1;             // mask sensor pixels per event-camera pixel, per axis
  int grid_dim = 128;
  double grid_margin = 1.2;
  double ace_tol_px = 1.5;
  bool relabel = true;            // recompute labels from the scene surface
  double eps_v_percentile = 90.0;
  std::uint32_t eps_free = 0;
  bool refine = true;
  double lambda1 = 1.0;
  double lambda2 = 0.1;
  double eps_d = 0.0;        // 0: three voxels
  int refine_iters = 200;
  double step_size = 0.0;    // 0: 1e-3 scene diameters
  std::uint64_t seed = 0;
  std::size_t eval_samples = 10000;
  std::size_t normal_k = 300;
  int threads = 1;

  /// Throws ConfigError for unknown keys or malformed values.
  void set(std::string_view key, std::string_view value, const std::filesystem::path& base_dir = {});
  static RunConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  /// Number of mask views for "mask-N", 0 for "evac3d".
  int mask_views() const;
  /// Checks ranges, that input files exist and that output_dir is writable
  /// (creating it if needed). Throws ConfigError.
  void validate() const;
  Json to_json() const;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunReport {
  std::string method;
  double chamfer_mm = 0.0;
  double normal_cos = 0.0;
  std::uint64_t ops = 0;
  double wall_time_s = 0.0;
  std::vector<StageTiming> stages;
  Json config;
  Json details;  // counts and thresholds picked along the way

  Json to_json() const;
  static RunReport from_json(const Json& j);
};

inline const char* kMeshFile = "mesh.ply";
inline const char* kVolumeFile = "volume.vol";
inline const char* kReportFile = "report.json";

/// Runs the configured method end to end and writes mesh, volume and report
/// into cfg.output_dir. A failing stage removes the files this run created
/// and rethrows with the stage name prefixed, keeping the exception type for
/// ConfigError, ReconstructionFailed and NumericalAbort.
RunReport run_pipeline(const RunConfig& cfg);

struct ComparisonRow {
  std::string method;
  std::uint64_t ops = 0;
  double chamfer_mm = 0.0;
  double normal_cos = 0.0;
};

/// Runs every config (all must name the same scene; throws ConfigError
/// otherwise) and returns rows sorted by ops, ties kept in input order.
std::vector<ComparisonRow> compare_methods(const std::vector<RunConfig>& cfgs);
std::vector<ComparisonRow> comparison_rows(const std::vector<RunReport>& reports);

enum class TableFormat { csv, markdown };
std::string format_comparison(const std::vector<ComparisonRow>& rows, TableFormat format);

}  // namespace evac3d
