// Command-line front end: simulate, label, carve, extract, refine, evaluate,
// run and compare.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evac3d/ace.hpp"
#include "evac3d/carving.hpp"
#include "evac3d/errors.hpp"
#include "evac3d/meshing.hpp"
#include "evac3d/pipeline.hpp"
#include "evac3d/simulator.hpp"

namespace fs = std::filesystem;
using namespace evac3d;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kReconstruction = 3, kNumerical = 4 };

std::vector<Vec3> read_points(const fs::path& path) { return read_mesh(path).vertices; }

void write_points(const std::vector<Vec3>& points, const fs::path& path) {
  TriMesh cloud;
  cloud.vertices = points;
  write_mesh(cloud, path);
}

struct SimulateArgs {
  std::string shape = "sphere";
  std::vector<double> center = {0.0, 0.0, 0.0};
  double radius = 1.0;
  std::vector<double> half_extents = {0.5, 0.5, 0.5};
  double half_height = 0.5;
  std::vector<double> axis = {0.0, 0.0, 1.0};
  std::string mesh;
  OrbitSpec orbit;
  std::string orbit_kind = "random_sphere";
  EmitterSpec emitter;
  std::string timing = "poisson";
  std::uint64_t seed = 0;
  int masks = 0;
  std::string format = "csv";
  fs::path out = "sim";
};

int simulate(const SimulateArgs& a) {
  Json shape;
  if (a.shape == "sphere") {
    shape = {{"type", "sphere"}, {"center", a.center}, {"radius", a.radius}};
  } else if (a.shape == "box") {
    shape = {{"type", "box"}, {"center", a.center}, {"half_extents", a.half_extents}};
  } else if (a.shape == "cylinder") {
    shape = {{"type", "cylinder"}, {"center", a.center}, {"radius", a.radius},
             {"half_height", a.half_height}, {"axis", a.axis}};
  } else if (a.shape == "mesh") {
    if (a.mesh.empty()) throw ConfigError("--mesh is required for shape 'mesh'");
    shape = {{"type", "mesh"}, {"path", fs::absolute(a.mesh).generic_string()}};
  } else {
    throw ConfigError("unknown shape '" + a.shape + "'");
  }
  const SceneSurface surface = shape_from_json(shape);

  OrbitSpec orbit = a.orbit;
  orbit.kind = orbit_kind_from_string(a.orbit_kind);
  orbit.seed = a.seed;
  const auto bounds = surface.bounds();
  double scene_radius = 0.0;
  for (int c = 0; c < 8; ++c) {
    scene_radius = std::max(scene_radius, (bounds.corner(static_cast<Eigen::AlignedBox3d::CornerType>(c)) -
                                           orbit.look_at).norm());
  }
  orbit.validate(scene_radius);
  EmitterSpec emitter = a.emitter;
  emitter.seed = a.seed;
  emitter.timing = a.timing == "uniform" ? EmissionTiming::uniform : EmissionTiming::poisson;

  const CameraIntrinsics intr;
  const Trajectory traj = make_trajectory(orbit);
  const EventStream stream = emit_contour_events(surface, traj, intr, emitter);

  fs::create_directories(a.out);
  const bool binary = a.format == "bin" || a.format == "binary";
  const fs::path events_path = a.out / (binary ? "events.bin" : "events.csv");
  write_events(stream, events_path, binary ? EventFormat::binary : EventFormat::csv);
  write_tum(traj, a.out / "trajectory.txt");

  Json manifest = {{"shape", shape},
                   {"intrinsics", to_json(intr)},
                   {"orbit", to_json(orbit)},
                   {"emitter", to_json(emitter)},
                   {"seed", a.seed},
                   {"events", events_path.filename().generic_string()},
                   {"trajectory", "trajectory.txt"}};
  if (a.masks > 0) {
    fs::create_directories(a.out / "masks");
    const auto views = render_masks(surface, traj, intr, a.masks);
    Json mask_list = Json::array();
    char name[32];
    for (std::size_t k = 0; k < views.size(); ++k) {
      std::snprintf(name, sizeof(name), "mask_%03zu.pgm", k);
      write_pgm(views[k].mask, a.out / "masks" / name);
      mask_list.push_back({{"file", std::string("masks/") + name}, {"t", views[k].t}});
    }
    manifest["masks"] = mask_list;
  }
  write_scene(a.out / "scene.json", manifest);
  std::cout << "wrote " << stream.events.size() << " events, " << traj.size() << " poses to "
            << a.out.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-based apparent-contour carving and mesh reconstruction"};
  app.require_subcommand(1);

  // simulate
  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Generate a synthetic contour-event sequence");
  simulate_cmd->add_option("--shape", sim.shape, "sphere | box | cylinder | mesh")->capture_default_str();
  simulate_cmd->add_option("--center", sim.center)->expected(3);
  simulate_cmd->add_option("--radius", sim.radius)->capture_default_str();
  simulate_cmd->add_option("--half-extents", sim.half_extents)->expected(3);
  simulate_cmd->add_option("--half-height", sim.half_height);
  simulate_cmd->add_option("--axis", sim.axis)->expected(3);
  simulate_cmd->add_option("--mesh", sim.mesh, "PLY/OBJ file for shape 'mesh'");
  simulate_cmd->add_option("--trajectory-kind", sim.orbit_kind, "circular | octahedral | random_sphere")
      ->capture_default_str();
  simulate_cmd->add_option("--orbit-radius", sim.orbit.radius)->capture_default_str();
  simulate_cmd->add_option("--duration", sim.orbit.duration)->capture_default_str();
  simulate_cmd->add_option("--pose-rate", sim.orbit.pose_rate)->capture_default_str();
  simulate_cmd->add_option("--waypoints", sim.orbit.waypoints)->capture_default_str();
  simulate_cmd->add_option("--event-rate", sim.emitter.event_rate)->capture_default_str();
  simulate_cmd->add_option("--jitter", sim.emitter.jitter_px)->capture_default_str();
  simulate_cmd->add_option("--clutter-rate", sim.emitter.clutter_rate)->capture_default_str();
  simulate_cmd->add_option("--timing", sim.timing, "poisson | uniform")->capture_default_str();
  simulate_cmd->add_option("--seed", sim.seed)->capture_default_str();
  simulate_cmd->add_option("--masks", sim.masks, "also render this many silhouette masks");
  simulate_cmd->add_option("--format", sim.format, "csv | bin")->capture_default_str();
  simulate_cmd->add_option("--out", sim.out, "output directory")->capture_default_str();

  // label
  fs::path events_in, traj_in, scene_in, out_path;
  double tol_px = kDefaultAceTolerancePx;
  int threads = 1;
  auto* label_cmd = app.add_subcommand("label", "Label events as apparent-contour events");
  label_cmd->add_option("--events", events_in)->required();
  label_cmd->add_option("--trajectory", traj_in)->required();
  label_cmd->add_option("--scene", scene_in)->required();
  label_cmd->add_option("--tol", tol_px, "pixel tolerance")->capture_default_str();
  label_cmd->add_option("--threads", threads);
  label_cmd->add_option("--out", out_path)->required();

  // carve
  RunConfig carve_cfg;
  bool no_labels = false;
  auto* carve_cmd = app.add_subcommand("carve", "Carve a voxel volume from labeled events or masks");
  carve_cmd->add_option("--events", carve_cfg.events);
  carve_cmd->add_option("--trajectory", carve_cfg.trajectory)->required();
  carve_cmd->add_option("--scene", carve_cfg.scene, "scene manifest (intrinsics, grid bounds)")->required();
  carve_cmd->add_option("--method", carve_cfg.method, "evac3d | mask-N")->capture_default_str();
  carve_cmd->add_option("--grid-dim", carve_cfg.grid_dim)->capture_default_str();
  carve_cmd->add_flag("--no-labels", no_labels, "carve every event regardless of label");
  carve_cmd->add_option("--threads", threads);
  carve_cmd->add_option("--out", out_path)->required();

  // extract
  fs::path volume_in, mesh_out, points_out;
  double eps_v_percentile = 90.0;
  std::uint32_t eps_free = 0;
  auto* extract_cmd = app.add_subcommand("extract", "Extract surface points and a mesh from a volume");
  extract_cmd->add_option("--volume", volume_in)->required();
  extract_cmd->add_option("--eps-v-percentile", eps_v_percentile)->capture_default_str();
  extract_cmd->add_option("--eps-free", eps_free)->capture_default_str();
  extract_cmd->add_option("--mesh", mesh_out)->required();
  extract_cmd->add_option("--points", points_out, "high-confidence surface points (PLY)");

  // refine
  fs::path mesh_in, points_in;
  RefineConfig refine_cfg;
  refine_cfg.eps_d = 0.0;
  refine_cfg.step_size = 0.0;
  auto* refine_cmd = app.add_subcommand("refine", "Refine a mesh against surface points");
  refine_cmd->add_option("--mesh", mesh_in)->required();
  refine_cmd->add_option("--points", points_in)->required();
  refine_cmd->add_option("--volume", volume_in, "volume whose voxel size sets the default eps-d");
  refine_cmd->add_option("--lambda1", refine_cfg.lambda1)->capture_default_str();
  refine_cmd->add_option("--lambda2", refine_cfg.lambda2)->capture_default_str();
  refine_cmd->add_option("--eps-d", refine_cfg.eps_d, "default: 3 voxels");
  refine_cmd->add_option("--refine-iters", refine_cfg.iters)->capture_default_str();
  refine_cmd->add_option("--step-size", refine_cfg.step_size, "default: 1e-3 point-cloud diameters");
  refine_cmd->add_option("--threads", refine_cfg.threads);
  refine_cmd->add_option("--out", out_path)->required();

  // evaluate
  std::size_t samples = 10000, k = 300;
  std::uint64_t seed = 0;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Compare a mesh with the scene's ground truth");
  evaluate_cmd->add_option("--mesh", mesh_in)->required();
  evaluate_cmd->add_option("--scene", scene_in)->required();
  evaluate_cmd->add_option("--samples", samples)->capture_default_str();
  evaluate_cmd->add_option("--k", k)->capture_default_str();
  evaluate_cmd->add_option("--seed", seed)->capture_default_str();
  evaluate_cmd->add_option("--out", out_path, "JSON result");

  // run
  fs::path config_path;
  std::vector<std::string> overrides;
  RunConfig flags;
  auto* run_cmd = app.add_subcommand("run", "Run the full pipeline from a config file");
  run_cmd->add_option("--config", config_path)->required();
  run_cmd->add_option("--set", overrides, "key=value override (repeatable)");
  run_cmd->add_option("--grid-dim", flags.grid_dim);
  run_cmd->add_option("--eps-v-percentile", flags.eps_v_percentile);
  run_cmd->add_option("--eps-free", flags.eps_free);
  run_cmd->add_option("--lambda1", flags.lambda1);
  run_cmd->add_option("--lambda2", flags.lambda2);
  run_cmd->add_option("--eps-d", flags.eps_d);
  run_cmd->add_option("--refine-iters", flags.refine_iters);
  run_cmd->add_option("--method", flags.method);
  run_cmd->add_option("--mask-scale", flags.mask_scale);
  run_cmd->add_option("--threads", flags.threads);

  // compare
  std::vector<fs::path> config_paths;
  std::string table_format = "markdown";
  auto* compare_cmd = app.add_subcommand("compare", "Run several configs on one scene and tabulate");
  compare_cmd->add_option("--config", config_paths, "config files (repeatable)")->required();
  compare_cmd->add_option("--format", table_format, "markdown | csv")->capture_default_str();
  compare_cmd->add_option("--out", out_path, "write the table here as well");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate_cmd) return simulate(sim);

    if (*label_cmd) {
      const Scene scene = read_scene(scene_in);
      const Trajectory traj = read_tum(traj_in);
      const EventStream stream = read_events(events_in, event_format_for(events_in), scene.intrinsics);
      const EventStream labeled = label_events(stream, traj, scene.intrinsics, scene.surface, tol_px, threads);
      write_events(labeled, out_path, event_format_for(out_path));
      std::size_t ace = 0;
      for (const auto& e : labeled.events) ace += e.label == EventLabel::ace;
      std::cout << ace << " of " << labeled.events.size() << " events labeled ace\n";
      return kOk;
    }

    if (*carve_cmd) {
      const Scene scene = read_scene(carve_cfg.scene);
      const Trajectory traj = read_tum(carve_cfg.trajectory);
      const GridSpec grid = GridSpec::around(scene.surface.bounds(), carve_cfg.grid_dim, carve_cfg.grid_margin);
      CarveVolume volume(grid);
      if (const int views = carve_cfg.mask_views(); views > 0) {
        for (const auto& view : render_masks(scene.surface, traj, scene.intrinsics, views)) {
          carve_mask(volume, view.mask, view.pose, scene.intrinsics);
        }
      } else {
        if (carve_cfg.events.empty()) throw ConfigError("--events is required for method evac3d");
        const EventStream stream =
            read_events(carve_cfg.events, event_format_for(carve_cfg.events), scene.intrinsics);
        const CarveStats stats =
            carve_event_stream(volume, stream, traj, scene.intrinsics, !no_labels, threads);
        std::cout << "carved " << stats.carved << " events (" << stats.skipped_label << " not ace, "
                  << stats.skipped_out_of_range << " outside the trajectory)\n";
      }
      write_volume(volume, out_path);
      std::cout << "ops " << volume.ops << '\n';
      return kOk;
    }

    if (*extract_cmd) {
      const CarveVolume volume = read_volume(volume_in);
      const std::uint32_t eps_v = nonzero_count_percentile(volume, eps_v_percentile);
      if (!points_out.empty()) write_points(extract_high_confidence(volume, eps_v).points, points_out);
      const TriMesh mesh = marching_cubes(extract_occupancy(volume, {eps_free, 0.05}));
      write_mesh(mesh, mesh_out);
      std::cout << "eps_v " << eps_v << ", mesh with " << mesh.vertices.size() << " vertices\n";
      return kOk;
    }

    if (*refine_cmd) {
      const TriMesh mesh = read_mesh(mesh_in);
      const SurfacePointSet surf{read_points(points_in)};
      if (surf.points.empty()) throw ConfigError("no surface points in " + points_in.string());
      Eigen::AlignedBox3d box;
      for (const auto& p : surf.points) box.extend(p);
      if (refine_cfg.eps_d <= 0.0) {
        if (volume_in.empty()) throw ConfigError("pass --eps-d or --volume");
        refine_cfg.eps_d = 3.0 * read_volume(volume_in).grid.voxel_size;
      }
      if (refine_cfg.step_size <= 0.0) refine_cfg.step_size = 1e-3 * box.diagonal().norm();
      const RefineResult result = refine_mesh(mesh, surf, refine_cfg);
      write_mesh(result.mesh, out_path);
      std::cout << "loss " << result.loss_trace.front() << " -> " << result.loss_trace.back() << '\n';
      return kOk;
    }

    if (*evaluate_cmd) {
      const Scene scene = read_scene(scene_in);
      const Evaluation ev = evaluate_mesh(read_mesh(mesh_in), scene.surface, samples, k, seed);
      std::cout << "| chamfer_mm | normal_cos |\n|---:|---:|\n| " << ev.chamfer_mm << " | " << ev.normal_cos
                << " |\n";
      if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << Json{{"chamfer_mm", ev.chamfer_mm}, {"normal_cos", ev.normal_cos},
                    {"n_samples", ev.n_samples}, {"k", ev.k}}
                   .dump(2)
            << '\n';
      }
      return kOk;
    }

    if (*run_cmd) {
      RunConfig cfg = RunConfig::load(config_path);
      // Named flags only override when given.
      auto flag = [&](const char* name, auto& field, const auto& value) {
        if (run_cmd->count(name) > 0) field = value;
      };
      flag("--grid-dim", cfg.grid_dim, flags.grid_dim);
      flag("--eps-v-percentile", cfg.eps_v_percentile, flags.eps_v_percentile);
      flag("--eps-free", cfg.eps_free, flags.eps_free);
      flag("--lambda1", cfg.lambda1, flags.lambda1);
      flag("--lambda2", cfg.lambda2, flags.lambda2);
      flag("--eps-d", cfg.eps_d, flags.eps_d);
      flag("--refine-iters", cfg.refine_iters, flags.refine_iters);
      flag("--method", cfg.method, flags.method);
      flag("--mask-scale", cfg.mask_scale, flags.mask_scale);
      flag("--threads", cfg.threads, flags.threads);
      for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      const RunReport report = run_pipeline(cfg);
      std::cout << format_comparison(comparison_rows({report}), TableFormat::markdown);
      return kOk;
    }

    if (*compare_cmd) {
      std::vector<RunConfig> cfgs;
      for (const auto& p : config_paths) cfgs.push_back(RunConfig::load(p));
      const std::string table = format_comparison(
          compare_methods(cfgs), table_format == "csv" ? TableFormat::csv : TableFormat::markdown);
      std::cout << table;
      if (!out_path.empty()) std::ofstream(out_path) << table;
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const ReconstructionFailed& e) {
    std::cerr << "reconstruction failed: " << e.what() << '\n';
    return kReconstruction;
  } catch (const NumericalAbort& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
