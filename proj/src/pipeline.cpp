#include "evac3d/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "evac3d/ace.hpp"
#include "evac3d/carving.hpp"
#include "evac3d/errors.hpp"
#include "evac3d/events.hpp"
#include "evac3d/meshing.hpp"
#include "evac3d/metrics.hpp"
#include "text_util.hpp"

namespace evac3d {
namespace fs = std::filesystem;

namespace {

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const Json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing '") + key + "'");
  const Json& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw ConfigError(std::string("'") + key + "' must be a 3-vector");
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

template <typename T>
T value_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_value(std::string_view key, std::string_view text) {
  auto v = detail::parse_number<T>(text);
  if (!v) throw ConfigError("invalid value '" + std::string(text) + "' for " + std::string(key));
  return *v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("invalid boolean '" + std::string(text) + "' for " + std::string(key));
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

// ---- scene manifest -------------------------------------------------------

Json to_json(const CameraIntrinsics& intr) {
  return {{"fx", intr.fx}, {"fy", intr.fy}, {"cx", intr.cx},
          {"cy", intr.cy}, {"width", intr.width}, {"height", intr.height}};
}

CameraIntrinsics intrinsics_from_json(const Json& j) {
  CameraIntrinsics intr;
  intr.fx = value_or(j, "fx", intr.fx);
  intr.fy = value_or(j, "fy", intr.fy);
  intr.cx = value_or(j, "cx", intr.cx);
  intr.cy = value_or(j, "cy", intr.cy);
  intr.width = value_or(j, "width", intr.width);
  intr.height = value_or(j, "height", intr.height);
  try {
    intr.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return intr;
}

Json to_json(const OrbitSpec& spec) {
  return {{"kind", to_string(spec.kind)}, {"radius", spec.radius},       {"duration", spec.duration},
          {"pose_rate", spec.pose_rate},  {"look_at", vec_json(spec.look_at)}, {"seed", spec.seed},
          {"waypoints", spec.waypoints}};
}

OrbitSpec orbit_from_json(const Json& j) {
  OrbitSpec spec;
  spec.kind = orbit_kind_from_string(value_or<std::string>(j, "kind", to_string(spec.kind)));
  spec.radius = value_or(j, "radius", spec.radius);
  spec.duration = value_or(j, "duration", spec.duration);
  spec.pose_rate = value_or(j, "pose_rate", spec.pose_rate);
  if (j.contains("look_at")) spec.look_at = vec_from(j, "look_at");
  spec.seed = value_or(j, "seed", spec.seed);
  spec.waypoints = value_or(j, "waypoints", spec.waypoints);
  return spec;
}

Json to_json(const EmitterSpec& spec) {
  return {{"event_rate", spec.event_rate},
          {"jitter_px", spec.jitter_px},
          {"clutter_rate", spec.clutter_rate},
          {"seed", spec.seed},
          {"timing", spec.timing == EmissionTiming::poisson ? "poisson" : "uniform"}};
}

EmitterSpec emitter_from_json(const Json& j) {
  EmitterSpec spec;
  spec.event_rate = value_or(j, "event_rate", spec.event_rate);
  spec.jitter_px = value_or(j, "jitter_px", spec.jitter_px);
  spec.clutter_rate = value_or(j, "clutter_rate", spec.clutter_rate);
  spec.seed = value_or(j, "seed", spec.seed);
  const auto timing = value_or<std::string>(j, "timing", "poisson");
  if (timing == "poisson") {
    spec.timing = EmissionTiming::poisson;
  } else if (timing == "uniform") {
    spec.timing = EmissionTiming::uniform;
  } else {
    throw ConfigError("unknown emission timing '" + timing + "'");
  }
  return spec;
}

SceneSurface shape_from_json(const Json& j, const fs::path& base_dir) {
  try {
    const auto type = j.at("type").get<std::string>();
    if (type == "sphere") {
      return SceneSurface(Sphere{vec_from(j, "center"), j.at("radius").get<double>()});
    }
    if (type == "box") return SceneSurface(Box{vec_from(j, "center"), vec_from(j, "half_extents")});
    if (type == "cylinder") {
      Cylinder c;
      c.center = vec_from(j, "center");
      c.radius = j.at("radius").get<double>();
      c.half_height = j.at("half_height").get<double>();
      if (j.contains("axis")) c.axis = vec_from(j, "axis");
      return SceneSurface(c);
    }
    if (type == "mesh") {
      fs::path p = j.at("path").get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      return SceneSurface(read_mesh(p));
    }
    throw ConfigError("unknown shape type '" + type + "'");
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad shape description: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("bad shape description: ") + e.what());
  }
}

Scene read_scene(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scene manifest " + path.string());
  Json manifest;
  try {
    in >> manifest;
  } catch (const Json::exception& e) {
    throw ConfigError("scene manifest " + path.string() + ": " + e.what());
  }
  if (!manifest.contains("shape")) throw ConfigError("scene manifest lacks 'shape'");
  SceneSurface surface = shape_from_json(manifest.at("shape"), path.parent_path());
  const CameraIntrinsics intr =
      manifest.contains("intrinsics") ? intrinsics_from_json(manifest.at("intrinsics")) : CameraIntrinsics{};
  return Scene{std::move(surface), intr, std::move(manifest)};
}

void write_scene(const fs::path& path, const Json& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << manifest.dump(2) << '\n';
}

// ---- evaluation -----------------------------------------------------------

Evaluation evaluate_mesh(const TriMesh& mesh, const SceneSurface& truth, std::size_t n, std::size_t k,
                         std::uint64_t seed) {
  std::vector<Vec3> gt_points, gt_normals;
  truth.sample(n, seed, gt_points, gt_normals);
  const OrientedPointSet pred = sample_mesh(mesh, n, seed + 1);
  Evaluation ev;
  ev.n_samples = n;
  ev.k = k;
  ev.chamfer_mm = 1e3 * chamfer(gt_points, pred.points);
  ev.normal_cos = normal_consistency(estimate_normals(gt_points, k).set, estimate_normals(pred.points, k).set);
  return ev;
}

double occupancy_volume_error(const OccupancyGrid& occupancy, const SceneSurface& truth) {
  const GridSpec& g = occupancy.grid;
  std::size_t inside = 0, mismatched = 0;
  for (int i = 0; i < g.dims[0]; ++i) {
    for (int j = 0; j < g.dims[1]; ++j) {
      for (int k = 0; k < g.dims[2]; ++k) {
        const bool in = truth.contains(g.center(i, j, k));
        inside += in;
        mismatched += in != occupancy.at(i, j, k);
      }
    }
  }
  if (inside == 0) throw std::invalid_argument("the surface encloses no voxel center");
  return static_cast<double>(mismatched) / static_cast<double>(inside);
}

// ---- config ---------------------------------------------------------------

void RunConfig::set(std::string_view raw_key, std::string_view raw_value, const fs::path& base_dir) {
  std::string key(raw_key);
  std::replace(key.begin(), key.end(), '-', '_');
  std::string value = trim(raw_value);
  if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
  auto path_value = [&] {
    fs::path p = value;
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };

  if (key == "events") events = path_value();
  else if (key == "trajectory") trajectory = path_value();
  else if (key == "scene") scene = path_value();
  else if (key == "output_dir") output_dir = path_value();
  else if (key == "method") method = value;
  else if (key == "mask_scale") mask_scale = parse_value<int>(key, value);
  else if (key == "grid_dim") grid_dim = parse_value<int>(key, value);
  else if (key == "grid_margin") grid_margin = parse_value<double>(key, value);
  else if (key == "ace_tol_px") ace_tol_px = parse_value<double>(key, value);
  else if (key == "relabel") relabel = parse_bool(key, value);
  else if (key == "eps_v_percentile") eps_v_percentile = parse_value<double>(key, value);
  else if (key == "eps_free") eps_free = parse_value<std::uint32_t>(key, value);
  else if (key == "refine") refine = parse_bool(key, value);
  else if (key == "lambda1") lambda1 = parse_value<double>(key, value);
  else if (key == "lambda2") lambda2 = parse_value<double>(key, value);
  else if (key == "eps_d") eps_d = parse_value<double>(key, value);
  else if (key == "refine_iters") refine_iters = parse_value<int>(key, value);
  else if (key == "step_size") step_size = parse_value<double>(key, value);
  else if (key == "seed") seed = parse_value<std::uint64_t>(key, value);
  else if (key == "eval_samples") eval_samples = parse_value<std::size_t>(key, value);
  else if (key == "normal_k") normal_k = parse_value<std::size_t>(key, value);
  else if (key == "threads") threads = parse_value<int>(key, value);
  else throw ConfigError("unknown config key '" + std::string(raw_key) + "'");
}

RunConfig RunConfig::parse(std::string_view text, const fs::path& base_dir) {
  RunConfig cfg;
  std::size_t lineno = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = trim(detail::strip_comment(line));
    if (body.empty() || body.front() == '[') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      cfg.set(trim(std::string_view(body).substr(0, eq)), std::string_view(body).substr(eq + 1), base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse(text.str(), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

int RunConfig::mask_views() const {
  if (method == "evac3d") return 0;
  if (method.rfind("mask-", 0) == 0) {
    auto n = detail::parse_number<int>(std::string_view(method).substr(5));
    if (n && *n >= 2) return *n;
  }
  throw ConfigError("method must be 'evac3d' or 'mask-N' with N >= 2, got '" + method + "'");
}

void RunConfig::validate() const {
  const bool masks = mask_views() > 0;
  auto require_file = [](const fs::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string(what) + " path is not set");
    if (!fs::is_regular_file(p)) throw ConfigError(std::string(what) + " file not found: " + p.string());
  };
  if (!masks) require_file(events, "events");
  require_file(trajectory, "trajectory");
  require_file(scene, "scene");
  if (mask_scale < 1 || mask_scale > 16) throw ConfigError("mask_scale must lie in [1, 16]");
  if (grid_dim < 2 || grid_dim > 1024) throw ConfigError("grid_dim must lie in [2, 1024]");
  if (!(grid_margin >= 1.0)) throw ConfigError("grid_margin must be at least 1");
  if (!(ace_tol_px > 0.0)) throw ConfigError("ace_tol_px must be positive");
  if (!(eps_v_percentile >= 0.0 && eps_v_percentile <= 100.0)) {
    throw ConfigError("eps_v_percentile must lie in [0, 100]");
  }
  if (!(lambda1 > 0.0) || !(lambda2 > 0.0)) throw ConfigError("lambda1 and lambda2 must be positive");
  if (eps_d < 0.0 || step_size < 0.0) throw ConfigError("eps_d and step_size must be >= 0 (0 = default)");
  if (refine_iters < 0) throw ConfigError("refine_iters must be >= 0");
  if (normal_k < 3 || eval_samples <= normal_k) throw ConfigError("need eval_samples > normal_k >= 3");
  if (threads < 1) throw ConfigError("threads must be at least 1");

  std::error_code ec;
  fs::create_directories(output_dir, ec);
  const fs::path probe = output_dir / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw ConfigError("output directory is not writable: " + output_dir.string());
  }
  fs::remove(probe, ec);
}

Json RunConfig::to_json() const {
  return {{"events", events.generic_string()},
          {"trajectory", trajectory.generic_string()},
          {"scene", scene.generic_string()},
          {"output_dir", output_dir.generic_string()},
          {"method", method},
          {"mask_scale", mask_scale},
          {"grid_dim", grid_dim},
          {"grid_margin", grid_margin},
          {"ace_tol_px", ace_tol_px},
          {"relabel", relabel},
          {"eps_v_percentile", eps_v_percentile},
          {"eps_free", eps_free},
          {"refine", refine},
          {"lambda1", lambda1},
          {"lambda2", lambda2},
          {"eps_d", eps_d},
          {"refine_iters", refine_iters},
          {"step_size", step_size},
          {"seed", seed},
          {"eval_samples", eval_samples},
          {"normal_k", normal_k},
          {"threads", threads}};
}

// ---- runs -----------------------------------------------------------------

Json RunReport::to_json() const {
  Json stage_list = Json::array();
  for (const auto& s : stages) stage_list.push_back({{"stage", s.stage}, {"seconds", s.seconds}});
  return {{"method", method},          {"chamfer_mm", chamfer_mm}, {"normal_cos", normal_cos},
          {"ops", ops},                {"wall_time_s", wall_time_s}, {"stages", stage_list},
          {"config", config},          {"details", details}};
}

RunReport RunReport::from_json(const Json& j) {
  try {
    RunReport r;
    r.method = j.at("method").get<std::string>();
    r.chamfer_mm = j.at("chamfer_mm").get<double>();
    r.normal_cos = j.at("normal_cos").get<double>();
    r.ops = j.at("ops").get<std::uint64_t>();
    r.wall_time_s = value_or(j, "wall_time_s", 0.0);
    if (j.contains("stages")) {
      for (const auto& s : j.at("stages")) r.stages.push_back({s.at("stage"), s.at("seconds")});
    }
    r.config = value_or(j, "config", Json::object());
    r.details = value_or(j, "details", Json::object());
    return r;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed run report: ") + e.what());
  }
}

RunReport run_pipeline(const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  const int views = cfg.mask_views();

  RunReport report;
  report.method = cfg.method;
  report.config = cfg.to_json();
  report.details = Json::object();
  std::vector<fs::path> created;
  std::string stage;

  auto timed = [&](const char* name, auto&& body) {
    stage = name;
    const auto t = std::chrono::steady_clock::now();
    body();
    report.stages.push_back({name, seconds_since(t)});
  };
  auto cleanup = [&] {
    std::error_code ec;
    for (const auto& p : created) fs::remove(p, ec);
  };
  auto tagged = [&](const std::exception& e) { return "[" + stage + "] " + e.what(); };

  try {
    std::optional<Scene> scene;
    Trajectory traj;
    EventStream stream;
    timed("load", [&] {
      scene = read_scene(cfg.scene);
      traj = read_tum(cfg.trajectory);
      if (views == 0) {
        stream = read_events(cfg.events, event_format_for(cfg.events), scene->intrinsics);
        stream.validate();
      }
    });
    const SceneSurface& surface = scene->surface;
    const CameraIntrinsics& intr = scene->intrinsics;
    const GridSpec grid = GridSpec::around(surface.bounds(), cfg.grid_dim, cfg.grid_margin);
    CarveVolume volume(grid);
    std::optional<OccupancyGrid> occupancy;
    SurfacePointSet surface_points;
    TriMesh mesh;
    report.details["voxel_size"] = grid.voxel_size;

    if (views == 0) {
      if (cfg.relabel) {
        timed("label", [&] { stream = label_events(stream, traj, intr, surface, cfg.ace_tol_px, cfg.threads); });
      } else if (std::any_of(stream.events.begin(), stream.events.end(),
                             [](const Event& e) { return e.label == EventLabel::unknown; })) {
        throw ConfigError("events carry unknown labels; enable relabel");
      }
      timed("carve", [&] {
        const CarveStats stats = carve_event_stream(volume, stream, traj, intr, true, cfg.threads);
        report.details["events_total"] = stream.events.size();
        report.details["events_carved"] = stats.carved;
        report.details["events_skipped_label"] = stats.skipped_label;
        report.details["events_skipped_out_of_range"] = stats.skipped_out_of_range;
      });
      timed("extract", [&] {
        const std::uint32_t eps_v = nonzero_count_percentile(volume, cfg.eps_v_percentile);
        surface_points = extract_high_confidence(volume, eps_v);
        occupancy = extract_occupancy(volume, {cfg.eps_free, OccupancyOptions{}.min_component_fraction});
        report.details["eps_v"] = eps_v;
        report.details["surface_points"] = surface_points.points.size();
      });
    } else {
      std::vector<MaskView> masks;
      const CameraIntrinsics mask_intr = intr.upsampled(cfg.mask_scale);
      timed("render", [&] { masks = render_masks(surface, traj, mask_intr, views); });
      timed("carve", [&] {
        Json rays = Json::array();
        for (const auto& view : masks) rays.push_back(carve_mask(volume, view.mask, view.pose, mask_intr));
        report.details["rays_per_view"] = rays;
      });
      timed("extract", [&] {
        occupancy = silhouette_occupancy(grid, masks, mask_intr);
        if (occupancy->count() == 0) throw ReconstructionFailed("the silhouettes share no voxel");
      });
    }
    report.details["occupied_voxels"] = occupancy->count();

    timed("mesh", [&] { mesh = marching_cubes(*occupancy); });
    if (views == 0 && cfg.refine && cfg.refine_iters > 0) {
      timed("refine", [&] {
        RefineConfig rc = RefineConfig::defaults_for(grid.voxel_size, surface.diameter());
        rc.lambda1 = cfg.lambda1;
        rc.lambda2 = cfg.lambda2;
        rc.iters = cfg.refine_iters;
        rc.threads = cfg.threads;
        if (cfg.eps_d > 0.0) rc.eps_d = cfg.eps_d;
        if (cfg.step_size > 0.0) rc.step_size = cfg.step_size;
        const RefineResult refined = refine_mesh(mesh, surface_points, rc);
        report.details["loss_initial"] = refined.loss_trace.front();
        report.details["loss_final"] = refined.loss_trace.back();
        report.details["eps_d"] = rc.eps_d;
        report.details["step_size"] = rc.step_size;
        mesh = refined.mesh;
      });
    }
    report.details["mesh_vertices"] = mesh.vertices.size();
    report.details["mesh_faces"] = mesh.faces.size();
    report.ops = volume.ops;

    timed("write", [&] {
      created.push_back(cfg.output_dir / kMeshFile);
      write_mesh(mesh, created.back());
      created.push_back(cfg.output_dir / kVolumeFile);
      write_volume(volume, created.back());
    });
    timed("evaluate", [&] {
      const Evaluation ev = evaluate_mesh(mesh, surface, cfg.eval_samples, cfg.normal_k, cfg.seed);
      report.chamfer_mm = ev.chamfer_mm;
      report.normal_cos = ev.normal_cos;
    });
    report.wall_time_s = seconds_since(start);
    stage = "report";
    created.push_back(cfg.output_dir / kReportFile);
    std::ofstream out(created.back());
    out << report.to_json().dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing " + created.back().string());
  } catch (const ConfigError& e) {
    cleanup();
    throw ConfigError(tagged(e));
  } catch (const ReconstructionFailed& e) {
    cleanup();
    throw ReconstructionFailed(tagged(e));
  } catch (const NumericalAbort& e) {
    cleanup();
    throw NumericalAbort(tagged(e));
  } catch (const std::exception& e) {
    cleanup();
    throw std::runtime_error(tagged(e));
  }
  return report;
}

std::vector<ComparisonRow> comparison_rows(const std::vector<RunReport>& reports) {
  std::vector<ComparisonRow> rows;
  for (const auto& r : reports) rows.push_back({r.method, r.ops, r.chamfer_mm, r.normal_cos});
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.ops < b.ops; });
  return rows;
}

std::vector<ComparisonRow> compare_methods(const std::vector<RunConfig>& cfgs) {
  if (cfgs.empty()) throw ConfigError("compare needs at least one config");
  const fs::path scene = fs::weakly_canonical(cfgs.front().scene);
  for (const auto& cfg : cfgs) {
    if (fs::weakly_canonical(cfg.scene) != scene) {
      throw ConfigError("configs name different scenes: " + scene.string() + " vs " + cfg.scene.string());
    }
  }
  std::vector<RunReport> reports;
  for (const auto& cfg : cfgs) reports.push_back(run_pipeline(cfg));
  return comparison_rows(reports);
}

std::string format_comparison(const std::vector<ComparisonRow>& rows, TableFormat format) {
  std::ostringstream out;
  out << std::fixed;
  if (format == TableFormat::csv) {
    out << "method,ops,chamfer_mm,normal_cos\n";
    for (const auto& r : rows) {
      out << r.method << ',' << r.ops << ',' << std::setprecision(4) << r.chamfer_mm << ','
          << std::setprecision(4) << r.normal_cos << '\n';
    }
  } else {
    out << "| method | ops | chamfer_mm | normal_cos |\n|---|---:|---:|---:|\n";
    for (const auto& r : rows) {
      out << "| " << r.method << " | " << r.ops << " | " << std::setprecision(4) << r.chamfer_mm << " | "
          << std::setprecision(4) << r.normal_cos << " |\n";
    }
  }
  return out.str();
}

}  // namespace evac3d
