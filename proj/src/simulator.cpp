#include "evac3d/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "evac3d/ace.hpp"
#include "evac3d/errors.hpp"
#include "text_util.hpp"

namespace evac3d {
namespace {

constexpr double kPolarityDelta = 1e-3;  // seconds
constexpr int kRasterAttempts = 16;
constexpr int kPieceSamples = 16;

Vec3 uniform_direction(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  while (true) {
    const Vec3 d(gauss(rng), gauss(rng), gauss(rng));
    const double n = d.norm();
    if (n > 1e-9) return d / n;
  }
}

Vec3 catmull_rom(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3, double u) {
  const double u2 = u * u, u3 = u2 * u;
  return 0.5 * (2.0 * p1 + (p2 - p0) * u + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2 +
                (3.0 * p1 - p0 - 3.0 * p2 + p3) * u3);
}

/// Unit direction from look_at at normalized time s in [0, 1).
class OrbitPath {
 public:
  explicit OrbitPath(const OrbitSpec& spec) : kind_(spec.kind) {
    if (kind_ != OrbitKind::random_sphere) return;
    std::mt19937_64 rng(spec.seed);
    waypoints_.push_back(uniform_direction(rng));
    while (static_cast<int>(waypoints_.size()) < spec.waypoints) {
      const Vec3 d = uniform_direction(rng);
      // Keep consecutive waypoints within 120 degrees so the spline never
      // passes near the center.
      if (d.dot(waypoints_.back()) >= -0.5) waypoints_.push_back(d);
    }
  }

  Vec3 direction(double s) const {
    const double two_pi = 2.0 * std::numbers::pi;
    switch (kind_) {
      case OrbitKind::circular:
        return Vec3(std::cos(two_pi * s), std::sin(two_pi * s), 0.0);
      case OrbitKind::octahedral: {
        static const Vec3 stops[7] = {Vec3::UnitX(),  Vec3::UnitY(),  Vec3::UnitZ(), -Vec3::UnitX(),
                                      -Vec3::UnitY(), -Vec3::UnitZ(), Vec3::UnitX()};
        const double x = std::clamp(s, 0.0, 1.0) * 6.0;
        const int i = std::min(5, static_cast<int>(x));
        const double a = (x - i) * std::numbers::pi / 2.0;
        return std::cos(a) * stops[i] + std::sin(a) * stops[i + 1];
      }
      case OrbitKind::random_sphere: {
        const int segments = static_cast<int>(waypoints_.size()) - 1;
        const double x = std::clamp(s, 0.0, 1.0) * segments;
        const int i = std::min(segments - 1, static_cast<int>(x));
        auto w = [&](int k) { return waypoints_[std::clamp(k, 0, segments)]; };
        const Vec3 p = catmull_rom(w(i - 1), w(i), w(i + 1), w(i + 2), x - i);
        const double n = p.norm();
        return n > 1e-9 ? Vec3(p / n) : w(i);
      }
    }
    throw std::logic_error("unknown orbit kind");
  }

 private:
  OrbitKind kind_;
  std::vector<Vec3> waypoints_;
};

std::vector<double> emission_times(double rate, double t0, double t1, EmissionTiming timing,
                                   std::mt19937_64& rng) {
  std::vector<double> times;
  if (rate <= 0.0 || !(t1 > t0)) return times;
  if (timing == EmissionTiming::uniform) {
    const auto n = static_cast<std::size_t>(std::floor((t1 - t0) * rate));
    times.reserve(n);
    for (std::size_t k = 0; k < n; ++k) times.push_back(t0 + (k + 0.5) / rate);
  } else {
    std::exponential_distribution<double> gap(rate);
    for (double t = t0 + gap(rng); t < t1; t += gap(rng)) times.push_back(t);
  }
  for (auto& t : times) t = from_microseconds(to_microseconds(t));
  std::erase_if(times, [&](double t) { return t < t0 || t > t1; });
  return times;
}

std::string list_times(const std::vector<double>& times) {
  std::ostringstream out;
  const std::size_t shown = std::min<std::size_t>(times.size(), 10);
  for (std::size_t i = 0; i < shown; ++i) out << (i ? ", " : "") << detail::format_double(times[i]);
  if (times.size() > shown) out << ", ... (" << times.size() << " total)";
  return out.str();
}

bool in_image(const Vec2& u, const CameraIntrinsics& intr) {
  return u.x() >= -0.5 && u.y() >= -0.5 && u.x() < intr.width - 0.5 && u.y() < intr.height - 0.5;
}

struct PieceTable {
  std::vector<double> cumulative;  // projected length prefix sums
  bool in_frame = true;
};

PieceTable measure_pieces(const ContourGenerator& gen, const CameraIntrinsics& intr) {
  PieceTable table;
  double total = 0.0;
  for (const auto& piece : gen.pieces) {
    double len = 0.0;
    Vec2 prev;
    for (int k = 0; k <= kPieceSamples; ++k) {
      const Vec3 c = gen.pose.to_camera(gen.point(piece, static_cast<double>(k) / kPieceSamples));
      if (c.z() <= 0.0) {
        table.in_frame = false;
        break;
      }
      const Vec2 u = project(c, intr);
      if (!in_image(u, intr)) table.in_frame = false;
      if (k > 0) len += (u - prev).norm();
      prev = u;
    }
    total += len;
    table.cumulative.push_back(total);
  }
  if (!(total > 0.0)) table.in_frame = false;
  return table;
}

}  // namespace

std::string to_string(OrbitKind kind) {
  switch (kind) {
    case OrbitKind::circular:
      return "circular";
    case OrbitKind::octahedral:
      return "octahedral";
    case OrbitKind::random_sphere:
      return "random_sphere";
  }
  return "unknown";
}

OrbitKind orbit_kind_from_string(const std::string& name) {
  if (name == "circular") return OrbitKind::circular;
  if (name == "octahedral") return OrbitKind::octahedral;
  if (name == "random_sphere") return OrbitKind::random_sphere;
  throw ConfigError("unknown trajectory kind '" + name + "'");
}

void OrbitSpec::validate(double scene_radius) const {
  if (!(radius > 0.0) || !std::isfinite(radius)) throw ConfigError("orbit radius must be positive");
  if (!(radius > scene_radius)) throw ConfigError("orbit radius must exceed the scene radius");
  if (!(duration > 0.0) || !std::isfinite(duration)) throw ConfigError("orbit duration must be positive");
  if (!(pose_rate >= 100.0) || !std::isfinite(pose_rate)) throw ConfigError("pose rate must be at least 100 Hz");
  if (!look_at.allFinite()) throw ConfigError("look_at must be finite");
  if (kind == OrbitKind::random_sphere && waypoints < 2) throw ConfigError("need at least 2 waypoints");
  if (std::llround(duration * pose_rate) < 2) throw ConfigError("orbit needs at least 2 pose samples");
}

Trajectory make_trajectory(const OrbitSpec& spec) {
  spec.validate();
  const OrbitPath path(spec);
  const auto n = static_cast<std::size_t>(std::llround(spec.duration * spec.pose_rate));
  std::vector<TimedPose> samples;
  samples.reserve(n);
  Vec3 up = Vec3::UnitZ();
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / spec.pose_rate;
    const Vec3 dir = path.direction(t / spec.duration);
    if (k == 0 && std::abs(dir.z()) > 0.999) up = Vec3::UnitY();
    const Pose pose = Pose::look_at(spec.look_at + spec.radius * dir, spec.look_at, up);
    up = pose.rotation * -Vec3::UnitY();
    samples.push_back({t, pose});
  }
  return Trajectory(std::move(samples));
}

void EmitterSpec::validate() const {
  if (!(event_rate >= 0.0) || !std::isfinite(event_rate)) throw ConfigError("event_rate must be >= 0");
  if (!(clutter_rate >= 0.0) || !std::isfinite(clutter_rate)) throw ConfigError("clutter_rate must be >= 0");
  if (!(jitter_px >= 0.0) || !std::isfinite(jitter_px)) throw ConfigError("jitter_px must be >= 0");
}

EventStream emit_contour_events(const SceneSurface& surface, const Trajectory& traj,
                                const CameraIntrinsics& intr, const EmitterSpec& spec) {
  spec.validate();
  intr.validate();
  if (traj.size() < 2) throw std::invalid_argument("emit_contour_events: trajectory needs 2 samples");
  const double t0 = traj.start_time(), t1 = traj.end_time();
  EventStream out;
  out.sensor = intr;

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> offending;

  for (double t : emission_times(spec.event_rate, t0, t1, spec.timing, rng)) {
    const Pose pose = interpolate_pose(traj, t);
    const ContourGenerator gen = contour_generator(surface, pose);
    const PieceTable table = measure_pieces(gen, intr);
    if (!table.in_frame) {
      offending.push_back(t);
      continue;
    }
    auto image_point = [&](const ContourPiece& piece, double s) -> Vec2 {
      return project(pose.to_camera(gen.point(piece, s)), intr);
    };

    Vec2 exact = Vec2::Zero();
    Vec2 pixel = Vec2::Constant(-1.0);
    for (int attempt = 0; attempt < kRasterAttempts; ++attempt) {
      const double r = uni(rng) * table.cumulative.back();
      const auto idx = std::min<std::size_t>(
          std::upper_bound(table.cumulative.begin(), table.cumulative.end(), r) - table.cumulative.begin(),
          gen.pieces.size() - 1);
      const ContourPiece& piece = gen.pieces[idx];
      const double s = uni(rng);
      const Vec2 u = image_point(piece, s);
      const Vec2 noisy = u + spec.jitter_px * Vec2(gauss(rng), gauss(rng));
      const Vec2 rounded(std::round(noisy.x()), std::round(noisy.y()));
      if (!intr.contains(static_cast<int>(rounded.x()), static_cast<int>(rounded.y())) ||
          !in_image(noisy, intr)) {
        continue;
      }
      exact = u;
      pixel = rounded;
      // Keep the rounding offset across the contour within half a pixel.
      const double h = 1e-4;
      const Vec2 tangent = image_point(piece, std::min(1.0, s + h)) - image_point(piece, std::max(0.0, s - h));
      if (tangent.norm() < 1e-12) break;
      const Vec2 normal = Vec2(-tangent.y(), tangent.x()).normalized();
      if (std::abs((rounded - noisy).dot(normal)) <= 0.5) break;
    }
    if (pixel.x() < 0.0) continue;

    // Polarity from whether the sub-pixel ray enters or leaves the object.
    auto hits = [&](double ts) {
      return surface.intersect(pixel_ray(exact, interpolate_pose(traj, ts), intr)).has_value();
    };
    const bool before = hits(std::max(t0, t - kPolarityDelta));
    const bool after = hits(std::min(t1, t + kPolarityDelta));
    const bool random_sign = coin(rng);
    const std::int8_t polarity = before != after ? (after ? 1 : -1) : (random_sign ? 1 : -1);

    out.events.push_back(
        {static_cast<int>(pixel.x()), static_cast<int>(pixel.y()), t, polarity, EventLabel::ace});
  }
  if (!offending.empty()) {
    throw ValidationError("surface leaves the field of view at t = " + list_times(offending));
  }

  std::mt19937_64 clutter_rng(spec.seed ^ 0x9E3779B97F4A7C15ULL);
  std::uniform_int_distribution<int> px(0, intr.width - 1), py(0, intr.height - 1);
  for (double t : emission_times(spec.clutter_rate, t0, t1, spec.timing, clutter_rng)) {
    const int x = px(clutter_rng), y = py(clutter_rng);
    const std::int8_t polarity = coin(clutter_rng) ? 1 : -1;
    out.events.push_back({x, y, t, polarity, EventLabel::non_ace});
  }
  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return out;
}

std::vector<MaskView> render_masks(const SceneSurface& surface, const Trajectory& traj,
                                   const CameraIntrinsics& intr, int n_views) {
  if (n_views < 2) throw std::invalid_argument("render_masks: need at least 2 views");
  intr.validate();
  if (traj.empty()) throw std::invalid_argument("render_masks: empty trajectory");
  const double t0 = traj.start_time(), t1 = traj.end_time();
  std::vector<MaskView> views;
  std::vector<double> offending;
  for (int k = 0; k < n_views; ++k) {
    MaskView view;
    view.t = t0 + k * (t1 - t0) / n_views;
    view.pose = interpolate_pose(traj, view.t);
    if (surface.contains(view.pose.translation)) {
      throw std::domain_error("render_masks: camera inside the surface at t = " + detail::format_double(view.t));
    }
    view.mask = Mask(intr.width, intr.height);
    bool touches_border = false;
    for (int y = 0; y < intr.height; ++y) {
      for (int x = 0; x < intr.width; ++x) {
        if (!surface.intersect(pixel_ray(Vec2(x, y), view.pose, intr))) continue;
        view.mask.set(x, y, true);
        if (x == 0 || y == 0 || x == intr.width - 1 || y == intr.height - 1) touches_border = true;
      }
    }
    if (touches_border) offending.push_back(view.t);
    views.push_back(std::move(view));
  }
  if (!offending.empty()) {
    throw ValidationError("silhouette touches the image border at t = " + list_times(offending));
  }
  return views;
}

void write_pgm(const Mask& mask, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  for (auto p : mask.pixels) out.put(p ? static_cast<char>(255) : '\0');
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Mask read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  auto token = [&]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(c);
    }
    return tok;
  };
  if (token() != "P5") throw ParseError("not a binary PGM file", 0);
  const auto w = detail::parse_number<int>(token());
  const auto h = detail::parse_number<int>(token());
  const auto maxval = detail::parse_number<int>(token());
  if (!w || !h || !maxval || *w <= 0 || *h <= 0 || *maxval <= 0 || *maxval > 255) {
    throw ParseError("bad PGM header", 0);
  }
  Mask mask(*w, *h);
  std::vector<char> raw(mask.pixels.size());
  if (!in.read(raw.data(), static_cast<std::streamsize>(raw.size()))) throw ParseError("truncated PGM data", 0);
  for (std::size_t i = 0; i < raw.size(); ++i) mask.pixels[i] = raw[i] != 0 ? 1 : 0;
  return mask;
}

}  // namespace evac3d
