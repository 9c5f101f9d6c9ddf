#include "evac3d/events.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"
#include "evac3d/errors.hpp"
#include "text_util.hpp"

namespace evac3d {
namespace {

constexpr char kEventMagic[16] = {'E', 'V', 'A', 'C', '3', 'D', '-', 'E',
                                  'V', 'T', '-', 'v', '1', '\0', '\0', '\0'};

std::optional<EventLabel> label_from_int(long v) {
  switch (v) {
    case -1: return EventLabel::unknown;
    case 0: return EventLabel::non_ace;
    case 1: return EventLabel::ace;
    default: return std::nullopt;
  }
}

void check_event(const Event& e, const CameraIntrinsics& sensor, std::size_t where) {
  if (!sensor.contains(e.x, e.y)) {
    throw ValidationError("event " + std::to_string(where) + ": pixel (" + std::to_string(e.x) +
                          "," + std::to_string(e.y) + ") outside sensor");
  }
  if (e.p != 1 && e.p != -1) {
    throw ValidationError("event " + std::to_string(where) + ": polarity must be +1 or -1");
  }
}

EventStream read_csv(const std::filesystem::path& path, const CameraIntrinsics& sensor) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open event file " + path.string());
  EventStream stream;
  stream.sensor = sensor;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = detail::split_fields(detail::strip_comment(line), true);
    if (fields.empty()) continue;
    if (first) {
      first = false;
      if (fields[0] == "x") continue;  // header
    }
    if (fields.size() != 4 && fields.size() != 5) {
      throw ParseError("expected 4 or 5 fields (x y t_us p [label])", lineno);
    }
    auto x = detail::parse_number<int>(fields[0]);
    auto y = detail::parse_number<int>(fields[1]);
    auto t = detail::parse_number<std::int64_t>(fields[2]);
    auto p = detail::parse_number<int>(fields[3]);
    if (!x || !y || !t || !p) throw ParseError("invalid integer field", lineno);
    Event e;
    e.x = *x;
    e.y = *y;
    e.t = from_microseconds(*t);
    if (*p != 1 && *p != -1) throw ParseError("polarity must be +1 or -1", lineno);
    e.p = static_cast<std::int8_t>(*p);
    if (fields.size() == 5) {
      auto l = detail::parse_number<long>(fields[4]);
      auto label = l ? label_from_int(*l) : std::nullopt;
      if (!label) throw ParseError("label must be -1, 0 or 1", lineno);
      e.label = *label;
    }
    if (!sensor.contains(e.x, e.y)) {
      throw ValidationError("line " + std::to_string(lineno) + ": pixel outside sensor");
    }
    stream.events.push_back(e);
  }
  stream.validate();
  return stream;
}

EventStream read_binary(const std::filesystem::path& path, const CameraIntrinsics& sensor) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open event file " + path.string());
  EventStream stream;
  stream.sensor = sensor;
  char magic[16];
  if (!in.read(magic, sizeof(magic))) {
    // An empty file is an empty stream.
    if (in.gcount() == 0) return stream;
    throw ParseError("truncated event file header", 0);
  }
  if (std::memcmp(magic, kEventMagic, sizeof(magic)) != 0) {
    throw ParseError("bad magic in event file", 0);
  }
  while (true) {
    std::uint16_t x = 0;
    if (!detail::read_le(in, x)) break;
    std::uint16_t y = 0;
    std::int64_t t = 0;
    std::int8_t p = 0;
    std::int8_t l = 0;
    if (!detail::read_le(in, y) || !detail::read_le(in, t) || !detail::read_le(in, p) ||
        !detail::read_le(in, l)) {
      throw ParseError("truncated event record " + std::to_string(stream.events.size()), 0);
    }
    auto label = label_from_int(l);
    if (!label) throw ParseError("bad label in record " + std::to_string(stream.events.size()), 0);
    Event e{x, y, from_microseconds(t), p, *label};
    check_event(e, sensor, stream.events.size());
    stream.events.push_back(e);
  }
  stream.validate();
  return stream;
}

}  // namespace

void EventStream::validate() const {
  for (std::size_t i = 0; i < events.size(); ++i) {
    check_event(events[i], sensor, i);
    if (i > 0 && events[i].t < events[i - 1].t) {
      throw ValidationError("event " + std::to_string(i) + ": timestamps must be non-decreasing");
    }
  }
}

EventFormat event_format_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".bin" || ext == ".evt") ? EventFormat::binary : EventFormat::csv;
}

std::int64_t to_microseconds(double t) { return std::llround(t * 1e6); }

double from_microseconds(std::int64_t t_us) { return static_cast<double>(t_us) / 1e6; }

EventStream read_events(const std::filesystem::path& path, EventFormat format,
                        const CameraIntrinsics& sensor) {
  return format == EventFormat::csv ? read_csv(path, sensor) : read_binary(path, sensor);
}

void write_events(const EventStream& stream, const std::filesystem::path& path,
                  EventFormat format) {
  if (format == EventFormat::csv) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write event file " + path.string());
    out << "x,y,t_us,p,label\n";
    for (const auto& e : stream.events) {
      out << e.x << ',' << e.y << ',' << to_microseconds(e.t) << ',' << int{e.p} << ','
          << int{static_cast<std::int8_t>(e.label)} << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write event file " + path.string());
  out.write(kEventMagic, sizeof(kEventMagic));
  for (const auto& e : stream.events) {
    if (e.x < 0 || e.y < 0 || e.x > 0xFFFF || e.y > 0xFFFF) {
      throw ValidationError("pixel coordinate does not fit the binary event format");
    }
    detail::write_le(out, static_cast<std::uint16_t>(e.x));
    detail::write_le(out, static_cast<std::uint16_t>(e.y));
    detail::write_le(out, to_microseconds(e.t));
    detail::write_le(out, e.p);
    detail::write_le(out, static_cast<std::int8_t>(e.label));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

EventVolume::EventVolume(int bins, int height, int width, double t0, double t1)
    : bins_(bins), height_(height), width_(width), t0_(t0), t1_(t1) {
  if (bins < 1) throw std::invalid_argument("event volume needs at least one temporal bin");
  if (height <= 0 || width <= 0) throw std::invalid_argument("event volume needs a positive size");
  if (!(t1 > t0)) throw std::invalid_argument("event volume window must satisfy t1 > t0");
  data_.assign(static_cast<std::size_t>(bins) * height * width, 0.0);
}

double EventVolume::total() const {
  double sum = 0.0;
  for (double v : data_) sum += v;
  return sum;
}

EventVolume build_event_volume(const EventStream& stream, double t0, double t1, int bins) {
  EventVolume vol(bins, stream.sensor.height, stream.sensor.width, t0, t1);
  const double scale = (bins - 1) / (t1 - t0);
  for (const auto& e : stream.events) {
    if (e.t < t0 || e.t > t1) continue;
    if (!stream.sensor.contains(e.x, e.y)) continue;
    const double ts = (e.t - t0) * scale;
    // Triangular kernel: mass splits between the two bins bracketing t*.
    const int b0 = std::min(static_cast<int>(std::floor(ts)), bins - 1);
    const double frac = ts - b0;
    vol.at(b0, e.y, e.x) += e.p * (1.0 - frac);
    if (frac > 0.0 && b0 + 1 < bins) vol.at(b0 + 1, e.y, e.x) += e.p * frac;
  }
  return vol;
}

}  // namespace evac3d
