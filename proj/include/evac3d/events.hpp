#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include "evac3d/event.hpp"
#include "evac3d/geometry.hpp"

namespace evac3d {

/// Time-sorted events from one sensor.
struct EventStream {
  std::vector<Event> events;
  CameraIntrinsics sensor;

  /// Throws ValidationError on out-of-sensor pixels, bad polarity, or
  /// decreasing timestamps.
  void validate() const;
};

enum class EventFormat { csv, binary };

/// Picks the format from the extension: ".bin"/".evt" are binary, anything
/// else CSV.
EventFormat event_format_for(const std::filesystem::path& path);

/// CSV: header "x,y,t_us,p,label" (label optional, -1/0/1), commas or
/// whitespace as separators. Binary: 16-byte magic "EVAC3D-EVT-v1\0\0\0"
/// then packed little-endian records {u16 x, u16 y, i64 t_us, i8 p, i8 label}.
EventStream read_events(const std::filesystem::path& path, EventFormat format,
                        const CameraIntrinsics& sensor);
void write_events(const EventStream& stream, const std::filesystem::path& path,
                  EventFormat format);

/// Microsecond timestamp as stored on disk.
std::int64_t to_microseconds(double t);
double from_microseconds(std::int64_t t_us);

/// Dense (bins, height, width) histogram with triangular temporal kernel.
class EventVolume {
 public:
  EventVolume(int bins, int height, int width, double t0, double t1);

  int bins() const noexcept { return bins_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  double t0() const noexcept { return t0_; }
  double t1() const noexcept { return t1_; }

  double& at(int b, int y, int x) { return data_[index(b, y, x)]; }
  double at(int b, int y, int x) const { return data_[index(b, y, x)]; }
  const std::vector<double>& data() const noexcept { return data_; }
  double total() const;

 private:
  std::size_t index(int b, int y, int x) const {
    return (static_cast<std::size_t>(b) * height_ + y) * width_ + x;
  }

  int bins_, height_, width_;
  double t0_, t1_;
  std::vector<double> data_;
};

/// Accumulates p_i * k(t - t*_i) with k(a) = max(0, 1 - |a|) and
/// t*_i = (bins - 1)(t_i - t0)/(t1 - t0). Events in the closed window
/// [t0, t1] contribute; others are ignored.
EventVolume build_event_volume(const EventStream& stream, double t0, double t1, int bins);

}  // namespace evac3d
