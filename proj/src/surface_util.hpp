#pragma once

#include <cmath>
#include <utility>

#include "evac3d/geometry.hpp"

namespace evac3d {

/// Two unit vectors completing `axis` (unit) to a right-handed frame.
inline std::pair<Vec3, Vec3> orthonormal_basis(const Vec3& axis) {
  const Vec3 helper = std::abs(axis.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 u = axis.cross(helper).normalized();
  const Vec3 v = axis.cross(u);
  return {u, v};
}

}  // namespace evac3d
