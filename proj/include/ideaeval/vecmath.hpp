#pragma once

#include <cmath>
#include <span>
#include <string>

#include "ideaeval/error.hpp"

namespace ideaeval::vecmath {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Cosine similarity; ValidationError on dimension mismatch or a zero vector.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ValidationError("embedding dimension mismatch: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  // sqrt(aa * bb) rather than |a||b| keeps cos(v, v) at exactly 1.
  const double aa = dot(a, a);
  const double bb = dot(b, b);
  if (aa == 0.0 || bb == 0.0) throw ValidationError("cosine similarity undefined for a zero vector");
  return dot(a, b) / std::sqrt(aa * bb);
}

}  // namespace ideaeval::vecmath
