#pragma once

// Central finite differences and tolerance helpers shared by the unit tests
// and the acceptance suite. No test-framework dependency.

#include <algorithm>
#include <cmath>
#include <functional>

#include "gild/params.hpp"
#include "gild/rng.hpp"

namespace oracle {

inline constexpr double kStep = 1e-5;

/// Central difference of f in the (i, j) scalar of `at`.
inline double fd_entry(const std::function<double(const gild::ParamSet&)>& f, const gild::ParamSet& at,
                       std::size_t i, std::size_t j, double h) {
  gild::ParamSet p = at;
  p[i][j] = at[i][j] + h;
  const double up = f(p);
  p[i][j] = at[i][j] - h;
  const double down = f(p);
  return (up - down) / (2.0 * h);
}

/// Central difference of f over every scalar of `at`.
inline gild::ParamSet fd_gradient(const std::function<double(const gild::ParamSet&)>& f, const gild::ParamSet& at,
                                  double h = kStep) {
  gild::ParamSet g = at.zeros_like();
  gild::ParamSet p = at;
  for (std::size_t i = 0; i < at.count(); ++i) {
    for (std::size_t j = 0; j < at[i].size(); ++j) {
      const double x = at[i][j];
      p[i][j] = x + h;
      const double up = f(p);
      p[i][j] = x - h;
      const double down = f(p);
      p[i][j] = x;
      g[i][j] = (up - down) / (2.0 * h);
    }
  }
  return g;
}

/// Largest relative error over entries whose absolute difference exceeds
/// `floor`; entries within the floor count as exact.
inline double max_rel_error(const gild::ParamSet& got, const gild::ParamSet& ref, double floor = 1e-9) {
  double worst = 0.0;
  for (std::size_t i = 0; i < ref.count(); ++i) {
    for (std::size_t j = 0; j < ref[i].size(); ++j) {
      const double diff = std::abs(got[i][j] - ref[i][j]);
      if (diff <= floor) continue;
      worst = std::max(worst, diff / std::max(std::abs(ref[i][j]), std::abs(got[i][j])));
    }
  }
  return worst;
}

/// Largest relative error over entries with magnitude at least `min_scale`.
inline double worst_relative(const gild::ParamSet& got, const gild::ParamSet& ref, double min_scale) {
  double worst = 0.0;
  for (std::size_t i = 0; i < ref.count(); ++i) {
    for (std::size_t j = 0; j < ref[i].size(); ++j) {
      const double scale = std::max(std::abs(ref[i][j]), std::abs(got[i][j]));
      if (scale >= min_scale) worst = std::max(worst, std::abs(got[i][j] - ref[i][j]) / scale);
    }
  }
  return worst;
}

/// Entries whose absolute difference is within `floor` pass outright; the
/// rest must agree to `rel` relative error. Returns the flat index of the
/// first failing entry, or -1.
inline long first_mismatch(const gild::ParamSet& got, const gild::ParamSet& ref, double rel, double floor = 1e-9) {
  long flat = 0;
  for (std::size_t i = 0; i < ref.count(); ++i) {
    for (std::size_t j = 0; j < ref[i].size(); ++j, ++flat) {
      const double diff = std::abs(got[i][j] - ref[i][j]);
      const double scale = std::max(std::abs(ref[i][j]), std::abs(got[i][j]));
      if (diff <= floor) continue;
      if (diff > rel * scale) return flat;
    }
  }
  return -1;
}

inline gild::Tensor random_tensor(std::size_t r, std::size_t c, gild::RngStream& rng, double lo = -1.0,
                                  double hi = 1.0) {
  gild::Tensor t(r, c);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace oracle
