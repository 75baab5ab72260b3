#pragma once

// Post-hoc analysis of runs: normalized scores, policy divergence from the
// behaviour policy, PCA of the parameter path, and SVG charts.

#include <filesystem>
#include <string>
#include <vector>

#include "gild/data.hpp"
#include "gild/nets.hpp"

namespace gild {

/// 100 * run / expert, rounded to 2 decimals. Throws std::invalid_argument
/// unless expert > 0.
double normalized_score(double run_max_return, double expert_max_return);

/// Mean over `states` rows of KL(learning || behavior) between the
/// pre-squash diagonal Gaussians. Both actors must be Gaussian.
double kl_to_behavior(const ActorModel& learning, const ActorModel& behavior, const Tensor& states);

struct PcaPath {
  std::vector<long> steps;
  Tensor coords;      // snapshots x 2; the second column is 0 for a 1-D path
  Tensor components;  // 2 x dim, orthonormal rows (second row 0 for a 1-D path)
  double explained[2] = {0.0, 0.0};  // fractions of total variance
  int rank = 2;
  std::vector<std::string> warnings;
};

inline constexpr double kPcaTolerance = 1e-10;
inline constexpr int kPcaMaxIterations = 10'000;

/// Top-2 principal directions of centred snapshots (rows of `snapshots`)
/// by power iteration with deflation. Needs at least 3 snapshots.
PcaPath pca_param_path(const Tensor& snapshots, const std::vector<long>& steps);

void write_pca_csv(const std::filesystem::path& path, const PcaPath& pca);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> band;  // optional +-band half-widths, same length as y
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

struct AxisRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// [min - 5% span, max + 5% span]. A zero span pads by 5% of |min|, or by
/// 1 when min is 0.
AxisRange padded_range(double min, double max);

/// Self-contained SVG line chart. Axis ranges are the data extent (including
/// bands) padded by 5% on each side. Throws std::invalid_argument when no
/// series has a point.
std::string render_svg(const ChartSpec& chart);

/// Writes learning_curve.svg, and losses.svg / kl.svg when train.csv or
/// kl.csv exist, for each run directory into `out_dir`. Returns the written
/// paths.
std::vector<std::filesystem::path> emit_plots(const std::vector<std::filesystem::path>& run_dirs,
                                              const std::filesystem::path& out_dir);

}  // namespace gild
