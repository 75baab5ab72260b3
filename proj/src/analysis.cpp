#include "gild/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gild/rng.hpp"

namespace gild {

namespace fs = std::filesystem;

double normalized_score(double run_max_return, double expert_max_return) {
  if (!(expert_max_return > 0.0)) throw std::invalid_argument("normalized_score: expert return must be positive");
  return std::round(100.0 * run_max_return / expert_max_return * 100.0) / 100.0;
}

double kl_to_behavior(const ActorModel& learning, const ActorModel& behavior, const Tensor& states) {
  if (learning.kind != PolicyKind::Gaussian || behavior.kind != PolicyKind::Gaussian) {
    throw std::invalid_argument("kl_to_behavior: both actors must be Gaussian (SAC family)");
  }
  if (learning.action_dim() != behavior.action_dim() || states.cols() != learning.state_dim() ||
      states.cols() != behavior.state_dim()) {
    throw ShapeError("kl_to_behavior: actor and state dimensions differ");
  }
  if (states.rows() == 0) throw std::invalid_argument("kl_to_behavior: no states");
  Tape tape;
  const Var s = tape.constant(states);
  const auto p = gaussian_heads(learning, learning.params.as_constants(tape), s);
  const auto q = gaussian_heads(behavior, behavior.params.as_constants(tape), s);
  const Tensor& mu1 = p.mean.value();
  const Tensor& ls1 = p.log_std.value();
  const Tensor& mu2 = q.mean.value();
  const Tensor& ls2 = q.log_std.value();
  double total = 0.0;
  for (std::size_t r = 0; r < states.rows(); ++r) {
    for (std::size_t c = 0; c < mu1.cols(); ++c) {
      const double d = mu1(r, c) - mu2(r, c);
      total += ls2(r, c) - ls1(r, c) + (std::exp(2.0 * ls1(r, c)) + d * d) / (2.0 * std::exp(2.0 * ls2(r, c))) - 0.5;
    }
  }
  return total / static_cast<double>(states.rows());
}

// ---------------------------------------------------------------------------
// PCA

namespace {

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b) { return std::inner_product(a.begin(), a.end(), b.begin(), 0.0); }

void normalize(Vec& v) {
  const double n = std::sqrt(dot(v, v));
  for (auto& x : v) x /= n;
}

// Covariance-vector product with previously found components deflated.
Vec apply_cov(const Tensor& x, const Vec& v, const std::vector<Vec>& found, const Vec& eigvals) {
  const std::size_t n = x.rows(), d = x.cols();
  Vec out(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double proj = 0.0;
    for (std::size_t c = 0; c < d; ++c) proj += x(r, c) * v[c];
    for (std::size_t c = 0; c < d; ++c) out[c] += proj * x(r, c);
  }
  for (auto& o : out) o /= static_cast<double>(n - 1);
  for (std::size_t k = 0; k < found.size(); ++k) {
    const double w = eigvals[k] * dot(found[k], v);
    for (std::size_t c = 0; c < d; ++c) out[c] -= w * found[k][c];
  }
  return out;
}

void canonical_sign(Vec& v) {
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  }
  if (v[arg] < 0.0) {
    for (auto& x : v) x = -x;
  }
}

struct Eigen1 {
  Vec vec;
  double val = 0.0;
  bool converged = false;
};

Eigen1 power_iteration(const Tensor& x, const std::vector<Vec>& found, const Vec& eigvals, std::uint64_t seed) {
  RngStream rng(seed);
  Vec v(x.cols());
  for (auto& e : v) e = rng.normal();
  // Start orthogonal to the deflated directions.
  for (const auto& f : found) {
    const double w = dot(f, v);
    for (std::size_t c = 0; c < v.size(); ++c) v[c] -= w * f[c];
  }
  normalize(v);
  Eigen1 out;
  for (int it = 0; it < kPcaMaxIterations; ++it) {
    Vec w = apply_cov(x, v, found, eigvals);
    const double norm = std::sqrt(dot(w, w));
    if (norm == 0.0) {
      out.vec = v;
      out.val = 0.0;
      out.converged = true;
      return out;
    }
    for (auto& e : w) e /= norm;
    if (dot(w, v) < 0.0) {
      for (auto& e : w) e = -e;
    }
    double diff = 0.0;
    for (std::size_t c = 0; c < v.size(); ++c) diff += (w[c] - v[c]) * (w[c] - v[c]);
    v = std::move(w);
    if (std::sqrt(diff) < kPcaTolerance) {
      out.converged = true;
      break;
    }
  }
  out.val = dot(v, apply_cov(x, v, found, eigvals));
  out.vec = std::move(v);
  return out;
}

}  // namespace

PcaPath pca_param_path(const Tensor& snapshots, const std::vector<long>& steps) {
  const std::size_t n = snapshots.rows(), d = snapshots.cols();
  if (n < 3) throw std::invalid_argument("pca_param_path: needs at least 3 snapshots");
  if (steps.size() != n) throw ShapeError("pca_param_path: one step label per snapshot required");
  if (d == 0) throw ShapeError("pca_param_path: empty parameter vectors");

  Tensor x = snapshots;
  for (std::size_t c = 0; c < d; ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < n; ++r) m += x(r, c);
    m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) x(r, c) -= m;
  }
  double trace = 0.0;
  for (double v : x.data()) trace += v * v;
  trace /= static_cast<double>(n - 1);

  PcaPath out;
  out.steps = steps;
  out.coords = Tensor(n, 2);
  out.components = Tensor(2, d);
  std::vector<Vec> found;
  Vec eigvals;
  const double zero_tol = 1e-12 * std::max(trace, std::numeric_limits<double>::min());
  for (int k = 0; k < 2; ++k) {
    Eigen1 e = power_iteration(x, found, eigvals, 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(k));
    if (trace == 0.0 || e.val <= zero_tol) {
      out.rank = k;
      out.warnings.push_back("covariance has fewer than 2 nonzero eigenvalues; path is " +
                             std::string(k == 0 ? "degenerate" : "1-D"));
      break;
    }
    if (!e.converged) {
      out.warnings.push_back("power iteration for component " + std::to_string(k + 1) + " hit the iteration limit");
    }
    canonical_sign(e.vec);
    found.push_back(e.vec);
    eigvals.push_back(e.val);
    out.explained[k] = e.val / trace;
    for (std::size_t c = 0; c < d; ++c) out.components(k, c) = e.vec[c];
  }
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < found.size(); ++k) {
      double p = 0.0;
      for (std::size_t c = 0; c < d; ++c) p += x(r, c) * found[k][c];
      out.coords(r, k) = p;
    }
  }
  return out;
}

void write_pca_csv(const fs::path& path, const PcaPath& pca) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "snapshot_step,pc1,pc2\n";
  for (std::size_t r = 0; r < pca.steps.size(); ++r) {
    out << pca.steps[r] << "," << format_double(pca.coords(r, 0)) << "," << format_double(pca.coords(r, 1)) << "\n";
  }
}

// ---------------------------------------------------------------------------
// SVG

AxisRange padded_range(double min, double max) {
  if (min > max) std::swap(min, max);
  double pad = 0.05 * (max - min);
  if (pad == 0.0) pad = min == 0.0 ? 1.0 : 0.05 * std::abs(min);
  return {min - pad, max + pad};
}

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
                                    "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const ChartSpec& chart) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : chart.series) {
    if (s.x.size() != s.y.size() || (!s.band.empty() && s.band.size() != s.y.size())) {
      throw ShapeError("render_svg: series '" + s.label + "' has mismatched lengths");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double b = s.band.empty() ? 0.0 : std::abs(s.band[i]);
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i] - b);
      ymax = std::max(ymax, s.y[i] + b);
    }
  }
  if (!(xmin <= xmax)) throw std::invalid_argument("render_svg: no data points");
  const AxisRange xr = padded_range(xmin, xmax);
  const AxisRange yr = padded_range(ymin, ymax);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  const auto py = [&](double y) { return kTop + (yr.hi - y) / (yr.hi - yr.lo) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(chart.title) << "</text>\n";
  o << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    const double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    o << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(kTop + ph + 16) << "\" text-anchor=\"middle\">" << tick(fx)
      << "</text>\n";
    o << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py(fy) + 4) << "\" text-anchor=\"end\">" << tick(fy)
      << "</text>\n";
    o << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(py(fy)) << "\" x2=\"" << num(kLeft + pw) << "\" y2=\""
      << num(py(fy)) << "\" stroke=\"#ddd\"/>\n";
  }
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 10) << "\" text-anchor=\"middle\">"
    << escape(chart.x_label) << "</text>\n";
  o << "<text transform=\"translate(16," << num(kTop + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(chart.y_label) << "</text>\n";

  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& s = chart.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    if (s.x.empty()) continue;
    if (!s.band.empty() && s.x.size() > 1) {
      o << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) o << num(px(s.x[i])) << "," << num(py(s.y[i] + s.band[i])) << " ";
      for (std::size_t i = s.x.size(); i-- > 0;) o << num(px(s.x[i])) << "," << num(py(s.y[i] - s.band[i])) << " ";
      o << "\"/>\n";
    }
    if (s.x.size() == 1) {
      o << "<circle cx=\"" << num(px(s.x[0])) << "\" cy=\"" << num(py(s.y[0])) << "\" r=\"3\" fill=\"" << color
        << "\"/>\n";
    } else {
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (i) o << " ";
        o << num(px(s.x[i])) << "," << num(py(s.y[i]));
      }
      o << "\"/>\n";
    }
    const double ly = kTop + 14 + 16 * static_cast<double>(k);
    o << "<line x1=\"" << num(kLeft + pw + 10) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(kLeft + pw + 28)
      << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(kLeft + pw + 32) << "\" y=\"" << num(ly) << "\">" << escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<std::pair<double, double>> read_two_column_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<double, double>> out;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() < 2) throw ParseError("expected at least 2 fields", n);
    out.emplace_back(parse_double(f[0], n), parse_double(f[1], n));
  }
  return out;
}

}  // namespace

std::vector<fs::path> emit_plots(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw std::invalid_argument("emit_plots: no runs given");
  ChartSpec curve{"Evaluation return", "environment steps", "mean dense return", {}};
  ChartSpec losses{"GILD and meta losses", "environment steps", "loss", {}};
  ChartSpec kl{"KL to behaviour policy", "environment steps", "KL", {}};
  for (const auto& dir : run_dirs) {
    const std::string name = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    const auto eval = RunLog::read_eval_csv(dir / "eval.csv");
    if (eval.empty()) throw std::invalid_argument("emit_plots: " + (dir / "eval.csv").string() + " has no records");
    Series s{name, {}, {}, {}};
    for (const auto& r : eval) {
      s.x.push_back(static_cast<double>(r.step));
      s.y.push_back(r.mean_return);
      s.band.push_back(r.std_return);
    }
    curve.series.push_back(std::move(s));

    if (fs::exists(dir / "train.csv")) {
      Series g{name + " gild", {}, {}, {}}, m{name + " meta", {}, {}, {}};
      for (const auto& r : RunLog::read_train_csv(dir / "train.csv")) {
        if (r.gild_loss == 0.0 && r.meta_loss == 0.0) continue;
        g.x.push_back(static_cast<double>(r.step));
        g.y.push_back(r.gild_loss);
        m.x.push_back(static_cast<double>(r.step));
        m.y.push_back(r.meta_loss);
      }
      if (!g.x.empty()) {
        losses.series.push_back(std::move(g));
        losses.series.push_back(std::move(m));
      }
    }
    if (fs::exists(dir / "kl.csv")) {
      Series k{name, {}, {}, {}};
      for (const auto& [x, y] : read_two_column_csv(dir / "kl.csv")) {
        k.x.push_back(x);
        k.y.push_back(y);
      }
      if (!k.x.empty()) kl.series.push_back(std::move(k));
    }
  }
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  const auto emit = [&](const ChartSpec& c, const char* file) {
    write_text(out_dir / file, render_svg(c));
    written.push_back(out_dir / file);
  };
  emit(curve, "learning_curve.svg");
  if (!losses.series.empty()) emit(losses, "losses.svg");
  if (!kl.series.empty()) emit(kl, "kl.svg");
  return written;
}

}  // namespace gild
