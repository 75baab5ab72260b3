#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "gild/analysis.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using gild::Tensor;

namespace {

// Gaussian actor on 1-D states whose heads are the constants (mean, log_std).
gild::ActorModel constant_gaussian(const std::vector<double>& mean, const std::vector<double>& log_std,
                                   std::uint64_t seed) {
  gild::RngStream rng(seed);
  auto a = gild::make_gaussian_actor(1, mean.size(), {4}, 1.0, rng);
  auto& w = a.params[a.params.count() - 2];
  auto& b = a.params[a.params.count() - 1];
  w = Tensor(w.rows(), w.cols(), 0.0);
  for (std::size_t j = 0; j < mean.size(); ++j) {
    b(0, j) = mean[j];
    b(0, mean.size() + j) = log_std[j];
  }
  return a;
}

double log_normal(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gild_test_analysis" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("normalized score examples") {
  CHECK(gild::normalized_score(3470.6, 3491.95) == 99.39);
  CHECK(gild::normalized_score(1085.80, 2500.18) == 43.43);
  CHECK(gild::normalized_score(42.0, 42.0) == 100.0);
  CHECK_THROWS_AS(gild::normalized_score(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(gild::normalized_score(1.0, -5.0), std::invalid_argument);
}

TEST_CASE("KL examples") {
  const auto p = constant_gaussian({0.0}, {0.0}, 1);
  const auto q = constant_gaussian({1.0}, {0.0}, 2);
  const Tensor states = Tensor::from_rows({{0.1}, {0.5}, {-0.3}});
  CHECK(gild::kl_to_behavior(p, p, states) == 0.0);
  CHECK(gild::kl_to_behavior(p, q, states) == doctest::Approx(0.5).epsilon(1e-15));

  gild::RngStream rng(3);
  const auto det = gild::make_deterministic_actor(1, 1, {4}, 1.0, rng);
  CHECK_THROWS(gild::kl_to_behavior(det, p, states));
  CHECK_THROWS(gild::kl_to_behavior(p, det, states));
}

TEST_CASE("KL closed form agrees with a Monte Carlo estimate") {
  gild::RngStream rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<double> m1{rng.uniform(-1, 1), rng.uniform(-1, 1)}, s1{rng.uniform(-1, 0.5), rng.uniform(-1, 0.5)};
    const std::vector<double> m2{rng.uniform(-1, 1), rng.uniform(-1, 1)}, s2{rng.uniform(-1, 0.5), rng.uniform(-1, 0.5)};
    const auto p = constant_gaussian(m1, s1, 5);
    const auto q = constant_gaussian(m2, s2, 6);
    const double closed = gild::kl_to_behavior(p, q, Tensor(1, 1, 0.0));

    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      double lr = 0.0;
      for (std::size_t j = 0; j < 2; ++j) {
        const double u = m1[j] + std::exp(s1[j]) * rng.normal();
        lr += log_normal(u, m1[j], std::exp(s1[j])) - log_normal(u, m2[j], std::exp(s2[j]));
      }
      sum += lr;
      sq += lr * lr;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(mean - closed) <= 3.0 * se);
  }
}

TEST_CASE("PCA recovers the eigenvectors of a known 3-D covariance") {
  // Orthonormal basis from a rotation; points at +-3 u1, +-2 u2, +-1 u3.
  const double a = 0.3, b = -0.7;
  const double ca = std::cos(a), sa = std::sin(a), cb = std::cos(b), sb = std::sin(b);
  const double u[3][3] = {{ca * cb, sa * cb, -sb}, {-sa, ca, 0.0}, {ca * sb, sa * sb, cb}};
  const double scale[3] = {3.0, 2.0, 1.0};
  Tensor x(6, 3);
  std::vector<long> steps;
  for (std::size_t k = 0; k < 3; ++k) {
    for (int sgn : {1, -1}) {
      const std::size_t r = 2 * k + (sgn > 0 ? 0 : 1);
      for (std::size_t c = 0; c < 3; ++c) x(r, c) = sgn * scale[k] * u[k][c] + 5.0;
      steps.push_back(static_cast<long>(r) * 100);
    }
  }
  const auto pca = gild::pca_param_path(x, steps);
  CHECK(pca.rank == 2);
  CHECK(pca.warnings.empty());
  for (std::size_t k = 0; k < 2; ++k) {
    // Compare up to sign.
    double dotp = 0.0;
    for (std::size_t c = 0; c < 3; ++c) dotp += pca.components(k, c) * u[k][c];
    const double s = dotp < 0 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(pca.components(k, c) - s * u[k][c]) < 1e-6);
  }
  CHECK(pca.explained[0] == doctest::Approx(9.0 / 14.0).epsilon(1e-9));
  CHECK(pca.explained[1] == doctest::Approx(4.0 / 14.0).epsilon(1e-9));
  CHECK(std::abs(pca.coords(0, 0)) == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(std::abs(pca.coords(0, 1)) < 1e-9);
}

TEST_CASE("property: PCA components are orthonormal") {
  gild::RngStream rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 3 + rng.index(10), d = 2 + rng.index(40);
    const Tensor x = oracle::random_tensor(n, d, rng);
    std::vector<long> steps(n);
    for (std::size_t i = 0; i < n; ++i) steps[i] = static_cast<long>(i);
    const auto pca = gild::pca_param_path(x, steps);
    REQUIRE(pca.rank == 2);
    double n1 = 0.0, n2 = 0.0, cross = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      n1 += pca.components(0, c) * pca.components(0, c);
      n2 += pca.components(1, c) * pca.components(1, c);
      cross += pca.components(0, c) * pca.components(1, c);
    }
    CHECK(std::abs(std::sqrt(n1) - 1.0) < 1e-10);
    CHECK(std::abs(std::sqrt(n2) - 1.0) < 1e-10);
    CHECK(std::abs(cross) < 1e-8);
    CHECK(pca.explained[0] >= pca.explained[1]);
    CHECK(pca.explained[0] + pca.explained[1] <= 1.0 + 1e-12);
  }
}

TEST_CASE("PCA of points on a line is one-dimensional") {
  Tensor x(5, 4);
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 4; ++c) x(r, c) = 1.0 + static_cast<double>(r) * (static_cast<double>(c) - 1.5);
  }
  const auto pca = gild::pca_param_path(x, {0, 1, 2, 3, 4});
  CHECK(pca.rank == 1);
  CHECK_FALSE(pca.warnings.empty());
  CHECK(pca.explained[1] == 0.0);
  for (std::size_t r = 0; r < 5; ++r) CHECK(pca.coords(r, 1) == 0.0);
  CHECK(pca.explained[0] == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS(gild::pca_param_path(Tensor(2, 3), {0, 1}));
  const fs::path dir = scratch("pca");
  gild::write_pca_csv(dir / "pca.csv", pca);
  CHECK(slurp(dir / "pca.csv").starts_with("snapshot_step,pc1,pc2\n0,"));
}

TEST_CASE("padded ranges") {
  CHECK(gild::padded_range(0, 10).lo == -0.5);
  CHECK(gild::padded_range(0, 10).hi == 10.5);
  CHECK(gild::padded_range(5, 5).lo == 4.75);
  CHECK(gild::padded_range(5, 5).hi == 5.25);
  CHECK(gild::padded_range(0, 0).lo == -1.0);
  CHECK(gild::padded_range(0, 0).hi == 1.0);
  CHECK(gild::padded_range(-4, -4).lo == -4.2);
}

TEST_CASE("SVG rendering is deterministic and handles degenerate input") {
  gild::ChartSpec c{"curve", "steps", "return", {{"run <a>", {0, 1, 2}, {1.0, -2.0, 3.5}, {0.5, 0.5, 0.25}}}};
  const std::string a = gild::render_svg(c);
  CHECK(a == gild::render_svg(c));
  CHECK(a.starts_with("<svg"));
  CHECK(a.find("<polygon") != std::string::npos);
  CHECK(a.find("run &lt;a&gt;") != std::string::npos);

  gild::ChartSpec one{"single", "x", "y", {{"s", {5}, {2.0}, {}}}};
  const std::string p = gild::render_svg(one);
  CHECK(p.find("<circle") != std::string::npos);
  CHECK(p.find("nan") == std::string::npos);

  gild::ChartSpec empty{"none", "x", "y", {}};
  CHECK_THROWS_AS(gild::render_svg(empty), std::invalid_argument);
}

TEST_CASE("emit_plots writes charts from run logs") {
  const fs::path run = scratch("run1");
  gild::RunLog log;
  log.append(gild::EvalRecord{100, -5.0, 1.0});
  log.append(gild::EvalRecord{200, -3.0, 0.5});
  log.append(gild::TrainRecord{99, 0.1, 0.2, 0.7, 0.01, 5.0});
  log.append(gild::TrainRecord{199, 0.1, 0.2, 0.0, 0.0, 5.0});
  log.write_eval_csv(run / "eval.csv");
  log.write_train_csv(run / "train.csv");
  std::ofstream(run / "kl.csv") << "step,kl\n100,0.5\n200,0.25\n";

  const fs::path out1 = scratch("plots1"), out2 = scratch("plots2");
  const auto files = gild::emit_plots({run}, out1);
  CHECK(files.size() == 3);
  gild::emit_plots({run}, out2);
  for (const char* f : {"learning_curve.svg", "losses.svg", "kl.svg"}) CHECK(slurp(out1 / f) == slurp(out2 / f));

  const fs::path empty = scratch("empty");
  gild::RunLog{}.write_eval_csv(empty / "eval.csv");
  CHECK_THROWS(gild::emit_plots({empty}, out1));
}
