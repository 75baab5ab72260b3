#include <doctest.h>

#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>

#include "gild/checkpoint.hpp"
#include "gild/data.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using gild::Transition;

namespace {

Transition make_transition(double tag) {
  return {{tag, tag + 0.5}, {-tag}, tag * 2.0, {tag + 1.0, tag + 1.5}, static_cast<long>(tag) % 3 == 0};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gild_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("buffer push examples") {
  gild::ReplayBuffer buf(2, 1);
  CHECK(buf.empty());
  buf.push(make_transition(1));
  CHECK(buf.size() == 1);

  gild::ReplayBuffer small(2, 1, 2);
  for (int i = 1; i <= 3; ++i) small.push(make_transition(i));
  CHECK(small.size() == 2);
  CHECK(small.at(0) == make_transition(2));
  CHECK(small.at(1) == make_transition(3));
  CHECK_THROWS_AS(small.push(Transition{{1.0}, {1.0}, 0.0, {1.0}, false}), gild::ShapeError);
}

TEST_CASE("sampling a single-element buffer returns copies of it") {
  gild::ReplayBuffer buf(2, 1);
  const Transition t = make_transition(4);
  buf.push(t);
  gild::RngStream rng(1);
  const gild::Batch b = buf.sample(3, rng);
  REQUIRE(b.states.rows() == 3);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(b.states(r, 0) == t.s[0]);
    CHECK(b.states(r, 1) == t.s[1]);
    CHECK(b.actions(r, 0) == t.a[0]);
    CHECK(b.rewards(r, 0) == t.r);
    CHECK(b.next_states(r, 1) == t.s_next[1]);
    CHECK(b.dones(r, 0) == (t.done ? 1.0 : 0.0));
  }
}

TEST_CASE("sampling is deterministic for a fixed seed and fails when empty") {
  gild::ReplayBuffer buf(2, 1);
  for (int i = 0; i < 50; ++i) buf.push(make_transition(i));
  gild::RngStream a(9), b(9);
  CHECK(buf.sample(32, a).states == buf.sample(32, b).states);
  gild::ReplayBuffer empty(2, 1);
  CHECK_THROWS_AS(empty.sample(1, a), std::logic_error);
  CHECK_THROWS_AS(empty.sample_states(1, a), std::logic_error);
}

TEST_CASE("sampling frequencies are uniform (chi-square)") {
  gild::ReplayBuffer buf(2, 1);
  for (int i = 0; i < 10; ++i) buf.push(make_transition(i));
  gild::RngStream rng(123);
  const std::size_t draws = 100000;
  std::vector<double> counts(10, 0.0);
  const gild::Batch b = buf.sample(draws, rng);
  for (std::size_t r = 0; r < draws; ++r) counts[static_cast<std::size_t>(b.states(r, 0))] += 1.0;
  const double expected = static_cast<double>(draws) / 10.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 9 degrees of freedom: mean 9, standard deviation sqrt(18).
  CHECK(chi2 < 9.0 + 3.0 * std::sqrt(18.0));
}

TEST_CASE("property: ring overwrite matches a plain FIFO model") {
  gild::RngStream rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t cap = 1 + rng.index(20);
    gild::ReplayBuffer buf(2, 1, cap);
    std::deque<Transition> model;
    for (int op = 0; op < 1000; ++op) {
      const Transition t = make_transition(rng.uniform(0.0, 100.0));
      buf.push(t);
      model.push_back(t);
      if (model.size() > cap) model.pop_front();
      REQUIRE(buf.size() == model.size());
      if (op % 37 == 0) {
        for (std::size_t i = 0; i < model.size(); ++i) CHECK(buf.at(i) == model[i]);
      }
    }
    for (std::size_t i = 0; i < model.size(); ++i) CHECK(buf.at(i) == model[i]);
  }
}

TEST_CASE("demonstrations round-trip bit-exactly") {
  gild::DemonstrationSet d;
  d.state_dim = 2;
  d.action_dim = 2;
  gild::RngStream rng(3);
  for (int i = 0; i < 100; ++i) {
    const double s[] = {rng.normal(), rng.uniform() * 1e-300};
    const double a[] = {rng.uniform(-0.1, 0.1), std::nextafter(1.0, 2.0)};
    d.add(s, a);
  }
  d.meta = {"point2d-dense", -7.4612345678901234, 100, "/tmp/behavior.json"};
  const fs::path p = scratch("demos.csv");
  gild::save_demos(p, d);
  CHECK(gild::load_demos(p) == d);

  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  CHECK(header == "s0,s1,a0,a1");
}

TEST_CASE("an empty demonstration set saves as a header-only CSV") {
  gild::DemonstrationSet d;
  d.state_dim = 4;
  d.action_dim = 2;
  d.meta.env_id = "mass2d-dense";
  const fs::path p = scratch("empty.csv");
  gild::save_demos(p, d);
  std::ifstream in(p);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 1);
  const auto loaded = gild::load_demos(p);
  CHECK(loaded.size() == 0);
  CHECK(loaded == d);
}

TEST_CASE("malformed demonstration files report the line") {
  gild::DemonstrationSet d;
  d.state_dim = 1;
  d.action_dim = 1;
  d.add(std::vector<double>{1.0}, std::vector<double>{2.0});
  d.meta.sample_count = 1;
  const fs::path p = scratch("bad.csv");
  gild::save_demos(p, d);

  write_file(p, "s0,a0\n1,2\n3\n");
  try {
    (void)gild::load_demos(p);
    FAIL("expected ParseError");
  } catch (const gild::ParseError& e) {
    CHECK(e.line() == 3);
  }
  write_file(p, "s0,x0\n1,2\n");
  CHECK_THROWS_AS(gild::load_demos(p), gild::ParseError);
  write_file(p, "s0,a0\n1,abc\n");
  try {
    (void)gild::load_demos(p);
    FAIL("expected ParseError");
  } catch (const gild::ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("demo sampling uses the given stream") {
  gild::DemonstrationSet d;
  d.state_dim = 1;
  d.action_dim = 1;
  for (int i = 0; i < 20; ++i) d.add(std::vector<double>{double(i)}, std::vector<double>{-double(i)});
  gild::RngStream a(4), b(4);
  const auto x = d.sample(16, a);
  const auto y = d.sample(16, b);
  CHECK(x.states == y.states);
  for (std::size_t r = 0; r < 16; ++r) CHECK(x.actions(r, 0) == -x.states(r, 0));
}

TEST_CASE("run logs are monotone and round-trip") {
  gild::RunLog log;
  log.append(gild::EvalRecord{0, -10.5, 1.25});
  log.append(gild::EvalRecord{5000, -3.0 / 7.0, 0.1});
  CHECK_THROWS_AS(log.append(gild::EvalRecord{5000, 0, 0}), std::logic_error);
  log.append(gild::TrainRecord{99, 1e-7, -0.3, 0.69, 1.0 / 3.0, 850.25});
  CHECK_THROWS_AS(log.append(gild::TrainRecord{50, 0, 0, 0, 0, 0}), std::logic_error);
  CHECK(log.max_average_return() == -3.0 / 7.0);

  const fs::path e = scratch("eval.csv"), t = scratch("train.csv");
  log.write_eval_csv(e);
  log.write_train_csv(t);
  CHECK(gild::RunLog::read_eval_csv(e) == log.eval());
  CHECK(gild::RunLog::read_train_csv(t) == log.train());
  CHECK_THROWS_AS(gild::RunLog{}.max_average_return(), std::logic_error);
}

TEST_CASE("format_double is the shortest round-trip form") {
  gild::RngStream rng(8);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-300, 300));
    CHECK(gild::parse_double(gild::format_double(v), 1) == v);
  }
  CHECK(gild::format_double(0.1) == "0.1");
  CHECK(gild::format_double(2.0) == "2");
  CHECK_THROWS_AS(gild::parse_double("1.5x", 4), gild::ParseError);
}

TEST_CASE("named streams are independent and reproducible") {
  gild::RngRegistry a(42), b(42);
  const double x1 = a.stream("exploration").uniform();
  for (int i = 0; i < 100; ++i) (void)a.stream("buffer-sampling").uniform();
  const double x2 = a.stream("exploration").uniform();
  CHECK(b.stream("exploration").uniform() == x1);
  CHECK(b.stream("exploration").uniform() == x2);
  CHECK(a.stream("init").next_u64() != a.stream("env").next_u64());
  gild::RngRegistry c(43);
  CHECK(c.stream("exploration").uniform() != x1);
}

TEST_CASE("rng draws stay in range") {
  gild::RngStream rng(5);
  double sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.index(7) < 7);
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 3.0 / std::sqrt(double(n)));
  CHECK(std::abs(sq / n - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  gild::RngStream rng(6);
  for (auto kind : {gild::PolicyKind::Deterministic, gild::PolicyKind::Gaussian}) {
    gild::ActorCheckpoint ck;
    ck.actor = kind == gild::PolicyKind::Deterministic ? gild::make_deterministic_actor(4, 2, {8, 8}, 0.1, rng)
                                                       : gild::make_gaussian_actor(4, 2, {8}, 1.0, rng);
    for (std::size_t i = 0; i < ck.actor.params.count(); ++i) {
      for (auto& v : ck.actor.params[i].data()) v += rng.normal() / 3.0;
    }
    ck.step = 1234;
    ck.eval_return = -6.123456789012345;
    ck.rng_note = "seed 6";
    const fs::path p = scratch("actor.json");
    gild::save_actor_checkpoint(p, ck);
    const auto back = gild::load_actor_checkpoint(p);
    CHECK(back.actor.kind == ck.actor.kind);
    CHECK(back.actor.spec == ck.actor.spec);
    CHECK(back.actor.action_scale == ck.actor.action_scale);
    CHECK(back.actor.params == ck.actor.params);
    CHECK(back.step == ck.step);
    CHECK(back.eval_return == ck.eval_return);
    CHECK(back.rng_note == ck.rng_note);
  }

  const gild::GildModel g = gild::make_gild_net(2, 2, {8, 8}, rng);
  const fs::path p = scratch("gild.json");
  gild::save_network(p, "gild", g.spec, g.params);
  gild::MlpSpec spec;
  std::string kind;
  CHECK(gild::load_network(p, &spec, &kind) == g.params);
  CHECK(spec == g.spec);
  CHECK(kind == "gild");
  CHECK_THROWS_AS(gild::load_actor_checkpoint(p), gild::ParseError);
}
