#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace relprop;

namespace {

// One drug (entity 7) measured on every listed cell line, with the given labels.
CellLinePanel label_panel(const std::vector<std::uint8_t>& labels) {
  CellLinePanel p;
  for (std::size_t c = 0; c < labels.size(); ++c) p.cell_lines.push_back("c" + std::to_string(100 + c));
  p.genes.entities = {1};
  p.genes.values.assign(labels.size(), 0.5);
  p.genes.present.assign(labels.size(), 1);
  p.drugs.entities = {7};
  p.drugs.values.assign(labels.size(), 0.5);
  p.drugs.present.assign(labels.size(), 1);
  p.drug_labels = labels;
  return p;
}

PredictionSet calls(const CellLinePanel& p, const std::vector<bool>& called) {
  PredictionSet ps;
  for (std::size_t c = 0; c < called.size(); ++c) {
    Prediction x;
    x.cell_line = p.cell_lines[c];
    x.drug = 7;
    x.call = called[c];
    ps.items.push_back(x);
  }
  return ps;
}

std::size_t nonzeros(const std::vector<double>& w) {
  return static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](double x) { return x != 0.0; }));
}

}  // namespace

TEST(Split, EightTwoAndDisjoint) {
  auto p = label_panel(std::vector<std::uint8_t>(10, 1));
  auto s = split_cell_lines(p, 0.2, 1);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.test.size(), 2u);
  std::set<std::string> train(s.train.cell_lines.begin(), s.train.cell_lines.end());
  for (const auto& c : s.test.cell_lines) EXPECT_FALSE(train.count(c));
}

TEST(Split, DeterministicPartition) {
  Rng rng(1);
  CellLinePanel p = label_panel(std::vector<std::uint8_t>(23, 0));
  for (double& x : p.genes.values) x = rng.uniform01();
  auto a = split_cell_lines(p, 0.3, 77), b = split_cell_lines(p, 0.3, 77);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.test.size(), 7u);   // 6.9 rounds to 7

  std::vector<std::size_t> all = a.train_cells;
  all.insert(all.end(), a.test_cells.begin(), a.test_cells.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(subset_panel(p, all), p);
  EXPECT_EQ(a.train, subset_panel(p, a.train_cells));
}

TEST(Split, RoundsHalfUp) {
  // 10 * 0.25 = 2.5 -> 3; 10 * 0.05 = 0.5 -> 1.
  auto p = label_panel(std::vector<std::uint8_t>(10, 1));
  EXPECT_EQ(split_cell_lines(p, 0.25, 3).test.size(), 3u);
  EXPECT_EQ(split_cell_lines(p, 0.05, 3).test.size(), 1u);
}

TEST(Split, Errors) {
  try {
    split_cell_lines(label_panel({1}), 0.5, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewCellLines);
  }
  EXPECT_THROW(split_cell_lines(label_panel({1, 0, 1}), 0.0, 1), Error);
  EXPECT_THROW(split_cell_lines(label_panel({1, 0, 1}), 1.0, 1), Error);
}

TEST(Evaluate, AllCorrect) {
  auto p = label_panel({1, 0, 1});
  auto r = evaluate(calls(p, {true, false, true}), p);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.tp, 2u);
  EXPECT_EQ(r.tn, 1u);
}

TEST(Evaluate, EighteenOfNineteen) {
  std::vector<std::uint8_t> labels(19);
  std::vector<bool> called(19);
  for (std::size_t i = 0; i < 19; ++i) labels[i] = called[i] = i % 3 == 0;
  called[5] = !called[5];
  auto p = label_panel(labels);
  auto r = evaluate(calls(p, called), p);
  EXPECT_EQ(r.n_test, 19u);
  EXPECT_NEAR(r.accuracy, 0.9474, 5e-5);
  EXPECT_EQ(r.accuracy, 18.0 / 19.0);
}

TEST(Evaluate, AllWrong) {
  auto p = label_panel({0, 1});
  auto r = evaluate(calls(p, {true, false}), p);
  EXPECT_EQ(r.accuracy, 0.0);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.fn, 1u);
  EXPECT_EQ(r.tp + r.fp + r.fn + r.tn, r.n_test);
}

TEST(Evaluate, MaskedTruthExcluded) {
  auto p = label_panel({1, 0, 1});
  p.drugs.present[1] = 0;
  auto r = evaluate(calls(p, {true, true, true}), p);
  EXPECT_EQ(r.n_test, 2u);
  EXPECT_EQ(r.accuracy, 1.0);
}

TEST(Evaluate, EmptyIntersection) {
  auto p = label_panel({1});
  PredictionSet ps;
  ps.items.push_back({"elsewhere", 7, 0, 0.9, 0.5, true});
  try {
    evaluate(ps, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyIntersection);
  }
}

TEST(Evaluate, InvariantToCellOrder) {
  Rng rng(6);
  std::vector<std::uint8_t> labels(30);
  std::vector<bool> called(30);
  for (std::size_t i = 0; i < 30; ++i) {
    labels[i] = rng.below(2);
    called[i] = rng.below(2);
  }
  auto p = label_panel(labels);
  auto ps = calls(p, called);
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  auto q = subset_panel(p, perm);
  auto a = evaluate(ps, p), b = evaluate(ps, q);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.tp, b.tp);
  EXPECT_EQ(a.fn, b.fn);
}

TEST(Evaluate, TsvRow) {
  auto p = label_panel({1, 0});
  auto ps = calls(p, {true, true});
  ps.method = "relprop";
  std::ostringstream os;
  write_eval_header(os);
  write_eval_row(os, evaluate(ps, p, 42));
  EXPECT_EQ(os.str(), "method\taccuracy\ttp\tfp\tfn\ttn\tn\tseed\nrelprop\t0.5\t1\t1\t0\t0\t2\t42\n");
}

TEST(LogReg, SeparableOneDimension) {
  Matrix X(2, 1);
  X(0, 0) = -1;
  X(1, 0) = 1;
  std::vector<std::uint8_t> y{0, 1};
  LogRegOptions opt;
  opt.l1_strength = 0;
  auto m = logreg_train(X, y, opt);
  EXPECT_GT(m.weights[0], 0);
  auto pred = logreg_predict(m, X);
  EXPECT_EQ(pred.labels, y);
}

TEST(LogReg, LargePenaltyKillsWeights) {
  auto ds = oracle::noisy_linear(3, 60, 5);
  double bound = 0;
  for (std::size_t j = 0; j < 5; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 60; ++i) s += std::abs(ds.X(i, j));
    bound = std::max(bound, s / 60);
  }
  LogRegOptions opt;
  opt.l1_strength = bound;
  auto m = logreg_train(ds.X, ds.y, opt);
  for (double w : m.weights) EXPECT_EQ(w, 0.0);
  const double rate = std::accumulate(ds.y.begin(), ds.y.end(), 0.0) / 60;
  EXPECT_NEAR(m.intercept, std::log(rate / (1 - rate)), 1e-5);
}

TEST(LogReg, MatchesCoordinateDescentOptimum) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto ds = oracle::noisy_linear(seed, 80, 2);
    LogRegOptions opt;
    opt.l1_strength = 0.01;
    auto m = logreg_train(ds.X, ds.y, opt);
    EXPECT_NEAR(m.objective, oracle::logreg_optimum(ds, 0.01), 1e-6) << "seed " << seed;
    EXPECT_LT(m.iterations, opt.max_iters);
  }
}

TEST(LogReg, ObjectiveNeverIncreases) {
  auto ds = oracle::noisy_linear(9, 50, 6);
  std::vector<double> trace;
  LogRegOptions opt;
  opt.l1_strength = 0.02;
  opt.on_iteration = [&](std::size_t, double f) { trace.push_back(f); };
  auto m = logreg_train(ds.X, ds.y, opt);
  ASSERT_EQ(trace.size(), m.iterations);
  EXPECT_LE(trace.front(), logreg_objective(ds.X, ds.y, std::vector<double>(6, 0.0), 0.0, 0.02));
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] + 1e-15);
}

TEST(LogReg, SparsityAlongPath) {
  auto ds = oracle::noisy_linear(10, 100, 12);
  std::size_t prev = 13;
  for (double l1 : {0.001, 0.005, 0.02, 0.05, 0.2}) {
    LogRegOptions opt;
    opt.l1_strength = l1;
    const auto nz = nonzeros(logreg_train(ds.X, ds.y, opt).weights);
    EXPECT_LE(nz, prev) << "l1 " << l1;
    prev = nz;
  }
  EXPECT_EQ(prev, 0u);
}

TEST(LogReg, RejectsBadInput) {
  Matrix X(2, 1);
  X(0, 0) = std::nan("");
  try {
    logreg_train(X, {0, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFinite);
  }
  X(0, 0) = 0;
  EXPECT_THROW(logreg_train(X, {0}), Error);
  LogRegOptions opt;
  opt.max_iters = 0;
  EXPECT_THROW(logreg_train(X, {0, 1}, opt), Error);
}

TEST(LogRegPredict, ZeroModelAndSaturation) {
  Matrix X(3, 2);
  X(1, 0) = 1;
  X(2, 1) = -1;
  LogRegModel m;
  m.weights = {0, 0};
  auto p = logreg_predict(m, X);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(p.scores[i], 0.5);
    EXPECT_EQ(p.labels[i], 1);
  }
  m.intercept = -20;
  for (auto l : logreg_predict(m, X).labels) EXPECT_EQ(l, 0);
  try {
    logreg_predict(m, Matrix(1, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Baseline, PredictsEveryTestCellAndDrug) {
  SynthConfig sc;
  sc.n_cell_lines = 20;
  auto ds = generate(sc);
  auto s = split_cell_lines(ds.panel, 0.2, 42);
  auto ps = baseline_predictions(s.train, s.test);
  EXPECT_EQ(ps.method, "logreg_l1");
  EXPECT_EQ(ps.items.size(), s.test.size() * s.test.drugs.width());
  auto r = evaluate(ps, s.test, 42);
  EXPECT_EQ(r.n_test, ps.items.size());
  EXPECT_GE(r.accuracy, 0.0);
}
