#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "relprop/error.hpp"
#include "relprop/ingest.hpp"
#include "relprop/model.hpp"
#include "relprop/rng.hpp"
#include "relprop/text.hpp"
#include "relprop/train.hpp"

namespace relprop {

// ---------------------------------------------------------------------------
// Splitting

struct PanelSplit {
  CellLinePanel train;
  CellLinePanel test;
  std::vector<std::size_t> train_cells;   // indices into the source panel, ascending
  std::vector<std::size_t> test_cells;
};

/// Splits by cell line. The test side gets round-half-up(n * fraction)
/// lines, clamped so both sides are nonempty.
inline PanelSplit split_cell_lines(const CellLinePanel& panel, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw Error(ErrorCode::InvalidArgument, "test fraction must lie in (0, 1)");
  const std::size_t n = panel.size();
  if (n < 2) throw Error(ErrorCode::TooFewCellLines, "need at least 2 cell lines, have " + std::to_string(n));
  auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * test_fraction + 0.5));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm);

  PanelSplit out;
  out.test_cells.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.train_cells.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  std::sort(out.test_cells.begin(), out.test_cells.end());
  std::sort(out.train_cells.begin(), out.train_cells.end());
  out.train = subset_panel(panel, out.train_cells);
  out.test = subset_panel(panel, out.test_cells);
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct EvalReport {
  double accuracy = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t n_test = 0;
  std::string method;
  std::uint64_t seed = 0;
};

/// Accuracy and confusion over predictions whose (cell line, drug) has a
/// measured label in `truth`.
inline EvalReport evaluate(const PredictionSet& predictions, const CellLinePanel& truth, std::uint64_t seed = 0) {
  std::map<std::string, std::size_t> cell_index;
  for (std::size_t c = 0; c < truth.size(); ++c) cell_index.emplace(truth.cell_lines[c], c);
  EvalReport r;
  r.method = predictions.method;
  r.seed = seed;
  for (const auto& p : predictions.items) {
    auto cit = cell_index.find(p.cell_line);
    if (cit == cell_index.end()) continue;
    auto col = truth.drugs.column(p.drug);
    if (!col || !truth.drugs.has(cit->second, *col)) continue;
    const bool label = truth.drug_labels[truth.drugs.index(cit->second, *col)] != 0;
    if (p.call && label) ++r.tp;
    else if (p.call && !label) ++r.fp;
    else if (!p.call && label) ++r.fn;
    else ++r.tn;
  }
  r.n_test = r.tp + r.fp + r.fn + r.tn;
  if (r.n_test == 0) throw Error(ErrorCode::EmptyIntersection, "no prediction has a measured label");
  r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(r.n_test);
  return r;
}

inline void write_eval_header(std::ostream& os) { os << "method\taccuracy\ttp\tfp\tfn\ttn\tn\tseed\n"; }

inline void write_eval_row(std::ostream& os, const EvalReport& r) {
  os << r.method << '\t' << text::format_double(r.accuracy) << '\t' << r.tp << '\t' << r.fp << '\t' << r.fn << '\t'
     << r.tn << '\t' << r.n_test << '\t' << r.seed << '\n';
}

// ---------------------------------------------------------------------------
// L1 logistic regression baseline

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct LogRegModel {
  std::vector<double> weights;
  double intercept = 0.0;
  std::size_t iterations = 0;
  double objective = 0.0;
};

struct LogRegOptions {
  double l1_strength = 0.01;
  std::size_t max_iters = 10000;
  double tolerance = 1e-8;
  // Called after every iteration with (iteration, objective).
  std::function<void(std::size_t, double)> on_iteration;
};

namespace detail {

// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace detail

/// Mean logistic loss plus l1_strength * ||w||_1 (intercept unpenalized).
inline double logreg_objective(const Matrix& X, const std::vector<std::uint8_t>& y, const std::vector<double>& w,
                               double intercept, double l1_strength) {
  double loss = 0.0;
  for (std::size_t i = 0; i < X.rows; ++i) {
    double z = intercept;
    for (std::size_t j = 0; j < X.cols; ++j) z += X(i, j) * w[j];
    loss += detail::softplus(z) - (y[i] ? z : 0.0);
  }
  double l1 = 0.0;
  for (double x : w) l1 += std::abs(x);
  return loss / static_cast<double>(X.rows) + l1_strength * l1;
}

/// Lipschitz constant of the mean logistic loss gradient in (w, intercept):
/// ||[X 1]||_F^2 / (4n) bounds the largest eigenvalue of the Hessian.
inline double logreg_lipschitz(const Matrix& X) {
  double fro = static_cast<double>(X.rows);   // the intercept column
  for (double x : X.data) fro += x * x;
  return fro / (4.0 * static_cast<double>(X.rows));
}

/// Proximal gradient descent with step 1/L: a gradient step on the mean
/// logistic loss, soft-thresholding on w, a plain step on the intercept.
/// Stops after max_iters or when no parameter moves by tolerance or more.
inline LogRegModel logreg_train(const Matrix& X, const std::vector<std::uint8_t>& y, const LogRegOptions& opt = {}) {
  if (opt.max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be >= 1");
  if (X.rows == 0 || X.rows != y.size()) throw Error(ErrorCode::ShapeMismatch, "features and labels disagree");
  for (double x : X.data)
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, "features must be finite");
  const std::size_t n = X.rows, d = X.cols;
  const double step = 1.0 / logreg_lipschitz(X);
  const double shrink = step * opt.l1_strength;

  LogRegModel m;
  m.weights.assign(d, 0.0);
  std::vector<double> gw(d);
  for (std::size_t it = 1; it <= opt.max_iters; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = m.intercept;
      for (std::size_t j = 0; j < d; ++j) z += X(i, j) * m.weights[j];
      const double r = sigmoid(z) - (y[i] ? 1.0 : 0.0);
      for (std::size_t j = 0; j < d; ++j) gw[j] += r * X(i, j);
      gb += r;
    }
    double moved = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double u = m.weights[j] - step * gw[j] / static_cast<double>(n);
      const double next = u > shrink ? u - shrink : (u < -shrink ? u + shrink : 0.0);
      moved = std::max(moved, std::abs(next - m.weights[j]));
      m.weights[j] = next;
    }
    const double next_b = m.intercept - step * gb / static_cast<double>(n);
    moved = std::max(moved, std::abs(next_b - m.intercept));
    m.intercept = next_b;
    m.iterations = it;
    if (opt.on_iteration) opt.on_iteration(it, logreg_objective(X, y, m.weights, m.intercept, opt.l1_strength));
    if (moved < opt.tolerance) break;
  }
  m.objective = logreg_objective(X, y, m.weights, m.intercept, opt.l1_strength);
  return m;
}

struct LogRegPrediction {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

/// score = sigmoid(w.x + intercept); label = score >= 0.5.
inline LogRegPrediction logreg_predict(const LogRegModel& m, const Matrix& X) {
  if (X.cols != m.weights.size())
    throw Error(ErrorCode::ShapeMismatch, "feature width " + std::to_string(X.cols) + " != model width " +
                                              std::to_string(m.weights.size()));
  LogRegPrediction out;
  for (std::size_t i = 0; i < X.rows; ++i) {
    double z = m.intercept;
    for (std::size_t j = 0; j < X.cols; ++j) z += X(i, j) * m.weights[j];
    const double s = sigmoid(z);
    out.scores.push_back(s);
    out.labels.push_back(s >= 0.5 ? 1 : 0);
  }
  return out;
}

/// Per-drug logistic regressions on gene features. Missing gene cells take
/// the training mean of that gene (0.5 when the gene is never observed in
/// training). A drug whose training labels are all one class is predicted
/// as that class.
inline PredictionSet baseline_predictions(const CellLinePanel& train, const CellLinePanel& test,
                                          const LogRegOptions& opt = {}) {
  const std::size_t g = train.genes.width();
  if (test.genes.entities != train.genes.entities || test.drugs.entities != train.drugs.entities)
    throw Error(ErrorCode::ShapeMismatch, "train and test panels have different columns");
  std::vector<double> fill(g, 0.5);
  for (std::size_t j = 0; j < g; ++j) {
    double s = 0.0;
    std::size_t c = 0;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (train.genes.has(i, j)) {
        s += train.genes.at(i, j);
        ++c;
      }
    if (c) fill[j] = s / static_cast<double>(c);
  }
  auto features = [&](const CellLinePanel& p, const std::vector<std::size_t>& cells) {
    Matrix X(cells.size(), g);
    for (std::size_t r = 0; r < cells.size(); ++r)
      for (std::size_t j = 0; j < g; ++j) X(r, j) = p.genes.has(cells[r], j) ? p.genes.at(cells[r], j) : fill[j];
    return X;
  };

  PredictionSet out;
  out.method = "logreg_l1";
  for (std::size_t col = 0; col < train.drugs.width(); ++col) {
    std::vector<std::size_t> cells;
    std::vector<std::uint8_t> y;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (train.drugs.has(i, col)) {
        cells.push_back(i);
        y.push_back(train.drug_labels[train.drugs.index(i, col)]);
      }
    std::vector<std::size_t> test_cells(test.size());
    std::iota(test_cells.begin(), test_cells.end(), 0);
    const Matrix Xt = features(test, test_cells);
    LogRegPrediction pred;
    if (cells.empty()) {
      pred.scores.assign(test.size(), 0.5);
      pred.labels.assign(test.size(), 1);
    } else {
      pred = logreg_predict(logreg_train(features(train, cells), y, opt), Xt);
    }
    for (std::size_t i = 0; i < test.size(); ++i) {
      Prediction p;
      p.cell_line = test.cell_lines[i];
      p.drug = train.drugs.entities[col];
      p.score = pred.scores[i];
      p.threshold = 0.5;
      p.call = pred.labels[i] != 0;
      out.items.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace relprop
