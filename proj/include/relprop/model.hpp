#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "relprop/error.hpp"
#include "relprop/network.hpp"
#include "relprop/rng.hpp"
#include "relprop/text.hpp"

namespace relprop {

/// Per-node embedding v, bias b and scale lambda. Node i owns
/// v[i*dim, (i+1)*dim) and likewise for b.
struct NodeStates {
  std::vector<double> v;
  std::vector<double> b;
  std::vector<double> lambda;

  bool operator==(const NodeStates&) const = default;
};

/// Two-unit sigmoid hidden layer followed by a sigmoid output.
struct Readout {
  std::vector<double> W1;   // 2 x dim, row-major
  std::array<double, 2> c1{};
  std::array<double, 2> w2{};
  double c2 = 0.0;

  bool operator==(const Readout&) const = default;
};

/// Everything the learner updates. Edge e of the skeleton owns two
/// matrices: block 2e transforms b's embedding when aggregating at a,
/// block 2e+1 transforms a's embedding when aggregating at b.
struct ModelParams {
  std::size_t dim = 0;
  NodeStates states;
  std::vector<double> R;
  Readout readout;

  std::size_t nodes() const { return states.lambda.size(); }
  std::size_t directed_edges() const { return dim ? R.size() / (dim * dim) : 0; }

  std::span<double> v(EntityId i) { return {states.v.data() + i * dim, dim}; }
  std::span<const double> v(EntityId i) const { return {states.v.data() + i * dim, dim}; }
  std::span<double> b(EntityId i) { return {states.b.data() + i * dim, dim}; }
  std::span<const double> b(EntityId i) const { return {states.b.data() + i * dim, dim}; }
  std::span<double> matrix(std::size_t directed) { return {R.data() + directed * dim * dim, dim * dim}; }
  std::span<const double> matrix(std::size_t directed) const {
    return {R.data() + directed * dim * dim, dim * dim};
  }

  bool operator==(const ModelParams&) const = default;
};

/// Same layout as ModelParams; one partial derivative per parameter.
using Gradients = ModelParams;

inline std::size_t directed_index(const NetworkSkeleton& g, std::uint32_t edge, EntityId at) {
  return 2 * static_cast<std::size_t>(edge) + (g.edges[edge].a == at ? 0 : 1);
}

inline ModelParams zeros_like(const ModelParams& p) {
  ModelParams z;
  z.dim = p.dim;
  z.states.v.assign(p.states.v.size(), 0.0);
  z.states.b.assign(p.states.b.size(), 0.0);
  z.states.lambda.assign(p.states.lambda.size(), 0.0);
  z.R.assign(p.R.size(), 0.0);
  z.readout.W1.assign(p.readout.W1.size(), 0.0);
  return z;
}

inline ModelParams zero_params(const NetworkSkeleton& g, std::size_t dim) {
  ModelParams p;
  p.dim = dim;
  p.states.v.assign(g.size() * dim, 0.0);
  p.states.b.assign(g.size() * dim, 0.0);
  p.states.lambda.assign(g.size(), 0.0);
  p.R.assign(2 * g.edges.size() * dim * dim, 0.0);
  p.readout.W1.assign(2 * dim, 0.0);
  return p;
}

/// Visits every scalar parameter block in a fixed order:
/// v, b, lambda, R, W1, c1, w2, c2.
template <typename Params, typename Fn>
void for_each_block(Params& p, Fn&& fn) {
  fn(std::span(p.states.v));
  fn(std::span(p.states.b));
  fn(std::span(p.states.lambda));
  fn(std::span(p.R));
  fn(std::span(p.readout.W1));
  fn(std::span(p.readout.c1));
  fn(std::span(p.readout.w2));
  fn(std::span(&p.readout.c2, 1));
}

inline bool all_finite(const ModelParams& p) {
  bool ok = true;
  for_each_block(p, [&](auto block) {
    for (double x : block) ok = ok && std::isfinite(x);
  });
  return ok;
}

inline void check_shape(const ModelParams& p, const NetworkSkeleton& g) {
  if (p.dim == 0 || p.nodes() != g.size() || p.states.v.size() != g.size() * p.dim ||
      p.states.b.size() != g.size() * p.dim || p.R.size() != 2 * g.edges.size() * p.dim * p.dim ||
      p.readout.W1.size() != 2 * p.dim)
    throw Error(ErrorCode::ShapeMismatch,
                "parameters (nodes=" + std::to_string(p.nodes()) + ", directed edges=" +
                    std::to_string(p.directed_edges()) + ") do not fit graph (nodes=" + std::to_string(g.size()) +
                    ", edges=" + std::to_string(g.edges.size()) + ")");
}

/// v ~ U(-0.1, 0.1), b = 0, lambda = 1, R = I + U(-0.01, 0.01),
/// readout weights U(-0.5, 0.5) with zero biases.
inline ModelParams init_params(const NetworkSkeleton& g, std::size_t dim, std::uint64_t seed) {
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "embedding dimension must be >= 1");
  ModelParams p = zero_params(g, dim);
  Rng rng(seed);
  for (double& x : p.states.v) x = rng.uniform(-0.1, 0.1);
  std::fill(p.states.lambda.begin(), p.states.lambda.end(), 1.0);
  for (std::size_t m = 0; m < p.directed_edges(); ++m) {
    auto R = p.matrix(m);
    for (std::size_t r = 0; r < dim; ++r)
      for (std::size_t c = 0; c < dim; ++c) R[r * dim + c] = (r == c ? 1.0 : 0.0) + rng.uniform(-0.01, 0.01);
  }
  for (double& x : p.readout.W1) x = rng.uniform(-0.5, 0.5);
  for (double& x : p.readout.w2) x = rng.uniform(-0.5, 0.5);
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass

namespace detail {

// out += scale * R x
inline void add_matvec(std::span<const double> R, std::span<const double> x, double scale, std::span<double> out) {
  const std::size_t k = x.size();
  for (std::size_t r = 0; r < k; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < k; ++c) acc += R[r * k + c] * x[c];
    out[r] += scale * acc;
  }
}

// Neighbor mean plus bias, before the lambda scale.
inline std::vector<double> unscaled_estimate(const ModelParams& p, const NetworkSkeleton& g, EntityId i) {
  std::vector<double> s(p.dim, 0.0);
  const auto& nbrs = g.adjacency[i];
  if (!nbrs.empty()) {
    const double inv = 1.0 / static_cast<double>(nbrs.size());
    for (const auto& nb : nbrs) add_matvec(p.matrix(directed_index(g, nb.edge, i)), p.v(nb.node), inv, s);
  }
  auto b = p.b(i);
  for (std::size_t d = 0; d < p.dim; ++d) s[d] += b[d];
  return s;
}

}  // namespace detail

/// v_hat_i = lambda_i / |N(i)| * sum_j R_ij v_j + lambda_i b_i; an isolated
/// node yields lambda_i b_i.
inline std::vector<double> propagate(const ModelParams& p, const NetworkSkeleton& g, EntityId i) {
  auto s = detail::unscaled_estimate(p, g, i);
  for (double& x : s) x *= p.states.lambda[i];
  return s;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct ReadoutTrace {
  std::array<double, 2> hidden{};
  double output = 0.0;
};

inline ReadoutTrace readout_trace(const Readout& s, std::span<const double> x) {
  ReadoutTrace t;
  const std::size_t k = x.size();
  double z = s.c2;
  for (std::size_t h = 0; h < 2; ++h) {
    double a = s.c1[h];
    for (std::size_t d = 0; d < k; ++d) a += s.W1[h * k + d] * x[d];
    t.hidden[h] = sigmoid(a);
    z += s.w2[h] * t.hidden[h];
  }
  t.output = sigmoid(z);
  return t;
}

inline double readout(const Readout& s, std::span<const double> x) { return readout_trace(s, x).output; }

inline double predict_node(const ModelParams& p, const NetworkSkeleton& g, EntityId i) {
  return readout(p.readout, propagate(p, g, i));
}

// ---------------------------------------------------------------------------
// Loss

struct NodeObservation {
  EntityId node = 0;
  double value = 0.0;

  bool operator==(const NodeObservation&) const = default;
};

/// Observed, normalized measurements of one cell line on skeleton nodes.
struct CellObservations {
  std::string cell_line;
  std::vector<NodeObservation> genes;
  std::vector<NodeObservation> drugs;

  bool empty() const { return genes.empty() && drugs.empty(); }
};

/// What divides the chemical squared-error sum.
enum class ChemNormalizer { ObservedChemicals, ObservedGenes };

struct LossBreakdown {
  double l_gene = 0.0;
  double l_chem = 0.0;
  double beta = 0.0;
  double total = 0.0;
};


namespace detail {

inline double chem_normalizer(const CellObservations& obs, ChemNormalizer norm) {
  const std::size_t n = norm == ChemNormalizer::ObservedChemicals ? obs.drugs.size() : obs.genes.size();
  return n ? 1.0 / static_cast<double>(n) : 0.0;
}

// Squared error of one observed node; when `grad` is given, adds
// `scale` times the error's partial derivatives into it.
inline double accumulate_term(const ModelParams& p, const NetworkSkeleton& g, const NodeObservation& o,
                              double scale, Gradients* grad) {
  const std::size_t k = p.dim;
  const EntityId i = o.node;
  const auto s = unscaled_estimate(p, g, i);
  const double lam = p.states.lambda[i];
  std::vector<double> x(k);
  for (std::size_t d = 0; d < k; ++d) x[d] = lam * s[d];
  const auto t = readout_trace(p.readout, x);
  const double r = t.output - o.value;
  if (!grad) return r * r;

  // Backward through the readout.
  const double dz = scale * 2.0 * r * t.output * (1.0 - t.output);
  std::array<double, 2> da{};
  auto& gr = grad->readout;
  gr.c2 += dz;
  for (std::size_t h = 0; h < 2; ++h) {
    gr.w2[h] += dz * t.hidden[h];
    da[h] = dz * p.readout.w2[h] * t.hidden[h] * (1.0 - t.hidden[h]);
    gr.c1[h] += da[h];
    for (std::size_t d = 0; d < k; ++d) gr.W1[h * k + d] += da[h] * x[d];
  }
  std::vector<double> dx(k, 0.0);
  for (std::size_t d = 0; d < k; ++d)
    for (std::size_t h = 0; h < 2; ++h) dx[d] += p.readout.W1[h * k + d] * da[h];

  // Backward through propagation.
  double dlam = 0.0;
  for (std::size_t d = 0; d < k; ++d) dlam += dx[d] * s[d];
  grad->states.lambda[i] += dlam;
  auto db = grad->b(i);
  for (std::size_t d = 0; d < k; ++d) db[d] += lam * dx[d];
  const auto& nbrs = g.adjacency[i];
  if (nbrs.empty()) return r * r;
  const double c = lam / static_cast<double>(nbrs.size());
  for (const auto& nb : nbrs) {
    const std::size_t m = directed_index(g, nb.edge, i);
    const auto R = p.matrix(m);
    const auto vj = p.v(nb.node);
    auto dR = grad->matrix(m);
    auto dv = grad->v(nb.node);
    for (std::size_t row = 0; row < k; ++row)
      for (std::size_t col = 0; col < k; ++col) {
        dR[row * k + col] += c * dx[row] * vj[col];
        dv[col] += c * R[row * k + col] * dx[row];
      }
  }
  return r * r;
}

// `grad`, when given, must be zeroed and shaped like `p`.
inline LossBreakdown loss_impl(const ModelParams& p, const NetworkSkeleton& g, const CellObservations& obs,
                               double beta, ChemNormalizer norm, Gradients* grad) {
  const double gene_w = obs.genes.empty() ? 0.0 : 1.0 / static_cast<double>(obs.genes.size());
  const double chem_w = chem_normalizer(obs, norm);
  double gene_sum = 0.0, chem_sum = 0.0;
  for (const auto& o : obs.genes) gene_sum += accumulate_term(p, g, o, gene_w, grad);
  for (const auto& o : obs.drugs) chem_sum += accumulate_term(p, g, o, beta * chem_w, grad);
  LossBreakdown out;
  out.l_gene = gene_w * gene_sum;
  out.l_chem = chem_w * chem_sum;
  out.beta = beta;
  out.total = out.l_gene + beta * out.l_chem;
  return out;
}

}  // namespace detail

/// L = L_gene + beta * L_chem, each the mean squared error of
/// readout(propagate(i)) against the observation over observed nodes of
/// that class. An empty class contributes 0.
inline LossBreakdown loss(const ModelParams& p, const NetworkSkeleton& g, const CellObservations& obs, double beta,
                          ChemNormalizer norm = ChemNormalizer::ObservedChemicals) {
  return detail::loss_impl(p, g, obs, beta, norm, nullptr);
}

struct LossAndGradients {
  LossBreakdown loss;
  Gradients grad;
};

inline LossAndGradients loss_and_grad(const ModelParams& p, const NetworkSkeleton& g, const CellObservations& obs,
                                      double beta, ChemNormalizer norm = ChemNormalizer::ObservedChemicals) {
  LossAndGradients out{{}, zeros_like(p)};
  out.loss = detail::loss_impl(p, g, obs, beta, norm, &out.grad);
  return out;
}

/// Exact partial derivatives of loss(...).total with respect to every
/// parameter.
inline Gradients grad(const ModelParams& p, const NetworkSkeleton& g, const CellObservations& obs, double beta,
                      ChemNormalizer norm = ChemNormalizer::ObservedChemicals) {
  return loss_and_grad(p, g, obs, beta, norm).grad;
}

/// Central differences (L(x+h) - L(x-h)) / 2h per scalar, using loss() only.
inline Gradients finite_diff_grad(const ModelParams& p, const NetworkSkeleton& g, const CellObservations& obs,
                                  double beta, double h, ChemNormalizer norm = ChemNormalizer::ObservedChemicals) {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "step must be > 0");
  ModelParams work = p;
  Gradients out = zeros_like(p);
  std::vector<std::span<double>> params, grads;
  for_each_block(work, [&](std::span<double> s) { params.push_back(s); });
  for_each_block(out, [&](std::span<double> s) { grads.push_back(s); });
  for (std::size_t blk = 0; blk < params.size(); ++blk) {
    for (std::size_t j = 0; j < params[blk].size(); ++j) {
      double& x = params[blk][j];
      const double saved = x;
      x = saved + h;
      const double up = loss(work, g, obs, beta, norm).total;
      x = saved - h;
      const double down = loss(work, g, obs, beta, norm).total;
      x = saved;
      grads[blk][j] = (up - down) / (2.0 * h);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter file
//
//   relprop-params v1 k=<k> nodes=<n> edges=<m>
//   N <id> <lambda> <v...> <b...>
//   E <i> <j> <R row-major...>      one per direction; i aggregates j
//   W1 <2k values>
//   c1 <2 values>
//   w2 <2 values>
//   c2 <value>

inline void write_params(std::ostream& os, const ModelParams& p, const NetworkSkeleton& g) {
  check_shape(p, g);
  const std::size_t k = p.dim;
  os << "relprop-params v1 k=" << k << " nodes=" << p.nodes() << " edges=" << g.edges.size() << '\n';
  auto put = [&](std::span<const double> xs) {
    for (double x : xs) os << ' ' << text::format_double(x);
  };
  for (EntityId i = 0; i < p.nodes(); ++i) {
    os << "N " << i << ' ' << text::format_double(p.states.lambda[i]);
    put(p.v(i));
    put(p.b(i));
    os << '\n';
  }
  for (std::uint32_t e = 0; e < g.edges.size(); ++e) {
    for (EntityId at : {g.edges[e].a, g.edges[e].b}) {
      os << "E " << at << ' ' << g.edges[e].other(at);
      put(p.matrix(directed_index(g, e, at)));
      os << '\n';
    }
  }
  os << "W1";
  put(p.readout.W1);
  os << "\nc1";
  put(p.readout.c1);
  os << "\nw2";
  put(p.readout.w2);
  os << "\nc2 " << text::format_double(p.readout.c2) << '\n';
}

inline ModelParams read_params(std::istream& in, const NetworkSkeleton& g, const std::string& source = "<params>") {
  std::string line;
  std::size_t line_no = 1;
  auto bad = [&](const std::string& what) { return Error(ErrorCode::MalformedRow, what, source, line_no); };
  if (!std::getline(in, line) || !line.starts_with("relprop-params v1 ")) throw bad("expected relprop-params v1 header");
  std::size_t k = 0, n = 0, m = 0;
  if (std::sscanf(line.c_str(), "relprop-params v1 k=%zu nodes=%zu edges=%zu", &k, &n, &m) != 3 || k == 0)
    throw bad("malformed header");
  if (n != g.size() || m != g.edges.size())
    throw Error(ErrorCode::ShapeMismatch, "parameter file does not match graph", source, 1);
  ModelParams p = zero_params(g, k);

  auto numbers = [&](std::istringstream& ss, std::size_t count) {
    std::vector<double> xs;
    std::string tok;
    while (ss >> tok) {
      auto v = text::parse_double(tok);
      if (!v) throw bad("bad number '" + tok + "'");
      xs.push_back(*v);
    }
    if (xs.size() != count) throw bad("expected " + std::to_string(count) + " values");
    return xs;
  };

  std::size_t node_lines = 0, edge_lines = 0;
  bool w1 = false, c1 = false, w2 = false, c2 = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "N") {
      EntityId i = 0;
      if (!(ss >> i) || i != node_lines) throw bad("node records out of order");
      auto xs = numbers(ss, 1 + 2 * k);
      p.states.lambda[i] = xs[0];
      std::copy(xs.begin() + 1, xs.begin() + 1 + k, p.v(i).begin());
      std::copy(xs.begin() + 1 + k, xs.end(), p.b(i).begin());
      ++node_lines;
    } else if (tag == "E") {
      EntityId i = 0, j = 0;
      if (!(ss >> i >> j)) throw bad("bad edge record");
      const std::uint32_t e = static_cast<std::uint32_t>(edge_lines / 2);
      if (e >= g.edges.size()) throw Error(ErrorCode::ShapeMismatch, "too many edge records", source, line_no);
      const EntityId at = edge_lines % 2 == 0 ? g.edges[e].a : g.edges[e].b;
      if (i != at || j != g.edges[e].other(at))
        throw Error(ErrorCode::ShapeMismatch, "edge record does not match graph", source, line_no);
      auto xs = numbers(ss, k * k);
      std::copy(xs.begin(), xs.end(), p.matrix(directed_index(g, e, at)).begin());
      ++edge_lines;
    } else if (tag == "W1") {
      p.readout.W1 = numbers(ss, 2 * k);
      w1 = true;
    } else if (tag == "c1") {
      auto xs = numbers(ss, 2);
      p.readout.c1 = {xs[0], xs[1]};
      c1 = true;
    } else if (tag == "w2") {
      auto xs = numbers(ss, 2);
      p.readout.w2 = {xs[0], xs[1]};
      w2 = true;
    } else if (tag == "c2") {
      p.readout.c2 = numbers(ss, 1)[0];
      c2 = true;
    } else {
      throw bad("unknown record '" + tag + "'");
    }
  }
  if (node_lines != n || edge_lines != 2 * m || !w1 || !c1 || !w2 || !c2)
    throw Error(ErrorCode::ShapeMismatch, "parameter file is incomplete", source);
  return p;
}

}  // namespace relprop
