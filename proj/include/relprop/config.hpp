#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>

#include "relprop/error.hpp"
#include "relprop/text.hpp"
#include "relprop/train.hpp"

namespace relprop {

/// Everything a CLI run resolves: training settings plus evaluation knobs.
struct RunConfig {
  TrainingConfig train;
  double test_fraction = 0.2;
  std::size_t khop = 2;
  double l1_strength = 0.01;
  std::size_t logreg_max_iters = 10000;
  std::string graph_path;
  std::string panel_path;
  std::string out_dir;
};

namespace detail {

inline bool parse_bool(std::string_view v, const std::string& source, std::size_t line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorCode::InvalidArgument, "expected a boolean, got '" + std::string(v) + "'", source, line);
}

inline ChemNormalizer parse_chem_normalizer(std::string_view v, const std::string& source, std::size_t line) {
  if (v == "chemicals") return ChemNormalizer::ObservedChemicals;
  if (v == "genes") return ChemNormalizer::ObservedGenes;
  throw Error(ErrorCode::InvalidArgument, "chem_normalizer must be 'chemicals' or 'genes'", source, line);
}

inline std::string_view to_string(ChemNormalizer n) {
  return n == ChemNormalizer::ObservedChemicals ? "chemicals" : "genes";
}

}  // namespace detail

/// Applies one `key = value` setting. Unknown keys are rejected.
inline void set_config_value(RunConfig& c, std::string_view key, std::string_view value,
                             const std::string& source = "<config>", std::size_t line = 0) {
  auto num = [&] {
    auto v = text::parse_double(value);
    if (!v) throw Error(ErrorCode::InvalidArgument, "bad number for " + std::string(key), source, line);
    return *v;
  };
  auto count = [&] {
    auto v = text::parse_int<std::uint64_t>(value);
    if (!v) throw Error(ErrorCode::InvalidArgument, "bad integer for " + std::string(key), source, line);
    return *v;
  };
  auto& t = c.train;
  if (key == "k") t.dim = count();
  else if (key == "lr_gene") t.lr_gene = num();
  else if (key == "lr_chem") t.lr_chem = num();
  else if (key == "lr_edge") t.lr_edge = num();
  else if (key == "beta") t.beta = num();
  else if (key == "epochs") t.epochs = count();
  else if (key == "inner_iters") t.inner_iters = count();
  else if (key == "seed") t.seed = count();
  else if (key == "predict_threshold") t.predict_threshold = num();
  else if (key == "calibrate_thresholds") t.calibrate_thresholds = detail::parse_bool(value, source, line);
  else if (key == "shuffle_cell_lines") t.shuffle_cell_lines = detail::parse_bool(value, source, line);
  else if (key == "chem_normalizer") t.chem_normalizer = detail::parse_chem_normalizer(value, source, line);
  else if (key == "threads") t.threads = count();
  else if (key == "test_fraction") c.test_fraction = num();
  else if (key == "khop") c.khop = count();
  else if (key == "l1_strength") c.l1_strength = num();
  else if (key == "logreg_max_iters") c.logreg_max_iters = count();
  else if (key == "graph") c.graph_path = std::string(value);
  else if (key == "panel") c.panel_path = std::string(value);
  else if (key == "out") c.out_dir = std::string(value);
  else throw Error(ErrorCode::InvalidArgument, "unknown config key '" + std::string(key) + "'", source, line);
}

/// Flat `key = value` lines; `#` starts a comment.
inline void read_config(std::istream& in, RunConfig& c, const std::string& source = "<config>") {
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view s = raw;
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = text::trim(s);
    if (s.empty()) continue;
    auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::InvalidArgument, "expected key = value", source, line);
    auto key = text::trim(s.substr(0, eq));
    auto value = text::trim(s.substr(eq + 1));
    if (key.empty()) throw Error(ErrorCode::InvalidArgument, "empty key", source, line);
    set_config_value(c, key, value, source, line);
  }
}

inline void write_config(std::ostream& os, const RunConfig& c, std::string_view prefix = "") {
  const auto& t = c.train;
  auto line = [&](std::string_view k, const std::string& v) { os << prefix << k << " = " << v << '\n'; };
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  line("k", std::to_string(t.dim));
  line("lr_gene", text::format_double(t.lr_gene));
  line("lr_chem", text::format_double(t.lr_chem));
  line("lr_edge", text::format_double(t.lr_edge));
  line("beta", text::format_double(t.beta));
  line("epochs", std::to_string(t.epochs));
  line("inner_iters", std::to_string(t.inner_iters));
  line("seed", std::to_string(t.seed));
  line("predict_threshold", text::format_double(t.predict_threshold));
  line("calibrate_thresholds", b(t.calibrate_thresholds));
  line("shuffle_cell_lines", b(t.shuffle_cell_lines));
  line("chem_normalizer", std::string(detail::to_string(t.chem_normalizer)));
  line("threads", std::to_string(t.threads));
  line("test_fraction", text::format_double(c.test_fraction));
  line("khop", std::to_string(c.khop));
  line("l1_strength", text::format_double(c.l1_strength));
  line("logreg_max_iters", std::to_string(c.logreg_max_iters));
  if (!c.graph_path.empty()) line("graph", c.graph_path);
  if (!c.panel_path.empty()) line("panel", c.panel_path);
  if (!c.out_dir.empty()) line("out", c.out_dir);
}

}  // namespace relprop
