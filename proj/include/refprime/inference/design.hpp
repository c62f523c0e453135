#pragma once

#include <map>
#include <string>
#include <vector>

#include "refprime/coding.hpp"

namespace refprime {

// A term is a set of predictor symbols; {} is the intercept, {"QtypeC"} a
// main effect, {"QtypeC","PC"} their interaction.
using TermDescriptor = std::vector<std::string>;

std::string term_name(const TermDescriptor& term);

using CodingMap = std::map<std::string, std::map<std::string, double>>;

struct GroupingSpec {
  std::string factor;  // "participant" or "item"
  std::vector<TermDescriptor> slope_terms;  // intercept implied
  bool correlated = true;
};

struct ModelSpec {
  std::vector<TermDescriptor> fixed_terms;  // intercept implied, order preserved
  CodingMap coding_map;
  std::vector<GroupingSpec> groupings;
  std::string response = "Rc";
};

struct GroupBlock {
  std::string factor;
  std::vector<std::string> level_ids;      // sorted; index = level
  std::vector<int> row_level;              // n
  std::vector<double> U;                   // n x q, row-major
  std::vector<std::string> col_names;      // q, "Intercept" first
  bool correlated = true;

  int q() const { return static_cast<int>(col_names.size()); }
  int m() const { return static_cast<int>(level_ids.size()); }
  double u(int row, int col) const { return U[static_cast<size_t>(row) * col_names.size() + col]; }
};

struct DesignMatrix {
  int n = 0;
  int p = 0;
  std::vector<double> X;                   // n x p, row-major
  std::vector<std::string> col_names;      // p, "Intercept" first
  std::vector<int> y;                      // n, binary
  std::vector<GroupBlock> blocks;
  std::vector<std::string> row_participant;
  std::vector<std::string> row_item;

  double x(int row, int col) const { return X[static_cast<size_t>(row) * p + col]; }
};

// Coded value of one predictor symbol for one record.
double coded_value(const TrialRecord& record, const std::string& symbol, const CodingMap& coding);

// JSON form of a model specification (fixed terms as "A:B" strings, coding
// maps, grouping blocks); the three built-in experiment bindings round-trip
// through it, and custom specs can be loaded from a file.
std::string model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json_text(const std::string& text);
ModelSpec load_model_spec(const std::string& path);

// Rows are the coded constants and their products, in the order
// [intercept, main effects, interactions] given by spec.fixed_terms.
// Records must be critical-phase, non-excluded, with referent codes.
DesignMatrix build_design_matrix(const std::vector<TrialRecord>& records, const ModelSpec& spec);

}  // namespace refprime
