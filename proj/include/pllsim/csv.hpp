#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "integrator.hpp"
#include "lock_analysis.hpp"
#include "range_estimator.hpp"

namespace pllsim {

// ---------------------------------------------------------------------------
// Table model
// ---------------------------------------------------------------------------

// Cells are pre-rendered strings so one writer covers numeric tables and the
// verdict column of domain grids alike.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

/// Numbers are rendered with 9 significant digits, '.' decimal separator
/// (snprintf under the "C" locale; the library never calls setlocale).
[[nodiscard]] inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_csv(std::ostream& out, const CsvTable& table) {
  if (table.columns.empty() || table.rows.empty())
    throw EmptyTableError("refusing to write an empty table");
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    if (i) out << ',';
    out << table.columns[i];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size())
      throw ParameterError("csv row width does not match the header");
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  }
  if (!out) throw IoError("csv stream write failed");
}

inline void write_csv_file(const std::string& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);  // keep '\n' endings everywhere
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_csv(out, table);
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

/// Strict reader for the files this library writes: comma separation, no
/// quoting, first line is the header.  Used by tests for round-trips and by
/// the plotting template.
[[nodiscard]] inline CsvTable parse_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line)) throw EmptyTableError("csv input has no header line");
  table.columns = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    table.rows.push_back(split(line));
    if (table.rows.back().size() != table.columns.size())
      throw IoError("csv row width does not match the header");
  }
  if (table.rows.empty()) throw EmptyTableError("csv input has no data rows");
  return table;
}

// ---------------------------------------------------------------------------
// Table builders (pinned headers)
// ---------------------------------------------------------------------------

[[nodiscard]] inline CsvTable trajectory_table(const Trajectory& traj) {
  CsvTable t;
  t.columns = {"t", "x", "theta_e"};
  t.rows.reserve(traj.samples.size());
  for (const auto& s : traj.samples)
    t.rows.push_back({format_number(s.t), format_number(s.x), format_number(s.theta_e)});
  return t;
}

[[nodiscard]] inline CsvTable sweep_table(const std::vector<SweepRow>& rows) {
  CsvTable t;
  t.columns = {"axis", "family", "omega_lockin", "omega_normalized"};
  t.rows.reserve(rows.size());
  for (const auto& r : rows)
    t.rows.push_back({format_number(r.axis), format_number(r.family),
                      format_number(r.omega_lockin), format_number(r.omega_normalized)});
  return t;
}

[[nodiscard]] inline const char* verdict_name(DomainVerdict v) {
  switch (v) {
    case DomainVerdict::Inside: return "inside";
    case DomainVerdict::Outside: return "outside";
    default: return "undecided";
  }
}

[[nodiscard]] inline CsvTable domain_table(const std::vector<DomainGridRow>& rows) {
  CsvTable t;
  t.columns = {"theta", "x", "verdict"};
  t.rows.reserve(rows.size());
  for (const auto& r : rows)
    t.rows.push_back({format_number(r.theta), format_number(r.x), verdict_name(r.verdict)});
  return t;
}

/// Separatrix branches flattened into one table; `branch` keys the curves.
[[nodiscard]] inline const char* branch_name(SeparatrixBranch b) {
  switch (b) {
    case SeparatrixBranch::StableUpper: return "stable_upper";
    case SeparatrixBranch::StableLower: return "stable_lower";
    case SeparatrixBranch::UnstableLeft: return "unstable_left";
    default: return "unstable_right";
  }
}

[[nodiscard]] inline CsvTable separatrix_table(const std::vector<Separatrix>& branches) {
  CsvTable t;
  t.columns = {"branch", "theta", "x"};
  for (const auto& b : branches)
    for (const auto& p : b.curve)
      t.rows.push_back({branch_name(b.branch), format_number(p.theta_e), format_number(p.x)});
  return t;
}

[[nodiscard]] inline CsvTable equilibria_table(const std::vector<Equilibrium>& eqs) {
  CsvTable t;
  t.columns = {"theta",           "x",
               "stability",       "lambda1_re",
               "lambda1_im",      "lambda2_re",
               "lambda2_im",      "degenerate"};
  for (const auto& eq : eqs)
    t.rows.push_back({format_number(eq.state.theta_e), format_number(eq.state.x),
                      eq.stability == Stability::Stable ? "stable" : "saddle",
                      format_number(eq.lambda1.real()), format_number(eq.lambda1.imag()),
                      format_number(eq.lambda2.real()), format_number(eq.lambda2.imag()),
                      eq.degenerate ? "1" : "0"});
  return t;
}

}  // namespace pllsim
