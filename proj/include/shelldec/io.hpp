#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "shelldec/shell.hpp"

namespace shelldec {

/// Parse error in one of the text formats; `line()` is 1-based (0 when the
/// problem is not tied to a line).
class FormatError : public std::runtime_error {
 public:
  FormatError(std::size_t line, const std::string& what)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Number form used by every writer: scientific with 17 significant
/// digits, so doubles survive a write/read cycle unchanged.
std::string format_number(double value);

/// Column data file: '#' header lines, then rows "r f_1 ... f_k". The last
/// header line, when it has one token per column, names the columns.
struct CurveTable {
  std::vector<std::string> comments;  ///< header lines without the '#'
  std::vector<double> r;
  std::vector<std::string> labels;             ///< one per value column
  std::vector<std::vector<double>> columns;    ///< columns[k][n]

  std::size_t column_count() const { return columns.size(); }
  SampledCurve curve(std::size_t k) const;
  /// Index of the column named `label`, or column_count() if absent.
  std::size_t find(const std::string& label) const;
};

CurveTable read_curve_table(std::istream& in);
CurveTable read_curve_table_file(const std::string& path);
void write_curve_table(std::ostream& out, const CurveTable& table);
void write_curve_table_file(const std::string& path, const CurveTable& table);

/// Labels are written as single tokens; whitespace becomes '_'.
std::string sanitize_label(std::string label);

/// One block of a coefficient file.
struct CoefficientBlock {
  std::string label;
  std::string kind = "refined";  ///< "initial" or "refined"
  std::vector<ShellTerm> terms;
};

/// Coefficient file:
///   # comments
///   block <label> <initial|refined> <M>
///   R B C        (M rows)
std::vector<CoefficientBlock> read_coefficients(std::istream& in);
std::vector<CoefficientBlock> read_coefficients_file(const std::string& path);
void write_coefficients(std::ostream& out, const std::vector<CoefficientBlock>& blocks);
void write_coefficients_file(const std::string& path,
                             const std::vector<CoefficientBlock>& blocks);

/// Blocks for each label, preferring `kind` when a label has several.
std::vector<CoefficientBlock> select_blocks(const std::vector<CoefficientBlock>& blocks,
                                            const std::string& kind);

/// One "key = value" record of a parameter file.
struct ParamEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Reads key = value records; '#' starts a comment. Syntax errors throw
/// FormatError. Key validation is left to the caller.
std::vector<ParamEntry> read_param_file(std::istream& in);
std::vector<ParamEntry> read_param_file_path(const std::string& path);

}  // namespace shelldec
