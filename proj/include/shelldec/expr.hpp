#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "shelldec/shell.hpp"

namespace shelldec {

/// Parse failure with the 0-based character offset of the problem.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : std::runtime_error(what + " at offset " + std::to_string(offset)),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Immutable syntax tree of a function of x.
///
/// Grammar: literals, `x`, `pi`, + - * /, power (`^` or `**`,
/// right-associative), unary minus, parentheses and the functions
/// sin cos tan exp log sqrt abs. A `math.` prefix on names is accepted.
class Expression {
 public:
  struct Node;

  static Expression parse(std::string_view text);

  double evaluate(double x) const;
  /// Fully parenthesized text that parses back to the same tree.
  std::string to_string() const;

 private:
  explicit Expression(std::shared_ptr<const Node> root) : root_(std::move(root)) {}
  std::shared_ptr<const Node> root_;
};

struct SampleGrid {
  double r_max = 1.0;
  double step = 0.01;
};

/// Evaluates `expr` on r_n = n * step. A non-finite value at r = 0 is
/// replaced by `origin_value` when given; any other non-finite value
/// throws std::domain_error.
SampledCurve sample(const Expression& expr, const SampleGrid& grid,
                    std::optional<double> origin_value = std::nullopt,
                    std::string label = {});

}  // namespace shelldec
