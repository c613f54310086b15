#include "shelldec/expr.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

namespace shelldec {

struct Expression::Node {
  enum class Kind { number, variable, negate, binary, call };
  enum class Func { sin, cos, tan, exp, log, sqrt, abs };

  Kind kind = Kind::number;
  double value = 0.0;
  char op = 0;  // + - * / ^
  Func func = Func::sin;
  std::shared_ptr<const Node> left;
  std::shared_ptr<const Node> right;
};

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;

constexpr std::array<std::pair<std::string_view, Node::Func>, 7> kFunctions{{
    {"sin", Node::Func::sin},
    {"cos", Node::Func::cos},
    {"tan", Node::Func::tan},
    {"exp", Node::Func::exp},
    {"log", Node::Func::log},
    {"sqrt", Node::Func::sqrt},
    {"abs", Node::Func::abs},
}};

std::string_view func_name(Node::Func f) {
  for (const auto& [name, func] : kFunctions)
    if (func == f) return name;
  return "?";
}

NodePtr make_number(double v) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::number;
  n->value = v;
  return n;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  NodePtr parse() {
    skip_space();
    if (pos_ == text_.size()) throw ParseError(pos_, "empty expression");
    NodePtr root = parse_sum();
    skip_space();
    if (pos_ < text_.size()) {
      if (text_[pos_] == ')') throw ParseError(pos_, "unbalanced parenthesis");
      throw ParseError(pos_, std::string("unexpected character '") + text_[pos_] + "'");
    }
    return root;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
  }

  bool accept(std::string_view token) {
    skip_space();
    if (text_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }

  char peek() {
    skip_space();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  NodePtr binary(char op, NodePtr l, NodePtr r) {
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::binary;
    n->op = op;
    n->left = std::move(l);
    n->right = std::move(r);
    return n;
  }

  NodePtr parse_sum() {
    NodePtr node = parse_product();
    for (;;) {
      const char c = peek();
      if (c != '+' && c != '-') return node;
      ++pos_;
      node = binary(c, node, parse_product());
    }
  }

  NodePtr parse_product() {
    NodePtr node = parse_unary();
    for (;;) {
      const char c = peek();
      if (c == '*' && text_.substr(pos_, 2) == "**") return node;
      if (c != '*' && c != '/') return node;
      ++pos_;
      node = binary(c, node, parse_unary());
    }
  }

  NodePtr parse_unary() {
    const char c = peek();
    if (c == '-') {
      ++pos_;
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::negate;
      n->left = parse_unary();
      return n;
    }
    if (c == '+') {
      ++pos_;
      return parse_unary();
    }
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    skip_space();
    if (accept("**") || accept("^")) return binary('^', base, parse_unary());
    return base;
  }

  NodePtr parse_primary() {
    skip_space();
    if (pos_ == text_.size()) {
      if (depth_ > 0) throw ParseError(pos_, "unbalanced parenthesis");
      throw ParseError(pos_, "missing operand");
    }
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      ++depth_;
      NodePtr inner = parse_sum();
      expect_close();
      --depth_;
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_name();
    if (c == ')') throw ParseError(pos_, "missing operand");
    throw ParseError(pos_, std::string("unexpected character '") + c + "'");
  }

  void expect_close() {
    skip_space();
    if (pos_ == text_.size()) throw ParseError(pos_, "unbalanced parenthesis");
    if (text_[pos_] != ')')
      throw ParseError(pos_, std::string("expected ')' but found '") + text_[pos_] + "'");
    ++pos_;
  }

  NodePtr parse_number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
        ++pos_;
    };
    digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      digits();
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        digits();
      } else {
        pos_ = save;
      }
    }
    double v = 0.0;
    const auto res = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != text_.data() + pos_)
      throw ParseError(start, "malformed number");
    return make_number(v);
  }

  NodePtr parse_name() {
    const std::size_t start = pos_;
    auto ident = [&] {
      const std::size_t s = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      return text_.substr(s, pos_ - s);
    };
    std::string_view name = ident();
    if (name == "math" && pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      name = ident();
    }
    if (name == "x") {
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::variable;
      return n;
    }
    if (name == "pi") return make_number(std::numbers::pi);
    for (const auto& [fname, func] : kFunctions) {
      if (name != fname) continue;
      skip_space();
      if (pos_ == text_.size() || text_[pos_] != '(')
        throw ParseError(pos_, "expected '(' after " + std::string(fname));
      ++pos_;
      ++depth_;
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::call;
      n->func = func;
      n->left = parse_sum();
      expect_close();
      --depth_;
      return n;
    }
    throw ParseError(start, "unknown identifier '" + std::string(name) + "'");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int depth_ = 0;
};

double eval_node(const Node& n, double x) {
  switch (n.kind) {
    case Node::Kind::number: return n.value;
    case Node::Kind::variable: return x;
    case Node::Kind::negate: return -eval_node(*n.left, x);
    case Node::Kind::binary: {
      const double a = eval_node(*n.left, x);
      const double b = eval_node(*n.right, x);
      switch (n.op) {
        case '+': return a + b;
        case '-': return a - b;
        case '*': return a * b;
        case '/': return a / b;
        case '^': return std::pow(a, b);
      }
      break;
    }
    case Node::Kind::call: {
      const double a = eval_node(*n.left, x);
      switch (n.func) {
        case Node::Func::sin: return std::sin(a);
        case Node::Func::cos: return std::cos(a);
        case Node::Func::tan: return std::tan(a);
        case Node::Func::exp: return std::exp(a);
        case Node::Func::log: return std::log(a);
        case Node::Func::sqrt: return std::sqrt(a);
        case Node::Func::abs: return std::abs(a);
      }
      break;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

void print_node(const Node& n, std::string& out) {
  switch (n.kind) {
    case Node::Kind::number: {
      // pi and every other literal print as round-trip decimals.
      std::array<char, 64> buf{};
      const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), n.value);
      out.append(buf.data(), res.ptr);
      return;
    }
    case Node::Kind::variable: out += 'x'; return;
    case Node::Kind::negate:
      out += "(-";
      print_node(*n.left, out);
      out += ')';
      return;
    case Node::Kind::binary:
      out += '(';
      print_node(*n.left, out);
      out += ' ';
      out += n.op;
      out += ' ';
      print_node(*n.right, out);
      out += ')';
      return;
    case Node::Kind::call:
      out += func_name(n.func);
      out += '(';
      print_node(*n.left, out);
      out += ')';
      return;
  }
}

}  // namespace

Expression Expression::parse(std::string_view text) {
  return Expression(Parser(text).parse());
}

double Expression::evaluate(double x) const { return eval_node(*root_, x); }

std::string Expression::to_string() const {
  std::string out;
  print_node(*root_, out);
  return out;
}

SampledCurve sample(const Expression& expr, const SampleGrid& grid,
                    std::optional<double> origin_value, std::string label) {
  if (!(grid.step > 0.0) || !(grid.r_max > 0.0))
    throw std::invalid_argument("sample grid needs a positive extent and step");
  const auto count =
      static_cast<std::size_t>(std::floor(grid.r_max / grid.step + 1e-9)) + 1;
  SampledCurve curve = SampledCurve::regular(grid.step, count, std::move(label));
  for (std::size_t n = 0; n < count; ++n) {
    const double r = curve.r()[n];
    double v = expr.evaluate(r);
    if (!std::isfinite(v)) {
      if (n == 0 && origin_value) {
        v = *origin_value;
      } else {
        char buf[96];
        std::snprintf(buf, sizeof buf, "expression is not finite at x = %.17g", r);
        throw std::domain_error(buf);
      }
    }
    curve.f()[n] = v;
  }
  return curve;
}

}  // namespace shelldec
