#include "shelldec/io.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace shelldec {

namespace {

std::vector<std::string> split(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> tokens;
  for (std::string t; in >> t;) tokens.push_back(t);
  return tokens;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_double(const std::string& token, std::size_t line) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = first + token.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last)
    throw FormatError(line, "malformed number '" + token + "'");
  return value;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", value);
  return buf;
}

std::string sanitize_label(std::string label) {
  for (char& c : label)
    if (std::isspace(static_cast<unsigned char>(c))) c = '_';
  if (label.empty()) label = "curve";
  return label;
}

SampledCurve CurveTable::curve(std::size_t k) const {
  if (k >= columns.size()) throw std::out_of_range("curve column out of range");
  return SampledCurve(r, columns[k], k < labels.size() ? labels[k] : std::string());
}

std::size_t CurveTable::find(const std::string& label) const {
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k] == label) return k;
  return columns.size();
}

CurveTable read_curve_table(std::istream& in) {
  CurveTable table;
  std::vector<std::string> headers;
  std::size_t width = 0;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    const std::string body = trim(text);
    if (body.empty()) continue;
    if (body.front() == '#') {
      if (!table.r.empty())
        throw FormatError(line, "header line after the first data row");
      headers.push_back(body.substr(1));
      continue;
    }
    const std::vector<std::string> tokens = split(body);
    if (width == 0) {
      width = tokens.size();
      table.columns.assign(width - 1, {});
    } else if (tokens.size() != width) {
      throw FormatError(line, "expected " + std::to_string(width) + " columns, found " +
                                  std::to_string(tokens.size()));
    }
    table.r.push_back(parse_double(tokens[0], line));
    for (std::size_t k = 1; k < width; ++k)
      table.columns[k - 1].push_back(parse_double(tokens[k], line));
  }
  if (table.r.empty()) throw FormatError(0, "no data rows");

  if (!headers.empty()) {
    const std::vector<std::string> names = split(headers.back());
    if (names.size() == width) {
      table.labels.assign(names.begin() + 1, names.end());
      headers.pop_back();
    }
  }
  if (table.labels.empty())
    for (std::size_t k = 0; k + 1 < width; ++k)
      table.labels.push_back("f" + std::to_string(k + 1));
  for (std::string& h : headers) {
    if (!h.empty() && h.front() == ' ') h.erase(0, 1);
  }
  table.comments = std::move(headers);
  return table;
}

CurveTable read_curve_table_file(const std::string& path) {
  std::ifstream in = open_in(path);
  return read_curve_table(in);
}

void write_curve_table(std::ostream& out, const CurveTable& table) {
  for (const std::string& c : table.comments) out << "# " << c << '\n';
  out << "# r";
  for (const std::string& l : table.labels) out << ' ' << sanitize_label(l);
  out << '\n';
  for (std::size_t n = 0; n < table.r.size(); ++n) {
    out << format_number(table.r[n]);
    for (const auto& col : table.columns) out << ' ' << format_number(col.at(n));
    out << '\n';
  }
}

void write_curve_table_file(const std::string& path, const CurveTable& table) {
  std::ofstream out = open_out(path);
  write_curve_table(out, table);
  finish(out, path);
}

std::vector<CoefficientBlock> read_coefficients(std::istream& in) {
  std::vector<CoefficientBlock> blocks;
  std::size_t pending = 0;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    const auto hash = text.find('#');
    if (hash != std::string::npos) text.erase(hash);
    const std::vector<std::string> tokens = split(text);
    if (tokens.empty()) continue;

    if (tokens[0] == "block") {
      if (pending != 0)
        throw FormatError(line, "block '" + blocks.back().label + "' is missing " +
                                    std::to_string(pending) + " rows");
      if (tokens.size() != 4)
        throw FormatError(line, "block header must be: block <label> <kind> <M>");
      CoefficientBlock block;
      block.label = tokens[1];
      block.kind = tokens[2];
      if (block.kind != "initial" && block.kind != "refined")
        throw FormatError(line, "block kind must be 'initial' or 'refined'");
      const double m = parse_double(tokens[3], line);
      if (m < 0 || m != static_cast<double>(static_cast<std::size_t>(m)))
        throw FormatError(line, "term count must be a non-negative integer");
      pending = static_cast<std::size_t>(m);
      blocks.push_back(std::move(block));
      continue;
    }
    if (pending == 0) throw FormatError(line, "coefficient row outside a block");
    if (tokens.size() != 3) throw FormatError(line, "expected 3 values: R B C");
    ShellTerm t{parse_double(tokens[0], line), parse_double(tokens[1], line),
                parse_double(tokens[2], line)};
    try {
      validate_term(t);
    } catch (const std::invalid_argument& e) {
      throw FormatError(line, e.what());
    }
    blocks.back().terms.push_back(t);
    --pending;
  }
  if (pending != 0)
    throw FormatError(line, "block '" + blocks.back().label + "' is missing " +
                                std::to_string(pending) + " rows");
  return blocks;
}

std::vector<CoefficientBlock> read_coefficients_file(const std::string& path) {
  std::ifstream in = open_in(path);
  return read_coefficients(in);
}

void write_coefficients(std::ostream& out, const std::vector<CoefficientBlock>& blocks) {
  out << "# shell decomposition coefficients: R B C per term\n";
  for (const CoefficientBlock& b : blocks) {
    out << "block " << sanitize_label(b.label) << ' ' << b.kind << ' ' << b.terms.size()
        << '\n';
    for (const ShellTerm& t : b.terms)
      out << format_number(t.radius) << ' ' << format_number(t.blur) << ' '
          << format_number(t.weight) << '\n';
  }
}

void write_coefficients_file(const std::string& path,
                             const std::vector<CoefficientBlock>& blocks) {
  std::ofstream out = open_out(path);
  write_coefficients(out, blocks);
  finish(out, path);
}

std::vector<CoefficientBlock> select_blocks(const std::vector<CoefficientBlock>& blocks,
                                            const std::string& kind) {
  std::vector<CoefficientBlock> out;
  std::map<std::string, std::size_t> index;
  for (const CoefficientBlock& b : blocks) {
    auto it = index.find(b.label);
    if (it == index.end()) {
      index.emplace(b.label, out.size());
      out.push_back(b);
    } else if (b.kind == kind && out[it->second].kind != kind) {
      out[it->second] = b;
    }
  }
  return out;
}

std::vector<ParamEntry> read_param_file(std::istream& in) {
  std::vector<ParamEntry> entries;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    const auto hash = text.find('#');
    if (hash != std::string::npos) text.erase(hash);
    const std::string body = trim(text);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw FormatError(line, "expected 'key = value'");
    ParamEntry e{trim(body.substr(0, eq)), trim(body.substr(eq + 1)), line};
    if (e.key.empty()) throw FormatError(line, "missing key before '='");
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<ParamEntry> read_param_file_path(const std::string& path) {
  std::ifstream in = open_in(path);
  return read_param_file(in);
}

}  // namespace shelldec
