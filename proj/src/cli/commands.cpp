#include "commands.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "shelldec/atoms.hpp"
#include "shelldec/decompose.hpp"
#include "shelldec/io.hpp"

#ifndef SHELLDEC_DATA_DIR
#define SHELLDEC_DATA_DIR "data"
#endif

namespace shelldec::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using KeyValues = std::map<std::string, std::string>;

struct KeySpec {
  const char* key;
  const char* help;
};

constexpr KeySpec kDecomposeKeys[] = {
    {"input", "curve file to decompose (mandatory)"},
    {"columns", "comma-separated column numbers (1-based) or labels; default all"},
    {"max_peaks", "maximal number of terms per curve"},
    {"eps_dec", "accuracy target"},
    {"eps_dec_mode", "relative (fraction of |f(0)|) or absolute"},
    {"eps_peak", "peak border threshold, fraction of |f(0)|"},
    {"eps_term", "term truncation threshold, fraction of |f(0)|"},
    {"protocol", "iterative, single_pass or refine_each"},
    {"coefficients", "output coefficient file (default <input>.coef)"},
    {"residual", "output residual curve file (default <input>.resid)"},
    {"range", "interval 'lo hi' on which the accuracy is enforced"},
    {"b_min", "lower bound for B (default 8 pi^2 h^2)"},
    {"c_min", "lower bound for |C|"},
    {"max_iterations", "minimizer iteration limit per refinement"},
    {"max_passes", "limit on search/refine passes"},
};

// Keys of the decomposition parameters that also tune cmd_resum.
constexpr KeySpec kRefineKeys[] = {
    {"eps_dec", "accuracy used to derive the |C| bound"},
    {"eps_dec_mode", "relative or absolute"},
    {"b_min", "lower bound for B"},
    {"c_min", "lower bound for |C|"},
    {"max_iterations", "minimizer iteration limit"},
    {"range", "interval 'lo hi' used for the refinement"},
};

double to_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const char* first = value.data();
  const char* last = first + value.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (value.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(v))
    throw UsageError(key + ": '" + value + "' is not a number");
  return v;
}

int to_int(const std::string& key, const std::string& value) {
  const double v = to_double(key, value);
  if (v != std::floor(v) || std::abs(v) > 1e9)
    throw UsageError(key + ": '" + value + "' is not an integer");
  return static_cast<int>(v);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a != std::string::npos) items.push_back(item.substr(a, b - a + 1));
  }
  return items;
}

std::pair<double, double> to_range(const std::string& value) {
  std::string text = value;
  for (char& c : text)
    if (c == ',' || c == ':') c = ' ';
  std::istringstream in(text);
  std::string lo, hi, extra;
  if (!(in >> lo >> hi) || (in >> extra))
    throw UsageError("range: expected two numbers 'lo hi', got '" + value + "'");
  return {to_double("range", lo), to_double("range", hi)};
}

// Applies the tuning keys shared by decompose and resum.
void apply_config(const KeyValues& kv, DecomposeConfig& config) {
  for (const auto& [key, value] : kv) {
    if (key == "max_peaks") config.max_peaks = to_int(key, value);
    else if (key == "eps_dec") config.eps_dec = to_double(key, value);
    else if (key == "eps_dec_mode") {
      if (value == "relative") config.eps_dec_relative = true;
      else if (value == "absolute") config.eps_dec_relative = false;
      else throw UsageError("eps_dec_mode must be 'relative' or 'absolute'");
    } else if (key == "eps_peak") config.eps_peak = to_double(key, value);
    else if (key == "eps_term") config.eps_term = to_double(key, value);
    else if (key == "protocol") {
      try {
        config.protocol = parse_protocol(value);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
    } else if (key == "range") config.range = to_range(value);
    else if (key == "b_min") config.b_min = to_double(key, value);
    else if (key == "c_min") config.c_min = to_double(key, value);
    else if (key == "max_iterations") config.max_iterations = to_int(key, value);
    else if (key == "max_passes") config.max_passes = to_int(key, value);
  }
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

template <std::size_t N>
void add_key_options(CLI::App* app, KeyValues& store, const KeySpec (&keys)[N]) {
  for (const KeySpec& spec : keys) {
    const std::string key = spec.key;
    app->add_option_function<std::string>(
        "--" + key, [&store, key](const std::string& v) { store[key] = v; }, spec.help);
  }
}

// Parameter-file records first, command-line flags override them.
template <std::size_t N>
KeyValues merge_params(const std::string& param_path, const KeyValues& flags,
                       const KeySpec (&keys)[N]) {
  KeyValues merged;
  if (!param_path.empty()) {
    std::vector<ParamEntry> entries;
    try {
      entries = read_param_file_path(param_path);
    } catch (const FormatError& e) {
      throw UsageError(param_path + ": " + e.what());
    }
    for (const ParamEntry& e : entries) {
      bool known = false;
      for (const KeySpec& spec : keys) known = known || e.key == spec.key;
      if (!known)
        throw UsageError(param_path + ": line " + std::to_string(e.line) +
                         ": unknown key '" + e.key + "'");
      merged[e.key] = e.value;
    }
  }
  for (const auto& [k, v] : flags) merged[k] = v;
  return merged;
}

std::vector<std::size_t> select_columns(const CurveTable& table, const KeyValues& kv) {
  std::vector<std::size_t> selected;
  const auto it = kv.find("columns");
  if (it == kv.end() || it->second == "all") {
    for (std::size_t k = 0; k < table.column_count(); ++k) selected.push_back(k);
  } else {
    for (const std::string& item : split_list(it->second)) {
      std::size_t k = table.find(item);
      if (k == table.column_count()) {
        std::size_t used = 0;
        unsigned long n = 0;
        try {
          n = std::stoul(item, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != item.size() || n < 1 || n > table.column_count())
          throw UsageError("columns: no column '" + item + "'");
        k = n - 1;
      }
      selected.push_back(k);
    }
  }
  if (selected.empty()) throw UsageError("no curve columns selected");
  return selected;
}

// Residual file layout shared by decompose, sum and resum.
struct ResidualColumn {
  std::string label;
  std::vector<double> input;
  std::vector<double> model;
};

CurveTable residual_table(const std::vector<double>& r,
                          const std::vector<ResidualColumn>& columns) {
  CurveTable table;
  table.comments.push_back("input, model and difference (input - model) per curve");
  table.r = r;
  for (const ResidualColumn& c : columns) {
    const std::string label = sanitize_label(c.label);
    std::vector<double> diff(r.size());
    for (std::size_t n = 0; n < r.size(); ++n) diff[n] = c.input[n] - c.model[n];
    table.labels.push_back(label + ".input");
    table.columns.push_back(c.input);
    table.labels.push_back(label + ".model");
    table.columns.push_back(c.model);
    table.labels.push_back(label + ".diff");
    table.columns.push_back(std::move(diff));
  }
  return table;
}

std::vector<double> model_values(const std::vector<ShellTerm>& terms,
                                 const SampledCurve& reference, double eps_term) {
  const double eps_abs =
      truncation_threshold(eps_term, terms, reference_scale(reference.f()));
  return evaluate_sum(terms, reference.r(), eps_abs);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n) m = std::max(m, std::abs(a[n] - b[n]));
  return m;
}

std::string fmt_sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(6) << v;
  return s.str();
}

std::string with_default(const KeyValues& kv, const std::string& key,
                         const std::string& fallback) {
  const auto it = kv.find(key);
  return it == kv.end() || it->second.empty() ? fallback : it->second;
}

int cmd_decompose(const KeyValues& kv, std::ostream& out) {
  const std::string input = with_default(kv, "input", "");
  if (input.empty()) throw UsageError("decompose: the input file is mandatory");
  DecomposeConfig config;
  apply_config(kv, config);

  const CurveTable table = read_curve_table_file(input);
  const std::vector<std::size_t> selected = select_columns(table, kv);

  std::vector<CoefficientBlock> blocks;
  std::vector<ResidualColumn> residuals;
  bool all_converged = true;
  for (std::size_t k : selected) {
    const SampledCurve curve = table.curve(k);
    const Decomposition d = decompose(curve, config);
    all_converged = all_converged && d.converged;
    blocks.push_back({curve.label(), "initial", d.initial_terms});
    blocks.push_back({curve.label(), "refined", d.terms});
    residuals.push_back({curve.label(), curve.f(), model_values(d.terms, curve, config.eps_term)});

    std::string range_text = "full grid";
    if (config.range) {
      range_text = "range [" + fmt_sci(curve.r()[d.resolved.range_first]) + ", " +
                   fmt_sci(curve.r()[d.resolved.range_last]) + "]";
    }
    out << "curve " << curve.label() << ": " << d.terms.size() << " terms, "
        << (d.converged ? "converged" : "NOT converged") << ", passes "
        << d.iterations_used << '\n'
        << "  max deviation, whole interval: " << fmt_sci(d.residual_max_full) << '\n'
        << "  max deviation, " << range_text << ": " << fmt_sci(d.residual_max_range)
        << " (target " << fmt_sci(d.resolved.eps_dec_abs) << ")\n";
  }
  write_coefficients_file(with_default(kv, "coefficients", input + ".coef"), blocks);
  write_curve_table_file(with_default(kv, "residual", input + ".resid"),
                         residual_table(table.r, residuals));
  return all_converged ? kConverged : kNotConverged;
}

struct SumOptions {
  std::string coefficients;
  std::string reference;
  std::string output;
  std::string kind = "refined";
  double eps_term = 1e-13;
  std::optional<double> r_max;
  std::optional<double> step;
};

// Shared tail of sum and resum: evaluate `blocks` and write the curves.
void write_sums(const std::vector<CoefficientBlock>& blocks, const SumOptions& opt,
                const CurveTable* reference, std::ostream& out) {
  if (opt.output.empty()) throw UsageError("--output is required");
  if (!(opt.eps_term >= 0.0)) throw UsageError("eps_term must be non-negative");
  if (reference) {
    std::vector<ResidualColumn> columns;
    for (const CoefficientBlock& b : blocks) {
      const std::size_t k = reference->find(b.label);
      if (k == reference->column_count())
        throw UsageError("reference file has no column '" + b.label + "'");
      const SampledCurve curve = reference->curve(k);
      ResidualColumn col{b.label, curve.f(), model_values(b.terms, curve, opt.eps_term)};
      out << "curve " << b.label << ": " << b.terms.size()
          << " terms, max deviation " << fmt_sci(max_abs_diff(col.input, col.model)) << '\n';
      columns.push_back(std::move(col));
    }
    write_curve_table_file(opt.output, residual_table(reference->r, columns));
    return;
  }

  if (!opt.r_max || !opt.step)
    throw UsageError("without --reference both --r_max and --step are required");
  if (!(*opt.step > 0.0) || !(*opt.r_max > 0.0))
    throw UsageError("grid extent and step must be positive");
  const auto count = static_cast<std::size_t>(std::floor(*opt.r_max / *opt.step + 1e-9)) + 1;
  const SampledCurve grid = SampledCurve::regular(*opt.step, count);
  CurveTable table;
  table.comments.push_back("model curves");
  table.r = grid.r();
  for (const CoefficientBlock& b : blocks) {
    const double eps_abs = truncation_threshold(opt.eps_term, b.terms);
    table.labels.push_back(b.label);
    table.columns.push_back(evaluate_sum(b.terms, grid.r(), eps_abs));
    out << "curve " << b.label << ": " << b.terms.size() << " terms\n";
  }
  write_curve_table_file(opt.output, table);
}

int cmd_sum(const SumOptions& opt, std::ostream& out) {
  if (opt.kind != "initial" && opt.kind != "refined")
    throw UsageError("--kind must be 'initial' or 'refined'");
  const auto blocks = select_blocks(read_coefficients_file(opt.coefficients), opt.kind);
  if (opt.reference.empty()) {
    write_sums(blocks, opt, nullptr, out);
  } else {
    const CurveTable reference = read_curve_table_file(opt.reference);
    write_sums(blocks, opt, &reference, out);
  }
  return kConverged;
}

int cmd_resum(const SumOptions& opt, bool do_refine, const KeyValues& kv,
              const std::string& coefficients_out, std::ostream& out) {
  if (opt.reference.empty()) throw UsageError("resum: --reference is required");
  if (opt.kind != "initial" && opt.kind != "refined")
    throw UsageError("--kind must be 'initial' or 'refined'");
  DecomposeConfig config;
  apply_config(kv, config);
  auto blocks = select_blocks(read_coefficients_file(opt.coefficients), opt.kind);
  const CurveTable reference = read_curve_table_file(opt.reference);

  if (do_refine) {
    std::vector<CoefficientBlock> written;
    for (CoefficientBlock& b : blocks) {
      const std::size_t k = reference.find(b.label);
      if (k == reference.column_count())
        throw UsageError("reference file has no column '" + b.label + "'");
      written.push_back({b.label, "initial", b.terms});
      if (!b.terms.empty()) {
        const RefineResult r = refine(reference.curve(k), b.terms, config);
        out << "curve " << b.label << ": refinement " << to_string(r.status) << ", score "
            << fmt_sci(r.score_before) << " -> " << fmt_sci(r.score_after) << '\n';
        b.terms = r.terms;
      }
      b.kind = "refined";
      written.push_back(b);
    }
    write_coefficients_file(
        coefficients_out.empty() ? opt.output + ".coef" : coefficients_out, written);
  }
  write_sums(blocks, opt, &reference, out);
  return kConverged;
}

int cmd_atom(const std::vector<std::string>& labels, const AtomImageSpec& base,
             const std::string& table_path, const std::string& output, std::ostream& out) {
  if (labels.empty()) throw UsageError("atom: no scatterer labels given");
  if (output.empty()) throw UsageError("--output is required");
  try {
    base.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::vector<ScatteringFactor> table;
  try {
    table = load_scattering_table_file(table_path);
  } catch (const TableError& e) {
    throw FormatError(0, table_path + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }

  CurveTable result;
  std::ostringstream spec_line;
  spec_line << "atomic images: resolution " << fmt_sci(base.resolution) << " B0 "
            << fmt_sci(base.b0) << " table " << table_path;
  result.comments.push_back(spec_line.str());
  for (const std::string& label : labels) {
    const ScatteringFactor* sf = find_scatterer(table, label);
    if (!sf) {
      std::string known;
      for (const ScatteringFactor& s : table) known += (known.empty() ? "" : " ") + s.label;
      throw UsageError("unknown scatterer '" + label + "'; available: " + known);
    }
    AtomImageSpec spec = base;
    spec.label = label;
    const SampledCurve image = atom_image(*sf, spec);
    if (result.r.empty()) result.r = image.r();
    result.labels.push_back(label);
    result.columns.push_back(image.f());
    out << "image " << label << ": f(0) = " << fmt_sci(image.f().front()) << '\n';
  }
  write_curve_table_file(output, result);
  return kConverged;
}

}  // namespace

std::string default_table_path() {
  return std::string(SHELLDEC_DATA_DIR) + "/scattering_xray.txt";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Shell decomposition of spherically symmetric oscillating functions", "dec3d"};
  app.require_subcommand(1);

  // decompose
  auto* dec = app.add_subcommand("decompose", "decompose curves into shell terms");
  std::string param_path;
  KeyValues dec_flags;
  dec->add_option("params", param_path, "parameter file with 'key = value' records");
  add_key_options(dec, dec_flags, kDecomposeKeys);

  // sum
  SumOptions sum_opt;
  auto* sum = app.add_subcommand("sum", "evaluate coefficient files without refinement");
  sum->add_option("--coefficients", sum_opt.coefficients, "coefficient file")->required();
  sum->add_option("--reference", sum_opt.reference, "curve file to compare with");
  sum->add_option("--output", sum_opt.output, "output curve file")->required();
  sum->add_option("--kind", sum_opt.kind, "block kind to use: refined or initial");
  sum->add_option("--eps_term", sum_opt.eps_term, "term truncation threshold");
  sum->add_option("--r_max", sum_opt.r_max, "grid extent when no reference is given");
  sum->add_option("--step", sum_opt.step, "grid step when no reference is given");

  // resum
  SumOptions resum_opt;
  bool do_refine = false;
  std::string resum_params, coefficients_out;
  KeyValues resum_flags;
  auto* resum = app.add_subcommand("resum", "evaluate and optionally refine coefficients");
  resum->add_option("params", resum_params, "parameter file with refinement settings");
  resum->add_option("--coefficients", resum_opt.coefficients, "coefficient file")->required();
  resum->add_option("--reference", resum_opt.reference, "curve file to fit and compare")
      ->required();
  resum->add_option("--output", resum_opt.output, "output curve file")->required();
  resum->add_option("--kind", resum_opt.kind, "block kind to use: refined or initial");
  resum->add_option("--eps_term", resum_opt.eps_term, "term truncation threshold");
  resum->add_flag("--refine", do_refine, "refine the coefficients before summation");
  resum->add_option("--coefficients_out", coefficients_out,
                    "output coefficient file (default <output>.coef)");
  add_key_options(resum, resum_flags, kRefineKeys);

  // atom
  std::string labels_text, table_path = default_table_path(), atom_output;
  AtomImageSpec atom_spec;
  auto* atom = app.add_subcommand("atom", "synthesize atomic images from a scattering table");
  atom->add_option("--labels", labels_text, "comma-separated scatterer labels")->required();
  atom->add_option("--resolution", atom_spec.resolution, "resolution cut-off D (A)")
      ->required();
  atom->add_option("--b0", atom_spec.b0, "isotropic displacement factor (A^2)");
  atom->add_option("--r_max", atom_spec.r_max, "grid extent (A)");
  atom->add_option("--step", atom_spec.r_step, "grid step (A)");
  atom->add_option("--s_points", atom_spec.s_points, "odd number of quadrature points");
  atom->add_option("--table", table_path, "scattering table file");
  atom->add_option("--output", atom_output, "output curve file")->required();

  std::vector<std::string> argv_store{"dec3d"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kConverged;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kConverged;
  } catch (const CLI::ParseError& e) {
    err << "dec3d: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (dec->parsed()) return cmd_decompose(merge_params(param_path, dec_flags, kDecomposeKeys), out);
    if (sum->parsed()) return cmd_sum(sum_opt, out);
    if (resum->parsed())
      return cmd_resum(resum_opt, do_refine, merge_params(resum_params, resum_flags, kRefineKeys),
                       coefficients_out, out);
    if (atom->parsed()) return cmd_atom(split_list(labels_text), atom_spec, table_path, atom_output, out);
  } catch (const UsageError& e) {
    err << "dec3d: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    err << "dec3d: " << e.what() << '\n';
    return kIoFailure;
  } catch (const FormatError& e) {
    err << "dec3d: " << e.what() << '\n';
    return kIoFailure;
  } catch (const std::invalid_argument& e) {
    err << "dec3d: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "dec3d: " << e.what() << '\n';
    return kIoFailure;
  }
  return kUsage;
}

}  // namespace shelldec::cli
