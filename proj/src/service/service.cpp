#include "service.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "shelldec/expr.hpp"
#include "shelldec/io.hpp"

namespace shelldec::service {

namespace {

// Error carrying an HTTP status and optional position details.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, const std::string& what, Json details = Json::object())
      : std::runtime_error(what), status_(status), details_(std::move(details)) {}
  int status() const { return status_; }
  const Json& details() const { return details_; }

 private:
  int status_;
  Json details_;
};

Reply error_reply(int status, const std::string& message, Json details = Json::object()) {
  details["error"] = message;
  return {status, std::move(details)};
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(path);
  while (std::getline(in, part, '/'))
    if (!part.empty()) parts.push_back(part);
  return parts;
}

Json term_json(const ShellTerm& t) { return {{"R", t.radius}, {"B", t.blur}, {"C", t.weight}}; }

ShellTerm term_from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("term must be an object with R, B, C");
  ShellTerm t;
  t.radius = j.at("R").get<double>();
  t.blur = j.at("B").get<double>();
  t.weight = j.at("C").get<double>();
  validate_term(t);
  return t;
}

Json terms_json(const std::vector<ShellTerm>& terms) {
  Json a = Json::array();
  for (const ShellTerm& t : terms) a.push_back(term_json(t));
  return a;
}

std::vector<ShellTerm> terms_from_json(const Json& a) {
  std::vector<ShellTerm> terms;
  for (const Json& j : a) terms.push_back(term_from_json(j));
  return terms;
}

Json edited_json(const std::vector<EditedTerm>& edited) {
  Json a = Json::array();
  for (const EditedTerm& e : edited) {
    Json j = term_json(e.term);
    j["enabled"] = e.enabled;
    a.push_back(std::move(j));
  }
  return a;
}

Json decomposition_json(const Decomposition& d) {
  return {{"label", d.label},
          {"terms", terms_json(d.terms)},
          {"initial_terms", terms_json(d.initial_terms)},
          {"residual_max_full", d.residual_max_full},
          {"residual_max_range", d.residual_max_range},
          {"iterations_used", d.iterations_used},
          {"converged", d.converged},
          {"history", d.history},
          {"resolved",
           {{"eps_dec_abs", d.resolved.eps_dec_abs},
            {"eps_peak_abs", d.resolved.eps_peak_abs},
            {"eps_term_abs", d.resolved.eps_term_abs},
            {"b_min", d.resolved.b_min},
            {"c_min", d.resolved.c_min},
            {"range_first", d.resolved.range_first},
            {"range_last", d.resolved.range_last}}}};
}

Decomposition decomposition_from_json(const Json& j) {
  Decomposition d;
  d.label = j.at("label").get<std::string>();
  d.terms = terms_from_json(j.at("terms"));
  d.initial_terms = terms_from_json(j.at("initial_terms"));
  d.residual_max_full = j.at("residual_max_full").get<double>();
  d.residual_max_range = j.at("residual_max_range").get<double>();
  d.iterations_used = j.at("iterations_used").get<int>();
  d.converged = j.at("converged").get<bool>();
  d.history = j.at("history").get<std::vector<double>>();
  const Json& rc = j.at("resolved");
  d.resolved.eps_dec_abs = rc.at("eps_dec_abs").get<double>();
  d.resolved.eps_peak_abs = rc.at("eps_peak_abs").get<double>();
  d.resolved.eps_term_abs = rc.at("eps_term_abs").get<double>();
  d.resolved.b_min = rc.at("b_min").get<double>();
  d.resolved.c_min = rc.at("c_min").get<double>();
  d.resolved.range_first = rc.at("range_first").get<std::size_t>();
  d.resolved.range_last = rc.at("range_last").get<std::size_t>();
  return d;
}

std::vector<ShellTerm> enabled_terms(const CurveState& c) {
  std::vector<ShellTerm> terms;
  for (const EditedTerm& e : c.edited)
    if (e.enabled) terms.push_back(e.term);
  return terms;
}

std::vector<double> model_of(const CurveState& c) {
  return evaluate_sum(enabled_terms(c), c.curve.r(), c.eps_term_abs);
}

std::vector<double> difference(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t n = 0; n < a.size(); ++n) d[n] = a[n] - b[n];
  return d;
}

double default_eps_term_abs(const SampledCurve& curve) {
  return DecomposeConfig{}.eps_term * reference_scale(curve.f());
}

// Grid description of curve sources: {"r_max", "step"}.
SampleGrid grid_from_json(const Json& body) {
  SampleGrid grid;
  grid.r_max = body.value("r_max", grid.r_max);
  grid.step = body.value("step", grid.step);
  if (!(grid.step > 0.0) || !(grid.r_max > grid.step))
    throw std::invalid_argument("grid needs 0 < step < r_max");
  return grid;
}

CurveState& curve_of(Session& s, const std::string& label) {
  auto it = s.curves.find(label);
  if (it == s.curves.end()) throw ApiError(404, "no curve '" + label + "'");
  return it->second;
}

struct Series {
  std::string name;
  const std::vector<double>* r = nullptr;
  std::vector<double> y;
  Json style;
};

std::vector<Series> resolve_series(Session& s, const Json& body) {
  if (!body.contains("series") || !body["series"].is_array())
    throw std::invalid_argument("expected a 'series' array");
  std::vector<Series> out;
  for (const Json& sel : body["series"]) {
    const std::string id = sel.is_string() ? sel.get<std::string>() : sel.at("id").get<std::string>();
    std::string label = id, kind = "input";
    const auto dot = id.rfind('.');
    if (dot != std::string::npos && s.curves.count(id) == 0) {
      label = id.substr(0, dot);
      kind = id.substr(dot + 1);
    }
    auto it = s.curves.find(label);
    if (it == s.curves.end()) throw ApiError(404, "unknown series '" + id + "'");
    const CurveState& c = it->second;
    Series series;
    series.r = &c.curve.r();
    if (kind == "input") {
      series.name = label;
      series.y = c.curve.f();
    } else if (kind == "model") {
      series.name = label + ".model";
      series.y = model_of(c);
    } else if (kind == "residual") {
      series.name = label + ".residual";
      series.y = difference(c.curve.f(), model_of(c));
    } else {
      throw ApiError(404, "unknown series '" + id + "'");
    }
    series.style = sel.is_object() ? sel.value("style", Json::object()) : Json::object();
    out.push_back(std::move(series));
  }
  return out;
}

}  // namespace

DecomposeConfig config_from_json(const Json& overrides) {
  DecomposeConfig config;
  if (overrides.is_null()) return config;
  if (!overrides.is_object()) throw std::invalid_argument("overrides must be an object");
  for (const auto& [key, value] : overrides.items()) {
    if (key == "eps_dec") config.eps_dec = value.get<double>();
    else if (key == "eps_dec_mode") {
      const std::string mode = value.get<std::string>();
      if (mode != "relative" && mode != "absolute")
        throw std::invalid_argument("eps_dec_mode must be 'relative' or 'absolute'");
      config.eps_dec_relative = mode == "relative";
    } else if (key == "eps_peak") config.eps_peak = value.get<double>();
    else if (key == "eps_term") config.eps_term = value.get<double>();
    else if (key == "max_peaks") config.max_peaks = value.get<int>();
    else if (key == "protocol") config.protocol = parse_protocol(value.get<std::string>());
    else if (key == "range") {
      const auto pair = value.get<std::vector<double>>();
      if (pair.size() != 2) throw std::invalid_argument("range must be [lo, hi]");
      config.range = std::pair{pair[0], pair[1]};
    } else if (key == "b_min") config.b_min = value.get<double>();
    else if (key == "c_min") config.c_min = value.get<double>();
    else if (key == "max_iterations") config.max_iterations = value.get<int>();
    else if (key == "max_passes") config.max_passes = value.get<int>();
    else throw std::invalid_argument("unknown decomposition option '" + key + "'");
  }
  config.validate();
  return config;
}

Service::Service(std::vector<ScatteringFactor> table) : table_(std::move(table)) {}

std::shared_ptr<Session> Service::find_session(const std::string& id) {
  std::lock_guard lock(store_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ApiError(404, "no session '" + id + "'");
  return it->second;
}

std::string Service::add_session(std::shared_ptr<Session> session) {
  std::lock_guard lock(store_mutex_);
  const std::string id = "s" + std::to_string(next_id_++);
  sessions_.emplace(id, std::move(session));
  return id;
}

Reply Service::handle_text(const std::string& method, const std::string& path,
                           const std::string& body) {
  Json parsed;
  if (!body.empty()) {
    parsed = Json::parse(body, nullptr, false);
    if (parsed.is_discarded()) return error_reply(400, "request body is not valid JSON");
  }
  return handle(method, path, parsed);
}

Reply Service::handle(const std::string& method, const std::string& path, const Json& body) {
  try {
    const std::vector<std::string> p = split_path(path);
    if (p.size() < 2 || p[0] != "api") throw ApiError(404, "unknown endpoint " + path);

    if (p[1] == "scatterers" && p.size() == 2 && method == "GET") {
      Json labels = Json::array();
      for (const ScatteringFactor& sf : table_) labels.push_back(sf.label);
      return {200, {{"labels", labels}}};
    }
    if (p[1] != "sessions") throw ApiError(404, "unknown endpoint " + path);
    if (p.size() == 2 && method == "POST")
      return {200, {{"session", add_session(std::make_shared<Session>())}}};
    if (p.size() == 3 && p[2] == "import" && method == "POST") return import_snapshot(body);
    if (p.size() < 4) throw ApiError(404, "unknown endpoint " + path);

    const std::shared_ptr<Session> session = find_session(p[2]);
    std::lock_guard lock(session->mutex);
    Session& s = *session;
    const std::string& what = p[3];

    if (what == "snapshot" && p.size() == 4 && method == "GET") return {200, snapshot(s)};
    if (what == "plot" && p.size() == 4 && method == "POST") return plot(s, body);
    if (what == "export" && p.size() == 4 && method == "POST") return export_curves(s, body);
    if (what == "curves") {
      if (p.size() == 4 && method == "POST") return create_curves(s, body);
      if (p.size() == 4 && method == "GET") return {200, {{"labels", s.order}}};
      if (p.size() == 5 && method == "GET") {
        const CurveState& c = curve_of(s, p[4]);
        return {200, {{"label", p[4]}, {"r", c.curve.r()}, {"f", c.curve.f()}}};
      }
      if (p.size() == 6 && p[5] == "decompose" && method == "POST")
        return decompose_curve(s, p[4], body);
      if (p.size() == 6 && p[5] == "edits" && method == "POST") return edit_terms(s, p[4], body);
    }
    throw ApiError(404, "unknown endpoint " + method + " " + path);
  } catch (const ApiError& e) {
    return error_reply(e.status(), e.what(), e.details());
  } catch (const ParseError& e) {
    return error_reply(400, e.what(), {{"offset", e.offset()}});
  } catch (const FormatError& e) {
    return error_reply(400, e.what(), {{"line", e.line()}});
  } catch (const TableError& e) {
    return error_reply(400, e.what(), {{"line", e.line()}});
  } catch (const Json::exception& e) {
    return error_reply(400, std::string("malformed request: ") + e.what());
  } catch (const std::exception& e) {
    return error_reply(400, e.what());
  }
}

Reply Service::create_curves(Session& s, const Json& body) {
  if (!body.is_object()) throw std::invalid_argument("expected a curve source object");
  const std::string source = body.at("source").get<std::string>();
  std::vector<SampledCurve> made;

  if (source == "file") {
    std::istringstream in(body.at("text").get<std::string>());
    const CurveTable table = read_curve_table(in);
    if (body.contains("columns")) {
      for (const std::string& label : body["columns"].get<std::vector<std::string>>()) {
        const std::size_t k = table.find(label);
        if (k == table.column_count()) throw ApiError(404, "file has no column '" + label + "'");
        made.push_back(table.curve(k));
      }
    } else {
      for (std::size_t k = 0; k < table.column_count(); ++k) made.push_back(table.curve(k));
    }
  } else if (source == "atom") {
    const std::string label = body.at("label").get<std::string>();
    const ScatteringFactor* sf = find_scatterer(table_, label);
    if (!sf) throw ApiError(404, "unknown scatterer '" + label + "'");
    AtomImageSpec spec;
    spec.label = label;
    spec.resolution = body.at("resolution").get<double>();
    spec.b0 = body.value("b0", 0.0);
    spec.r_max = body.value("r_max", spec.r_max);
    spec.r_step = body.value("step", spec.r_step);
    spec.s_points = body.value("s_points", spec.s_points);
    spec.validate();
    made.push_back(atom_image(*sf, spec));
    if (body.contains("name")) made.back().set_label(body["name"].get<std::string>());
  } else if (source == "expression") {
    const Expression expr = Expression::parse(body.at("text").get<std::string>());
    std::optional<double> origin;
    if (body.contains("origin_value") && !body["origin_value"].is_null())
      origin = body["origin_value"].get<double>();
    const std::string label =
        body.value("name", "expr" + std::to_string(s.order.size() + 1));
    made.push_back(sample(expr, grid_from_json(body), origin, label));
  } else {
    throw std::invalid_argument("source must be file, atom or expression");
  }

  for (SampledCurve& c : made) {
    c.set_label(sanitize_label(c.label()));
    if (s.curves.count(c.label())) throw ApiError(409, "curve '" + c.label() + "' already exists");
  }
  Json labels = Json::array();
  for (SampledCurve& c : made) {
    const std::string label = c.label();
    CurveState state{std::move(c), std::nullopt, {}, 0.0};
    state.eps_term_abs = default_eps_term_abs(state.curve);
    s.curves.emplace(label, std::move(state));
    s.order.push_back(label);
    labels.push_back(label);
  }
  return {200, {{"labels", labels}}};
}

Reply Service::decompose_curve(Session& s, const std::string& label, const Json& body) {
  CurveState& c = curve_of(s, label);
  const DecomposeConfig config = config_from_json(body);
  Decomposition d = decompose(c.curve, config);
  c.eps_term_abs = d.resolved.eps_term_abs;
  c.edited.clear();
  for (const ShellTerm& t : d.terms) c.edited.push_back({t, true});
  Json reply = decomposition_json(d);
  c.decomposition = std::move(d);
  return {200, std::move(reply)};
}

Reply Service::edit_terms(Session& s, const std::string& label, const Json& body) {
  CurveState& c = curve_of(s, label);
  const Json edits = body.is_object() ? body.value("edits", Json::array()) : Json::array();
  if (!edits.is_array()) throw std::invalid_argument("'edits' must be an array");

  // Each edit stands alone: a bad one is reported, the others still apply.
  Json errors = Json::array();
  for (std::size_t k = 0; k < edits.size(); ++k) {
    const Json& e = edits[k];
    try {
      const std::string op = e.at("op").get<std::string>();
      if (op == "add") {
        c.edited.push_back({term_from_json(e), true});
        continue;
      }
      if (op == "reset") {
        c.edited.clear();
        if (c.decomposition)
          for (const ShellTerm& t : c.decomposition->terms) c.edited.push_back({t, true});
        continue;
      }
      const auto index = e.at("index").get<std::size_t>();
      if (index >= c.edited.size())
        throw std::out_of_range("term index " + std::to_string(index) + " out of range");
      if (op == "modify") {
        ShellTerm t = c.edited[index].term;
        if (e.contains("R")) t.radius = e["R"].get<double>();
        if (e.contains("B")) t.blur = e["B"].get<double>();
        if (e.contains("C")) t.weight = e["C"].get<double>();
        validate_term(t);
        c.edited[index].term = t;
      } else if (op == "disable" || op == "enable") {
        c.edited[index].enabled = op == "enable";
      } else {
        throw std::invalid_argument("unknown edit op '" + op + "'");
      }
    } catch (const std::exception& ex) {
      errors.push_back({{"edit", k}, {"message", ex.what()}});
    }
  }

  const std::vector<double> model = model_of(c);
  const std::vector<double> residual = difference(c.curve.f(), model);
  double worst = 0.0;
  for (double v : residual) worst = std::max(worst, std::abs(v));
  return {200,
          {{"label", label},
           {"terms", edited_json(c.edited)},
           {"errors", errors},
           {"r", c.curve.r()},
           {"model", model},
           {"residual", residual},
           {"residual_max", worst}}};
}

Reply Service::plot(Session& s, const Json& body) {
  Json out = Json::array();
  for (Series& series : resolve_series(s, body))
    out.push_back({{"name", series.name}, {"r", *series.r}, {"y", series.y}, {"style", series.style}});
  return {200, {{"series", out}}};
}

Reply Service::export_curves(Session& s, const Json& body) {
  std::vector<Series> series = resolve_series(s, body);
  if (series.empty()) throw std::invalid_argument("nothing to export");
  CurveTable table;
  table.r = *series.front().r;
  for (Series& item : series) {
    if (*item.r != table.r)
      throw std::invalid_argument("series '" + item.name + "' uses a different grid");
    table.labels.push_back(item.name);
    table.columns.push_back(std::move(item.y));
  }
  std::ostringstream text;
  write_curve_table(text, table);
  return {200, {{"text", text.str()}}};
}

Json Service::snapshot(Session& s) {
  Json curves = Json::array();
  for (const std::string& label : s.order) {
    const CurveState& c = s.curves.at(label);
    curves.push_back({{"label", label},
                      {"r", c.curve.r()},
                      {"f", c.curve.f()},
                      {"eps_term_abs", c.eps_term_abs},
                      {"edited", edited_json(c.edited)},
                      {"decomposition", c.decomposition ? decomposition_json(*c.decomposition)
                                                        : Json(nullptr)}});
  }
  return {{"format", "shelldec-session"}, {"version", 1}, {"curves", curves}};
}

Reply Service::import_snapshot(const Json& body) {
  if (!body.is_object() || body.value("format", "") != "shelldec-session")
    throw std::invalid_argument("not a session snapshot");
  if (body.value("version", 0) != 1) throw std::invalid_argument("unsupported snapshot version");
  auto session = std::make_shared<Session>();
  for (const Json& j : body.at("curves")) {
    const std::string label = j.at("label").get<std::string>();
    if (session->curves.count(label)) throw std::invalid_argument("duplicate curve '" + label + "'");
    CurveState c{SampledCurve(j.at("r").get<std::vector<double>>(),
                              j.at("f").get<std::vector<double>>(), label),
                 std::nullopt, {}, j.at("eps_term_abs").get<double>()};
    for (const Json& e : j.at("edited"))
      c.edited.push_back({term_from_json(e), e.value("enabled", true)});
    if (!j.at("decomposition").is_null())
      c.decomposition = decomposition_from_json(j["decomposition"]);
    session->curves.emplace(label, std::move(c));
    session->order.push_back(label);
  }
  return {200, {{"session", add_session(std::move(session))}}};
}

}  // namespace shelldec::service
