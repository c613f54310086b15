#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <thread>

#include "server.hpp"
#include "service.hpp"
#include "shelldec/io.hpp"

using namespace shelldec;
using service::Json;
using service::Reply;
using service::Service;

namespace {

std::vector<ScatteringFactor> table() {
  return load_scattering_table_file(std::string(SHELLDEC_DATA_DIR) + "/scattering_xray.txt");
}

struct Client {
  Service& svc;
  std::string session;

  Reply call(const std::string& method, const std::string& tail, const Json& body = Json::object()) {
    return svc.handle(method, "/api/sessions/" + session + tail, body);
  }
  Json ok(const std::string& method, const std::string& tail, const Json& body = Json::object()) {
    Reply r = call(method, tail, body);
    INFO(r.body.dump());
    REQUIRE(r.status == 200);
    return r.body;
  }
};

Client open(Service& svc) {
  Reply r = svc.handle("POST", "/api/sessions", Json::object());
  REQUIRE(r.status == 200);
  return {svc, r.body.at("session").get<std::string>()};
}

const Json kCarbon = {{"source", "atom"}, {"label", "C"}, {"resolution", 3.0}};
const Json kSulphur = {{"source", "atom"}, {"label", "S"}, {"resolution", 3.0}};

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("sessions are isolated") {
  Service svc(table());
  Client a = open(svc), b = open(svc);
  CHECK(a.session != b.session);
  a.ok("POST", "/curves", kCarbon);
  CHECK(a.ok("GET", "/curves")["labels"] == Json::array({"C"}));
  CHECK(b.ok("GET", "/curves")["labels"] == Json::array());
  CHECK(b.call("GET", "/curves/C").status == 404);
  CHECK(svc.handle("GET", "/api/sessions/nope/curves", {}).status == 404);
  CHECK(svc.handle("GET", "/api/bogus", {}).status == 404);
}

TEST_CASE("scatterer labels come from the table") {
  Service svc(table());
  const Reply r = svc.handle("GET", "/api/scatterers", {});
  REQUIRE(r.status == 200);
  std::vector<std::string> expected;
  for (const ScatteringFactor& sf : table()) expected.push_back(sf.label);
  CHECK(r.body["labels"].get<std::vector<std::string>>() == expected);
}

TEST_CASE("curve sources") {
  Service svc(table());
  Client c = open(svc);

  SUBCASE("atom image matches the library") {
    c.ok("POST", "/curves", kCarbon);
    const Json got = c.ok("GET", "/curves/C");
    AtomImageSpec spec;
    spec.resolution = 3.0;
    const SampledCurve direct = atom_image(*find_scatterer(table(), "C"), spec);
    CHECK(got["f"].get<std::vector<double>>() == direct.f());
    CHECK(got["r"].get<std::vector<double>>() == direct.r());
    CHECK(c.call("POST", "/curves", kCarbon).status == 409);
    Json unknown = kCarbon;
    unknown["label"] = "Xx";
    CHECK(c.call("POST", "/curves", unknown).status == 404);
    Json bad = kCarbon;
    bad["resolution"] = 0.0;
    bad["name"] = "C0";
    CHECK(c.call("POST", "/curves", bad).status == 400);
  }
  SUBCASE("expression") {
    const Json body = {{"source", "expression"}, {"text", "exp(-x^2)"}, {"r_max", 2.0},
                       {"step", 0.5}, {"name", "g"}};
    CHECK(c.ok("POST", "/curves", body)["labels"] == Json::array({"g"}));
    const Json got = c.ok("GET", "/curves/g");
    CHECK(got["f"].size() == 5);
    CHECK(got["f"][2].get<double>() == std::exp(-1.0));
    const Reply bad = c.call("POST", "/curves",
                             {{"source", "expression"}, {"text", "sin("}, {"name", "h"}});
    CHECK(bad.status == 400);
    CHECK(bad.body["offset"] == 4);
    CHECK(bad.body.contains("error"));
  }
  SUBCASE("uploaded file") {
    const std::string text = "# r a b\n0 1 2\n0.1 3 4\n0.2 5 6\n";
    CHECK(c.ok("POST", "/curves", {{"source", "file"}, {"text", text}, {"columns", {"b"}}})["labels"] ==
          Json::array({"b"}));
    CHECK(c.ok("GET", "/curves/b")["f"] == Json::array({2.0, 4.0, 6.0}));
    const Reply bad = c.call("POST", "/curves", {{"source", "file"}, {"text", "0 1\n0.1 1 2\n"}});
    CHECK(bad.status == 400);
    CHECK(bad.body["line"] == 2);
    CHECK(c.call("POST", "/curves", {{"source", "telepathy"}}).status == 400);
  }
}

TEST_CASE("decompose and edit") {
  Service svc(table());
  Client c = open(svc);
  c.ok("POST", "/curves", kCarbon);
  CHECK(c.call("POST", "/curves/C/decompose", {{"nonsense", 1}}).status == 400);
  const Json d = c.ok("POST", "/curves/C/decompose", Json::object());
  CHECK(d["converged"] == true);
  CHECK(d["label"] == "C");

  // The library on the same input gives the same numbers.
  AtomImageSpec spec;
  spec.resolution = 3.0;
  const SampledCurve curve = atom_image(*find_scatterer(table(), "C"), spec);
  const Decomposition direct = decompose(curve, DecomposeConfig{});
  REQUIRE(d["terms"].size() == direct.terms.size());
  for (std::size_t m = 0; m < direct.terms.size(); ++m) {
    CHECK(d["terms"][m]["R"].get<double>() == direct.terms[m].radius);
    CHECK(d["terms"][m]["B"].get<double>() == direct.terms[m].blur);
    CHECK(d["terms"][m]["C"].get<double>() == direct.terms[m].weight);
  }
  CHECK(d["residual_max_range"].get<double>() == direct.residual_max_range);

  const Json same = c.ok("POST", "/curves/C/edits", {{"edits", Json::array()}});
  const std::vector<double> model = evaluate_sum(direct.terms, curve.r(), direct.resolved.eps_term_abs);
  CHECK(same["model"].get<std::vector<double>>() == model);
  CHECK(same["residual_max"].get<double>() == direct.residual_max_full);
  CHECK(same["errors"].empty());

  SUBCASE("disabling removes exactly one term") {
    const std::size_t k = 2;
    const Json off = c.ok("POST", "/curves/C/edits", {{"edits", {{{"op", "disable"}, {"index", k}}}}});
    CHECK(off["terms"][k]["enabled"] == false);
    const std::vector<double> alone =
        evaluate_sum(std::vector<ShellTerm>{direct.terms[k]}, curve.r(), direct.resolved.eps_term_abs);
    const auto reduced = off["model"].get<std::vector<double>>();
    for (std::size_t n = 0; n < model.size(); ++n)
      CHECK(std::abs(model[n] - reduced[n] - alone[n]) <= 1e-14 * curve.f()[0]);
    CHECK(off["residual_max"].get<double>() > same["residual_max"].get<double>());

    const Json back = c.ok("POST", "/curves/C/edits", {{"edits", {{{"op", "enable"}, {"index", k}}}}});
    CHECK(back["model"].get<std::vector<double>>() == model);
  }
  SUBCASE("adding a copy doubles that term") {
    const Json t = d["terms"][0];
    const Json added = c.ok("POST", "/curves/C/edits",
                            {{"edits", {{{"op", "add"}, {"R", t["R"]}, {"B", t["B"]}, {"C", t["C"]}}}}});
    CHECK(added["terms"].size() == direct.terms.size() + 1);
    const std::vector<double> alone =
        evaluate_sum(std::vector<ShellTerm>{direct.terms[0]}, curve.r(), direct.resolved.eps_term_abs);
    const auto grown = added["model"].get<std::vector<double>>();
    for (std::size_t n = 0; n < model.size(); ++n)
      CHECK(std::abs(grown[n] - model[n] - alone[n]) <= 1e-14 * curve.f()[0]);
  }
  SUBCASE("bad edits are reported one by one") {
    const Json r = c.ok("POST", "/curves/C/edits",
                        {{"edits",
                          {{{"op", "modify"}, {"index", 99}, {"B", 4.0}},
                           {{"op", "modify"}, {"index", 0}, {"B", -1.0}},
                           {{"op", "twist"}, {"index", 0}},
                           {{"op", "modify"}, {"index", 1}, {"C", 0.0}}}}});
    REQUIRE(r["errors"].size() == 3);
    CHECK(r["errors"][0]["edit"] == 0);
    CHECK(r["errors"][1]["edit"] == 1);
    CHECK(r["errors"][2]["edit"] == 2);
    CHECK(r["terms"][0]["B"] == d["terms"][0]["B"]);
    CHECK(r["terms"][1]["C"] == 0.0);
    const Json reset = c.ok("POST", "/curves/C/edits", {{"edits", {{{"op", "reset"}}}}});
    CHECK(reset["model"].get<std::vector<double>>() == model);
  }
}

TEST_CASE("zero curve") {
  Service svc(table());
  Client c = open(svc);
  c.ok("POST", "/curves", {{"source", "expression"}, {"text", "0*x"}, {"name", "z"}});
  const Json d = c.ok("POST", "/curves/z/decompose", Json::object());
  CHECK(d["terms"].empty());
  CHECK(d["converged"] == true);
  const Json e = c.ok("POST", "/curves/z/edits", Json::object());
  CHECK(e["residual_max"] == 0.0);
}

TEST_CASE("plot and export") {
  Service svc(table());
  Client c = open(svc);
  c.ok("POST", "/curves", kCarbon);
  c.ok("POST", "/curves", kSulphur);
  c.ok("POST", "/curves/C/decompose", Json::object());
  c.ok("POST", "/curves/S/decompose", Json::object());

  const Json four = {"C", {{"id", "C.model"}, {"style", {{"color", "red"}}}}, "S", "S.model"};
  const Json p = c.ok("POST", "/plot", {{"series", four}});
  REQUIRE(p["series"].size() == 4);
  CHECK(p["series"][1]["name"] == "C.model");
  CHECK(p["series"][1]["style"]["color"] == "red");
  CHECK(p["series"][2]["y"] == c.ok("GET", "/curves/S")["f"]);

  const Json resid = c.ok("POST", "/plot", {{"series", {"S.residual"}}});
  const Json edits = c.ok("POST", "/curves/S/edits", Json::object());
  CHECK(resid["series"][0]["y"] == edits["residual"]);
  CHECK(c.call("POST", "/plot", {{"series", {"Q"}}}).status == 404);
  CHECK(c.call("POST", "/plot", {{"series", {"C.shadow"}}}).status == 404);

  // Export text is a curve file the library reads back unchanged.
  const std::string text = c.ok("POST", "/export", {{"series", four}})["text"];
  std::istringstream in(text);
  const CurveTable t = read_curve_table(in);
  CHECK(t.labels == std::vector<std::string>{"C", "C.model", "S", "S.model"});
  CHECK(t.columns[3] == p["series"][3]["y"].get<std::vector<double>>());
  std::ostringstream again;
  write_curve_table(again, t);
  CHECK(again.str() == text);

  // Re-importing the export as a file source gives identical curves.
  Client d = open(svc);
  d.ok("POST", "/curves", {{"source", "file"}, {"text", text}});
  CHECK(d.ok("GET", "/curves/C.model")["f"] == p["series"][1]["y"]);
  CHECK(d.ok("POST", "/export", {{"series", {"C", "C.model", "S", "S.model"}}})["text"] == text);

  c.ok("POST", "/curves", {{"source", "expression"}, {"text", "x"}, {"r_max", 1.0}, {"step", 0.5},
                          {"name", "line"}});
  CHECK(c.call("POST", "/export", {{"series", {"C", "line"}}}).status == 400);
}

TEST_CASE("snapshot round trip and replay") {
  auto script = [](Service& svc) {
    Client c = open(svc);
    c.ok("POST", "/curves", kCarbon);
    c.ok("POST", "/curves", {{"source", "expression"}, {"text", "exp(-x^2)"}, {"name", "g"}});
    c.ok("POST", "/curves/C/decompose", {{"eps_dec", 2e-3}});
    c.ok("POST", "/curves/C/edits",
         {{"edits", {{{"op", "disable"}, {"index", 1}}, {{"op", "add"}, {"R", 1.0}, {"B", 5.0}, {"C", 0.1}}}}});
    return c;
  };
  Service one(table()), two(table());
  Client a = script(one);
  Client b = script(two);
  const Json snap = a.ok("GET", "/snapshot");
  CHECK(snap.dump() == b.ok("GET", "/snapshot").dump());
  CHECK(snap["format"] == "shelldec-session");
  CHECK(a.ok("POST", "/plot", {{"series", {"C.residual"}}}).dump() ==
        b.ok("POST", "/plot", {{"series", {"C.residual"}}}).dump());

  const Reply imported = one.handle("POST", "/api/sessions/import", snap);
  REQUIRE(imported.status == 200);
  Client c{one, imported.body["session"].get<std::string>()};
  CHECK(c.ok("GET", "/snapshot").dump() == snap.dump());
  CHECK(c.ok("POST", "/export", {{"series", {"C", "C.model", "C.residual"}}})["text"] ==
        a.ok("POST", "/export", {{"series", {"C", "C.model", "C.residual"}}})["text"]);

  Json broken = snap;
  broken["format"] = "other";
  CHECK(one.handle("POST", "/api/sessions/import", broken).status == 400);
  broken = snap;
  broken["curves"][0]["edited"][0]["B"] = -3.0;
  CHECK(one.handle("POST", "/api/sessions/import", broken).status == 400);
}

TEST_CASE("malformed request text") {
  Service svc(table());
  const Reply r = svc.handle_text("POST", "/api/sessions", "{not json");
  CHECK(r.status == 400);
  CHECK(r.body.contains("error"));
  CHECK(svc.handle_text("POST", "/api/sessions", "").status == 200);
}

TEST_CASE("routes over loopback HTTP") {
  Service svc(table());
  httplib::Server server;
  service::install_routes(server, svc);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client http("127.0.0.1", port);
  auto created = http.Post("/api/sessions", "{}", "application/json");
  REQUIRE(created);
  CHECK(created->status == 200);
  const std::string id = Json::parse(created->body)["session"];
  auto added = http.Post("/api/sessions/" + id + "/curves", kCarbon.dump(), "application/json");
  REQUIRE(added);
  CHECK(added->status == 200);
  auto got = http.Get("/api/sessions/" + id + "/curves/C");
  REQUIRE(got);
  CHECK(got->get_header_value("Content-Type").find("application/json") != std::string::npos);
  CHECK(Json::parse(got->body)["f"] == svc.handle("GET", "/api/sessions/" + id + "/curves/C", {}).body["f"]);
  auto missing = http.Get("/api/sessions/" + id + "/curves/Q");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  server.stop();
  worker.join();
}
