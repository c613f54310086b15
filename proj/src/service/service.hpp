#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "shelldec/atoms.hpp"
#include "shelldec/decompose.hpp"
#include "shelldec/shell.hpp"

namespace shelldec::service {

using Json = nlohmann::json;

/// One entry of a session's editable term list.
struct EditedTerm {
  ShellTerm term;
  bool enabled = true;
};

struct CurveState {
  SampledCurve curve;
  std::optional<Decomposition> decomposition;
  std::vector<EditedTerm> edited;
  /// Absolute truncation threshold used for every model of this curve.
  double eps_term_abs = 0.0;
};

struct Session {
  std::mutex mutex;
  std::vector<std::string> order;  ///< curve labels in creation order
  std::map<std::string, CurveState> curves;
};

/// Result of one API call: HTTP status and JSON body.
struct Reply {
  int status = 200;
  Json body;
};

/// Session API independent of the transport. Curves travel as parallel
/// "r" / "f" arrays; every number in a reply comes from the library.
///
///   POST /api/sessions                                 -> {"session"}
///   POST /api/sessions/import        snapshot          -> {"session"}
///   GET  /api/scatterers                               -> {"labels"}
///   POST /api/sessions/{id}/curves   source            -> {"labels"}
///   GET  /api/sessions/{id}/curves                     -> {"labels"}
///   GET  /api/sessions/{id}/curves/{label}             -> {"label","r","f"}
///   POST /api/sessions/{id}/curves/{label}/decompose   overrides -> summary
///   POST /api/sessions/{id}/curves/{label}/edits       {"edits"} -> model
///   POST /api/sessions/{id}/plot     {"series"}        -> {"series"}
///   POST /api/sessions/{id}/export   {"series"}        -> {"text"}
///   GET  /api/sessions/{id}/snapshot                   -> snapshot
class Service {
 public:
  explicit Service(std::vector<ScatteringFactor> table);

  Reply handle(const std::string& method, const std::string& path, const Json& body);
  /// Parses `body` text first; malformed JSON gives a 400 reply.
  Reply handle_text(const std::string& method, const std::string& path,
                    const std::string& body);

 private:
  std::shared_ptr<Session> find_session(const std::string& id);
  std::string add_session(std::shared_ptr<Session> session);

  Reply create_curves(Session& s, const Json& body);
  Reply decompose_curve(Session& s, const std::string& label, const Json& body);
  Reply edit_terms(Session& s, const std::string& label, const Json& body);
  Reply plot(Session& s, const Json& body);
  Reply export_curves(Session& s, const Json& body);
  Json snapshot(Session& s);
  Reply import_snapshot(const Json& body);

  std::vector<ScatteringFactor> table_;
  std::mutex store_mutex_;
  std::uint64_t next_id_ = 1;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// Parses decomposition overrides ("eps_dec", "protocol", "range", ...).
/// Throws std::invalid_argument on unknown keys or bad values.
DecomposeConfig config_from_json(const Json& overrides);

}  // namespace shelldec::service
