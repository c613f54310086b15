#pragma once

#include <httplib.h>

#include "service.hpp"

namespace shelldec::service {

/// Routes every /api request of `server` to `service`. Replies are JSON.
void install_routes(httplib::Server& server, Service& service);

}  // namespace shelldec::service
