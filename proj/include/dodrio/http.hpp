#pragma once

#include <filesystem>
#include <string>

#include <httplib.h>

#include "dodrio/api.hpp"

namespace dodrio {

/// Binds the read-only API and, when given, a static asset directory to an
/// httplib server. The caller owns the listen loop.
inline void mount_routes(httplib::Server& server, const ServerState& state,
                         const std::filesystem::path& static_dir = {}) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Get(R"(/api/.*)", [&state](const httplib::Request& req, httplib::Response& res) {
    QueryParams query(req.params.begin(), req.params.end());
    auto reply = handle_get(state, req.path, query);
    res.status = reply.status;
    res.set_content(std::move(reply.body), "application/json; charset=utf-8");
  });
  if (!static_dir.empty()) {
    if (!server.set_mount_point("/", static_dir.string()))
      throw Error(ErrorCode::Io, "static directory " + static_dir.string() + " is not readable");
  }
}

}  // namespace dodrio
