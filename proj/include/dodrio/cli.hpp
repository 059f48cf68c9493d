#pragma once

// Subcommands behind the `dodrio` executable. Each returns the process exit
// status and writes human-readable output to the given streams.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dodrio/api.hpp"
#include "dodrio/http.hpp"

namespace dodrio {

namespace detail {

inline bool write_text(const std::filesystem::path& path, const std::string& text,
                       std::ostream& err) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    err << "error: cannot write " << path << "\n";
    return false;
  }
  out << text;
  return static_cast<bool>(out);
}

// Loads and validates; prints the report on failure.
inline std::optional<CorpusBundle> load_valid(const std::filesystem::path& path, std::ostream& err,
                                              int& status) {
  CorpusBundle bundle;
  try {
    bundle = load_bundle(path);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    status = 2;
    return std::nullopt;
  }
  const auto report = validate_bundle(bundle);
  if (!report.empty()) {
    err << report.size() << " violations\n";
    for (const auto& v : report) err << "  " << v.describe() << "\n";
    status = 1;
    return std::nullopt;
  }
  return bundle;
}

}  // namespace detail

inline int cmd_validate(const std::filesystem::path& bundle_path, std::ostream& out) {
  CorpusBundle bundle;
  try {
    bundle = load_bundle(bundle_path);
  } catch (const Error& e) {
    out << "error: " << e.what() << "\n";
    return 2;
  }
  const auto report = validate_bundle(bundle);
  out << report.size() << " violations\n";
  for (const auto& v : report) out << "  " << v.describe() << "\n";
  return report.empty() ? 0 : 1;
}

inline int cmd_score(const std::filesystem::path& bundle_path,
                     const std::filesystem::path& out_path, std::ostream& out, std::ostream& err) {
  int status = 0;
  auto bundle = detail::load_valid(bundle_path, err, status);
  if (!bundle) return status;
  try {
    const auto scale = scale_config_from_env();
    const auto scores = score_all_heads(*bundle);
    const auto doc = score_file_json(*bundle, scores, scale);
    if (!detail::write_text(out_path, doc.dump(2) + "\n", err)) return 2;
    out << "wrote " << scores.cards.size() << " score cards to " << out_path.string() << "\n";
    for (const auto& id : scores.skipped_instances)
      err << "warning: instance '" << id << "' has all-zero saliency; skipped for semantic scores\n";
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

struct ExportOptions {
  std::string view;  // overview | graph | comparison | projection
  std::string instance;
  std::optional<std::size_t> layer;
  std::optional<std::size_t> head;
  std::string kind = "force";
  std::optional<double> threshold;
  std::string heads;  // comparison: l0h1,l1h0
};

/// Same bytes as the corresponding API response body.
inline std::string export_body(const ServerState& state, const ExportOptions& opt) {
  if (opt.view == "overview") return state.heads_body();
  if (opt.view == "projection") return projection_body(state).dump();

  if (opt.instance.empty()) throw Error(ErrorCode::BadSelector, "--instance is required");
  QueryParams query;
  if (opt.threshold) {
    std::ostringstream t;
    t.precision(17);
    t << *opt.threshold;
    query.emplace("threshold", t.str());
  }
  if (opt.view == "graph") {
    if (!opt.layer || !opt.head) throw Error(ErrorCode::BadSelector, "--layer and --head are required");
    query.emplace("layer", std::to_string(*opt.layer));
    query.emplace("head", std::to_string(*opt.head));
    query.emplace("kind", opt.kind);
    state.bundle().instance(opt.instance);
    return state.layout_body(opt.instance, parse_layout_query(query));
  }
  if (opt.view == "comparison") {
    std::string heads = opt.heads;
    if (heads.empty() && opt.layer && opt.head)
      heads = "l" + std::to_string(*opt.layer) + "h" + std::to_string(*opt.head);
    if (heads.empty()) throw Error(ErrorCode::BadSelector, "--heads is required");
    query.emplace("heads", heads);
    return comparison_body(state, opt.instance, query).dump();
  }
  throw Error(ErrorCode::BadSelector, "unknown view '" + opt.view + "'");
}

inline int cmd_export(const std::filesystem::path& bundle_path, const ExportOptions& opt,
                      const std::filesystem::path& out_path, std::ostream& out,
                      std::ostream& err) {
  int status = 0;
  auto bundle = detail::load_valid(bundle_path, err, status);
  if (!bundle) return status;
  try {
    ServerState state(std::move(*bundle), scale_config_from_env());
    const auto body = export_body(state, opt);
    if (!detail::write_text(out_path, body, err)) return 2;
    out << "wrote " << opt.view << " payload to " << out_path.string() << "\n";
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

inline int cmd_serve(const std::filesystem::path& bundle_path, int port,
                     const std::filesystem::path& static_dir, const std::string& host,
                     std::ostream& out, std::ostream& err) {
  int status = 0;
  auto bundle = detail::load_valid(bundle_path, err, status);
  if (!bundle) return 1;
  try {
    ServerState state(std::move(*bundle), scale_config_from_env());
    httplib::Server server;
    mount_routes(server, state, static_dir);
    if (!server.bind_to_port(host, port)) {
      err << "error: cannot bind " << host << ":" << port << "\n";
      return 1;
    }
    out << "serving " << state.bundle().instances.size() << " instances, "
        << state.scores().cards.size() << " heads on http://" << host << ":" << port << "\n"
        << std::flush;
    return server.listen_after_bind() ? 0 : 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int run_cli(int argc, char** argv) {
  CLI::App app{"Attention head analysis engine and explorer backend"};
  app.require_subcommand(1);

  std::string bundle_path;

  auto* validate = app.add_subcommand("validate", "Check a bundle and list violations");
  validate->add_option("bundle", bundle_path, "Bundle directory or manifest")->required();

  std::string out_path;
  auto* score = app.add_subcommand("score", "Score every head and write the overview data");
  score->add_option("bundle", bundle_path)->required();
  score->add_option("-o,--out", out_path, "Output JSON file")->required();

  int port = 8080;
  std::string static_dir;
  std::string host = "127.0.0.1";
  auto* serve = app.add_subcommand("serve", "Serve the JSON API and static frontend");
  serve->add_option("bundle", bundle_path)->required();
  serve->add_option("--port", port, "TCP port");
  serve->add_option("--static", static_dir, "Directory served under /");
  serve->add_option("--host", host, "Bind address");

  ExportOptions eo;
  std::size_t layer = 0, head = 0;
  double threshold = 0.0;
  auto* exp = app.add_subcommand("export", "Write one view's payload for offline inspection");
  exp->add_option("bundle", bundle_path)->required();
  exp->add_option("--view", eo.view, "overview|graph|comparison|projection")->required();
  exp->add_option("--instance", eo.instance);
  auto* layer_opt = exp->add_option("--layer", layer);
  auto* head_opt = exp->add_option("--head", head);
  exp->add_option("--kind", eo.kind, "force|grid|radial");
  auto* thr_opt = exp->add_option("--threshold", threshold);
  exp->add_option("--heads", eo.heads, "Comparison heads, e.g. l0h1,l1h0");
  exp->add_option("-o,--out", out_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (*validate) return cmd_validate(bundle_path, std::cout);
  if (*score) return cmd_score(bundle_path, out_path, std::cout, std::cerr);
  if (*serve) return cmd_serve(bundle_path, port, static_dir, host, std::cout, std::cerr);
  if (*exp) {
    if (*layer_opt) eo.layer = layer;
    if (*head_opt) eo.head = head;
    if (*thr_opt) eo.threshold = threshold;
    return cmd_export(bundle_path, eo, out_path, std::cout, std::cerr);
  }
  return 2;
}

}  // namespace dodrio
