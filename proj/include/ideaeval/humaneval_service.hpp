#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "ideaeval/humaneval.hpp"

namespace ideaeval::humaneval {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  ///< 0 binds any free port
  std::optional<std::filesystem::path> static_dir;  ///< annotator UI bundle served at "/"
};

/// JSON-over-HTTP front for a HumanEvalStore:
///   GET  /api/sessions/{id}            blind session view
///   POST /api/sessions/{id}/ratings    201 / 400 / 404 / 409
///   GET  /api/runs/{run_id}/report     200 / 404 / 409
///   GET  /healthz
class HumanEvalService {
 public:
  HumanEvalService(HumanEvalStore& store, ServiceConfig config);
  ~HumanEvalService();
  HumanEvalService(const HumanEvalService&) = delete;
  HumanEvalService& operator=(const HumanEvalService&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Binds and serves on the calling thread until stop().
  void serve_forever();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ideaeval::humaneval
