#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ugclab/annostore.hpp"

namespace ugclab {

struct ServerOptions {
  std::string host = "127.0.0.1";
  /// 0 picks a free port.
  int port = 8080;
  /// Built UI assets, served at "/" when set.
  std::optional<std::filesystem::path> static_dir;
  int default_lease_seconds = 300;
};

/// JSON-over-HTTP front end of an AnnotationStore. Every JSON response is
/// wrapped as {"version": "v1", "status": "ok"|"error", "body"|"error": ...}.
///
///   GET    /api/v1/categories
///   GET    /api/v1/corpora
///   GET    /api/v1/sessions
///   POST   /api/v1/sessions                       {"corpus", "annotator"}
///   GET    /api/v1/sessions/{id}
///   GET    /api/v1/sessions/{id}/sentences?offset=&limit=
///   POST   /api/v1/sessions/{id}/spans            {"sentence_id", "token_start", "token_end", "category"}
///   DELETE /api/v1/sessions/{id}/spans/{spanId}
///   PUT    /api/v1/sessions/{id}/sentences/{sid}/done   {"done": bool}
///   POST   /api/v1/sessions/{id}/lease            {"holder", "ttl_seconds"}
///   DELETE /api/v1/sessions/{id}/lease
///   GET    /api/v1/sessions/{id}/export[?raw=1]
///
/// Writes carry an `X-Lease-Holder` header. While another holder's lease is
/// live the write is refused with 409; with no lease any writer is accepted.
class AnnotationServer {
 public:
  AnnotationServer(AnnotationStore& store, ServerOptions options = {});
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  /// Makes a corpus available to POST /api/v1/sessions.
  void register_corpus(const std::string& name, std::vector<Sentence> sentences);

  /// Binds the socket and returns the port. Throws IoError on failure.
  int bind();
  /// Serves until stop(). Binds first if needed.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ugclab
