#include "ugclab/annoserver.hpp"

#include <charconv>
#include <chrono>
#include <map>
#include <mutex>

#include <httplib.h>
#include <json.hpp>

#include "ugclab/errors.hpp"

namespace ugclab {

namespace {

using nlohmann::json;
using SteadyClock = std::chrono::steady_clock;

constexpr const char* kApiVersion = "v1";

void send_ok(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(json{{"version", kApiVersion}, {"status", "ok"}, {"body", body}}.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, const json& body = nullptr) {
  json envelope{{"version", kApiVersion},
                {"status", "error"},
                {"error", {{"code", status}, {"message", message}}}};
  if (!body.is_null()) envelope["body"] = body;
  res.status = status;
  res.set_content(envelope.dump(), "application/json");
}

json span_json(const AnnotationSpan& s) {
  return {{"span_id", s.span_id},         {"sentence_id", s.sentence_id},
          {"token_start", s.token_start}, {"token_end", s.token_end},
          {"category", s.category},       {"label", std::string(category(s.category).label)},
          {"annotator", s.annotator},     {"timestamp_ms", s.timestamp_ms}};
}

std::size_t query_size(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const auto v = req.get_param_value(name);
  std::size_t out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) throw ConfigError(std::string("bad '") + name + "' value");
  return out;
}

}  // namespace

struct AnnotationServer::Impl {
  struct Lease {
    std::string holder;
    SteadyClock::time_point expires;
  };

  AnnotationStore& store;
  ServerOptions options;
  httplib::Server server;
  int bound_port = -1;

  std::mutex corpora_mutex;
  std::map<std::string, std::vector<Sentence>> corpora;

  std::mutex lease_mutex;
  std::map<std::string, Lease> leases;
  std::map<std::string, std::unique_ptr<std::mutex>> write_mutexes;

  Impl(AnnotationStore& s, ServerOptions o) : store(s), options(std::move(o)) { routes(); }

  std::mutex& write_mutex(const std::string& id) {
    std::lock_guard lock(lease_mutex);
    auto& m = write_mutexes[id];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
  }

  /// Holder of a live lease other than `who`, if any.
  std::optional<std::string> conflicting_lease(const std::string& id, const std::string& who) {
    std::lock_guard lock(lease_mutex);
    auto it = leases.find(id);
    if (it == leases.end() || it->second.expires <= SteadyClock::now()) return std::nullopt;
    if (it->second.holder == who) return std::nullopt;
    return it->second.holder;
  }

  AnnotationSession* session_or_404(const httplib::Request& req, httplib::Response& res) {
    auto* s = store.find(req.path_params.at("id"));
    if (!s) send_error(res, 404, "no session '" + req.path_params.at("id") + "'");
    return s;
  }

  json session_json(const AnnotationSession& s) {
    const auto snap = s.snapshot();
    return {{"session_id", s.id()},
            {"annotator", s.annotator()},
            {"corpus", s.corpus_name()},
            {"n_sentences", s.sentences().size()},
            {"n_spans", snap.spans.size()},
            {"n_done", snap.done.size()}};
  }

  /// Runs a write handler under the session's write mutex after the lease
  /// check.
  template <typename F>
  void guarded_write(const httplib::Request& req, httplib::Response& res, F&& body) {
    auto* s = session_or_404(req, res);
    if (!s) return;
    const std::string who = req.get_header_value("X-Lease-Holder");
    std::lock_guard lock(write_mutex(s->id()));
    if (auto holder = conflicting_lease(s->id(), who)) {
      send_error(res, 409, "session is leased by '" + *holder + "'", json{{"holder", *holder}});
      return;
    }
    body(*s);
  }

  void routes() {
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const json::exception& e) {
        send_error(res, 400, std::string("malformed request: ") + e.what());
      } catch (const DataError& e) {
        send_error(res, 422, e.what());
      } catch (const ConfigError& e) {
        send_error(res, 400, e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    });

    server.Get("/api/v1/categories", [](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& c : categories()) out.push_back({{"code", c.code}, {"label", std::string(c.label)}});
      send_ok(res, out);
    });

    server.Get("/api/v1/corpora", [this](const httplib::Request&, httplib::Response& res) {
      std::lock_guard lock(corpora_mutex);
      json out = json::array();
      for (const auto& [name, sents] : corpora) out.push_back({{"name", name}, {"n_sentences", sents.size()}});
      send_ok(res, out);
    });

    server.Get("/api/v1/sessions", [this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& id : store.session_ids()) {
        if (auto* s = store.find(id)) out.push_back(session_json(*s));
      }
      send_ok(res, out);
    });

    server.Post("/api/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      const auto in = json::parse(req.body);
      const auto name = in.at("corpus").get<std::string>();
      const auto annotator = in.at("annotator").get<std::string>();
      std::vector<Sentence> sents;
      {
        std::lock_guard lock(corpora_mutex);
        auto it = corpora.find(name);
        if (it == corpora.end()) {
          send_error(res, 404, "no corpus '" + name + "'");
          return;
        }
        sents = it->second;
      }
      auto& s = store.create_session(name, sents, annotator);
      send_ok(res, session_json(s), 201);
    });

    server.Get("/api/v1/sessions/:id", [this](const httplib::Request& req, httplib::Response& res) {
      if (auto* s = session_or_404(req, res)) send_ok(res, session_json(*s));
    });

    server.Get("/api/v1/sessions/:id/sentences", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = session_or_404(req, res);
      if (!s) return;
      const std::size_t offset = query_size(req, "offset", 0);
      const std::size_t limit = std::min<std::size_t>(query_size(req, "limit", 50), 500);
      const auto snap = s->snapshot();
      std::map<std::size_t, json> spans;
      for (const auto& sp : snap.spans) {
        auto& arr = spans[sp.sentence_id];
        if (arr.is_null()) arr = json::array();
        arr.push_back(span_json(sp));
      }
      json list = json::array();
      const auto& sents = s->sentences();
      for (std::size_t i = offset; i < sents.size() && i < offset + limit; ++i) {
        auto it = spans.find(i);
        list.push_back({{"id", i},
                        {"text", sents[i].raw},
                        {"tokens", sents[i].tokens},
                        {"done", snap.done.contains(i)},
                        {"spans", it == spans.end() ? json::array() : it->second}});
      }
      send_ok(res, {{"session_id", s->id()},
                    {"total", sents.size()},
                    {"offset", offset},
                    {"limit", limit},
                    {"sentences", list}});
    });

    server.Post("/api/v1/sessions/:id/spans", [this](const httplib::Request& req, httplib::Response& res) {
      const auto in = json::parse(req.body);
      guarded_write(req, res, [&](AnnotationSession& s) {
        const auto r = s.add_span(in.at("sentence_id").get<std::size_t>(), in.at("token_start").get<std::size_t>(),
                                  in.at("token_end").get<std::size_t>(), in.at("category").get<int>());
        if (r.duplicate) {
          send_error(res, 409, "duplicate span", json{{"existing_span_id", r.span_id}});
        } else {
          send_ok(res, {{"span_id", r.span_id}}, 201);
        }
      });
    });

    server.Delete("/api/v1/sessions/:id/spans/:span", [this](const httplib::Request& req, httplib::Response& res) {
      guarded_write(req, res, [&](AnnotationSession& s) {
        const auto& raw = req.path_params.at("span");
        std::uint64_t id = 0;
        auto r = std::from_chars(raw.data(), raw.data() + raw.size(), id);
        if (r.ec != std::errc{} || r.ptr != raw.data() + raw.size() || !s.remove_span(id)) {
          send_error(res, 404, "no span '" + raw + "'");
          return;
        }
        send_ok(res, {{"span_id", id}, {"removed", true}});
      });
    });

    server.Put("/api/v1/sessions/:id/sentences/:sid/done",
               [this](const httplib::Request& req, httplib::Response& res) {
                 const auto in = req.body.empty() ? json::object() : json::parse(req.body);
                 guarded_write(req, res, [&](AnnotationSession& s) {
                   const auto& raw = req.path_params.at("sid");
                   std::size_t sid = 0;
                   auto r = std::from_chars(raw.data(), raw.data() + raw.size(), sid);
                   if (r.ec != std::errc{} || r.ptr != raw.data() + raw.size()) {
                     send_error(res, 404, "no sentence '" + raw + "'");
                     return;
                   }
                   const bool done = in.value("done", true);
                   s.set_done(sid, done);
                   send_ok(res, {{"sentence_id", sid}, {"done", done}});
                 });
               });

    server.Post("/api/v1/sessions/:id/lease", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = session_or_404(req, res);
      if (!s) return;
      const auto in = json::parse(req.body);
      const auto holder = in.at("holder").get<std::string>();
      const int ttl = in.value("ttl_seconds", options.default_lease_seconds);
      if (holder.empty() || ttl <= 0) throw ConfigError("lease needs a holder and a positive ttl");
      std::lock_guard lock(lease_mutex);
      auto it = leases.find(s->id());
      const auto now = SteadyClock::now();
      if (it != leases.end() && it->second.expires > now && it->second.holder != holder) {
        send_error(res, 409, "session is leased by '" + it->second.holder + "'", json{{"holder", it->second.holder}});
        return;
      }
      leases[s->id()] = {holder, now + std::chrono::seconds(ttl)};
      send_ok(res, {{"holder", holder}, {"ttl_seconds", ttl}});
    });

    server.Delete("/api/v1/sessions/:id/lease", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = session_or_404(req, res);
      if (!s) return;
      const std::string who = req.get_header_value("X-Lease-Holder");
      std::lock_guard lock(lease_mutex);
      auto it = leases.find(s->id());
      if (it != leases.end() && it->second.expires > SteadyClock::now() && it->second.holder != who) {
        send_error(res, 409, "session is leased by '" + it->second.holder + "'", json{{"holder", it->second.holder}});
        return;
      }
      if (it != leases.end()) leases.erase(it);
      send_ok(res, {{"released", true}});
    });

    server.Get("/api/v1/sessions/:id/export", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = session_or_404(req, res);
      if (!s) return;
      const auto text = s->export_text();
      if (req.has_param("raw") && req.get_param_value("raw") != "0") {
        res.set_header("Content-Disposition", "attachment; filename=\"annotations-" + s->id() + ".tsv\"");
        res.set_content(text, "text/tab-separated-values; charset=utf-8");
        return;
      }
      send_ok(res, {{"session_id", s->id()}, {"format", kExportHeader}, {"text", text}});
    });

    if (options.static_dir && !server.set_mount_point("/", options.static_dir->string())) {
      throw IoError("cannot serve static files from '" + options.static_dir->string() + "'");
    }
  }
};

AnnotationServer::AnnotationServer(AnnotationStore& store, ServerOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {}

AnnotationServer::~AnnotationServer() { stop(); }

void AnnotationServer::register_corpus(const std::string& name, std::vector<Sentence> sentences) {
  std::lock_guard lock(impl_->corpora_mutex);
  impl_->corpora[name] = std::move(sentences);
}

int AnnotationServer::bind() {
  if (impl_->bound_port >= 0) return impl_->bound_port;
  const auto& o = impl_->options;
  if (o.port == 0) {
    impl_->bound_port = impl_->server.bind_to_any_port(o.host);
  } else {
    impl_->bound_port = impl_->server.bind_to_port(o.host, o.port) ? o.port : -1;
  }
  if (impl_->bound_port < 0) throw IoError("cannot bind " + o.host + ":" + std::to_string(o.port));
  return impl_->bound_port;
}

void AnnotationServer::listen() {
  bind();
  impl_->server.listen_after_bind();
}

void AnnotationServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace ugclab
