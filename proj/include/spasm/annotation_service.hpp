#pragma once

// Data endpoints behind the annotation viewer.
//
// AnnotationService holds the corpus and the label log and answers requests
// as plain (status, JSON) pairs; AnnotationServer maps them onto HTTP routes.
// Conversation payloads are built from an explicit field whitelist, so
// verdicts or run metadata can never reach annotators.

#include <chrono>
#include <ctime>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <httplib.h>

#include "spasm/echo.hpp"
#include "spasm/record.hpp"
#include "spasm/store.hpp"

namespace spasm {

struct ServiceResponse {
  int status = 200;
  json body;
  std::string content_type = "application/json";
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
  return out;
}

// The persona card shown to annotators.
inline json persona_card(const PersonaDescription& p) {
  return json{{"age", p.profile.age},
              {"gender", p.profile.gender},
              {"occupation", p.profile.occupation},
              {"location", p.profile.location},
              {"domain", p.profile.domain},
              {"emotion", p.profile.emotion},
              {"intensity", to_string(p.profile.intensity)},
              {"expressiveness", to_string(p.profile.expressiveness)},
              {"self_disclosure", to_string(p.profile.self_disclosure)},
              {"assertiveness", to_string(p.profile.assertiveness)},
              {"politeness_style", to_string(p.profile.politeness_style)},
              {"description", p.text}};
}

class AnnotationService {
public:
  using Clock = std::function<std::string()>;

  AnnotationService(std::vector<ConversationRecord> corpus, std::optional<fs::path> labels_path,
                    Clock clock = utc_timestamp)
      : corpus_(std::move(corpus)), labels_path_(std::move(labels_path)), clock_(std::move(clock)) {
    for (std::size_t i = 0; i < corpus_.size(); ++i) {
      if (!by_id_.emplace(corpus_[i].conversation_id, i).second)
        throw FormatError("duplicate conversation_id " + corpus_[i].conversation_id);
      if (!persona_index_.contains(corpus_[i].persona_id)) persona_order_.push_back(corpus_[i].persona_id);
      persona_index_[corpus_[i].persona_id].push_back(i);
    }
    if (labels_path_ && fs::exists(*labels_path_))
      log_ = read_jsonl_as<LabelRecord>(*labels_path_);
    if (labels_path_) writer_ = std::make_unique<JsonlWriter>(*labels_path_, JsonlWriter::Mode::append);
  }

  ServiceResponse personas() const {
    json out = json::array();
    for (const auto& pid : persona_order_) {
      const auto& idx = persona_index_.at(pid);
      json convs = json::array();
      for (auto i : idx) convs.push_back(corpus_[i].conversation_id);
      json p = persona_card(corpus_[idx.front()].persona);
      p["persona_id"] = pid;
      p["conversation_ids"] = std::move(convs);
      out.push_back(std::move(p));
    }
    return {200, out};
  }

  ServiceResponse conversations(const std::optional<std::string>& persona_id = {}) const {
    json out = json::array();
    for (const auto& r : corpus_) {
      if (persona_id && r.persona_id != *persona_id) continue;
      out.push_back({{"conversation_id", r.conversation_id},
                     {"persona_id", r.persona_id},
                     {"n_turns", r.turns.size()}});
    }
    return {200, out};
  }

  ServiceResponse conversation(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return error(404, "unknown conversation " + id);
    const auto& r = corpus_[it->second];
    json turns = json::array();
    for (const auto& t : r.turns)
      turns.push_back({{"index", t.index}, {"speaker", t.speaker.name}, {"content", t.content}});
    return {200, json{{"conversation_id", r.conversation_id},
                      {"persona_id", r.persona_id},
                      {"persona", persona_card(r.persona)},
                      {"turns", std::move(turns)},
                      {"termination_reason", r.termination_reason}}};
  }

  // Body: {"conversation_id", "annotator_id", "label": "echoing" | "no_echoing" | null}.
  ServiceResponse submit_label(const json& body) {
    if (!body.is_object()) return error(400, "body must be a JSON object");
    LabelRecord rec;
    try {
      rec.conversation_id = body.at("conversation_id").get<std::string>();
      rec.annotator_id = body.at("annotator_id").get<std::string>();
      const auto& l = body.at("label");
      if (!l.is_null()) rec.label = parse_echo_label(l.get<std::string>());
    } catch (const json::exception& e) {
      return error(400, std::string("bad label payload: ") + e.what());
    } catch (const FormatError& e) {
      return error(400, e.what());
    }
    if (rec.annotator_id.empty()) return error(400, "annotator_id must be nonempty");
    if (!by_id_.contains(rec.conversation_id)) return error(404, "unknown conversation " + rec.conversation_id);
    rec.timestamp = clock_();
    {
      std::lock_guard lock(mutex_);
      log_.push_back(rec);
      if (writer_) writer_->write_value(rec);
    }
    auto p = progress(rec.annotator_id);
    p.body["recorded"] = rec;
    return p;
  }

  ServiceResponse progress(const std::string& annotator) const {
    if (annotator.empty()) return error(400, "annotator query parameter required");
    const auto labeled = labeled_by(annotator).size();
    return {200, json{{"annotator_id", annotator},
                      {"total", corpus_.size()},
                      {"labeled", labeled},
                      {"remaining", corpus_.size() - labeled}}};
  }

  // First conversation after `after` (wrapping) that `annotator` has not
  // labelled; null when everything is done.
  ServiceResponse next_unlabeled(const std::string& annotator, const std::string& after = {}) const {
    if (annotator.empty()) return error(400, "annotator query parameter required");
    const auto done = labeled_by(annotator);
    std::size_t start = 0;
    if (auto it = by_id_.find(after); it != by_id_.end()) start = it->second + 1;
    for (std::size_t k = 0; k < corpus_.size(); ++k) {
      const auto& id = corpus_[(start + k) % corpus_.size()].conversation_id;
      if (!done.contains(id)) return {200, json{{"conversation_id", id}}};
    }
    return {200, json{{"conversation_id", nullptr}}};
  }

  // Current label state as JSONL: one row per (conversation, annotator)
  // with a label, last write winning.
  ServiceResponse export_labels(const std::optional<std::string>& annotator = {}) const {
    std::string text;
    for (const auto& r : resolved())
      if (!annotator || r.annotator_id == *annotator) text += json(r).dump() + "\n";
    return {200, text, "application/x-ndjson"};
  }

  std::vector<LabelRecord> resolved() const {
    std::lock_guard lock(mutex_);
    return resolve_labels(log_);
  }

  std::vector<LabelRecord> audit_log() const {
    std::lock_guard lock(mutex_);
    return log_;
  }

  std::size_t size() const noexcept { return corpus_.size(); }

private:
  static ServiceResponse error(int status, std::string message) {
    return {status, json{{"error", std::move(message)}}};
  }

  std::set<std::string> labeled_by(const std::string& annotator) const {
    std::set<std::string> ids;
    for (const auto& r : resolved())
      if (r.annotator_id == annotator) ids.insert(r.conversation_id);
    return ids;
  }

  std::vector<ConversationRecord> corpus_;
  std::map<std::string, std::size_t> by_id_;
  std::vector<std::string> persona_order_;
  std::map<std::string, std::vector<std::size_t>> persona_index_;
  std::optional<fs::path> labels_path_;
  Clock clock_;
  std::vector<LabelRecord> log_;
  std::unique_ptr<JsonlWriter> writer_;
  mutable std::mutex mutex_;
};

class AnnotationServer {
public:
  AnnotationServer(AnnotationService& service, std::optional<fs::path> assets = {})
      : service_(service) {
    // httplib defaults to SO_REUSEPORT, which would let two servers share a
    // port silently. Plain SO_REUSEADDR still allows quick restarts.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    auto reply = [](httplib::Response& res, const ServiceResponse& r) {
      res.status = r.status;
      if (r.body.is_string()) res.set_content(r.body.get<std::string>(), r.content_type);
      else res.set_content(r.body.dump(), r.content_type);
    };
    auto param = [](const httplib::Request& req, const char* key) -> std::optional<std::string> {
      if (req.has_param(key)) return req.get_param_value(key);
      return std::nullopt;
    };

    server_.Get("/api/personas", [=, this](const httplib::Request&, httplib::Response& res) {
      reply(res, service_.personas());
    });
    server_.Get("/api/conversations", [=, this](const httplib::Request& req, httplib::Response& res) {
      reply(res, service_.conversations(param(req, "persona_id")));
    });
    server_.Get(R"(/api/conversations/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
      reply(res, service_.conversation(req.matches[1]));
    });
    server_.Post("/api/labels", [=, this](const httplib::Request& req, httplib::Response& res) {
      const auto body = json::parse(req.body, nullptr, false);
      reply(res, service_.submit_label(body.is_discarded() ? json() : body));
    });
    server_.Get("/api/progress", [=, this](const httplib::Request& req, httplib::Response& res) {
      reply(res, service_.progress(param(req, "annotator").value_or("")));
    });
    server_.Get("/api/next", [=, this](const httplib::Request& req, httplib::Response& res) {
      reply(res, service_.next_unlabeled(param(req, "annotator").value_or(""),
                                         param(req, "after").value_or("")));
    });
    server_.Get("/api/labels/export", [=, this](const httplib::Request& req, httplib::Response& res) {
      reply(res, service_.export_labels(param(req, "annotator")));
    });
    if (assets && !server_.set_mount_point("/", assets->string()))
      throw ConfigError("asset directory " + assets->string() + " does not exist");
  }

  // Binds without serving yet; port 0 picks a free port. Throws when the
  // port is taken.
  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  void listen() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

private:
  AnnotationService& service_;
  httplib::Server server_;
};

} // namespace spasm
