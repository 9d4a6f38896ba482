#include "ddl/serve.hpp"

#include <httplib.h>
#include <json.hpp>

namespace ddl {

using json = nlohmann::ordered_json;

std::optional<PreferenceResponse> QueryMailbox::ask(const PreferenceQuery& query, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  if (closed_) return std::nullopt;
  query_ = query;
  response_.reset();
  answered_.wait_for(lock, timeout, [&] { return response_.has_value() || closed_; });
  auto response = response_;
  query_.reset();
  response_.reset();
  return response;
}

std::optional<PreferenceQuery> QueryMailbox::pending() const {
  std::lock_guard lock(mutex_);
  if (response_) return std::nullopt;
  return query_;
}

QueryMailbox::Submit QueryMailbox::respond(const PreferenceResponse& response) {
  std::lock_guard lock(mutex_);
  if (!query_ || response_ || query_->query_id != response.query_id) return Submit::Stale;
  if (response.choice_index < 0 || response.choice_index > query_->keep_index()) return Submit::OutOfRange;
  response_ = response;
  ++accepted_;
  answered_.notify_all();
  return Submit::Accepted;
}

void QueryMailbox::close() {
  std::lock_guard lock(mutex_);
  closed_ = true;
  answered_.notify_all();
}

int QueryMailbox::accepted_count() const {
  std::lock_guard lock(mutex_);
  return accepted_;
}

void StatusBoard::update(const StatusSnapshot& snapshot) {
  std::lock_guard lock(mutex_);
  snapshot_ = snapshot;
}

StatusSnapshot StatusBoard::read() const {
  std::lock_guard lock(mutex_);
  return snapshot_;
}

// ---------------------------------------------------------------------------

namespace {

json render(const Environment& env, StateId highlight) {
  if (dynamic_cast<const GridMaze*>(&env) == nullptr) return nullptr;
  GridOverlay overlay;
  overlay.agent = highlight;
  json rows = json::array();
  for (const auto& row : render_grid(env, overlay)) {
    json cells = json::array();
    for (const auto& cell : row) cells.push_back(std::string(1, cell_code(cell.kind)));
    rows.push_back(std::move(cells));
  }
  return rows;
}

json state_json(StateId s) { return s == kNoState ? json(nullptr) : json(s); }

}  // namespace

std::string status_json(const StatusSnapshot& status) {
  json j;
  j["env_steps"] = status.env_steps;
  j["episode"] = status.episode;
  j["current_goal"] = state_json(status.current_goal);
  j["queries_used"] = status.queries_used;
  j["curve"] = status.curve;
  return j.dump();
}

std::string query_json(const Environment& env, const PreferenceQuery& query) {
  json j;
  j["query_id"] = query.query_id;
  json candidates = json::array();
  for (std::size_t i = 0; i < query.candidates.size(); ++i) {
    json c;
    c["index"] = i;
    c["state"] = query.candidates[i];
    c["grid_render"] = render(env, query.candidates[i]);
    candidates.push_back(std::move(c));
  }
  j["candidates"] = std::move(candidates);
  if (query.previous_goal == kNoState) {
    j["previous_goal"] = nullptr;
  } else {
    json prev;
    prev["index"] = query.keep_index();
    prev["state"] = query.previous_goal;
    prev["grid_render"] = render(env, query.previous_goal);
    j["previous_goal"] = std::move(prev);
  }
  j["issued_at_env_step"] = query.issued_at_env_step;
  return j.dump();
}

// ---------------------------------------------------------------------------

struct PreferenceServer::Impl {
  httplib::Server server;
};

PreferenceServer::PreferenceServer(const Environment& env, QueryMailbox& mailbox, StatusBoard& status)
    : impl_(std::make_unique<Impl>()) {
  auto& server = impl_->server;
  // httplib also sets SO_REUSEPORT, which would let a second server share a
  // port that is already in use.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  const auto error = [](httplib::Response& res, int code, const std::string& message) {
    res.status = code;
    res.set_content(json{{"error", message}}.dump(), "application/json");
  };
  server.Get("/status", [&status](const httplib::Request&, httplib::Response& res) {
    res.set_content(status_json(status.read()), "application/json");
  });
  server.Get("/query", [&env, &mailbox](const httplib::Request&, httplib::Response& res) {
    const auto query = mailbox.pending();
    if (!query) {
      res.status = 204;
      return;
    }
    res.set_content(query_json(env, *query), "application/json");
  });
  server.Post("/respond", [&mailbox, error](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("query_id") || !body.contains("choice_index") ||
        !body["query_id"].is_number_integer() || !body["choice_index"].is_number_integer()) {
      error(res, 400, "expected {\"query_id\": int, \"choice_index\": int}");
      return;
    }
    const PreferenceResponse response{body["query_id"].get<std::int64_t>(), body["choice_index"].get<int>()};
    switch (mailbox.respond(response)) {
      case QueryMailbox::Submit::Accepted:
        res.set_content(json{{"accepted", true}, {"query_id", response.query_id}}.dump(), "application/json");
        break;
      case QueryMailbox::Submit::Stale: error(res, 409, "no outstanding query with this id"); break;
      case QueryMailbox::Submit::OutOfRange: error(res, 400, "choice_index out of range"); break;
    }
  });
}

PreferenceServer::~PreferenceServer() { stop(); }

bool PreferenceServer::start(const std::string& host, int port) {
  auto& server = impl_->server;
  if (port == 0) {
    port_ = server.bind_to_any_port(host);
    if (port_ < 0) return false;
  } else {
    if (!server.bind_to_port(host, port)) return false;
    port_ = port;
  }
  thread_ = std::thread([&server] { server.listen_after_bind(); });
  server.wait_until_ready();
  return true;
}

void PreferenceServer::stop() {
  if (thread_.joinable()) {
    impl_->server.stop();
    thread_.join();
  }
}

}  // namespace ddl
