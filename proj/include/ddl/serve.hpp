#pragma once

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "ddl/env.hpp"
#include "ddl/goals.hpp"
#include "ddl/trainer.hpp"

namespace ddl {

/// Single-slot rendezvous between the training thread and the HTTP
/// endpoint: at most one query is outstanding, and the trainer blocks on it.
class QueryMailbox {
 public:
  enum class Submit { Accepted, Stale, OutOfRange };

  /// Posts `query` and waits for an accepted response, the timeout, or
  /// close(). The slot is empty again on return.
  std::optional<PreferenceResponse> ask(const PreferenceQuery& query, std::chrono::milliseconds timeout);

  std::optional<PreferenceQuery> pending() const;
  /// Stale: no outstanding query with this id (including one already
  /// answered). OutOfRange: index outside [0, N]; the query stays pending.
  Submit respond(const PreferenceResponse& response);
  /// Wakes a blocked ask() and makes later ones return immediately.
  void close();
  int accepted_count() const;

 private:
  mutable std::mutex mutex_;
  std::condition_variable answered_;
  std::optional<PreferenceQuery> query_;
  std::optional<PreferenceResponse> response_;
  bool closed_ = false;
  int accepted_ = 0;
};

class MailboxPreference final : public PreferenceProvider {
 public:
  explicit MailboxPreference(QueryMailbox& mailbox) : mailbox_(mailbox) {}
  std::optional<PreferenceResponse> answer(const PreferenceQuery& query, std::chrono::milliseconds timeout) override {
    return mailbox_.ask(query, timeout);
  }
  std::string name() const override { return "http"; }

 private:
  QueryMailbox& mailbox_;
};

/// Thread-safe copy of the trainer's latest status for GET /status.
class StatusBoard {
 public:
  void update(const StatusSnapshot& snapshot);
  StatusSnapshot read() const;

 private:
  mutable std::mutex mutex_;
  StatusSnapshot snapshot_;
};

/// JSON bodies of the three endpoints, separated from the socket layer.
std::string status_json(const StatusSnapshot& status);
std::string query_json(const Environment& env, const PreferenceQuery& query);

/// GET /status, GET /query, POST /respond on a background thread.
class PreferenceServer {
 public:
  PreferenceServer(const Environment& env, QueryMailbox& mailbox, StatusBoard& status);
  ~PreferenceServer();
  PreferenceServer(const PreferenceServer&) = delete;
  PreferenceServer& operator=(const PreferenceServer&) = delete;

  /// Binds and starts serving; port 0 picks a free port. Returns false when
  /// the port cannot be bound.
  bool start(const std::string& host, int port);
  int port() const { return port_; }
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace ddl
