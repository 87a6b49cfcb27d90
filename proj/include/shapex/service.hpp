#pragma once

// Session-based exploration service. `ExplorationService` holds the logic and
// returns JSON; `HttpServer` maps it onto HTTP routes.

#include <json.hpp>

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "shapex/engine.hpp"

namespace httplib {
class Server;
}

namespace shapex {

inline constexpr const char* kServiceVersion = "1.0.0";

struct Session {
  std::string id;
  Category category = Category::chair;
  std::string source;  // shape id or "upload"
  VoxelGrid grid;      // current shape (binary)
  StartPoint start;
  std::optional<Direction> direction;
  std::optional<ClipCode> edited;  // sketch mode condition
  std::optional<BinaryDirection> binary;
  std::map<std::pair<std::string, std::string>, TrajectoryCandidate> cache;  // (direction hash, alpha)
  nlohmann::json history = nlohmann::json::array();
  std::mutex mutex;
};

class ExplorationService {
 public:
  explicit ExplorationService(const Explorer& explorer);

  nlohmann::json health() const;
  // {"shape": id} or {"sketch": base64 PGM, "category": c}
  nlohmann::json create_session(const nlohmann::json& body);
  nlohmann::json get_session(const std::string& id) const;
  // {"mode": "binary", "attribute": a} | {"mode": "text", "source", "target"}
  // | {"mode": "sketch", "sketch": base64 PGM}
  nlohmann::json set_condition(const std::string& id, const nlohmann::json& body);
  nlohmann::json get_trajectory(const std::string& id, const std::vector<double>& alphas);
  nlohmann::json accept(const std::string& id, double alpha);
  // PGM bytes of a materialized candidate.
  std::string render(const std::string& id, double alpha) const;

  std::size_t session_count() const;

 private:
  std::shared_ptr<Session> find(const std::string& id) const;
  nlohmann::json state_of(const Session& s) const;
  nlohmann::json summary_of(const Session& s, const TrajectoryCandidate& c) const;
  void reset_start(Session& s, const VoxelGrid& grid, const SketchImage& sketch);

  const Explorer& explorer_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::atomic<std::uint64_t> next_id_{1};
};

// HTTP status for an error kind: 400 data, 404 missing, 409 state, 500 numeric.
int http_status(ErrorKind kind);
nlohmann::json error_body(const Error& e, const std::string& detail = {});
std::string alpha_key(double alpha);
std::vector<double> parse_alpha_list(std::string_view text);

class HttpServer {
 public:
  explicit HttpServer(ExplorationService& service);
  ~HttpServer();
  // Throws IoError when the port cannot be bound. Port 0 picks a free port.
  int bind(const std::string& host, int port);
  void run();  // blocks until stop()
  void stop();

 private:
  ExplorationService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace shapex
