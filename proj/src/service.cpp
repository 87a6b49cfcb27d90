#include "shapex/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <cstring>

#include "shapex/io.hpp"

namespace shapex {

using nlohmann::json;

namespace {

std::string direction_hash(const Direction& d) {
  std::string bytes(reinterpret_cast<const char*>(d.vector.data()), static_cast<std::size_t>(d.vector.size()) * sizeof(double));
  return io::sha256_hex(bytes);
}

SketchImage decode_sketch_field(const json& body, const char* key, int width) {
  if (!body.contains(key) || !body[key].is_string()) throw DataError(std::string("missing base64 PGM field '") + key + "'");
  const SketchImage s = decode_pgm(io::base64_decode(body[key].get<std::string>()));
  if (s.width() != width)
    throw DataError("sketch must be " + std::to_string(width) + "x" + std::to_string(width) + ", got " +
                    std::to_string(s.width()) + "x" + std::to_string(s.width()));
  return s;
}

std::string str_field(const json& body, const char* key) {
  if (!body.contains(key) || !body[key].is_string()) throw DataError(std::string("missing string field '") + key + "'");
  return body[key].get<std::string>();
}

json oracle_scores(Category cat, const VoxelGrid& grid) {
  json out = json::object();
  const VoxelGrid b = grid.binarized(0.5f);
  for (Attribute a : applicable_attributes(cat)) out[std::string(to_string(a))] = attribute_score(b, attribute_label(cat, a));
  return out;
}

}  // namespace

std::string alpha_key(double alpha) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", alpha == 0.0 ? 0.0 : alpha);
  return buf;
}

std::vector<double> parse_alpha_list(std::string_view text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item(text.substr(pos, comma - pos));
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || end != item.c_str() + item.size() || !std::isfinite(v))
      throw DataError("malformed alpha list: '" + std::string(text) + "'");
    out.push_back(v);
    pos = comma + 1;
  }
  return out;
}

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::not_found: return 404;
    case ErrorKind::state: return 409;
    case ErrorKind::numeric:
    case ErrorKind::io: return 500;
    default: return 400;
  }
}

json error_body(const Error& e, const std::string& detail) {
  return json{{"code", to_string(e.kind())}, {"message", e.what()}, {"detail", detail}};
}

ExplorationService::ExplorationService(const Explorer& explorer) : explorer_(explorer) {}

json ExplorationService::health() const {
  return json{{"status", "ok"}, {"version", kServiceVersion}, {"hashes", explorer_.bundle().current_hashes()}};
}

std::shared_ptr<Session> ExplorationService::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session: " + id);
  return it->second;
}

std::size_t ExplorationService::session_count() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

void ExplorationService::reset_start(Session& s, const VoxelGrid& grid, const SketchImage& sketch) {
  s.grid = grid;
  s.start = explorer_.start_from_grid(grid, sketch, s.category);
  s.direction.reset();
  s.edited.reset();
  s.binary.reset();
  s.cache.clear();
}

json ExplorationService::state_of(const Session& s) const {
  json coopt = {{"initial_loss", s.start.coopt.initial_loss},
                {"final_loss", s.start.coopt.final_loss},
                {"best_iteration", s.start.coopt.best_iteration},
                {"iterations", static_cast<int>(s.start.coopt.trace.size()) - 1}};
  json dir = nullptr;
  if (s.direction)
    dir = {{"mode", to_string(s.direction->mode)}, {"norm", s.direction->norm()}, {"metadata", s.direction->metadata}};
  json cached = json::array();
  for (const auto& [key, _] : s.cache) cached.push_back(key.second);
  return json{{"id", s.id},
              {"category", to_string(s.category)},
              {"source", s.source},
              {"sketch", io::base64_encode(encode_pgm(s.start.sketch))},
              {"occupied", s.grid.occupied_count()},
              {"oracle", oracle_scores(s.category, s.grid)},
              {"norms", {{"initial", s.start.initial.values.norm()}, {"co_optimized", s.start.coopt.code.values.norm()}}},
              {"coopt", coopt},
              {"direction", dir},
              {"cached_alphas", cached},
              {"history", s.history}};
}

json ExplorationService::create_session(const json& body) {
  auto s = std::make_shared<Session>();
  if (body.contains("shape")) {
    const auto& rec = explorer_.dataset().find(str_field(body, "shape"));
    s->category = rec.category;
    s->source = rec.id;
    reset_start(*s, rec.grid, rec.sketch);
  } else if (body.contains("sketch")) {
    const SketchImage sketch = decode_sketch_field(body, "sketch", explorer_.bundle().embedding.sketch_width);
    s->category = parse_category(str_field(body, "category"));
    s->source = "upload";
    s->start = explorer_.start_from_sketch(sketch, s->category);
    s->grid = s->start.start.binarized(0.5f);
  } else {
    throw DataError("session needs a 'shape' id or an uploaded 'sketch'");
  }
  s->id = "s" + std::to_string(next_id_++);
  {
    std::lock_guard lock(mutex_);
    sessions_[s->id] = s;
  }
  std::lock_guard lock(s->mutex);
  return state_of(*s);
}

json ExplorationService::get_session(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  return state_of(*s);
}

json ExplorationService::set_condition(const std::string& id, const json& body) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  const DirectionMode mode = parse_direction_mode(str_field(body, "mode"));
  const auto& emb = explorer_.bundle().embedding;
  Direction d;
  std::optional<ClipCode> edited;
  std::optional<BinaryDirection> binary;
  json out;
  switch (mode) {
    case DirectionMode::binary: {
      const Attribute a = parse_attribute(str_field(body, "attribute"));
      binary = explorer_.binary_direction(s->category, a);
      d = binary->direction;
      const auto& st = binary->stats;
      out["separation"] = {{"training_accuracy", st.training_accuracy}, {"mean_positive", st.mean_positive},
                           {"mean_negative", st.mean_negative},         {"pooled_sd", st.pooled_sd},
                           {"gap", st.gap},                             {"warnings", st.warnings}};
      break;
    }
    case DirectionMode::text:
      d = direction_from_text(emb, str_field(body, "source"), str_field(body, "target"));
      break;
    case DirectionMode::sketch: {
      const SketchImage e = decode_sketch_field(body, "sketch", emb.sketch_width);
      d = direction_from_sketch(emb, s->start.sketch, e);
      edited = encode_image(emb, e);
      break;
    }
  }
  s->direction = d;
  s->edited = edited;
  s->binary = binary;
  out["mode"] = to_string(mode);
  out["norm"] = d.norm();
  out["unit"] = d.unit;
  out["degenerate"] = d.degenerate();
  out["metadata"] = d.metadata;
  if (d.degenerate()) out["warning"] = "direction is zero; every candidate equals the current shape";
  return out;
}

json ExplorationService::summary_of(const Session& s, const TrajectoryCandidate& c) const {
  json j = {{"alpha", c.alpha},
            {"sketch", io::base64_encode(encode_pgm(c.sketch))},
            {"code_norm", c.code.values.norm()},
            {"oracle", oracle_scores(s.category, c.grid)}};
  if (c.similarity) j["similarity"] = *c.similarity;
  return j;
}

json ExplorationService::get_trajectory(const std::string& id, const std::vector<double>& alphas_in) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (!s->direction) throw StateError("session " + id + " has no direction; set a condition first");
  const std::vector<double> alphas = alphas_in.empty() ? explorer_.alpha_grid() : alphas_in;
  const std::string dh = direction_hash(*s->direction);
  std::vector<double> missing;
  for (double a : alphas)
    if (!s->cache.count({dh, alpha_key(a)})) missing.push_back(a);
  if (!missing.empty()) {
    auto fresh = explore_trajectory(explorer_.bundle().mapper(s->category), explorer_.bundle().space,
                                    s->start.coopt.code, *s->direction, missing, explorer_.bundle().embedding.sketch_width);
    if (s->edited) {
      for (auto& c : fresh)
        c.similarity = clip_similarity(encode_image(explorer_.bundle().embedding, c.sketch), *s->edited);
    }
    for (auto& c : fresh) s->cache.emplace(std::pair{dh, alpha_key(c.alpha)}, std::move(c));
  }
  std::vector<double> sorted = alphas;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  json list = json::array();
  std::optional<std::size_t> best;
  double best_sim = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& c = s->cache.at({dh, alpha_key(sorted[i])});
    list.push_back(summary_of(*s, c));
    if (c.similarity && (!best || *c.similarity > best_sim)) {
      best = i;
      best_sim = *c.similarity;
    }
  }
  json out = {{"mode", to_string(s->direction->mode)}, {"candidates", list}};
  if (best) out["selected_alpha"] = sorted[*best];
  return out;
}

json ExplorationService::accept(const std::string& id, double alpha) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (!s->direction) throw StateError("session " + id + " has no direction; set a condition first");
  const auto it = s->cache.find({direction_hash(*s->direction), alpha_key(alpha)});
  if (it == s->cache.end()) throw StateError("alpha " + alpha_key(alpha) + " has not been materialized");
  const TrajectoryCandidate chosen = it->second;
  const json entry = {{"alpha", chosen.alpha},
                      {"mode", to_string(s->direction->mode)},
                      {"metadata", s->direction->metadata},
                      {"previous_occupied", s->grid.occupied_count()}};
  const VoxelGrid grid = chosen.grid.binarized(0.5f);
  reset_start(*s, grid, chosen.sketch);
  s->history.push_back(entry);
  return state_of(*s);
}

std::string ExplorationService::render(const std::string& id, double alpha) const {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (!s->direction) throw StateError("session " + id + " has no direction; set a condition first");
  const auto it = s->cache.find({direction_hash(*s->direction), alpha_key(alpha)});
  if (it == s->cache.end()) throw StateError("alpha " + alpha_key(alpha) + " has not been materialized");
  return encode_pgm(it->second.sketch);
}

// ------------------------------------------------------------------------ HTTP

HttpServer::HttpServer(ExplorationService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  // httplib's default adds SO_REUSEPORT, which lets a second server share the port silently.
  srv.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  auto reply = [](httplib::Response& res, const json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  };
  auto guarded = [reply](auto&& fn) {
    return [fn, reply](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        reply(res, error_body(e, req.path), http_status(e.kind()));
      } catch (const json::exception& e) {
        reply(res, error_body(DataError(std::string("malformed JSON: ") + e.what()), req.path), 400);
      } catch (const std::exception& e) {
        reply(res, json{{"code", "internal"}, {"message", e.what()}, {"detail", req.path}}, 500);
      }
    };
  };
  auto body_of = [](const httplib::Request& req) { return req.body.empty() ? json::object() : json::parse(req.body); };

  srv.Get("/health", guarded([this, reply](const httplib::Request&, httplib::Response& res) { reply(res, service_.health()); }));
  srv.Post("/sessions", guarded([this, reply, body_of](const httplib::Request& req, httplib::Response& res) {
             reply(res, service_.create_session(body_of(req)), 201);
           }));
  srv.Get(R"(/sessions/([^/]+))", guarded([this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, service_.get_session(req.matches[1]));
          }));
  srv.Post(R"(/sessions/([^/]+)/condition)",
           guarded([this, reply, body_of](const httplib::Request& req, httplib::Response& res) {
             reply(res, service_.set_condition(req.matches[1], body_of(req)));
           }));
  srv.Get(R"(/sessions/([^/]+)/trajectory)", guarded([this, reply](const httplib::Request& req, httplib::Response& res) {
            std::vector<double> alphas;
            if (req.has_param("alphas")) alphas = parse_alpha_list(req.get_param_value("alphas"));
            reply(res, service_.get_trajectory(req.matches[1], alphas));
          }));
  srv.Post(R"(/sessions/([^/]+)/accept)", guarded([this, reply, body_of](const httplib::Request& req, httplib::Response& res) {
             const json b = body_of(req);
             if (!b.contains("alpha") || !b["alpha"].is_number()) throw DataError("accept needs a numeric 'alpha'");
             reply(res, service_.accept(req.matches[1], b["alpha"].get<double>()));
           }));
  srv.Get(R"(/sessions/([^/]+)/render/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto alphas = parse_alpha_list(req.matches[2].str());
            if (alphas.size() != 1) throw DataError("render takes a single alpha");
            res.set_content(service_.render(req.matches[1], alphas.front()), "image/x-portable-graymap");
          }));
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = server_->bind_to_any_port(host);
    if (p <= 0) throw IoError("could not bind any port on " + host);
    return p;
  }
  if (!server_->bind_to_port(host, port)) throw IoError("could not bind " + host + ":" + std::to_string(port) + " (port in use?)");
  return port;
}

void HttpServer::run() { server_->listen_after_bind(); }
void HttpServer::stop() { server_->stop(); }

}  // namespace shapex
