#include "hardmine/service.hpp"

#include <algorithm>
#include <charconv>

#include <httplib.h>

#include "hardmine/json_io.hpp"

namespace hardmine {

namespace {

constexpr const char* kThumbExtensions[] = {".png", ".jpg", ".jpeg"};

template <typename T>
T field(const json& body, const char* key) {
    if (!body.contains(key)) {
        throw Error("invalid_request", std::string("missing field '") + key + "'");
    }
    try {
        return body.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error("invalid_request", std::string("field '") + key + "' has the wrong type");
    }
}

} // namespace

AnnotationService::AnnotationService(Experiment experiment, ServiceOptions options)
    : experiment_(std::move(experiment)), options_(std::move(options)) {
    if (!experiment_.terminated() && !experiment_.in_cycle()) {
        experiment_.begin_cycle();
    }
}

json AnnotationService::envelope(json body) const {
    body["iteration"] = experiment_.iteration();
    body["model_version"] = experiment_.model_version();
    return body;
}

AnnotationService::Session& AnnotationService::session(const std::string& id) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        throw Error("unknown_session", "no session '" + id + "'");
    }
    return it->second;
}

void AnnotationService::reclaim_expired() {
    const auto now = options_.clock();
    for (auto& [id, s] : sessions_) {
        if (s.current && now - s.current->assigned_at >= options_.assignment_timeout) {
            assigned_.erase(s.current->sample_id);
            s.current.reset();
        }
    }
}

std::size_t AnnotationService::pending() const {
    return experiment_.pool().query().size() - assigned_.size();
}

std::optional<std::filesystem::path> AnnotationService::thumbnail(const SampleId& id) const {
    if (!options_.asset_dir) {
        return std::nullopt;
    }
    for (const char* ext : kThumbExtensions) {
        std::filesystem::path p = *options_.asset_dir / (id + ext);
        if (std::filesystem::is_regular_file(p)) {
            return p;
        }
    }
    return std::nullopt;
}

json AnnotationService::thumbnail_url(const SampleId& id) const {
    auto p = thumbnail(id);
    return p ? json("/assets/" + p->filename().string()) : json(nullptr);
}

json AnnotationService::open_session() {
    std::lock_guard lock(mutex_);
    reclaim_expired();
    const std::string id = "session-" + std::to_string(++session_counter_);
    sessions_.emplace(id, Session{});
    return envelope(json{{"session_id", id}, {"pending", pending()}});
}

json AnnotationService::next(const std::string& session_id, std::size_t round) {
    std::lock_guard lock(mutex_);
    if (round < 1) {
        throw Error("invalid_request", "round must be >= 1");
    }
    reclaim_expired();
    Session& s = session(session_id);
    if (!s.current && !experiment_.terminated()) {
        for (const SampleId& id : experiment_.pool().query()) {
            if (!assigned_.contains(id)) {
                s.current = Assignment{id, options_.clock()};
                assigned_.emplace(id, session_id);
                break;
            }
        }
    }
    if (!s.current) {
        return envelope(json{{"session_id", session_id},
                             {"sample_id", nullptr},
                             {"pending", pending()},
                             {"termination", to_string(experiment_.report().termination)}});
    }
    const Recommendation rec = experiment_.recommend(s.current->sample_id, round);
    json body = rec;
    body["session_id"] = session_id;
    body["pending"] = pending();
    body["thumbnail"] = thumbnail_url(rec.sample_id);
    for (json& c : body["candidates"]) {
        json thumbs = json::array();
        for (const auto& rep : c["representatives"]) {
            thumbs.push_back(thumbnail_url(rep.get<std::string>()));
        }
        c["thumbnails"] = thumbs;
    }
    return envelope(std::move(body));
}

json AnnotationService::label(const std::string& session_id, const json& body) {
    std::lock_guard lock(mutex_);
    if (!body.is_object()) {
        throw Error("invalid_request", "label body must be a JSON object");
    }
    std::optional<std::string> action_id;
    if (body.contains("action_id") && !body.at("action_id").is_null()) {
        action_id = field<std::string>(body, "action_id");
        if (auto it = actions_.find(*action_id); it != actions_.end()) {
            return it->second;
        }
    }
    reclaim_expired();
    Session& s = session(session_id);
    const auto sample_id = field<std::string>(body, "sample_id");
    if (!s.current || s.current->sample_id != sample_id) {
        throw Error("not_assigned", "sample '" + sample_id + "' is not assigned to session '" + session_id + "'");
    }
    const auto identity = field<std::string>(body, "identity_id");
    const auto round = field<std::size_t>(body, "round");
    if (round < 1) {
        throw Error("invalid_request", "round must be >= 1");
    }

    const ExperimentConfig& cfg = experiment_.config();
    const Recommendation rec = experiment_.recommend(sample_id, round);
    LabelDecision decision;
    decision.sample_id = sample_id;
    decision.round = round;
    decision.source = LabelSource::human;
    if (identity == "new") {
        decision.comparisons = std::min<std::uint64_t>(round * cfg.idrm_batch_size, rec.identities_registered);
    } else {
        const auto position = field<std::size_t>(body, "position");
        if (position < 1 || position > rec.candidates.size() ||
            rec.candidates[position - 1].identity_id != identity) {
            throw Error("invalid_label", "identity '" + identity + "' is not candidate " + std::to_string(position) +
                                             " of round " + std::to_string(round));
        }
        decision.identity_id = identity;
        decision.position = position;
        decision.comparisons = rec.offset(cfg.idrm_batch_size) + position;
    }

    const CostLedger before = experiment_.ledger();
    const IdentityId assigned_identity = experiment_.apply(decision);
    const CostLedger delta = experiment_.ledger() - before;
    assigned_.erase(sample_id);
    s.current.reset();
    ++s.labeled;

    const std::uint64_t version_before = experiment_.model_version();
    if (experiment_.pool().query().empty()) {
        advance();
    }

    json decision_json = decision;
    json response = envelope(json{{"ok", true},
                                  {"sample_id", sample_id},
                                  {"identity_id", assigned_identity},
                                  {"decision", decision_json},
                                  {"ledger_delta", delta},
                                  {"retrained", experiment_.model_version() != version_before},
                                  {"pending", pending()}});
    if (action_id) {
        actions_.emplace(*action_id, response);
    }
    return response;
}

void AnnotationService::advance() {
    experiment_.finish_cycle();
    assigned_.clear();
    for (auto& [id, s] : sessions_) {
        s.current.reset();
    }
    experiment_.begin_cycle();
}

json AnnotationService::ledger() {
    std::lock_guard lock(mutex_);
    return envelope(json{{"ledger", experiment_.ledger()}});
}

json AnnotationService::metrics() {
    std::lock_guard lock(mutex_);
    const auto& records = experiment_.records();
    json latest = nullptr;
    if (!records.empty() && records.back().metrics) {
        latest = *records.back().metrics;
    }
    return envelope(json{{"metrics", latest}, {"records", records.size()}});
}

json AnnotationService::status() {
    std::lock_guard lock(mutex_);
    reclaim_expired();
    const PoolState& pool = experiment_.pool();
    return envelope(json{{"labeled_count", pool.labeled().size()},
                         {"labeled_fraction", pool.labeled_fraction()},
                         {"unlabeled_count", pool.unlabeled().size()},
                         {"query_size", pool.query().size()},
                         {"pending", pending()},
                         {"identities", pool.identities().size()},
                         {"sessions", sessions_.size()},
                         {"strategy", to_string(experiment_.strategy())},
                         {"termination", to_string(experiment_.report().termination)}});
}

json AnnotationService::curve() {
    std::lock_guard lock(mutex_);
    json records = json::array();
    for (const IterationRecord& r : experiment_.records()) {
        records.push_back(record_to_json(r));
    }
    return envelope(json{{"records", records}});
}

int http_status_for(const std::string& code) {
    if (code == "unknown_session" || code == "unknown_sample" || code == "unknown_identity" || code == "not_found") {
        return 404;
    }
    if (code == "not_assigned" || code == "not_in_query" || code == "mid_cycle" || code == "not_in_cycle") {
        return 409;
    }
    if (code == "invalid_request" || code == "invalid_label" || code == "parse_error") {
        return 400;
    }
    return 500;
}

std::pair<std::string, int> parse_bind_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon == 0) {
        throw Error("invalid_argument", "bind address must be HOST:PORT, got '" + address + "'");
    }
    int port = -1;
    const char* first = address.data() + colon + 1;
    const char* last = address.data() + address.size();
    auto res = std::from_chars(first, last, port);
    if (res.ec != std::errc() || res.ptr != last || port < 0 || port > 65535) {
        throw Error("invalid_argument", "bad port in '" + address + "'");
    }
    return {address.substr(0, colon), port};
}

struct HttpFrontend::Impl {
    AnnotationService& service;
    httplib::Server server;

    explicit Impl(AnnotationService& s) : service(s) {}

    template <typename Fn>
    void respond(httplib::Response& res, Fn&& fn) {
        json body;
        try {
            body = fn();
            res.status = 200;
        } catch (const Error& e) {
            body = json{{"code", e.code()}, {"message", e.what()}};
            res.status = http_status_for(e.code());
        } catch (const std::exception& e) {
            body = json{{"code", "internal_error"}, {"message", e.what()}};
            res.status = 500;
        }
        if (res.status != 200) {
            service.with_experiment([&](const Experiment& ex) {
                body["iteration"] = ex.iteration();
                body["model_version"] = ex.model_version();
                return 0;
            });
        }
        res.set_content(body.dump(), "application/json");
    }

    void routes() {
        server.Get("/api/session", [this](const httplib::Request&, httplib::Response& res) {
            respond(res, [&] { return service.open_session(); });
        });
        server.Get(R"(/api/session/([^/]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
            respond(res, [&] {
                std::size_t round = 1;
                if (req.has_param("round")) {
                    const std::string r = req.get_param_value("round");
                    auto parsed = std::from_chars(r.data(), r.data() + r.size(), round);
                    if (parsed.ec != std::errc() || parsed.ptr != r.data() + r.size()) {
                        throw Error("invalid_request", "bad round '" + r + "'");
                    }
                }
                return service.next(req.matches[1], round);
            });
        });
        server.Post(R"(/api/session/([^/]+)/label)", [this](const httplib::Request& req, httplib::Response& res) {
            respond(res, [&] {
                json body;
                try {
                    body = json::parse(req.body);
                } catch (const json::parse_error& e) {
                    throw Error("invalid_request", std::string("malformed JSON body: ") + e.what());
                }
                return service.label(req.matches[1], body);
            });
        });
        server.Get("/api/ledger", [this](const httplib::Request&, httplib::Response& res) {
            respond(res, [&] { return service.ledger(); });
        });
        server.Get("/api/metrics", [this](const httplib::Request&, httplib::Response& res) {
            respond(res, [&] { return service.metrics(); });
        });
        server.Get("/api/status", [this](const httplib::Request&, httplib::Response& res) {
            respond(res, [&] { return service.status(); });
        });
        server.Get("/api/curve", [this](const httplib::Request&, httplib::Response& res) {
            respond(res, [&] { return service.curve(); });
        });
    }
};

HttpFrontend::HttpFrontend(AnnotationService& service) : impl_(std::make_unique<Impl>(service)) {
    impl_->routes();
}

HttpFrontend::~HttpFrontend() {
    stop();
}

void HttpFrontend::mount_assets(const std::filesystem::path& dir) {
    if (!impl_->server.set_mount_point("/assets", dir.string())) {
        throw Error("invalid_argument", "asset directory '" + dir.string() + "' does not exist");
    }
}

int HttpFrontend::bind(const std::string& host, int port) {
    int bound = -1;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
    } else if (impl_->server.bind_to_port(host, port)) {
        bound = port;
    }
    if (bound < 0) {
        throw Error("bind_failed", "cannot bind " + host + ":" + std::to_string(port));
    }
    return bound;
}

void HttpFrontend::listen() {
    impl_->server.listen_after_bind();
}

void HttpFrontend::wait_until_ready() const {
    impl_->server.wait_until_ready();
}

void HttpFrontend::stop() {
    impl_->server.stop();
}

} // namespace hardmine
