#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "hardmine/loop.hpp"

namespace hardmine {

struct ServiceOptions {
    std::chrono::milliseconds assignment_timeout{std::chrono::seconds(120)};
    std::optional<std::filesystem::path> asset_dir;  // thumbnails named <sample_id>.<png|jpg|jpeg>
    std::function<std::chrono::steady_clock::time_point()> clock = [] { return std::chrono::steady_clock::now(); };
};

/// Human-annotation front of one experiment.
///
/// Handlers return JSON bodies and throw Error on bad requests; every body
/// carries the experiment iteration and model version. All calls are
/// serialized on one mutex, so readers always see a whole pool state and
/// retraining blocks labeling until it completes.
class AnnotationService {
public:
    AnnotationService(Experiment experiment, ServiceOptions options = {});

    nlohmann::json open_session();
    /// The session's current assignment at `round`; assigns the next free
    /// query sample when the session holds none. `sample_id` is null when
    /// nothing is left to assign.
    nlohmann::json next(const std::string& session_id, std::size_t round);
    /// Body: {sample_id, identity_id | "new", round, position, action_id?}.
    /// A repeated action_id replays the first response without relabeling.
    nlohmann::json label(const std::string& session_id, const nlohmann::json& body);
    nlohmann::json ledger();
    nlohmann::json metrics();
    nlohmann::json status();
    nlohmann::json curve();

    /// Thumbnail path for a sample, if the asset directory has one.
    [[nodiscard]] std::optional<std::filesystem::path> thumbnail(const SampleId& id) const;

    /// Runs `fn` under the service lock.
    template <typename Fn>
    auto with_experiment(Fn&& fn) {
        std::lock_guard lock(mutex_);
        return fn(static_cast<const Experiment&>(experiment_));
    }

private:
    struct Assignment {
        SampleId sample_id;
        std::chrono::steady_clock::time_point assigned_at;
    };
    struct Session {
        std::optional<Assignment> current;
        std::uint64_t labeled = 0;
    };

    nlohmann::json envelope(nlohmann::json body) const;
    Session& session(const std::string& id);
    void reclaim_expired();
    std::size_t pending() const;
    void advance();
    nlohmann::json thumbnail_url(const SampleId& id) const;

    Experiment experiment_;
    ServiceOptions options_;
    std::map<std::string, Session> sessions_;
    std::map<SampleId, std::string> assigned_;  // sample -> session
    std::map<std::string, nlohmann::json> actions_;
    std::uint64_t session_counter_ = 0;
    mutable std::mutex mutex_;
};

/// HTTP status for an Error code.
int http_status_for(const std::string& code);

/// HTTP binding of an AnnotationService. Routes:
///   GET  /api/session
///   GET  /api/session/{id}/next?round=r
///   POST /api/session/{id}/label
///   GET  /api/ledger, /api/metrics, /api/status, /api/curve
///   GET  /assets/<file>   (when an asset directory is configured)
class HttpFrontend {
public:
    explicit HttpFrontend(AnnotationService& service);
    ~HttpFrontend();
    HttpFrontend(const HttpFrontend&) = delete;
    HttpFrontend& operator=(const HttpFrontend&) = delete;

    /// Serves files of `dir` under /assets. Call before listen().
    void mount_assets(const std::filesystem::path& dir);
    /// Binds `host:port`; port 0 picks a free port. Returns the bound port.
    /// Throws Error("bind_failed").
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void listen();
    /// Blocks until a concurrent listen() accepts connections.
    void wait_until_ready() const;
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Splits "host:port". Throws Error("invalid_argument").
std::pair<std::string, int> parse_bind_address(const std::string& address);

} // namespace hardmine
