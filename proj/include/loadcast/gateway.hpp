#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "loadcast/grid.hpp"
#include "loadcast/pipeline.hpp"
#include "loadcast/timeseries.hpp"

namespace loadcast {

class Registry;

struct HisItem {
    Timestamp ts = 0;
    double val = 0.0;

    friend bool operator==(const HisItem&, const HisItem&) = default;
};

/// Closed-open [start, end).
struct TimeRange {
    Timestamp start = 0;
    Timestamp end = 0;

    bool contains(Timestamp ts) const { return ts >= start && ts < end; }
};

/// "ISO,ISO" or "epoch,epoch". Throws ValidationError.
TimeRange parse_range(const std::string& text);
std::string format_range(const TimeRange& range);

struct ForecastCacheEntry {
    PointId point;
    Timestamp target_ts = 0;
    double value = 0.0;
    Timestamp issued_at = 0;
    std::uint32_t model_version = 0;

    friend bool operator==(const ForecastCacheEntry&, const ForecastCacheEntry&) = default;
};

/// Strict precedence used by the cache: later issuance wins, then higher
/// model version, then larger value (only reachable for conflicting
/// duplicates, and keeps the outcome independent of arrival order).
bool supersedes(const ForecastCacheEntry& candidate, const ForecastCacheEntry& current);

/// Latest-wins store of forecast values per (point, target hour).
class ForecastCache {
public:
    /// True when the entry became effective.
    bool upsert(const ForecastCacheEntry& entry);

    std::vector<ForecastCacheEntry> read(const PointId& point, const TimeRange& range) const;
    std::optional<Timestamp> latest_issuance(const PointId& point) const;
    std::size_t size() const;

    friend bool operator==(const ForecastCache&, const ForecastCache&) = default;

private:
    std::map<PointId, std::map<Timestamp, ForecastCacheEntry>> entries_;
    std::map<PointId, Timestamp> latest_issued_;
};

struct PointInfo {
    PointId id;
    std::string unit;
    std::string dis;
    Timestamp resolution = kHour;
};

struct WriteResult {
    std::size_t accepted = 0;
    std::size_t ignored = 0;
};

/// Backing store of the gateway: point catalog, measured history and the
/// forecast cache. With a data directory every change is appended to a log
/// and replayed on construction; without one it is memory-only.
class PointStore {
public:
    explicit PointStore(std::optional<std::filesystem::path> data_dir = std::nullopt);

    void add_point(const PointInfo& info);
    bool has_point(const PointId& id) const;
    PointInfo point(const PointId& id) const;
    std::vector<PointInfo> points() const;

    /// Adds the point (if new) and upserts every present sample.
    void import_series(const IntervalSeries& series, const std::string& dis = {});

    /// Upserts measured values. Throws NotFoundError / ValidationError / StorageError.
    std::size_t write_history(const PointId& id, const std::vector<HisItem>& items);
    std::vector<HisItem> read_history(const PointId& id, const TimeRange& range) const;

    /// Latest-wins forecast upsert; items must be finite and on hour boundaries.
    WriteResult write_forecast(const PointId& id, const std::vector<HisItem>& items, Timestamp issued_at,
                               std::uint32_t model_version);
    std::vector<ForecastCacheEntry> read_forecast(const PointId& id, const TimeRange& range) const;
    /// Effective values for the hours after the latest issuance.
    std::vector<ForecastCacheEntry> current_forecast(const PointId& id, int horizon = kForecastHorizon) const;

    ForecastCache cache_snapshot() const;

private:
    void append(const std::string& log, const std::vector<nlohmann::json>& lines) const;
    void replay();
    void require_point(const PointId& id) const;

    std::optional<std::filesystem::path> dir_;
    mutable std::shared_mutex mutex_;
    std::map<PointId, PointInfo> points_;
    std::map<PointId, std::map<Timestamp, double>> history_;
    ForecastCache cache_;
};

/// HTTP front end: /api/about, /api/read, /api/hisRead, /api/hisWrite and
/// /api/forecast. Every response body is a GridDocument.
class GatewayServer {
public:
    GatewayServer(std::shared_ptr<PointStore> store, const Registry* registry = nullptr);
    ~GatewayServer();
    GatewayServer(const GatewayServer&) = delete;
    GatewayServer& operator=(const GatewayServer&) = delete;

    /// Binds and serves on a background thread. Port 0 picks a free port.
    /// Throws StorageError when the address cannot be bound.
    void start(const std::string& host, int port);
    /// Binds and serves on the calling thread until stop().
    void run(const std::string& host, int port);
    void stop();

    int port() const noexcept { return port_; }
    std::string address() const { return host_ + ":" + std::to_string(port_); }

    /// Dispatches one request without HTTP; used by the server and by tests.
    struct Response {
        int status = 200;
        std::string body;
    };
    Response handle(const std::string& method, const std::string& path,
                    const std::multimap<std::string, std::string>& params, const std::string& body) const;

private:
    struct Impl;
    void bind(const std::string& host, int port);

    std::shared_ptr<PointStore> store_;
    const Registry* registry_;
    std::unique_ptr<Impl> impl_;
    std::thread thread_;
    std::string host_;
    int port_ = 0;
};

struct HttpRequest {
    std::string method;
    std::string target;  ///< path plus encoded query
    std::string body;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Throws NetworkError when the peer cannot be reached.
using Transport = std::function<HttpResponse(const HttpRequest&)>;
using Sleeper = std::function<void(std::chrono::milliseconds)>;

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds base_delay{1000};
    double factor = 2.0;
};

/// Client side of the gateway protocol, also used against an upstream EMIS.
/// Network failures and 503 responses are retried with exponential backoff.
class GatewayClient {
public:
    explicit GatewayClient(std::string address, RetryPolicy retry = {});

    void set_transport(Transport transport) { transport_ = std::move(transport); }
    void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

    GridDocument about() const;
    std::vector<PointInfo> read_points() const;
    PointInfo read_point(const PointId& id) const;

    /// Measured history as a validated series.
    IntervalSeries fetch_history(const PointId& id, const TimeRange& range) const;
    WriteResult write_history(const PointId& id, const std::vector<HisItem>& items) const;

    WriteResult write_forecast(const ForecastGrid& grid) const;
    std::vector<ForecastCacheEntry> read_forecast(const PointId& id, const TimeRange& range) const;
    std::vector<ForecastCacheEntry> current_forecast(const PointId& id) const;

    /// Number of requests that were retried since construction.
    std::size_t retries() const noexcept { return retries_; }

private:
    GridDocument call(const std::string& method, const std::string& path,
                      const std::vector<std::pair<std::string, std::string>>& query, const std::string& body = {}) const;

    std::string address_;
    RetryPolicy retry_;
    Transport transport_;
    Sleeper sleeper_;
    mutable std::size_t retries_ = 0;
};

/// Plain HTTP to host:port; the client's default.
Transport http_transport(const std::string& address);

/// Routes requests straight into `server.handle` without sockets.
Transport in_process_transport(const GatewayServer& server);

/// One-shot convenience over GatewayClient.
IntervalSeries fetch_history(const std::string& upstream, const PointId& id, const TimeRange& range);

std::string url_encode(const std::string& text);

}  // namespace loadcast
