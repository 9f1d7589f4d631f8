#include "loadcast/gateway.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>

#include <httplib.h>

#include "loadcast/error.hpp"
#include "loadcast/registry.hpp"

namespace loadcast {

namespace fs = std::filesystem;
using nlohmann::json;

TimeRange parse_range(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) throw ValidationError("range must be 'start,end', got '" + text + "'");
    TimeRange r{parse_timestamp(text.substr(0, comma)), parse_timestamp(text.substr(comma + 1))};
    if (r.start > r.end) throw ValidationError("range start is after its end: '" + text + "'");
    return r;
}

std::string format_range(const TimeRange& range) {
    return format_iso8601(range.start) + "," + format_iso8601(range.end);
}

std::string url_encode(const std::string& text) {
    static constexpr char hex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xF]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// ForecastCache

bool supersedes(const ForecastCacheEntry& a, const ForecastCacheEntry& b) {
    if (a.issued_at != b.issued_at) return a.issued_at > b.issued_at;
    if (a.model_version != b.model_version) return a.model_version > b.model_version;
    return a.value > b.value;
}

bool ForecastCache::upsert(const ForecastCacheEntry& entry) {
    auto& slots = entries_[entry.point];
    auto [it, inserted] = slots.try_emplace(entry.target_ts, entry);
    if (!inserted) {
        if (!supersedes(entry, it->second)) return false;
        it->second = entry;
    }
    auto [latest, fresh] = latest_issued_.try_emplace(entry.point, entry.issued_at);
    if (!fresh) latest->second = std::max(latest->second, entry.issued_at);
    return true;
}

std::vector<ForecastCacheEntry> ForecastCache::read(const PointId& point, const TimeRange& range) const {
    std::vector<ForecastCacheEntry> out;
    const auto it = entries_.find(point);
    if (it == entries_.end()) return out;
    for (auto e = it->second.lower_bound(range.start); e != it->second.end() && e->first < range.end; ++e)
        out.push_back(e->second);
    return out;
}

std::optional<Timestamp> ForecastCache::latest_issuance(const PointId& point) const {
    const auto it = latest_issued_.find(point);
    if (it == latest_issued_.end()) return std::nullopt;
    return it->second;
}

std::size_t ForecastCache::size() const {
    std::size_t n = 0;
    for (const auto& [point, slots] : entries_) n += slots.size();
    return n;
}

// ---------------------------------------------------------------------------
// PointStore

namespace {

json point_to_json(const PointInfo& p) {
    return {{"id", p.id.str()}, {"unit", p.unit}, {"dis", p.dis}, {"resolution", p.resolution}};
}

void check_item(const HisItem& item) {
    if (!std::isfinite(item.val)) throw ValidationError("non-finite value at " + format_iso8601(item.ts));
}

}  // namespace

PointStore::PointStore(std::optional<fs::path> data_dir) : dir_(std::move(data_dir)) {
    if (dir_) {
        std::error_code ec;
        fs::create_directories(*dir_, ec);
        if (ec) throw StorageError("cannot create data dir " + dir_->string() + ": " + ec.message());
        replay();
    }
}

void PointStore::append(const std::string& log, const std::vector<json>& lines) const {
    if (!dir_ || lines.empty()) return;
    std::ofstream out(*dir_ / log, std::ios::app);
    for (const auto& line : lines) out << line.dump() << '\n';
    out.flush();
    if (!out) throw StorageError("cannot append to " + (*dir_ / log).string());
}

void PointStore::replay() {
    auto each_line = [&](const std::string& log, const std::function<void(const json&)>& fn) {
        std::ifstream in(*dir_ / log);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception&) {
                // A crash mid-append can leave one torn line at the end.
                if (in.peek() == std::char_traits<char>::eof()) break;
                throw IntegrityError("corrupt line in " + (*dir_ / log).string());
            }
            fn(j);
        }
    };
    each_line("points.log", [&](const json& j) {
        PointInfo p{PointId(j.at("id").get<std::string>()), j.at("unit"), j.value("dis", std::string{}),
                    j.value("resolution", kHour)};
        points_[p.id] = p;
    });
    each_line("history.log", [&](const json& j) {
        history_[PointId(j.at("id").get<std::string>())][j.at("ts").get<Timestamp>()] = j.at("val").get<double>();
    });
    each_line("forecast.log", [&](const json& j) {
        cache_.upsert({PointId(j.at("id").get<std::string>()), j.at("ts").get<Timestamp>(), j.at("val").get<double>(),
                       j.at("issuedAt").get<Timestamp>(), j.at("modelVersion").get<std::uint32_t>()});
    });
}

void PointStore::require_point(const PointId& id) const {
    if (!points_.count(id)) throw NotFoundError("unknown point '" + id.str() + "'");
}

void PointStore::add_point(const PointInfo& info) {
    std::unique_lock lock(mutex_);
    if (info.resolution <= 0) throw ValidationError("point resolution must be positive");
    append("points.log", {point_to_json(info)});
    points_[info.id] = info;
}

bool PointStore::has_point(const PointId& id) const {
    std::shared_lock lock(mutex_);
    return points_.count(id) > 0;
}

PointInfo PointStore::point(const PointId& id) const {
    std::shared_lock lock(mutex_);
    require_point(id);
    return points_.at(id);
}

std::vector<PointInfo> PointStore::points() const {
    std::shared_lock lock(mutex_);
    std::vector<PointInfo> out;
    for (const auto& [id, info] : points_) out.push_back(info);
    return out;
}

void PointStore::import_series(const IntervalSeries& series, const std::string& dis) {
    if (!has_point(series.point())) add_point({series.point(), series.unit(), dis, series.resolution()});
    std::vector<HisItem> items;
    for (const Sample& s : series.samples())
        if (s.value) items.push_back({s.ts, *s.value});
    write_history(series.point(), items);
}

std::size_t PointStore::write_history(const PointId& id, const std::vector<HisItem>& items) {
    std::unique_lock lock(mutex_);
    require_point(id);
    const Timestamp res = points_.at(id).resolution;
    std::vector<json> lines;
    for (const HisItem& item : items) {
        check_item(item);
        if (floor_to(item.ts, res) != item.ts)
            throw ValidationError("timestamp " + format_iso8601(item.ts) + " is not on the point's interval");
        lines.push_back({{"id", id.str()}, {"ts", item.ts}, {"val", item.val}});
    }
    append("history.log", lines);
    auto& h = history_[id];
    for (const HisItem& item : items) h[item.ts] = item.val;
    return items.size();
}

std::vector<HisItem> PointStore::read_history(const PointId& id, const TimeRange& range) const {
    std::shared_lock lock(mutex_);
    require_point(id);
    std::vector<HisItem> out;
    const auto it = history_.find(id);
    if (it == history_.end()) return out;
    for (auto e = it->second.lower_bound(range.start); e != it->second.end() && e->first < range.end; ++e)
        out.push_back({e->first, e->second});
    return out;
}

WriteResult PointStore::write_forecast(const PointId& id, const std::vector<HisItem>& items, Timestamp issued_at,
                                       std::uint32_t model_version) {
    std::unique_lock lock(mutex_);
    require_point(id);
    for (const HisItem& item : items) {
        check_item(item);
        if (floor_to(item.ts, kHour) != item.ts)
            throw ValidationError("forecast timestamp " + format_iso8601(item.ts) + " is not on an hour boundary");
    }
    ForecastCache next = cache_;
    WriteResult result;
    std::vector<json> lines;
    for (const HisItem& item : items) {
        const ForecastCacheEntry entry{id, item.ts, item.val, issued_at, model_version};
        if (next.upsert(entry)) {
            ++result.accepted;
            lines.push_back({{"id", id.str()},
                             {"ts", item.ts},
                             {"val", item.val},
                             {"issuedAt", issued_at},
                             {"modelVersion", model_version}});
        } else {
            ++result.ignored;
        }
    }
    append("forecast.log", lines);
    cache_ = std::move(next);
    return result;
}

std::vector<ForecastCacheEntry> PointStore::read_forecast(const PointId& id, const TimeRange& range) const {
    std::shared_lock lock(mutex_);
    require_point(id);
    return cache_.read(id, range);
}

std::vector<ForecastCacheEntry> PointStore::current_forecast(const PointId& id, int horizon) const {
    std::shared_lock lock(mutex_);
    require_point(id);
    const auto latest = cache_.latest_issuance(id);
    if (!latest) return {};
    return cache_.read(id, {*latest + kHour, *latest + (horizon + 1) * kHour});
}

ForecastCache PointStore::cache_snapshot() const {
    std::shared_lock lock(mutex_);
    return cache_;
}

// ---------------------------------------------------------------------------
// GatewayServer

struct GatewayServer::Impl {
    httplib::Server server;
};

namespace {

std::optional<std::string> param(const std::multimap<std::string, std::string>& params, const std::string& key) {
    const auto it = params.find(key);
    if (it == params.end()) return std::nullopt;
    return it->second;
}

std::string required(const std::multimap<std::string, std::string>& params, const std::string& key) {
    auto v = param(params, key);
    if (!v || v->empty()) throw ValidationError("missing required parameter '" + key + "'");
    return *v;
}

json value_json(double v) { return v; }

double value_of(const json& row) {
    if (!row.contains("val")) throw ValidationError("row without a val");
    const json& v = row["val"];
    if (v.is_number()) {
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ValidationError("non-finite value");
        return d;
    }
    throw ValidationError("val must be a finite number, got " + v.dump());
}

Timestamp ts_of(const json& row) {
    if (!row.contains("ts")) throw ValidationError("row without a ts");
    const json& t = row["ts"];
    if (t.is_string()) return parse_timestamp(t.get<std::string>());
    if (t.is_number_integer()) return t.get<Timestamp>();
    throw ValidationError("ts must be a timestamp string, got " + t.dump());
}

std::vector<HisItem> items_of(const GridDocument& grid) {
    std::vector<HisItem> items;
    items.reserve(grid.rows.size());
    for (const json& row : grid.rows) items.push_back({ts_of(row), value_of(row)});
    return items;
}

json entry_row(const ForecastCacheEntry& e) {
    return {{"ts", format_iso8601(e.target_ts)},
            {"val", value_json(e.value)},
            {"issuedAt", format_iso8601(e.issued_at)},
            {"modelVersion", e.model_version}};
}

GridDocument forecast_grid(const std::string& op, const PointId& id, const std::vector<ForecastCacheEntry>& entries) {
    GridDocument g = GridDocument::make(op, {"ts", "val", "issuedAt", "modelVersion"});
    g.meta["id"] = id.str();
    for (const auto& e : entries) g.rows.push_back(entry_row(e));
    return g;
}

json point_row(const PointInfo& p, const Registry* registry) {
    json row = {{"id", p.id.str()},
                {"dis", p.dis.empty() ? p.id.str() : p.dis},
                {"unit", p.unit},
                {"point", kMarker},
                {"his", kMarker},
                {"hisInterval", p.resolution}};
    if (registry && registry->contains(p.id)) {
        const auto versions = registry->list(p.id);
        if (!versions.empty()) row["modelVersion"] = versions.back().version;
    }
    return row;
}

const std::vector<std::string> kPointCols = {"id", "dis", "unit", "point", "his", "hisInterval", "modelVersion"};

}  // namespace

GatewayServer::GatewayServer(std::shared_ptr<PointStore> store, const Registry* registry)
    : store_(std::move(store)), registry_(registry), impl_(std::make_unique<Impl>()) {
    if (!store_) throw ValidationError("gateway needs a point store");
    auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
        std::multimap<std::string, std::string> params(req.params.begin(), req.params.end());
        const Response r = handle(req.method, req.path, params, req.body);
        res.status = r.status;
        res.set_content(r.body, "application/json");
    };
    auto& svr = impl_->server;
    svr.Get(".*", dispatch);
    svr.Post(".*", dispatch);
    svr.Put(".*", dispatch);
    svr.Delete(".*", dispatch);
    svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
        res.status = 500;
        res.set_content(GridDocument::error("", "internal error").dump(), "application/json");
    });
    svr.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        res.set_content(GridDocument::error("", "HTTP " + std::to_string(res.status) + " for " + req.path).dump(),
                        "application/json");
    });
}

GatewayServer::~GatewayServer() { stop(); }

void GatewayServer::bind(const std::string& host, int port) {
    if (port < 0 || port > 65535) throw ValidationError("port out of range: " + std::to_string(port));
    auto& svr = impl_->server;
    if (port == 0) {
        port_ = svr.bind_to_any_port(host);
        if (port_ <= 0) throw StorageError("cannot bind " + host + ":0");
    } else {
        if (!svr.bind_to_port(host, port)) throw StorageError("cannot bind " + host + ":" + std::to_string(port));
        port_ = port;
    }
    host_ = host;
}

void GatewayServer::start(const std::string& host, int port) {
    bind(host, port);
    thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void GatewayServer::run(const std::string& host, int port) {
    bind(host, port);
    impl_->server.listen_after_bind();
}

void GatewayServer::stop() {
    if (impl_) impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

GatewayServer::Response GatewayServer::handle(const std::string& method, const std::string& path,
                                              const std::multimap<std::string, std::string>& params,
                                              const std::string& body) const {
    std::string op = path.rfind("/api/", 0) == 0 ? path.substr(5) : path;
    auto fail = [&](int status, const std::string& message) {
        return Response{status, GridDocument::error(op, message).dump()};
    };
    try {
        const bool get = method == "GET";
        const bool post = method == "POST";
        if (op == "about") {
            if (!get) return fail(405, "about expects GET");
            GridDocument g = GridDocument::make(op, {"productName", "productVersion", "serverTime", "tz"});
            const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                                 std::chrono::system_clock::now().time_since_epoch())
                                 .count();
            g.rows.push_back({{"productName", "loadcast"},
                              {"productVersion", "1.0"},
                              {"serverTime", format_iso8601(now)},
                              {"tz", "UTC"}});
            return {200, g.dump()};
        }
        if (op == "read") {
            if (!get) return fail(405, "read expects GET");
            GridDocument g = GridDocument::make(op, kPointCols);
            if (auto id = param(params, "id")) {
                g.rows.push_back(point_row(store_->point(PointId(*id)), registry_));
            } else {
                const std::string filter = param(params, "filter").value_or("point");
                if (filter != "point") return fail(400, "unsupported filter '" + filter + "'; only 'point' is served");
                for (const auto& p : store_->points()) g.rows.push_back(point_row(p, registry_));
            }
            return {200, g.dump()};
        }
        if (op == "hisRead") {
            if (!get) return fail(405, "hisRead expects GET");
            const PointId id(required(params, "id"));
            const TimeRange range = parse_range(required(params, "range"));
            const std::string series = param(params, "series").value_or("measured");
            if (series == "forecast") return {200, forecast_grid(op, id, store_->read_forecast(id, range)).dump()};
            if (series != "measured") return fail(400, "series must be 'measured' or 'forecast'");
            GridDocument g = GridDocument::make(op, {"ts", "val"});
            g.meta["id"] = id.str();
            g.meta["range"] = format_range(range);
            for (const auto& item : store_->read_history(id, range))
                g.rows.push_back({{"ts", format_iso8601(item.ts)}, {"val", value_json(item.val)}});
            return {200, g.dump()};
        }
        if (op == "hisWrite") {
            if (!post) return fail(405, "hisWrite expects POST");
            const GridDocument in = GridDocument::parse(body);
            if (!in.meta.contains("id") || !in.meta["id"].is_string())
                return fail(400, "hisWrite grid needs meta.id");
            const PointId id(in.meta["id"].get<std::string>());
            const auto items = items_of(in);
            GridDocument g = GridDocument::make(op, {"accepted", "ignored"});
            g.meta["id"] = id.str();
            if (in.meta.contains("issuedAt")) {
                const Timestamp issued = ts_of({{"ts", in.meta["issuedAt"]}});
                if (!in.meta.contains("modelVersion") || !in.meta["modelVersion"].is_number_unsigned())
                    return fail(400, "forecast write needs a non-negative integer meta.modelVersion");
                const auto r = store_->write_forecast(id, items, issued, in.meta["modelVersion"].get<std::uint32_t>());
                g.rows.push_back({{"accepted", r.accepted}, {"ignored", r.ignored}});
            } else {
                g.rows.push_back({{"accepted", store_->write_history(id, items)}, {"ignored", 0}});
            }
            return {200, g.dump()};
        }
        if (op == "forecast") {
            if (!get) return fail(405, "forecast expects GET");
            const PointId id(required(params, "id"));
            GridDocument g = forecast_grid(op, id, store_->current_forecast(id));
            if (auto latest = store_->cache_snapshot().latest_issuance(id)) g.meta["issuedAt"] = format_iso8601(*latest);
            return {200, g.dump()};
        }
        return fail(404, "no such operation '" + path + "'");
    } catch (const ValidationError& e) {
        return fail(400, e.what());
    } catch (const ProtocolError& e) {
        return fail(400, e.what());
    } catch (const NotFoundError& e) {
        return fail(404, e.what());
    } catch (const StorageError& e) {
        return fail(503, e.what());
    } catch (const std::exception& e) {
        return fail(500, e.what());
    }
}

// ---------------------------------------------------------------------------
// GatewayClient

namespace {

std::pair<std::string, int> split_address(const std::string& address) {
    std::string a = address;
    if (a.rfind("http://", 0) == 0) a = a.substr(7);
    while (!a.empty() && a.back() == '/') a.pop_back();
    const auto colon = a.rfind(':');
    if (colon == std::string::npos || colon == 0) throw ValidationError("address must be host:port, got '" + address + "'");
    int port = 0;
    try {
        std::size_t used = 0;
        port = std::stoi(a.substr(colon + 1), &used);
        if (used != a.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ValidationError("bad port in address '" + address + "'");
    }
    if (port <= 0 || port > 65535) throw ValidationError("port out of range in '" + address + "'");
    return {a.substr(0, colon), port};
}

PointInfo point_of(const json& row) {
    PointInfo p;
    p.id = PointId(row.at("id").get<std::string>());
    p.unit = row.value("unit", std::string{});
    p.dis = row.value("dis", std::string{});
    p.resolution = row.value("hisInterval", kHour);
    return p;
}

std::vector<ForecastCacheEntry> entries_of(const PointId& id, const GridDocument& g) {
    std::vector<ForecastCacheEntry> out;
    for (const json& row : g.rows) {
        out.push_back({id, ts_of(row), value_of(row), ts_of({{"ts", row.at("issuedAt")}}),
                       row.at("modelVersion").get<std::uint32_t>()});
    }
    return out;
}

}  // namespace

Transport http_transport(const std::string& address) {
    const auto [host, port] = split_address(address);
    return [host = host, port = port](const HttpRequest& req) {
        httplib::Client cli(host, port);
        cli.set_connection_timeout(5, 0);
        cli.set_read_timeout(60, 0);
        cli.set_write_timeout(60, 0);
        httplib::Result res = req.method == "POST"
                                  ? cli.Post(req.target, req.body, "application/json")
                                  : cli.Get(req.target);
        if (!res) throw NetworkError("request to " + host + ":" + std::to_string(port) + " failed: " +
                                     httplib::to_string(res.error()));
        return HttpResponse{res->status, res->body};
    };
}

GatewayClient::GatewayClient(std::string address, RetryPolicy retry)
    : address_(std::move(address)), retry_(retry) {
    if (retry_.max_attempts < 1) throw ValidationError("retry policy needs at least one attempt");
    split_address(address_);
    transport_ = http_transport(address_);
    sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

GridDocument GatewayClient::call(const std::string& method, const std::string& path,
                                 const std::vector<std::pair<std::string, std::string>>& query,
                                 const std::string& body) const {
    HttpRequest req{method, path, body};
    for (std::size_t i = 0; i < query.size(); ++i)
        req.target += (i == 0 ? "?" : "&") + url_encode(query[i].first) + "=" + url_encode(query[i].second);

    auto delay = retry_.base_delay;
    for (int attempt = 1;; ++attempt) {
        std::string failure;
        try {
            const HttpResponse res = transport_(req);
            if (res.status != 503) {
                GridDocument g = GridDocument::parse(res.body);
                if (g.is_error()) {
                    const std::string msg = path + ": " + g.error_message();
                    if (res.status == 404) throw NotFoundError(msg);
                    if (res.status == 400) throw ValidationError(msg);
                    throw ProtocolError(msg + " (HTTP " + std::to_string(res.status) + ")");
                }
                if (res.status != 200) throw ProtocolError(path + ": unexpected HTTP " + std::to_string(res.status));
                return g;
            }
            failure = path + ": service unavailable";
        } catch (const NetworkError& e) {
            failure = e.what();
        }
        if (attempt >= retry_.max_attempts)
            throw NetworkError(failure + " (gave up after " + std::to_string(attempt) + " attempts)");
        ++retries_;
        sleeper_(delay);
        delay = std::chrono::milliseconds(static_cast<std::int64_t>(static_cast<double>(delay.count()) * retry_.factor));
    }
}

GridDocument GatewayClient::about() const { return call("GET", "/api/about", {}); }

std::vector<PointInfo> GatewayClient::read_points() const {
    std::vector<PointInfo> out;
    for (const json& row : call("GET", "/api/read", {{"filter", "point"}}).rows) out.push_back(point_of(row));
    return out;
}

PointInfo GatewayClient::read_point(const PointId& id) const {
    const GridDocument g = call("GET", "/api/read", {{"id", id.str()}});
    if (g.rows.size() != 1) throw ProtocolError("read of '" + id.str() + "' returned " + std::to_string(g.rows.size()) + " rows");
    return point_of(g.rows.front());
}

IntervalSeries GatewayClient::fetch_history(const PointId& id, const TimeRange& range) const {
    const PointInfo info = read_point(id);
    const GridDocument g = call("GET", "/api/hisRead", {{"id", id.str()}, {"range", format_range(range)}});
    std::vector<Sample> samples;
    samples.reserve(g.rows.size());
    for (const json& row : g.rows) {
        const Timestamp ts = ts_of(row);
        if (!range.contains(ts)) throw ProtocolError("hisRead returned " + format_iso8601(ts) + " outside the range");
        samples.push_back({ts, value_of(row)});
    }
    return IntervalSeries(id, info.unit, info.resolution, std::move(samples));
}

WriteResult GatewayClient::write_history(const PointId& id, const std::vector<HisItem>& items) const {
    GridDocument g = GridDocument::make("hisWrite", {"ts", "val"});
    g.meta["id"] = id.str();
    for (const auto& item : items) g.rows.push_back({{"ts", format_iso8601(item.ts)}, {"val", item.val}});
    const GridDocument r = call("POST", "/api/hisWrite", {}, g.dump());
    if (r.rows.size() != 1) throw ProtocolError("hisWrite reply without a result row");
    return {r.rows[0].at("accepted").get<std::size_t>(), r.rows[0].at("ignored").get<std::size_t>()};
}

WriteResult GatewayClient::write_forecast(const ForecastGrid& grid) const {
    grid.validate();
    GridDocument g = GridDocument::make("hisWrite", {"ts", "val"});
    g.meta["id"] = grid.point.str();
    g.meta["issuedAt"] = format_iso8601(grid.issued_at);
    g.meta["modelVersion"] = grid.model_version;
    for (const auto& e : grid.entries) g.rows.push_back({{"ts", format_iso8601(e.ts)}, {"val", e.value}});
    const GridDocument r = call("POST", "/api/hisWrite", {}, g.dump());
    if (r.rows.size() != 1) throw ProtocolError("hisWrite reply without a result row");
    return {r.rows[0].at("accepted").get<std::size_t>(), r.rows[0].at("ignored").get<std::size_t>()};
}

std::vector<ForecastCacheEntry> GatewayClient::read_forecast(const PointId& id, const TimeRange& range) const {
    return entries_of(id, call("GET", "/api/hisRead", {{"id", id.str()}, {"range", format_range(range)}, {"series", "forecast"}}));
}

std::vector<ForecastCacheEntry> GatewayClient::current_forecast(const PointId& id) const {
    return entries_of(id, call("GET", "/api/forecast", {{"id", id.str()}}));
}

Transport in_process_transport(const GatewayServer& server) {
    return [&server](const HttpRequest& req) {
        const auto q = req.target.find('?');
        httplib::Params params;
        if (q != std::string::npos) httplib::detail::parse_query_text(req.target.substr(q + 1), params);
        const std::multimap<std::string, std::string> p(params.begin(), params.end());
        const auto r = server.handle(req.method, req.target.substr(0, q), p, req.body);
        return HttpResponse{r.status, r.body};
    };
}

IntervalSeries fetch_history(const std::string& upstream, const PointId& id, const TimeRange& range) {
    return GatewayClient(upstream).fetch_history(id, range);
}

}  // namespace loadcast
