#include "loadcast/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "loadcast/error.hpp"

namespace loadcast {

using nlohmann::json;

void ScheduleConfig::validate() const {
    if (forecast_cadence_s <= 0) throw ValidationError("forecast cadence must be positive");
    if (retrain_interval_days < 1) throw ValidationError("retrain interval must be at least 1 day");
    if (retrain_epochs < 1) throw ValidationError("retrain epochs must be at least 1");
    if (max_gap_hours < 0) throw ValidationError("max_gap_hours must be >= 0");
    qc_policy.validate();
    pipeline.train.validate();
    std::vector<PointId> seen;
    for (const auto& p : points) {
        if (std::find(seen.begin(), seen.end(), p.load) != seen.end())
            throw ValidationError("point '" + p.load.str() + "' is scheduled twice");
        seen.push_back(p.load);
    }
}

std::string to_string(ActionKind kind) {
    switch (kind) {
        case ActionKind::Forecast: return "forecast";
        case ActionKind::Retrain: return "retrain";
        case ActionKind::Qc: return "qc";
        case ActionKind::Alert: return "alert";
    }
    return "unknown";
}

ActionKind action_kind_from_string(const std::string& text) {
    for (auto k : {ActionKind::Forecast, ActionKind::Retrain, ActionKind::Qc, ActionKind::Alert})
        if (to_string(k) == text) return k;
    throw ValidationError("unknown action '" + text + "'");
}

std::vector<Action> tick(Timestamp now, const ScheduleState& state, const ScheduleConfig& cfg) {
    auto due = [now](const std::map<PointId, Timestamp>& last, const PointId& p, Timestamp period) {
        const auto it = last.find(p);
        return it == last.end() || now - it->second >= period;
    };
    std::vector<Action> actions;
    for (const auto& p : cfg.points) {
        if (due(state.last_retrain, p.load, cfg.retrain_interval_s())) actions.push_back({ActionKind::Retrain, p.load});
        if (due(state.last_forecast, p.load, cfg.forecast_cadence_s)) actions.push_back({ActionKind::Forecast, p.load});
    }
    return actions;
}

// ---------------------------------------------------------------------------
// Clocks

Timestamp SystemClock::now() const {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void SystemClock::sleep_until(Timestamp ts) {
    std::this_thread::sleep_until(std::chrono::system_clock::time_point(std::chrono::seconds(ts)));
}

void SimulatedClock::sleep_until(Timestamp ts) { now_ = std::max(now_, ts); }

void SimulatedClock::advance(Timestamp seconds) {
    if (seconds < 0) throw ValidationError("a clock cannot move backwards");
    now_ += seconds;
}

// ---------------------------------------------------------------------------
// RunLog

json to_json(const RunRecord& r) {
    json j = {{"ts", format_iso8601(r.ts)},
              {"action", to_string(r.action)},
              {"point", r.point.str()},
              {"ok", r.ok},
              {"detail", r.detail},
              {"duration_s", r.duration_s}};
    if (r.model_version) j["modelVersion"] = *r.model_version;
    return j;
}

RunRecord run_record_from_json(const json& j) {
    try {
        RunRecord r;
        r.ts = parse_timestamp(j.at("ts").get<std::string>());
        r.action = action_kind_from_string(j.at("action").get<std::string>());
        r.point = PointId(j.at("point").get<std::string>());
        r.ok = j.at("ok").get<bool>();
        r.detail = j.value("detail", std::string{});
        r.duration_s = j.value("duration_s", 0.0);
        if (j.contains("modelVersion")) r.model_version = j["modelVersion"].get<std::uint32_t>();
        return r;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed run record: ") + e.what());
    }
}

RunLog::RunLog(std::optional<std::filesystem::path> path) : path_(std::move(path)) {
    if (path_ && std::filesystem::exists(*path_)) records_ = load(*path_);
}

void RunLog::append(const RunRecord& record) {
    if (path_) {
        std::ofstream out(*path_, std::ios::app);
        out << to_json(record).dump() << '\n';
        out.flush();
        if (!out) throw StorageError("cannot append to run log " + path_->string());
    }
    records_.push_back(record);
}

std::vector<RunRecord> RunLog::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw StorageError("cannot read run log " + path.string());
    std::vector<RunRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception&) {
            if (in.peek() == std::char_traits<char>::eof()) break;
            throw IntegrityError("corrupt line in run log " + path.string());
        }
        out.push_back(run_record_from_json(j));
    }
    return out;
}

std::map<PointId, std::vector<std::uint32_t>> replay_versions(const std::vector<RunRecord>& records) {
    std::map<PointId, std::vector<std::uint32_t>> out;
    for (const auto& r : records)
        if (r.action == ActionKind::Retrain && r.ok && r.model_version) out[r.point].push_back(*r.model_version);
    return out;
}

// ---------------------------------------------------------------------------
// Runtime

std::pair<IntervalSeries, QcReport> clean_series(const IntervalSeries& series, const QcPolicy& policy,
                                                 int max_gap_hours) {
    auto [filtered, report] = sigma_filter(series, policy);
    return {impute_missing(filtered, max_gap_hours), std::move(report)};
}

namespace {

// Hourly series with every hour between the first and last sample present,
// gaps as missing, so QC and imputation see them.
IntervalSeries dense_hourly(const PointId& id, const std::string& unit, const std::map<Timestamp, double>& raw,
                            Timestamp resolution) {
    std::vector<Sample> samples;
    samples.reserve(raw.size());
    for (const auto& [ts, v] : raw) samples.push_back({ts, v});
    const IntervalSeries hourly = resample_hourly(IntervalSeries(id, unit, resolution, std::move(samples)));
    std::vector<Sample> dense;
    if (!hourly.empty()) {
        const auto& in = hourly.samples();
        dense.reserve(static_cast<std::size_t>((in.back().ts - in.front().ts) / kHour + 1));
        std::size_t i = 0;
        for (Timestamp t = in.front().ts; t <= in.back().ts; t += kHour) {
            if (i < in.size() && in[i].ts == t)
                dense.push_back(in[i++]);
            else
                dense.push_back({t, std::nullopt});
        }
    }
    return hourly.with_samples(std::move(dense));
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

Runtime::Runtime(ScheduleConfig cfg, Clock& clock, const GatewayClient& gateway, const Registry& registry, RunLog& log)
    : cfg_(std::move(cfg)), clock_(clock), gateway_(gateway), registry_(registry), log_(log) {
    cfg_.validate();
    for (const auto& p : cfg_.points) {
        if (registry_.contains(p.load)) {
            const auto versions = registry_.list(p.load);
            if (!versions.empty()) state_.last_retrain[p.load] = versions.back().created_at;
        }
    }
}

const AlignedTable& Runtime::table(const PointId& point) const {
    const auto it = data_.find(point);
    if (it == data_.end()) throw NotFoundError("no inputs ingested for '" + point.str() + "'");
    return it->second.table;
}

RunRecord Runtime::record(ActionKind kind, const PointId& point, Timestamp now) const {
    RunRecord r;
    r.ts = now;
    r.action = kind;
    r.point = point;
    return r;
}

std::size_t Runtime::ingest(const PointSchedule& point, Timestamp now) {
    PointData& data = data_[point.load];
    const Timestamp from = data.fetched_until > 0 ? data.fetched_until : cfg_.history_start;
    const TimeRange range{from, now + 1};

    // Fetch everything first so a failure leaves the cached state untouched.
    std::vector<IntervalSeries> fetched;
    fetched.push_back(gateway_.fetch_history(point.load, range));
    for (const auto& w : point.weather) fetched.push_back(gateway_.fetch_history(w, range));

    std::vector<IntervalSeries> cleaned;
    std::size_t removed = 0;
    for (const auto& series : fetched) {
        auto& raw = data.raw[series.point()];
        for (const Sample& s : series.samples())
            if (s.value) raw[s.ts] = *s.value;
        const IntervalSeries dense = dense_hourly(series.point(), series.unit(), raw, series.resolution());
        auto [clean, report] = clean_series(dense, cfg_.qc_policy, cfg_.max_gap_hours);
        removed += report.removed;
        cleaned.push_back(std::move(clean));
    }
    data.fetched_until = range.end;
    const IntervalSeries load = cleaned.front();
    cleaned.erase(cleaned.begin());
    data.table = align(load, cleaned);
    return removed;
}

std::optional<std::uint32_t> Runtime::retrain(const PointSchedule& point, Timestamp now) {
    PipelineOptions options = cfg_.pipeline;
    std::optional<lstm::Model> warm;
    if (cfg_.warm_start && registry_.contains(point.load)) {
        const ModelRecord latest = registry_.get_latest(point.load);
        options.train = latest.train_config;
        options.train.epochs = cfg_.retrain_epochs;
        options.feature_mode = latest.feature_mode;
        options.split.train_months = latest.split.train_months;
        options.split.test_months = latest.split.test_months;
        warm = latest.model;
    }
    PointModel trained = train_point_model(point.load, table(point.load), options, now, warm);
    return registry_.put(std::move(trained.record));
}

std::uint32_t Runtime::forecast(const PointSchedule& point, Timestamp now) {
    const ModelRecord model = registry_.get_latest(point.load);
    const Timestamp issued_at = floor_to(now, kHour);
    const auto& rows = table(point.load).rows;
    const auto end = std::upper_bound(rows.begin(), rows.end(), issued_at,
                                      [](Timestamp t, const AlignedRow& r) { return t < r.ts; });
    const auto lookback = static_cast<std::ptrdiff_t>(model.lookback());
    if (end == rows.begin() || std::prev(end)->ts != issued_at)
        throw ValidationError("inputs for '" + point.load.str() + "' do not reach " + format_iso8601(issued_at));
    if (end - rows.begin() < lookback)
        throw ValidationError("only " + std::to_string(end - rows.begin()) + " aligned hours for '" +
                              point.load.str() + "', need " + std::to_string(lookback));
    const ForecastGrid grid = issue_forecast(model, std::span<const AlignedRow>(&*(end - lookback), lookback), issued_at);
    gateway_.write_forecast(grid);
    return grid.model_version;
}

std::vector<RunRecord> Runtime::step() {
    const Timestamp now = clock_.now();
    const auto actions = tick(now, state_, cfg_);
    std::vector<RunRecord> written;
    auto emit = [&](const RunRecord& r) {
        log_.append(r);
        written.push_back(r);
    };

    for (const auto& point : cfg_.points) {
        std::vector<ActionKind> due;
        for (const auto& a : actions)
            if (a.point == point.load) due.push_back(a.kind);
        if (due.empty()) continue;

        auto started = std::chrono::steady_clock::now();
        RunRecord qc = record(ActionKind::Qc, point.load, now);
        try {
            const std::size_t removed = ingest(point, now);
            qc.detail = std::to_string(removed) + " samples removed, " + std::to_string(table(point.load).size()) +
                        " aligned hours";
        } catch (const std::exception& e) {
            qc.ok = false;
            qc.detail = e.what();
        }
        qc.duration_s = seconds_since(started);
        emit(qc);

        for (ActionKind kind : due) {
            started = std::chrono::steady_clock::now();
            RunRecord r = record(kind, point.load, now);
            PointData& data = data_[point.load];
            try {
                if (!qc.ok) throw ValidationError("inputs unavailable: " + qc.detail);
                if (kind == ActionKind::Retrain) {
                    r.model_version = retrain(point, now);
                    state_.last_retrain[point.load] = now;
                    data.retrain_failures = 0;
                } else {
                    r.model_version = forecast(point, now);
                    state_.last_forecast[point.load] = now;
                }
            } catch (const std::exception& e) {
                r.ok = false;
                r.detail = e.what();
            }
            r.duration_s = seconds_since(started);
            emit(r);
            if (kind == ActionKind::Retrain && !r.ok && ++data.retrain_failures % 3 == 0) {
                RunRecord alert = record(ActionKind::Alert, point.load, now);
                alert.ok = false;
                alert.detail = std::to_string(data.retrain_failures) + " consecutive retrain failures; last: " + r.detail;
                emit(alert);
            }
        }
    }
    return written;
}

void Runtime::run_until(Timestamp end) {
    while (clock_.now() < end) {
        step();
        const Timestamp next = floor_to(clock_.now(), cfg_.forecast_cadence_s) + cfg_.forecast_cadence_s;
        if (next >= end) break;
        clock_.sleep_until(next);
    }
}

void Runtime::run(const std::atomic<bool>& stop) {
    while (!stop) {
        step();
        const Timestamp next = floor_to(clock_.now(), cfg_.forecast_cadence_s) + cfg_.forecast_cadence_s;
        while (!stop && clock_.now() < next) clock_.sleep_until(std::min(next, clock_.now() + 1));
    }
}

// ---------------------------------------------------------------------------
// Grid search

std::vector<GridResult> grid_search(const PointId& point, const AlignedTable& table,
                                    const std::vector<GridVariant>& variants, const SplitSpec& split,
                                    FeatureMode mode) {
    if (variants.empty()) throw ValidationError("grid search needs at least one variant");
    std::vector<GridResult> results;
    for (const auto& v : variants) {
        GridResult r;
        r.name = v.name;
        r.train = v.train;
        try {
            const PointModel m = train_point_model(point, table, {v.train, split, mode}, 0);
            r.ok = true;
            r.final_train_mse = m.record.metrics.final_train_mse;
            r.final_test_mse = m.record.metrics.final_test_mse;
            r.mse_original = m.record.metrics.mse_original;
        } catch (const DivergenceError& e) {
            r.error = e.what();
        } catch (const ValidationError& e) {
            r.error = e.what();
        }
        results.push_back(std::move(r));
    }
    std::stable_sort(results.begin(), results.end(), [](const GridResult& a, const GridResult& b) {
        if (a.ok != b.ok) return a.ok;
        return a.ok && a.final_test_mse < b.final_test_mse;
    });
    for (std::size_t i = 0; i < results.size(); ++i) results[i].rank = static_cast<int>(i + 1);
    return results;
}

std::string grid_report_csv(const std::vector<GridResult>& results) {
    std::ostringstream out;
    out.precision(10);
    out << "rank,name,epochs,learning_rate,hidden_dim,batch_size,lookback,ok,final_train_mse,final_test_mse,"
           "mse_original,error\n";
    for (const auto& r : results) {
        std::string error = r.error;
        std::replace(error.begin(), error.end(), '"', '\'');
        out << r.rank << ',' << r.name << ',' << r.train.epochs << ',' << r.train.learning_rate << ','
            << r.train.hidden_dim << ',' << r.train.batch_size << ',' << r.train.lookback << ','
            << (r.ok ? "true" : "false") << ',';
        if (r.ok)
            out << r.final_train_mse << ',' << r.final_test_mse << ',' << r.mse_original << ",\n";
        else
            out << ",,,\"" << error << "\"\n";
    }
    return out.str();
}

}  // namespace loadcast
