#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "loadcast/gateway.hpp"
#include "loadcast/pipeline.hpp"
#include "loadcast/quality.hpp"
#include "loadcast/registry.hpp"

namespace loadcast {

/// sigma_filter followed by impute_missing.
std::pair<IntervalSeries, QcReport> clean_series(const IntervalSeries& series, const QcPolicy& policy,
                                                 int max_gap_hours);

/// A forecast target and the gateway points that feed it.
struct PointSchedule {
    PointId load;
    std::array<PointId, 6> weather;  ///< WeatherField order
};

struct ScheduleConfig {
    Timestamp forecast_cadence_s = 3600;
    int retrain_interval_days = 45;
    /// Epochs for warm-started retrains; cold starts use pipeline.train.epochs.
    int retrain_epochs = 50;
    bool warm_start = true;
    QcPolicy qc_policy;
    int max_gap_hours = 6;
    /// First timestamp pulled from the gateway on a cold start.
    Timestamp history_start = 0;
    PipelineOptions pipeline;
    std::vector<PointSchedule> points;

    void validate() const;
    Timestamp retrain_interval_s() const { return static_cast<Timestamp>(retrain_interval_days) * kDay; }
};

enum class ActionKind : std::uint8_t { Forecast, Retrain, Qc, Alert };
std::string to_string(ActionKind kind);
ActionKind action_kind_from_string(const std::string& text);

struct Action {
    ActionKind kind = ActionKind::Forecast;
    PointId point;

    friend bool operator==(const Action&, const Action&) = default;
};

/// Last successful run per point; absent means never.
struct ScheduleState {
    std::map<PointId, Timestamp> last_forecast;
    std::map<PointId, Timestamp> last_retrain;

    friend bool operator==(const ScheduleState&, const ScheduleState&) = default;
};

/// Due actions at `now`, per point in config order, Retrain before Forecast.
/// Pure.
std::vector<Action> tick(Timestamp now, const ScheduleState& state, const ScheduleConfig& cfg);

class Clock {
public:
    virtual ~Clock() = default;
    virtual Timestamp now() const = 0;
    /// Blocks (or jumps, for a simulated clock) until `ts`. Never moves backwards.
    virtual void sleep_until(Timestamp ts) = 0;
};

class SystemClock final : public Clock {
public:
    Timestamp now() const override;
    void sleep_until(Timestamp ts) override;
};

class SimulatedClock final : public Clock {
public:
    explicit SimulatedClock(Timestamp start) : now_(start) {}
    Timestamp now() const override { return now_; }
    void sleep_until(Timestamp ts) override;
    void advance(Timestamp seconds);

private:
    Timestamp now_;
};

struct RunRecord {
    Timestamp ts = 0;
    ActionKind action = ActionKind::Forecast;
    PointId point;
    bool ok = true;
    std::string detail;
    double duration_s = 0.0;
    std::optional<std::uint32_t> model_version;
};

nlohmann::json to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::json& j);

/// Append-only action log, mirrored to a JSON-lines file when a path is given.
class RunLog {
public:
    explicit RunLog(std::optional<std::filesystem::path> path = std::nullopt);

    void append(const RunRecord& record);
    const std::vector<RunRecord>& records() const noexcept { return records_; }

    /// Reads a JSON-lines log. A torn final line is ignored.
    static std::vector<RunRecord> load(const std::filesystem::path& path);

private:
    std::optional<std::filesystem::path> path_;
    std::vector<RunRecord> records_;
};

/// Model versions created by successful retrains, per point, in log order.
std::map<PointId, std::vector<std::uint32_t>> replay_versions(const std::vector<RunRecord>& records);

/// The operational loop: pull inputs from the gateway, QC them, retrain on
/// schedule and publish forecasts. One point failing never blocks another.
class Runtime {
public:
    Runtime(ScheduleConfig cfg, Clock& clock, const GatewayClient& gateway, const Registry& registry, RunLog& log);

    /// Runs every action due at clock.now(); returns the records written.
    std::vector<RunRecord> step();
    /// Steps at each cadence boundary while clock.now() < end.
    void run_until(Timestamp end);
    /// Steps until `stop` becomes true.
    void run(const std::atomic<bool>& stop);

    const ScheduleState& state() const noexcept { return state_; }
    /// QC'd, aligned inputs of a point as of the last step.
    const AlignedTable& table(const PointId& point) const;

private:
    struct PointData {
        std::map<PointId, std::map<Timestamp, double>> raw;
        Timestamp fetched_until = 0;
        AlignedTable table;
        int retrain_failures = 0;
    };

    /// Returns the number of samples QC removed.
    std::size_t ingest(const PointSchedule& point, Timestamp now);
    std::optional<std::uint32_t> retrain(const PointSchedule& point, Timestamp now);
    std::uint32_t forecast(const PointSchedule& point, Timestamp now);
    RunRecord record(ActionKind kind, const PointId& point, Timestamp now) const;

    ScheduleConfig cfg_;
    Clock& clock_;
    const GatewayClient& gateway_;
    const Registry& registry_;
    RunLog& log_;
    ScheduleState state_;
    std::map<PointId, PointData> data_;
};

struct GridVariant {
    std::string name;
    lstm::TrainConfig train;
};

struct GridResult {
    std::string name;
    lstm::TrainConfig train;
    bool ok = false;
    std::string error;
    double final_train_mse = 0.0;
    double final_test_mse = 0.0;
    double mse_original = 0.0;
    int rank = 0;  ///< 1 = best; failures rank after every success
};

/// Trains every variant on the same split and ranks by final test MSE.
/// Nothing is written to a registry.
std::vector<GridResult> grid_search(const PointId& point, const AlignedTable& table,
                                    const std::vector<GridVariant>& variants, const SplitSpec& split,
                                    FeatureMode mode);

/// Ranked `rank,name,...` CSV.
std::string grid_report_csv(const std::vector<GridResult>& results);

}  // namespace loadcast
