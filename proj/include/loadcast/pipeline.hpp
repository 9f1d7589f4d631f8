#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "loadcast/lstm.hpp"
#include "loadcast/timeseries.hpp"

namespace loadcast {

inline constexpr int kForecastHorizon = 18;

/// Table column count: six weather fields followed by load.
inline constexpr std::size_t kTableColumns = kWeatherFields + 1;
inline constexpr std::size_t kLoadColumn = kWeatherFields;

/// Model inputs: the six weather fields, optionally followed by past load.
enum class FeatureMode : std::uint8_t { WeatherOnly = 0, WeatherAndLoad = 1 };

inline int feature_dim(FeatureMode mode) { return mode == FeatureMode::WeatherOnly ? 6 : 7; }
std::string to_string(FeatureMode mode);
FeatureMode feature_mode_from_string(const std::string& text);

/// One supervised window in original units.
struct Window {
    Timestamp first_ts = 0;        ///< first input hour
    Timestamp end_ts = 0;          ///< last input hour (the issuance hour)
    Timestamp last_target_ts = 0;  ///< end_ts + K hours
    lstm::Matrix rows;             ///< L x 7 table columns
    lstm::Vector target;           ///< K future load values
};

/// One window per hour t where t-L+1..t and t+1..t+K are all consecutive
/// rows. Throws ValidationError with gap diagnostics when none exist.
std::vector<Window> build_windows(const AlignedTable& table, int lookback, int horizon);

struct SplitSpec {
    int train_months = 10;
    int test_months = 2;
    /// Set by chronological_split.
    Timestamp boundary = 0;

    int total_months() const { return train_months + test_months; }
};

struct SplitResult {
    std::vector<Window> train;
    std::vector<Window> test;
    std::size_t dropped = 0;  ///< windows straddling the boundary
    Timestamp boundary = 0;
};

/// [start, end) of the data a split is taken over; `end` is one resolution
/// past the last row.
struct DataSpan {
    Timestamp start = 0;
    Timestamp end = 0;
};

DataSpan span_of(const AlignedTable& table);

/// Test covers the last `test_months` calendar months of `span`; training
/// is everything before. For a span of exactly train+test months the
/// boundary is start + train_months. A window is train when its last target
/// hour is before the boundary, test when its first input hour is at or
/// after it, and dropped otherwise. Throws when either side is empty.
SplitResult chronological_split(std::vector<Window> windows, const SplitSpec& spec, DataSpan span);

/// Per-column z-scoring over the seven table columns.
struct FeatureScaler {
    std::array<double, kTableColumns> mean{};
    std::array<double, kTableColumns> stddev{};
    Timestamp fit_start = 0;
    Timestamp fit_end = 0;

    double apply(std::size_t column, double value) const { return (value - mean[column]) / stddev[column]; }
    double invert(std::size_t column, double value) const { return value * stddev[column] + mean[column]; }

    /// Scaled model input for `mode`: rows x feature_dim(mode).
    lstm::Matrix apply_rows(const lstm::Matrix& rows, FeatureMode mode) const;
    lstm::Vector apply_load(const lstm::Vector& load) const;
    lstm::Vector invert_load(const lstm::Vector& load) const;

    friend bool operator==(const FeatureScaler&, const FeatureScaler&) = default;
};

/// Population statistics over the distinct hours referenced by the input
/// rows of `train`. Throws ValidationError naming any zero-variance column.
FeatureScaler fit_scaler(std::span<const Window> train);

std::vector<lstm::Example> to_examples(std::span<const Window> windows, const FeatureScaler& scaler, FeatureMode mode);

struct Metrics {
    std::size_t pairs = 0;
    double mse_scaled = 0.0;
    double mse_original = 0.0;
    std::vector<double> step_mse_scaled;
    std::vector<double> step_mse_original;
    double final_train_mse = 0.0;  ///< scaled, last epoch
    double final_test_mse = 0.0;   ///< scaled, last epoch

    friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// A trained model for one point together with everything needed to reuse it.
struct ModelRecord {
    PointId point;
    std::uint32_t version = 0;  ///< assigned by the registry
    Timestamp created_at = 0;
    lstm::TrainConfig train_config;
    FeatureMode feature_mode = FeatureMode::WeatherOnly;
    SplitSpec split;
    FeatureScaler scaler;
    lstm::Model model;
    Metrics metrics;

    int lookback() const { return train_config.lookback; }
    int horizon() const { return model.head.horizon(); }
};

struct PipelineOptions {
    lstm::TrainConfig train;
    SplitSpec split;
    FeatureMode feature_mode = FeatureMode::WeatherOnly;
};

struct PointModel {
    ModelRecord record;
    lstm::LossCurve curve;
    SplitResult split;
};

/// Windows, split, scaler fitted on train only, LSTM training in scaled
/// space, and evaluation on the test split. `warm_start` continues from a
/// previous model of the same shape.
PointModel train_point_model(const PointId& point, const AlignedTable& table, const PipelineOptions& options,
                             Timestamp created_at, const std::optional<lstm::Model>& warm_start = std::nullopt);

/// Overall and per-horizon-step MSE; `overall` is the mean of the steps.
Metrics evaluate(const ModelRecord& record, std::span<const Window> test);

struct ForecastEntry {
    Timestamp ts = 0;
    double value = 0.0;

    friend bool operator==(const ForecastEntry&, const ForecastEntry&) = default;
};

struct ForecastGrid {
    PointId point;
    Timestamp issued_at = 0;
    std::uint32_t model_version = 0;
    std::vector<ForecastEntry> entries;

    /// Throws ValidationError unless there are exactly `horizon` finite
    /// entries at issued_at + 1h, +2h, ... in order.
    void validate(int horizon = kForecastHorizon) const;

    friend bool operator==(const ForecastGrid&, const ForecastGrid&) = default;
};

/// `latest` must hold exactly `lookback` consecutive rows ending at
/// `issued_at`, which must be on an hour boundary.
ForecastGrid issue_forecast(const ModelRecord& record, std::span<const AlignedRow> latest, Timestamp issued_at);

nlohmann::json to_json(const ForecastGrid& grid);
ForecastGrid forecast_grid_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Metrics& metrics);
/// `step,mse` in original units.
std::string metrics_step_csv(const Metrics& metrics);

}  // namespace loadcast
