#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "loadcast/time.hpp"

namespace loadcast {

/// Opaque identifier of a measured or forecast quantity ("campus-main-kw").
class PointId {
public:
    PointId() = default;
    /// Throws ValidationError when empty.
    explicit PointId(std::string id);

    const std::string& str() const noexcept { return id_; }
    bool empty() const noexcept { return id_.empty(); }

    /// Filesystem-safe key: [A-Za-z0-9._-] kept, everything else hex-escaped
    /// as `%XX`. Injective, so distinct ids never share a directory.
    std::string sanitized() const;

    friend bool operator==(const PointId&, const PointId&) = default;
    friend auto operator<=>(const PointId&, const PointId&) = default;

private:
    std::string id_;
};

struct Sample {
    Timestamp ts = 0;
    std::optional<double> value;

    friend bool operator==(const Sample&, const Sample&) = default;
};

/// Timestamped measurement stream for one point. Construction validates:
/// strictly increasing timestamps aligned to the resolution, finite values.
class IntervalSeries {
public:
    IntervalSeries(PointId point, std::string unit, Timestamp resolution_s, std::vector<Sample> samples);

    const PointId& point() const noexcept { return point_; }
    const std::string& unit() const noexcept { return unit_; }
    Timestamp resolution() const noexcept { return resolution_; }
    const std::vector<Sample>& samples() const noexcept { return samples_; }
    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }
    std::size_t present_count() const;

    /// Same metadata, new samples (validated).
    IntervalSeries with_samples(std::vector<Sample> samples) const;

    friend bool operator==(const IntervalSeries&, const IntervalSeries&) = default;

private:
    PointId point_;
    std::string unit_;
    Timestamp resolution_;
    std::vector<Sample> samples_;
};

/// Index order of the six weather features everywhere in the system.
enum class WeatherField : std::size_t {
    RelHumidity = 0,
    Pressure,
    DryBulbTemp,
    Ghi,
    CloudCover,
    WindSpeed,
};

inline constexpr std::size_t kWeatherFields = 6;
inline constexpr std::array<std::string_view, kWeatherFields> kWeatherNames{
    "rel_humidity", "pressure", "dry_bulb_temp", "ghi", "cloud_cover", "wind_speed"};
inline constexpr std::array<std::string_view, kWeatherFields> kWeatherUnits{"%", "hPa", "°C", "W/m²", "%", "m/s"};

struct WeatherFrame {
    Timestamp ts = 0;
    std::array<double, kWeatherFields> values{};

    double operator[](WeatherField f) const { return values[static_cast<std::size_t>(f)]; }
    double& operator[](WeatherField f) { return values[static_cast<std::size_t>(f)]; }

    /// True when every field lies in its physical range.
    bool in_range() const;
};

struct AlignedRow {
    Timestamp ts = 0;
    WeatherFrame weather;
    double load = 0.0;
};

/// Inner join of one load series with the six weather series.
struct AlignedTable {
    std::vector<AlignedRow> rows;

    std::size_t size() const noexcept { return rows.size(); }
    bool empty() const noexcept { return rows.empty(); }
};

/// Averages sub-hourly samples into [t, t+3600) buckets. An hour with no
/// present sample becomes missing. Resolution must divide 3600.
IntervalSeries resample_hourly(const IntervalSeries& series);

/// One row per hour present (and non-missing) in all seven series, ascending.
/// `weather` is in WeatherField order.
AlignedTable align(const IntervalSeries& load, const std::vector<IntervalSeries>& weather);

/// `ts,value` CSV. Timestamps may be ISO-8601 or epoch seconds; an empty value is missing.
IntervalSeries read_series_csv(const std::string& path, PointId point, std::string unit,
                               Timestamp resolution_s = kHour);
void write_series_csv(const IntervalSeries& series, const std::string& path);

}  // namespace loadcast
