#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "loadcast/timeseries.hpp"

namespace loadcast {

/// How the reference window for each candidate sample is chosen.
struct QcWindow {
    enum class Kind { Global, Rolling };
    Kind kind = Kind::Rolling;
    /// Rolling only: the window is the `hours` slots preceding the candidate.
    int hours = 720;

    static QcWindow global() { return {Kind::Global, 0}; }
    static QcWindow rolling(int hours) { return {Kind::Rolling, hours}; }
};

struct QcPolicy {
    double sigma_threshold = 3.0;
    QcWindow window{};
    int min_window_count = 24;

    /// Throws ValidationError when the policy is inconsistent.
    void validate() const;
};

struct QcWindowStat {
    Timestamp ts = 0;
    double mean = 0.0;
    double std = 0.0;
};

struct QcReport {
    PointId point;
    std::size_t examined = 0;
    std::size_t removed = 0;
    std::size_t unscreened = 0;
    std::vector<Timestamp> removed_ts;
    std::vector<QcWindowStat> window_stats;
};

/// Flags a present sample as missing when it lies more than
/// `sigma_threshold` standard deviations from the mean of its window. The
/// candidate is left out of its own window statistics. Samples whose window
/// has fewer than `min_window_count` present values pass unscreened.
std::pair<IntervalSeries, QcReport> sigma_filter(const IntervalSeries& series, const QcPolicy& policy);

/// Linear interpolation across interior gaps of at most `max_gap_hours`
/// missing samples. Leading and trailing gaps stay missing.
IntervalSeries impute_missing(const IntervalSeries& series, int max_gap_hours);

nlohmann::json to_json(const QcReport& report);
nlohmann::json to_json(const QcPolicy& policy);
QcPolicy qc_policy_from_json(const nlohmann::json& j);

}  // namespace loadcast
