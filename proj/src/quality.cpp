#include "loadcast/quality.hpp"

#include <cmath>
#include <limits>

#include "loadcast/error.hpp"

namespace loadcast {

void QcPolicy::validate() const {
    if (!(sigma_threshold > 0.0)) throw ValidationError("qc: sigma_threshold must be positive");
    if (min_window_count < 2) throw ValidationError("qc: min_window_count must be >= 2");
    if (window.kind == QcWindow::Kind::Rolling && window.hours < min_window_count)
        throw ValidationError("qc: rolling window (" + std::to_string(window.hours) +
                              " h) shorter than min_window_count (" + std::to_string(min_window_count) + ")");
}

namespace {

/// Running first and second moments about a fixed shift, which keeps the
/// subtraction in the variance well conditioned.
struct Moments {
    double shift = 0.0;
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t count = 0;

    void add(double v) {
        const double d = v - shift;
        sum += d;
        sum_sq += d * d;
        ++count;
    }
    void remove(double v) {
        const double d = v - shift;
        sum -= d;
        sum_sq -= d * d;
        --count;
    }
    double mean() const { return shift + sum / static_cast<double>(count); }
    /// Sample standard deviation (n - 1).
    double stddev() const {
        const double n = static_cast<double>(count);
        const double var = (sum_sq - sum * sum / n) / (n - 1.0);
        return var > 0.0 ? std::sqrt(var) : 0.0;
    }
};

}  // namespace

std::pair<IntervalSeries, QcReport> sigma_filter(const IntervalSeries& series, const QcPolicy& policy) {
    policy.validate();
    const auto& in = series.samples();
    std::vector<Sample> out = in;
    QcReport report;
    report.point = series.point();

    Moments moments;
    for (const Sample& s : in)
        if (s.value) {
            moments.shift = *s.value;
            break;
        }

    const bool global = policy.window.kind == QcWindow::Kind::Global;
    if (global)
        for (const Sample& s : in)
            if (s.value) moments.add(*s.value);

    // Rolling: `moments` holds the present samples with ts in [t - span, t).
    const Timestamp span = static_cast<Timestamp>(policy.window.hours) * kHour;
    std::size_t head = 0;  // next sample to enter the window
    std::size_t tail = 0;  // oldest sample still in the window

    for (std::size_t i = 0; i < in.size(); ++i) {
        const Sample& s = in[i];
        if (!global) {
            while (head < i) {
                if (in[head].value) moments.add(*in[head].value);
                ++head;
            }
            while (tail < head && in[tail].ts < s.ts - span) {
                if (in[tail].value) moments.remove(*in[tail].value);
                ++tail;
            }
        }
        if (!s.value) continue;
        ++report.examined;

        if (global) moments.remove(*s.value);
        const std::size_t n = moments.count;
        if (n < static_cast<std::size_t>(policy.min_window_count)) {
            ++report.unscreened;
        } else {
            const double mu = moments.mean();
            const double sd = moments.stddev();
            report.window_stats.push_back({s.ts, mu, sd});
            if (std::abs(*s.value - mu) > policy.sigma_threshold * sd) {
                out[i].value.reset();
                ++report.removed;
                report.removed_ts.push_back(s.ts);
            }
        }
        if (global) moments.add(*s.value);
    }
    return {series.with_samples(std::move(out)), std::move(report)};
}

IntervalSeries impute_missing(const IntervalSeries& series, int max_gap_hours) {
    std::vector<Sample> out = series.samples();
    std::size_t last_present = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!out[i].value) continue;
        if (last_present != std::numeric_limits<std::size_t>::max()) {
            const Sample& a = out[last_present];
            const Sample& b = out[i];
            // Gap length counts missing slots in time, including absent rows.
            const Timestamp missing_slots = (b.ts - a.ts) / series.resolution() - 1;
            const bool contiguous_rows = i - last_present - 1 == static_cast<std::size_t>(missing_slots);
            if (missing_slots > 0 && missing_slots <= max_gap_hours && contiguous_rows) {
                for (std::size_t k = last_present + 1; k < i; ++k) {
                    const double frac = static_cast<double>(out[k].ts - a.ts) / static_cast<double>(b.ts - a.ts);
                    out[k].value = *a.value + frac * (*b.value - *a.value);
                }
            }
        }
        last_present = i;
    }
    return series.with_samples(std::move(out));
}

nlohmann::json to_json(const QcReport& r) {
    nlohmann::json j{{"point", r.point.str()},
                     {"examined", r.examined},
                     {"removed", r.removed},
                     {"unscreened", r.unscreened}};
    j["removedTs"] = nlohmann::json::array();
    for (Timestamp ts : r.removed_ts) j["removedTs"].push_back(format_iso8601(ts));
    j["windowStats"] = nlohmann::json::array();
    for (const auto& w : r.window_stats) j["windowStats"].push_back({format_iso8601(w.ts), w.mean, w.std});
    return j;
}

nlohmann::json to_json(const QcPolicy& p) {
    nlohmann::json j{{"sigma_threshold", p.sigma_threshold}, {"min_window_count", p.min_window_count}};
    if (p.window.kind == QcWindow::Kind::Global)
        j["window"] = "global";
    else
        j["window"] = {{"rolling_hours", p.window.hours}};
    return j;
}

QcPolicy qc_policy_from_json(const nlohmann::json& j) {
    QcPolicy p;
    p.sigma_threshold = j.value("sigma_threshold", p.sigma_threshold);
    p.min_window_count = j.value("min_window_count", p.min_window_count);
    if (j.contains("window")) {
        const auto& w = j.at("window");
        if (w.is_string() && w.get<std::string>() == "global")
            p.window = QcWindow::global();
        else if (w.is_object() && w.contains("rolling_hours"))
            p.window = QcWindow::rolling(w.at("rolling_hours").get<int>());
        else
            throw ValidationError("qc.window must be \"global\" or {\"rolling_hours\": n}");
    }
    p.validate();
    return p;
}

}  // namespace loadcast
