#include "loadcast/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "loadcast/error.hpp"

namespace loadcast {

std::string to_string(FeatureMode mode) {
    return mode == FeatureMode::WeatherOnly ? "weather" : "weather+load";
}

FeatureMode feature_mode_from_string(const std::string& text) {
    if (text == "weather") return FeatureMode::WeatherOnly;
    if (text == "weather+load") return FeatureMode::WeatherAndLoad;
    throw ValidationError("unknown feature mode '" + text + "' (expected \"weather\" or \"weather+load\")");
}

std::vector<Window> build_windows(const AlignedTable& table, int lookback, int horizon) {
    if (lookback < 1 || horizon < 1) throw ValidationError("build_windows: lookback and horizon must be >= 1");
    const auto& rows = table.rows;
    const std::size_t need = static_cast<std::size_t>(lookback + horizon);

    // run[i] = number of consecutive hourly rows ending at i.
    std::vector<std::size_t> run(rows.size(), 1);
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].ts == rows[i - 1].ts + kHour) run[i] = run[i - 1] + 1;

    std::vector<Window> out;
    for (std::size_t last = need - 1; last < rows.size(); ++last) {
        if (run[last] < need) continue;
        const std::size_t first = last + 1 - need;
        const std::size_t end = first + static_cast<std::size_t>(lookback) - 1;
        Window w;
        w.first_ts = rows[first].ts;
        w.end_ts = rows[end].ts;
        w.last_target_ts = rows[last].ts;
        w.rows.resize(lookback, static_cast<Eigen::Index>(kTableColumns));
        for (int r = 0; r < lookback; ++r) {
            const AlignedRow& row = rows[first + static_cast<std::size_t>(r)];
            for (std::size_t c = 0; c < kWeatherFields; ++c) w.rows(r, static_cast<Eigen::Index>(c)) = row.weather.values[c];
            w.rows(r, static_cast<Eigen::Index>(kLoadColumn)) = row.load;
        }
        w.target.resize(horizon);
        for (int k = 0; k < horizon; ++k) w.target(k) = rows[end + 1 + static_cast<std::size_t>(k)].load;
        out.push_back(std::move(w));
    }

    if (out.empty()) {
        std::ostringstream msg;
        msg << "build_windows: no run of " << need << " consecutive hours (lookback " << lookback << " + horizon "
            << horizon << ") in a table of " << rows.size() << " rows";
        std::size_t longest = 0;
        int gaps = 0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            longest = std::max(longest, run[i]);
            if (i > 0 && run[i] == 1) {
                if (gaps < 5) msg << "; gap " << format_iso8601(rows[i - 1].ts) << " -> " << format_iso8601(rows[i].ts);
                ++gaps;
            }
        }
        msg << "; longest run " << longest << " h, " << gaps << " gap(s)";
        throw ValidationError(msg.str());
    }
    return out;
}

DataSpan span_of(const AlignedTable& table) {
    if (table.empty()) throw ValidationError("empty table has no span");
    return {table.rows.front().ts, table.rows.back().ts + kHour};
}

SplitResult chronological_split(std::vector<Window> windows, const SplitSpec& spec, DataSpan span) {
    if (spec.train_months < 1 || spec.test_months < 1) throw ValidationError("split: month counts must be >= 1");
    SplitResult out;
    out.boundary = add_months(span.end, -spec.test_months);
    for (Window& w : windows) {
        if (w.last_target_ts < out.boundary)
            out.train.push_back(std::move(w));
        else if (w.first_ts >= out.boundary)
            out.test.push_back(std::move(w));
        else
            ++out.dropped;
    }
    if (out.train.empty() || out.test.empty())
        throw ValidationError("split: " + std::string(out.train.empty() ? "train" : "test") +
                              " partition is empty (boundary " + format_iso8601(out.boundary) + ", " +
                              std::to_string(out.train.size()) + " train / " + std::to_string(out.test.size()) +
                              " test windows)");
    return out;
}

lstm::Matrix FeatureScaler::apply_rows(const lstm::Matrix& rows, FeatureMode mode) const {
    const int d = feature_dim(mode);
    lstm::Matrix out(rows.rows(), d);
    for (Eigen::Index r = 0; r < rows.rows(); ++r)
        for (int c = 0; c < d; ++c) out(r, c) = apply(static_cast<std::size_t>(c), rows(r, c));
    return out;
}

lstm::Vector FeatureScaler::apply_load(const lstm::Vector& load) const {
    return ((load.array() - mean[kLoadColumn]) / stddev[kLoadColumn]).matrix();
}

lstm::Vector FeatureScaler::invert_load(const lstm::Vector& load) const {
    return (load.array() * stddev[kLoadColumn] + mean[kLoadColumn]).matrix();
}

FeatureScaler fit_scaler(std::span<const Window> train) {
    if (train.empty()) throw ValidationError("fit_scaler: no training windows");
    std::set<Timestamp> seen;
    std::array<double, kTableColumns> sum{};
    std::vector<std::array<double, kTableColumns>> unique_rows;
    FeatureScaler scaler;
    scaler.fit_start = train.front().first_ts;
    scaler.fit_end = train.front().end_ts;
    for (const Window& w : train) {
        scaler.fit_start = std::min(scaler.fit_start, w.first_ts);
        scaler.fit_end = std::max(scaler.fit_end, w.end_ts);
        for (Eigen::Index r = 0; r < w.rows.rows(); ++r) {
            if (!seen.insert(w.first_ts + r * kHour).second) continue;
            std::array<double, kTableColumns> row{};
            for (std::size_t c = 0; c < kTableColumns; ++c) {
                row[c] = w.rows(r, static_cast<Eigen::Index>(c));
                sum[c] += row[c];
            }
            unique_rows.push_back(row);
        }
    }
    const double n = static_cast<double>(unique_rows.size());
    for (std::size_t c = 0; c < kTableColumns; ++c) {
        scaler.mean[c] = sum[c] / n;
        double ss = 0.0;
        for (const auto& row : unique_rows) ss += (row[c] - scaler.mean[c]) * (row[c] - scaler.mean[c]);
        scaler.stddev[c] = std::sqrt(ss / n);
        if (!(scaler.stddev[c] > 0.0)) {
            const std::string name = c == kLoadColumn ? "load" : std::string(kWeatherNames[c]);
            throw ValidationError("fit_scaler: column '" + name + "' has zero variance over the training rows");
        }
    }
    return scaler;
}

std::vector<lstm::Example> to_examples(std::span<const Window> windows, const FeatureScaler& scaler, FeatureMode mode) {
    std::vector<lstm::Example> out;
    out.reserve(windows.size());
    for (const Window& w : windows) out.push_back({scaler.apply_rows(w.rows, mode), scaler.apply_load(w.target)});
    return out;
}

Metrics evaluate(const ModelRecord& record, std::span<const Window> test) {
    if (test.empty()) throw ValidationError("evaluate: empty test set");
    const auto examples = to_examples(test, record.scaler, record.feature_mode);
    const lstm::Matrix yhat = lstm::predict(record.model, examples);
    const Eigen::Index k = yhat.rows();
    Metrics m;
    m.pairs = test.size();
    m.step_mse_scaled.assign(static_cast<std::size_t>(k), 0.0);
    for (std::size_t n = 0; n < examples.size(); ++n) {
        const lstm::Vector err = yhat.col(static_cast<Eigen::Index>(n)) - examples[n].target;
        for (Eigen::Index j = 0; j < k; ++j) m.step_mse_scaled[static_cast<std::size_t>(j)] += err(j) * err(j);
    }
    const double var = record.scaler.stddev[kLoadColumn] * record.scaler.stddev[kLoadColumn];
    for (double& s : m.step_mse_scaled) {
        s /= static_cast<double>(examples.size());
        m.step_mse_original.push_back(s * var);
        m.mse_scaled += s;
    }
    m.mse_scaled /= static_cast<double>(k);
    m.mse_original = m.mse_scaled * var;
    m.final_train_mse = record.metrics.final_train_mse;
    m.final_test_mse = record.metrics.final_test_mse;
    return m;
}

PointModel train_point_model(const PointId& point, const AlignedTable& table, const PipelineOptions& options,
                             Timestamp created_at, const std::optional<lstm::Model>& warm_start) {
    const std::string ctx = "point " + point.str() + ": ";
    try {
        options.train.validate();
        const DataSpan span = span_of(table);
        if (add_months(span.start, options.split.total_months()) > span.end)
            throw ValidationError("table spans " + format_iso8601(span.start) + " .. " + format_iso8601(span.end) +
                                  ", shorter than the " + std::to_string(options.split.total_months()) +
                                  " months the split needs");

        auto windows = build_windows(table, options.train.lookback, options.train.horizon);
        PointModel out;
        out.split = chronological_split(std::move(windows), options.split, span);

        ModelRecord& rec = out.record;
        rec.point = point;
        rec.created_at = created_at;
        rec.train_config = options.train;
        rec.feature_mode = options.feature_mode;
        rec.split = options.split;
        rec.split.boundary = out.split.boundary;
        rec.scaler = fit_scaler(out.split.train);

        const auto train_examples = to_examples(out.split.train, rec.scaler, rec.feature_mode);
        const auto test_examples = to_examples(out.split.test, rec.scaler, rec.feature_mode);
        auto trained = lstm::train(train_examples, test_examples, options.train, warm_start);
        rec.model = std::move(trained.model);
        out.curve = std::move(trained.curve);
        rec.metrics.final_train_mse = out.curve.points.back().train_mse;
        rec.metrics.final_test_mse = out.curve.points.back().test_mse;
        rec.metrics = evaluate(rec, out.split.test);
        return out;
    } catch (const DivergenceError& e) {
        throw DivergenceError(ctx + e.what(), e.epoch());
    } catch (const ValidationError& e) {
        throw ValidationError(ctx + e.what());
    }
}

void ForecastGrid::validate(int horizon) const {
    if (static_cast<int>(entries.size()) != horizon)
        throw ValidationError("forecast grid for " + point.str() + " has " + std::to_string(entries.size()) +
                              " entries, expected " + std::to_string(horizon));
    if (floor_to(issued_at, kHour) != issued_at)
        throw ValidationError("forecast grid issued_at is not on an hour boundary");
    for (std::size_t k = 0; k < entries.size(); ++k) {
        if (entries[k].ts != issued_at + static_cast<Timestamp>(k + 1) * kHour)
            throw ValidationError("forecast grid entry " + std::to_string(k) + " is not at issued_at + " +
                                  std::to_string(k + 1) + "h");
        if (!std::isfinite(entries[k].value)) throw ValidationError("forecast grid has a non-finite value");
    }
}

ForecastGrid issue_forecast(const ModelRecord& record, std::span<const AlignedRow> latest, Timestamp issued_at) {
    const int lookback = record.lookback();
    if (floor_to(issued_at, kHour) != issued_at)
        throw ValidationError("issue_forecast: issued_at " + format_iso8601(issued_at) + " is not on an hour boundary");
    if (static_cast<int>(latest.size()) != lookback)
        throw ValidationError("issue_forecast: need " + std::to_string(lookback) + " input hours, got " +
                              std::to_string(latest.size()));
    if (latest.back().ts != issued_at)
        throw ValidationError("issue_forecast: input window ends at " + format_iso8601(latest.back().ts) +
                              ", not at issued_at " + format_iso8601(issued_at));
    for (std::size_t r = 1; r < latest.size(); ++r)
        if (latest[r].ts != latest[r - 1].ts + kHour)
            throw ValidationError("issue_forecast: gap in input window before " + format_iso8601(latest[r].ts) +
                                  " (impute first)");

    lstm::Matrix rows(lookback, static_cast<Eigen::Index>(kTableColumns));
    for (int r = 0; r < lookback; ++r) {
        const AlignedRow& row = latest[static_cast<std::size_t>(r)];
        for (std::size_t c = 0; c < kWeatherFields; ++c) rows(r, static_cast<Eigen::Index>(c)) = row.weather.values[c];
        rows(r, static_cast<Eigen::Index>(kLoadColumn)) = row.load;
    }
    const auto [yhat, cache] =
        lstm::sequence_forward(record.model.lstm, record.model.head, record.scaler.apply_rows(rows, record.feature_mode));
    const lstm::Vector values = record.scaler.invert_load(yhat);

    ForecastGrid grid{record.point, issued_at, record.version, {}};
    for (Eigen::Index k = 0; k < values.size(); ++k)
        grid.entries.push_back({issued_at + (k + 1) * kHour, values(k)});
    grid.validate(record.horizon());
    return grid;
}

nlohmann::json to_json(const ForecastGrid& grid) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : grid.entries) entries.push_back({{"ts", format_iso8601(e.ts)}, {"val", e.value}});
    return {{"point", grid.point.str()},
            {"issuedAt", format_iso8601(grid.issued_at)},
            {"modelVersion", grid.model_version},
            {"entries", std::move(entries)}};
}

ForecastGrid forecast_grid_from_json(const nlohmann::json& j) {
    try {
        ForecastGrid g;
        g.point = PointId(j.at("point").get<std::string>());
        g.issued_at = parse_timestamp(j.at("issuedAt").get<std::string>());
        g.model_version = j.at("modelVersion").get<std::uint32_t>();
        for (const auto& e : j.at("entries"))
            g.entries.push_back({parse_timestamp(e.at("ts").get<std::string>()), e.at("val").get<double>()});
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("forecast grid JSON: ") + e.what());
    }
}

nlohmann::json to_json(const Metrics& m) {
    return {{"pairs", m.pairs},
            {"mseScaled", m.mse_scaled},
            {"mseOriginal", m.mse_original},
            {"stepMseScaled", m.step_mse_scaled},
            {"stepMseOriginal", m.step_mse_original},
            {"finalTrainMse", m.final_train_mse},
            {"finalTestMse", m.final_test_mse}};
}

std::string metrics_step_csv(const Metrics& m) {
    std::ostringstream out;
    out.precision(17);
    out << "step,mse\n";
    for (std::size_t k = 0; k < m.step_mse_original.size(); ++k) out << k + 1 << ',' << m.step_mse_original[k] << '\n';
    return out.str();
}

}  // namespace loadcast
