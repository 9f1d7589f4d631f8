#include <doctest.h>

#include <cmath>
#include <random>
#include <numeric>
#include <set>

#include "loadcast/error.hpp"
#include "loadcast/pipeline.hpp"
#include "loadcast/registry.hpp"
#include "loadcast/synthetic.hpp"

using namespace loadcast;

namespace {

AlignedTable synthetic_table(int days, std::uint64_t seed = 7) {
    const auto campus = generate_synthetic_campus(seed, days);
    return align(campus.load, campus.weather);
}

AlignedTable consecutive_table(int rows, Timestamp start = 0) {
    AlignedTable t;
    for (int r = 0; r < rows; ++r) {
        AlignedRow row;
        row.ts = start + r * kHour;
        for (std::size_t c = 0; c < kWeatherFields; ++c) row.weather.values[c] = 10.0 * static_cast<double>(c + 1) + r;
        row.load = 500.0 + r;
        t.rows.push_back(row);
    }
    return t;
}

PipelineOptions quick_options() {
    PipelineOptions o;
    o.train.epochs = 2;
    o.train.hidden_dim = 4;
    o.train.batch_size = 64;
    o.train.seed = 3;
    o.split = {2, 1, 0};
    return o;
}

}  // namespace

TEST_CASE("build_windows counts and contents") {
    const auto table = consecutive_table(100);
    const auto windows = build_windows(table, 24, 18);
    CHECK(windows.size() == 100 - 24 - 18 + 1);
    const Window& w = windows.front();
    CHECK(w.first_ts == 0);
    CHECK(w.end_ts == 23 * kHour);
    CHECK(w.last_target_ts == 41 * kHour);
    CHECK(w.rows.rows() == 24);
    CHECK(w.target(0) == 524.0);
    CHECK(w.rows(23, static_cast<Eigen::Index>(kLoadColumn)) == 523.0);

    SUBCASE("base case") {
        const auto two = build_windows(consecutive_table(2), 1, 1);
        REQUIRE(two.size() == 1);
        CHECK(two[0].rows(0, 0) == 10.0);
        CHECK(two[0].target(0) == 501.0);
    }
    SUBCASE("windows straddling a gap are skipped") {
        auto gapped = consecutive_table(100);
        gapped.rows.erase(gapped.rows.begin() + 50);
        const auto ws = build_windows(gapped, 24, 18);
        // Runs of 50 and 49 rows contribute 50-41 and 49-41 windows.
        CHECK(ws.size() == 9 + 8);
        std::set<Timestamp> present;
        for (const auto& r : gapped.rows) present.insert(r.ts);
        for (const auto& win : ws)
            for (Timestamp t = win.first_ts; t <= win.last_target_ts; t += kHour) CHECK(present.count(t) == 1);
    }
    SUBCASE("no valid window is rejected with diagnostics") {
        CHECK_THROWS_WITH_AS(build_windows(consecutive_table(30), 24, 18), doctest::Contains("longest run 30"),
                             ValidationError);
    }
}

TEST_CASE("chronological split over a synthetic year") {
    const auto table = synthetic_table(365);
    const auto result = chronological_split(build_windows(table, 24, 18), SplitSpec{}, span_of(table));
    CHECK(result.boundary == parse_timestamp("2019-11-01T00:00:00Z"));
    const double total = static_cast<double>(result.train.size() + result.test.size());
    CHECK(static_cast<double>(result.train.size()) / total == doctest::Approx(10.0 / 12.0).epsilon(0.03));
    CHECK(static_cast<double>(result.test.size()) / total == doctest::Approx(2.0 / 12.0).epsilon(0.03));
    CHECK(result.dropped == 24 + 18 - 1);

    std::set<Timestamp> train_ends;
    for (const auto& w : result.train) {
        CHECK(w.last_target_ts < result.boundary);
        train_ends.insert(w.end_ts);
    }
    for (const auto& w : result.test) {
        CHECK(w.first_ts >= result.boundary);
        CHECK(train_ends.count(w.end_ts) == 0);
    }
}

TEST_CASE("split with no test windows is rejected") {
    const auto table = synthetic_table(25);
    CHECK_THROWS_AS(chronological_split(build_windows(table, 24, 18), SplitSpec{}, span_of(table)), ValidationError);
}

TEST_CASE("scaler fit, apply and invert") {
    const auto table = synthetic_table(60);
    auto windows = build_windows(table, 24, 18);
    const auto split = chronological_split(std::move(windows), SplitSpec{1, 1, 0}, span_of(table));
    const auto scaler = fit_scaler(split.train);

    SUBCASE("train rows are standardized") {
        std::set<Timestamp> seen;
        std::array<double, kTableColumns> sum{}, sq{};
        double n = 0;
        for (const auto& w : split.train)
            for (Eigen::Index r = 0; r < w.rows.rows(); ++r) {
                if (!seen.insert(w.first_ts + r * kHour).second) continue;
                n += 1;
                for (std::size_t c = 0; c < kTableColumns; ++c) {
                    const double z = scaler.apply(c, w.rows(r, static_cast<Eigen::Index>(c)));
                    sum[c] += z;
                    sq[c] += z * z;
                }
            }
        for (std::size_t c = 0; c < kTableColumns; ++c) {
            CHECK(std::abs(sum[c] / n) < 1e-9);
            CHECK(sq[c] / n == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
    SUBCASE("apply then invert is the identity") {
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> u(-1000.0, 1000.0);
        for (int k = 0; k < 1000; ++k) {
            const std::size_t c = static_cast<std::size_t>(k) % kTableColumns;
            const double x = u(rng);
            CHECK(std::abs(scaler.invert(c, scaler.apply(c, x)) - x) <= 1e-12 * std::max(1.0, std::abs(x)));
        }
    }
    SUBCASE("test data does not influence the scaler") {
        auto test = split.test;
        for (auto& w : test) w.rows.array() += 1e6;
        std::vector<Window> mixed = split.train;
        mixed.insert(mixed.end(), test.begin(), test.end());
        CHECK_FALSE(fit_scaler(mixed) == scaler);
        CHECK(fit_scaler(split.train) == scaler);
    }
    SUBCASE("constant column is rejected by name") {
        auto train = split.train;
        for (auto& w : train) w.rows.col(static_cast<Eigen::Index>(WeatherField::Pressure)).setConstant(820.0);
        CHECK_THROWS_WITH_AS(fit_scaler(train), doctest::Contains("pressure"), ValidationError);
    }
}

TEST_CASE("train_point_model") {
    const auto table = synthetic_table(90);
    const auto a = train_point_model(PointId("campus-main-kw"), table, quick_options(), 1000);
    const auto b = train_point_model(PointId("campus-main-kw"), table, quick_options(), 1000);
    CHECK(encode_record(a.record) == encode_record(b.record));
    CHECK(a.curve == b.curve);
    CHECK(a.record.metrics.step_mse_original.size() == 18);
    CHECK(a.record.scaler == fit_scaler(a.split.train));
    CHECK(a.record.split.boundary == a.split.boundary);
    CHECK(a.record.metrics.final_test_mse == a.curve.points.back().test_mse);

    auto opts = quick_options();
    opts.split = SplitSpec{};
    CHECK_THROWS_WITH_AS(train_point_model(PointId("p"), table, opts, 0), doctest::Contains("point p"),
                         ValidationError);

    SUBCASE("weather+load mode uses seven inputs") {
        auto o = quick_options();
        o.feature_mode = FeatureMode::WeatherAndLoad;
        const auto m = train_point_model(PointId("p"), table, o, 0);
        CHECK(m.record.model.lstm.input_dim() == 7);
    }
}

TEST_CASE("evaluate") {
    const auto table = synthetic_table(90);
    const auto trained = train_point_model(PointId("p"), table, quick_options(), 0);

    SUBCASE("perfect prediction scores zero") {
        ModelRecord doctored = trained.record;
        const Window& w = trained.split.test.front();
        doctored.model.head.weight.setZero();
        doctored.model.head.bias = doctored.scaler.apply_load(w.target);
        const Metrics m = evaluate(doctored, std::span(&w, 1));
        CHECK(m.mse_scaled == 0.0);
        CHECK(m.mse_original == 0.0);
        for (double s : m.step_mse_original) CHECK(s == 0.0);
    }
    SUBCASE("overall is the mean of the per-step errors and matches a direct recomputation") {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            ModelRecord rec = trained.record;
            rec.model = lstm::init_parameters(seed, 6, 4, 18);
            const Metrics m = evaluate(rec, trained.split.test);
            const double mean_steps =
                std::accumulate(m.step_mse_scaled.begin(), m.step_mse_scaled.end(), 0.0) / 18.0;
            CHECK(m.mse_scaled == doctest::Approx(mean_steps).epsilon(1e-12));

            const auto n = static_cast<Eigen::Index>(trained.split.test.size());
            lstm::Matrix pred(18, n), truth(18, n);
            for (Eigen::Index j = 0; j < n; ++j) {
                const Window& w = trained.split.test[static_cast<std::size_t>(j)];
                pred.col(j) = lstm::sequence_forward(rec.model.lstm, rec.model.head,
                                                     rec.scaler.apply_rows(w.rows, rec.feature_mode))
                                  .first;
                truth.col(j) = rec.scaler.apply_load(w.target);
            }
            const lstm::Vector per_step = (pred - truth).array().square().rowwise().mean();
            for (int k = 0; k < 18; ++k)
                CHECK(m.step_mse_scaled[static_cast<std::size_t>(k)] == doctest::Approx(per_step(k)).epsilon(1e-10));
            const double var = rec.scaler.stddev[kLoadColumn] * rec.scaler.stddev[kLoadColumn];
            CHECK(m.mse_original == doctest::Approx(per_step.mean() * var).epsilon(1e-10));
        }
    }
    SUBCASE("empty test set is rejected") {
        CHECK_THROWS_AS(evaluate(trained.record, {}), ValidationError);
    }
    SUBCASE("step CSV has one row per horizon step") {
        const std::string csv = metrics_step_csv(trained.record.metrics);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 19);
        CHECK(to_json(trained.record.metrics).at("stepMseOriginal").size() == 18);
    }
}

TEST_CASE("issue_forecast") {
    const auto table = synthetic_table(90);
    auto trained = train_point_model(PointId("campus-main-kw"), table, quick_options(), 0);
    trained.record.version = 4;
    const std::span<const AlignedRow> rows(table.rows);
    const auto latest = rows.subspan(1000, 24);
    const Timestamp at = latest.back().ts;

    const ForecastGrid grid = issue_forecast(trained.record, latest, at);
    REQUIRE(grid.entries.size() == 18);
    for (int k = 0; k < 18; ++k) CHECK(grid.entries[static_cast<std::size_t>(k)].ts == at + (k + 1) * kHour);
    CHECK(grid.model_version == 4);
    CHECK(forecast_grid_from_json(to_json(grid)) == grid);

    SUBCASE("zero head weights forecast the inverted bias") {
        ModelRecord doctored = trained.record;
        doctored.model.head.weight.setZero();
        doctored.model.head.bias.setLinSpaced(18, -1.0, 1.0);
        const auto g = issue_forecast(doctored, latest, at);
        const lstm::Vector expected = doctored.scaler.invert_load(doctored.model.head.bias);
        for (int k = 0; k < 18; ++k) CHECK(g.entries[static_cast<std::size_t>(k)].value == expected(k));
    }
    SUBCASE("bad inputs are rejected") {
        std::vector<AlignedRow> gapped(latest.begin(), latest.end());
        for (std::size_t r = 0; r < 12; ++r) gapped[r].ts -= kHour;
        CHECK_THROWS_WITH_AS(issue_forecast(trained.record, gapped, at), doctest::Contains("gap"), ValidationError);
        CHECK_THROWS_AS(issue_forecast(trained.record, latest.first(23), at), ValidationError);
        CHECK_THROWS_AS(issue_forecast(trained.record, latest, at + kHour), ValidationError);
        CHECK_THROWS_AS(issue_forecast(trained.record, latest, at + 60), ValidationError);
    }
    SUBCASE("grid validation") {
        ForecastGrid bad = grid;
        bad.entries.pop_back();
        CHECK_THROWS_AS(bad.validate(), ValidationError);
        bad = grid;
        std::swap(bad.entries[3], bad.entries[4]);
        CHECK_THROWS_AS(bad.validate(), ValidationError);
        bad = grid;
        bad.entries[0].value = std::nan("");
        CHECK_THROWS_AS(bad.validate(), ValidationError);
    }
}
