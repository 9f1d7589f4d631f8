#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "loadcast/error.hpp"
#include "loadcast/synthetic.hpp"
#include "loadcast/timeseries.hpp"

using namespace loadcast;

namespace {

IntervalSeries hourly(const std::string& id, Timestamp start, int hours, double value = 1.0) {
    std::vector<Sample> s;
    for (int k = 0; k < hours; ++k) s.push_back({start + k * kHour, value + k});
    return IntervalSeries(PointId(id), "kW", kHour, std::move(s));
}

std::vector<IntervalSeries> weather_set(Timestamp start, int hours) {
    std::vector<IntervalSeries> w;
    for (std::size_t f = 0; f < kWeatherFields; ++f) w.push_back(hourly("w" + std::to_string(f), start, hours, 10.0));
    return w;
}

}  // namespace

TEST_CASE("timestamps round-trip through ISO-8601") {
    CHECK(parse_timestamp("2019-01-01T00:00:00Z") == 1546300800);
    CHECK(parse_timestamp("1546300800") == 1546300800);
    CHECK(parse_timestamp("2019-01-01T01:00:00+01:00") == 1546300800);
    CHECK(parse_timestamp("2019-01-01") == 1546300800);
    CHECK(format_iso8601(1546304400) == "2019-01-01T01:00:00Z");
    CHECK_THROWS_AS(parse_timestamp("yesterday"), ValidationError);
    CHECK_THROWS_AS(parse_timestamp("2019-13-01T00:00:00Z"), ValidationError);
    CHECK(weekday(1546300800) == 1);  // Tuesday
    CHECK(add_months(parse_timestamp("2019-01-31T05:00:00Z"), 1) == parse_timestamp("2019-02-28T05:00:00Z"));
    CHECK(add_months(1546300800, 12) == parse_timestamp("2020-01-01T00:00:00Z"));
    CHECK(add_months(1546300800, -2) == parse_timestamp("2018-11-01T00:00:00Z"));
}

TEST_CASE("point ids sanitize injectively") {
    CHECK_THROWS_AS(PointId(""), ValidationError);
    CHECK(PointId("campus-main-kw").sanitized() == "campus-main-kw");
    CHECK(PointId("a/b").sanitized() == "a%2Fb");
    CHECK(PointId("a%2Fb").sanitized() != PointId("a/b").sanitized());
    CHECK(PointId("..").sanitized() != "..");
}

TEST_CASE("interval series invariants are enforced") {
    CHECK_THROWS_AS(IntervalSeries(PointId("p"), "kW", kHour, {{kHour, 1.0}, {kHour, 2.0}}), ValidationError);
    CHECK_THROWS_AS(IntervalSeries(PointId("p"), "kW", kHour, {{1800, 1.0}}), ValidationError);
    CHECK_THROWS_AS(IntervalSeries(PointId("p"), "kW", kHour, {{0, std::nan("")}}), ValidationError);
    CHECK_THROWS_AS(IntervalSeries(PointId("p"), "kW", 0, {}), ValidationError);
}

TEST_CASE("resample_hourly averages quarter hours") {
    const Timestamp h = 10 * kHour;
    IntervalSeries q(PointId("p"), "kW", 900, {{h, 2.0}, {h + 900, 4.0}, {h + 1800, 6.0}, {h + 2700, 8.0}});
    const auto out = resample_hourly(q);
    REQUIRE(out.size() == 1);
    CHECK(out.resolution() == kHour);
    CHECK(out.samples()[0] == Sample{h, 5.0});

    SUBCASE("all sub-samples missing gives a missing hour") {
        IntervalSeries m(PointId("p"), "kW", 900, {{h, {}}, {h + 900, {}}, {h + 1800, {}}, {h + 2700, {}}});
        const auto r = resample_hourly(m);
        REQUIRE(r.size() == 1);
        CHECK_FALSE(r.samples()[0].value.has_value());
    }
    SUBCASE("hourly input is returned unchanged and resampling is idempotent") {
        const auto hs = hourly("p", 0, 48);
        CHECK(resample_hourly(hs) == hs);
        CHECK(resample_hourly(resample_hourly(q)) == resample_hourly(q));
    }
    SUBCASE("resolution that does not divide an hour is rejected") {
        IntervalSeries odd(PointId("p"), "kW", 7 * 60, {{0, 1.0}});
        CHECK_THROWS_AS(resample_hourly(odd), ValidationError);
    }
}

TEST_CASE("align is an inner join on present hours") {
    const auto weather = weather_set(0, 100);
    SUBCASE("full overlap") {
        const auto table = align(hourly("load", 0, 100), weather);
        CHECK(table.size() == 100);
        for (std::size_t r = 1; r < table.size(); ++r) CHECK(table.rows[r].ts > table.rows[r - 1].ts);
    }
    SUBCASE("missing load hour is dropped") {
        auto samples = hourly("load", 0, 100).samples();
        samples[50].value.reset();
        const auto table = align(IntervalSeries(PointId("load"), "kW", kHour, samples), weather);
        CHECK(table.size() == 99);
        for (const auto& row : table.rows) CHECK(row.ts != 50 * kHour);
    }
    SUBCASE("row count never exceeds the smallest present count") {
        auto w = weather;
        auto ws = w[3].samples();
        for (int k = 0; k < 100; k += 7) ws[static_cast<std::size_t>(k)].value.reset();
        w[3] = w[3].with_samples(ws);
        const auto table = align(hourly("load", 0, 100), w);
        CHECK(table.size() <= w[3].present_count());
        CHECK(table.size() == w[3].present_count());
    }
    SUBCASE("disjoint ranges are rejected with a diagnostic") {
        CHECK_THROWS_WITH_AS(align(hourly("load", 1000 * kHour, 10), weather), doctest::Contains("load=["),
                             ValidationError);
    }
}

TEST_CASE("synthetic campus is deterministic and well-formed") {
    const auto a = generate_synthetic_campus(7, 365);
    const auto b = generate_synthetic_campus(7, 365);
    CHECK(a.load == b.load);
    for (std::size_t f = 0; f < kWeatherFields; ++f) CHECK(a.weather[f] == b.weather[f]);
    CHECK(a.load.size() == 365 * 24);

    const auto one = generate_synthetic_campus(3, 1);
    CHECK(one.load.size() == 24);
    for (const auto& w : one.weather) CHECK(w.size() == 24);
    CHECK_THROWS_AS(generate_synthetic_campus(1, 0), ValidationError);
}

TEST_CASE("noise-free synthetic load equals the closed-form formula") {
    SyntheticConfig cfg;
    cfg.noise_sigma_kw = 0.0;
    const auto campus = generate_synthetic_campus(11, 30, cfg);
    const auto& temp = campus.weather[static_cast<std::size_t>(WeatherField::DryBulbTemp)].samples();
    const double pi = 3.14159265358979323846;
    for (std::size_t k = 0; k < campus.load.size(); ++k) {
        const Timestamp ts = campus.load.samples()[k].ts;
        // Independent re-evaluation: 2019-01-01 is a Tuesday.
        const long day_index = (ts - cfg.start) / kDay;
        const bool is_weekday = ((day_index + 1) % 7) < 5;
        const double hour = static_cast<double>((ts % kDay) / kHour);
        const double t = *temp[k].value;
        const double expected = 800.0 + 300.0 * std::sin(2.0 * pi * hour / 24.0 - 3.0 * pi / 4.0) +
                                (is_weekday ? 150.0 : 0.0) + 25.0 * (t > 18.0 ? t - 18.0 : 0.0);
        CHECK(*campus.load.samples()[k].value == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("synthetic output satisfies series and weather invariants across 100 seeds") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto campus = generate_synthetic_campus(seed, 20);
        const auto table = align(campus.load, campus.weather);
        REQUIRE(table.size() == campus.load.size());
        for (const auto& row : table.rows) {
            REQUIRE(row.weather.in_range());
            REQUIRE(std::isfinite(row.load));
        }
    }
}

TEST_CASE("campus directory round-trips through CSV and manifest") {
    const auto dir = std::filesystem::temp_directory_path() / "loadcast_ts_roundtrip";
    std::filesystem::remove_all(dir);
    const auto campus = generate_synthetic_campus(5, 3);
    write_campus(campus, dir.string());
    const auto back = read_campus(dir.string());
    CHECK(back.load.point() == campus.load.point());
    REQUIRE(back.load.size() == campus.load.size());
    for (std::size_t k = 0; k < back.load.size(); ++k)
        CHECK(*back.load.samples()[k].value == *campus.load.samples()[k].value);
    CHECK(back.weather[2].unit() == "°C");
    std::filesystem::remove_all(dir);
}
