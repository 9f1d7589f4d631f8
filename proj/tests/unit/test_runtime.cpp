#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "loadcast/config.hpp"
#include "loadcast/error.hpp"
#include "loadcast/runtime.hpp"
#include "loadcast/synthetic.hpp"

using namespace loadcast;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const Timestamp kStart = parse_timestamp("2019-04-05T00:00:00Z");

PipelineOptions small_options() {
    PipelineOptions o;
    o.train.epochs = 3;
    o.train.hidden_dim = 4;
    o.train.batch_size = 64;
    o.train.seed = 3;
    o.split = {2, 1};
    return o;
}

ScheduleConfig small_schedule(std::vector<PointSchedule> points) {
    ScheduleConfig c;
    c.pipeline = small_options();
    c.retrain_epochs = 2;
    c.points = std::move(points);
    return c;
}

const SyntheticCampus& campus() {
    static const SyntheticCampus c = generate_synthetic_campus(5, 100);
    return c;
}

AlignedTable table_until(Timestamp end) {
    AlignedTable t = align(campus().load, campus().weather);
    std::erase_if(t.rows, [end](const AlignedRow& r) { return r.ts > end; });
    return t;
}

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("loadcast_rt_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

/// Gateway, registry and log wired in-process; every forecast write is captured.
struct Harness {
    explicit Harness(const std::string& name)
        : dir(fresh_dir(name)),
          store(std::make_shared<PointStore>()),
          server(store),
          client("127.0.0.1:1"),
          registry(dir / "registry"),
          log(dir / "runlog.jsonl") {
        store->import_series(campus().load);
        for (const auto& w : campus().weather) store->import_series(w);
        auto inner = in_process_transport(server);
        client.set_transport([this, inner](const HttpRequest& req) {
            if (req.method == "POST") {
                const GridDocument g = GridDocument::parse(req.body);
                if (g.meta.contains("issuedAt")) writes.push_back(g);
            }
            return inner(req);
        });
    }
    ~Harness() { fs::remove_all(dir); }

    fs::path dir;
    std::shared_ptr<PointStore> store;
    GatewayServer server;
    GatewayClient client;
    Registry registry;
    RunLog log;
    std::vector<GridDocument> writes;
};

std::size_t count(const std::vector<RunRecord>& records, ActionKind kind, const std::string& point, bool ok) {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [&](const RunRecord& r) {
        return r.action == kind && r.point.str() == point && r.ok == ok;
    }));
}

}  // namespace

TEST_CASE("tick schedules cold starts, cadence and retrain intervals") {
    ScheduleConfig cfg = small_schedule({campus_schedule("a"), campus_schedule("b")});
    ScheduleState state;

    const auto cold = tick(kStart, state, cfg);
    CHECK(cold == std::vector<Action>{{ActionKind::Retrain, PointId("a")},
                                      {ActionKind::Forecast, PointId("a")},
                                      {ActionKind::Retrain, PointId("b")},
                                      {ActionKind::Forecast, PointId("b")}});
    CHECK(tick(kStart, state, cfg) == cold);

    for (const auto& a : cold)
        (a.kind == ActionKind::Retrain ? state.last_retrain : state.last_forecast)[a.point] = kStart;
    CHECK(tick(kStart + 30 * 60, state, cfg).empty());
    CHECK(tick(kStart + kHour, state, cfg).size() == 2);

    SUBCASE("simulated 90 days matches cadence arithmetic") {
        for (Timestamp cadence : {Timestamp{3600}, Timestamp{7200}}) {
            cfg.forecast_cadence_s = cadence;
            ScheduleState s = state;
            std::map<ActionKind, int> executed;
            for (Timestamp now = kStart + kHour; now <= kStart + 90 * kDay; now += kHour) {
                for (const auto& a : tick(now, s, cfg)) {
                    ++executed[a.kind];
                    (a.kind == ActionKind::Retrain ? s.last_retrain : s.last_forecast)[a.point] = now;
                }
            }
            // Two points; 90 / 45 retrains and 90 days / cadence forecasts each.
            CHECK(executed[ActionKind::Retrain] == 2 * (90 / 45));
            CHECK(executed[ActionKind::Forecast] == 2 * static_cast<int>(90 * kDay / cadence));
        }
    }
}

TEST_CASE("schedule config validation") {
    ScheduleConfig c = small_schedule({campus_schedule()});
    CHECK_NOTHROW(c.validate());
    c.forecast_cadence_s = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = small_schedule({campus_schedule()});
    c.retrain_interval_days = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = small_schedule({campus_schedule(), campus_schedule()});
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("simulated clock never moves backwards") {
    SimulatedClock clock(100);
    clock.sleep_until(50);
    CHECK(clock.now() == 100);
    clock.advance(10);
    CHECK(clock.now() == 110);
    CHECK_THROWS_AS(clock.advance(-1), ValidationError);
}

TEST_CASE("48 simulated hours from a cold start") {
    Harness h("cold");
    SimulatedClock clock(kStart);
    Runtime rt(small_schedule({campus_schedule()}), clock, h.client, h.registry, h.log);
    rt.run_until(kStart + 48 * kHour);

    const auto& records = h.log.records();
    CHECK(count(records, ActionKind::Forecast, "campus-main-kw", true) == 48);
    CHECK(count(records, ActionKind::Forecast, "campus-main-kw", false) == 0);
    CHECK(count(records, ActionKind::Retrain, "campus-main-kw", true) == 1);
    CHECK(count(records, ActionKind::Qc, "campus-main-kw", true) == 48);
    CHECK(h.registry.list(PointId("campus-main-kw")).size() == 1);
    CHECK(h.registry.get_latest(PointId("campus-main-kw")).created_at == kStart);

    REQUIRE(h.writes.size() == 48);
    for (std::size_t i = 0; i < h.writes.size(); ++i) {
        const auto& g = h.writes[i];
        const Timestamp issued = parse_timestamp(g.meta["issuedAt"].get<std::string>());
        CHECK(issued == kStart + static_cast<Timestamp>(i) * kHour);
        REQUIRE(g.rows.size() == 18);
        for (int k = 0; k < 18; ++k) CHECK(parse_timestamp(g.rows[k]["ts"].get<std::string>()) == issued + (k + 1) * kHour);
    }
    // Inputs never extend past the clock.
    CHECK(rt.table(PointId("campus-main-kw")).rows.back().ts == kStart + 47 * kHour);

    const auto current = h.store->current_forecast(PointId("campus-main-kw"));
    REQUIRE(current.size() == 18);
    CHECK(current.front().target_ts == kStart + 48 * kHour);

    SUBCASE("the log on disk replays to the registry history") {
        const auto replayed = replay_versions(RunLog::load(h.dir / "runlog.jsonl"));
        std::vector<std::uint32_t> versions;
        for (const auto& v : h.registry.list(PointId("campus-main-kw"))) versions.push_back(v.version);
        CHECK(replayed.at(PointId("campus-main-kw")) == versions);
        CHECK(RunLog(h.dir / "runlog.jsonl").records().size() == records.size());
    }
}

TEST_CASE("a due retrain produces version 2 and later forecasts carry it") {
    Harness h("v2");
    const PointId id("campus-main-kw");
    // An existing model that comes due ten hours into the run.
    const Timestamp created = kStart - 45 * kDay + 10 * kHour;
    h.registry.put(train_point_model(id, table_until(kStart), small_options(), created).record);

    SimulatedClock clock(kStart);
    Runtime rt(small_schedule({campus_schedule()}), clock, h.client, h.registry, h.log);
    CHECK(rt.state().last_retrain.at(id) == created);
    rt.run_until(kStart + 48 * kHour);

    CHECK(count(h.log.records(), ActionKind::Retrain, id.str(), true) == 1);
    const auto versions = h.registry.list(id);
    REQUIRE(versions.size() == 2);
    CHECK(versions[1].created_at == kStart + 10 * kHour);
    REQUIRE(h.writes.size() == 48);
    for (std::size_t i = 0; i < h.writes.size(); ++i)
        CHECK(h.writes[i].meta["modelVersion"] == (i < 10 ? 1 : 2));

    // The warm start kept the stored architecture.
    CHECK(h.registry.get_latest(id).train_config.epochs == 2);
    CHECK(h.registry.get_latest(id).train_config.hidden_dim == 4);
}

TEST_CASE("a failing point does not disturb the others") {
    Harness h("isolation");
    // A second load point whose weather feeds do not exist.
    h.store->import_series(IntervalSeries(PointId("annex-kw"), "kW", kHour, campus().load.samples()));
    SimulatedClock clock(kStart);
    Runtime rt(small_schedule({campus_schedule("annex-kw", "missing"), campus_schedule()}), clock, h.client,
               h.registry, h.log);
    rt.run_until(kStart + 6 * kHour);

    const auto& records = h.log.records();
    CHECK(count(records, ActionKind::Forecast, "campus-main-kw", true) == 6);
    CHECK(count(records, ActionKind::Qc, "annex-kw", false) == 6);
    CHECK(count(records, ActionKind::Forecast, "annex-kw", false) == 6);
    CHECK(count(records, ActionKind::Retrain, "annex-kw", false) == 6);
    // An alert after every third consecutive retrain failure.
    CHECK(count(records, ActionKind::Alert, "annex-kw", false) == 2);
    CHECK_FALSE(h.registry.contains(PointId("annex-kw")));
    // Every scheduled action got exactly one record.
    CHECK(records.size() == 6 * (2 + 3) + 2 + 1);
}

TEST_CASE("run log round trip") {
    const fs::path dir = fresh_dir("log");
    {
        RunLog log(dir / "log.jsonl");
        RunRecord r;
        r.ts = kStart;
        r.action = ActionKind::Retrain;
        r.point = PointId("p");
        r.model_version = 3;
        r.detail = "ok \"quoted\"";
        log.append(r);
        r.ok = false;
        r.model_version.reset();
        log.append(r);
    }
    std::ofstream(dir / "log.jsonl", std::ios::app) << "{\"ts\":";
    const auto records = RunLog::load(dir / "log.jsonl");
    REQUIRE(records.size() == 2);
    CHECK(records[0].model_version == 3u);
    CHECK(records[0].detail == "ok \"quoted\"");
    CHECK_FALSE(records[1].ok);
    CHECK(replay_versions(records).at(PointId("p")) == std::vector<std::uint32_t>{3});
    fs::remove_all(dir);
}

TEST_CASE("grid search ranks by final test loss without promoting") {
    const AlignedTable table = align(campus().load, campus().weather);
    const PointId id("campus-main-kw");
    const SplitSpec split{2, 1};
    const lstm::TrainConfig base = small_options().train;

    SUBCASE("a single variant equals a plain run") {
        const auto results = grid_search(id, table, {{"only", base}}, split, FeatureMode::WeatherOnly);
        const auto plain = train_point_model(id, table, {base, split, FeatureMode::WeatherOnly}, 0);
        REQUIRE(results.size() == 1);
        CHECK(results[0].rank == 1);
        CHECK(results[0].final_test_mse == plain.record.metrics.final_test_mse);
        CHECK(results[0].mse_original == plain.record.metrics.mse_original);
    }
    SUBCASE("zero learning rate ranks last") {
        lstm::TrainConfig frozen = base;
        frozen.learning_rate = 0.0;
        const auto results = grid_search(id, table, {{"frozen", frozen}, {"learning", base}}, split,
                                         FeatureMode::WeatherOnly);
        REQUIRE(results.size() == 2);
        CHECK(results[0].name == "learning");
        CHECK(results[1].name == "frozen");
        CHECK(results[1].rank == 2);
    }
    SUBCASE("ranking matches standalone re-runs") {
        std::vector<GridVariant> variants;
        for (double lr : {1e-3, 1e-2})
            for (int hdim : {3, 5}) {
                lstm::TrainConfig t = base;
                t.learning_rate = lr;
                t.hidden_dim = hdim;
                variants.push_back({"lr" + std::to_string(lr) + "-h" + std::to_string(hdim), t});
            }
        const auto results = grid_search(id, table, variants, split, FeatureMode::WeatherOnly);

        std::vector<std::pair<double, std::string>> oracle;
        for (const auto& v : variants) {
            const auto m = train_point_model(id, table, {v.train, split, FeatureMode::WeatherOnly}, 0);
            oracle.push_back({m.record.metrics.final_test_mse, v.name});
        }
        std::sort(oracle.begin(), oracle.end());
        REQUIRE(results.size() == 4);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(results[i].name == oracle[i].second);
            CHECK(results[i].final_test_mse == oracle[i].first);
        }
        const std::string csv = grid_report_csv(results);
        CHECK(csv.rfind("rank,name,", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    }
    SUBCASE("failures are reported and ranked last") {
        lstm::TrainConfig broken = base;
        broken.lookback = 5000;
        const auto results = grid_search(id, table, {{"broken", broken}, {"ok", base}}, split, FeatureMode::WeatherOnly);
        CHECK(results[0].ok);
        CHECK_FALSE(results[1].ok);
        CHECK_FALSE(results[1].error.empty());
        CHECK(grid_report_csv(results).find("false") != std::string::npos);
    }
    CHECK_THROWS_AS(grid_search(id, table, {}, split, FeatureMode::WeatherOnly), ValidationError);
}

TEST_CASE("configuration file") {
    const AppConfig c = load_config(fs::path(LOADCAST_SOURCE_DIR) / "config" / "example.jsonc");
    const AppConfig d = config_from_json(json::object());
    CHECK(c.pipeline.train.epochs == d.pipeline.train.epochs);
    CHECK(c.pipeline.train.hidden_dim == d.pipeline.train.hidden_dim);
    CHECK(c.schedule.retrain_interval_days == 45);
    CHECK(c.schedule.forecast_cadence_s == 3600);
    CHECK(c.schedule.points.size() == 1);
    CHECK(c.schedule.points[0].weather[2].str() == "srrl-dry_bulb_temp");
    REQUIRE(c.grid.size() == 4);
    CHECK(c.grid[2].train.hidden_dim == 16);
    CHECK(c.grid[2].train.learning_rate == c.pipeline.train.learning_rate);

    CHECK_THROWS_AS(config_from_json(json{{"trian", json::object()}}), ValidationError);
    CHECK_THROWS_AS(config_from_json(json{{"train", {{"optimizer", "rmsprop"}}}}), ValidationError);
    CHECK_THROWS_AS(config_from_json(json{{"train", {{"epochs", "many"}}}}), ValidationError);
    CHECK_THROWS_AS(config_from_json(json{{"schedule", {{"forecast_cadence_s", 0}}}}), ValidationError);
    CHECK_THROWS_AS(config_from_json(json{{"feature_mode", "load"}}), ValidationError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.jsonc"), ValidationError);
    const auto modes = config_from_json(json{{"feature_mode", "weather+load"}});
    CHECK(modes.schedule.pipeline.feature_mode == FeatureMode::WeatherAndLoad);
}
