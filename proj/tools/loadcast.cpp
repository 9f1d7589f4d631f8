#include <atomic>
#include <cstdio>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "loadcast/config.hpp"
#include "loadcast/error.hpp"
#include "loadcast/gateway.hpp"
#include "loadcast/registry.hpp"
#include "loadcast/runtime.hpp"
#include "loadcast/synthetic.hpp"

using namespace loadcast;
namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitDivergence = 3;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string point;
};

AppConfig load(const Options& o) {
    AppConfig c = o.config.empty() ? config_from_json(nlohmann::json::object()) : load_config(o.config);
    if (o.seed) {
        c.simulate_seed = *o.seed;
        c.pipeline.train.seed = *o.seed;
        c.schedule.pipeline.train.seed = *o.seed;
    }
    return c;
}

SyntheticCampus load_campus(const AppConfig& c, const std::string& point) {
    SyntheticCampus campus = read_campus(c.data_dir.string());
    if (!point.empty() && campus.load.point().str() != point)
        throw NotFoundError("data directory " + c.data_dir.string() + " holds '" + campus.load.point().str() +
                            "', not '" + point + "'");
    return campus;
}

AlignedTable clean_table(const AppConfig& c, const SyntheticCampus& campus, std::vector<QcReport>* reports = nullptr) {
    auto run = [&](const IntervalSeries& s) {
        auto [clean, report] = clean_series(s, c.schedule.qc_policy, c.schedule.max_gap_hours);
        if (reports) reports->push_back(std::move(report));
        return clean;
    };
    const IntervalSeries load = run(campus.load);
    std::vector<IntervalSeries> weather;
    for (const auto& w : campus.weather) weather.push_back(run(w));
    return align(load, weather);
}

Timestamp now_s() {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void wait_for_signal() {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Building load forecasting: data, training, serving and scheduling"};
    app.require_subcommand(1);
    app.fallthrough();
    Options opt;
    app.add_option("--config", opt.config, "JSON config file (comments allowed)");
    app.add_option("--seed", opt.seed, "Overrides the simulation and training seeds");
    app.add_option("--point", opt.point, "Point id to act on");

    auto* simulate = app.add_subcommand("simulate", "Write a synthetic campus (load plus six weather series)");
    int days = 0;
    std::string out_dir;
    simulate->add_option("--days", days, "Length in days (default from config)");
    simulate->add_option("--out", out_dir, "Output directory (default data_dir)");

    auto* qc = app.add_subcommand("qc", "Run the sigma filter over the data directory and print the reports");
    std::string report_path;
    qc->add_option("--report", report_path, "Also write the JSON reports here");

    auto* train = app.add_subcommand("train", "Train a model on the data directory and store it in the registry");
    std::string curve_path, variant;
    std::optional<int> epochs;
    train->add_option("--epochs", epochs, "Overrides train.epochs");
    train->add_option("--curve", curve_path, "Write the loss curve CSV here");
    train->add_option("--variant", variant, "Train with a named grid variant (explicit promotion)");

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a stored model on its test split");
    std::uint32_t version = 0;
    std::string steps_path;
    evaluate->add_option("--version", version, "Model version (default latest)");
    evaluate->add_option("--steps", steps_path, "Write per-step MSE CSV here");

    auto* forecast = app.add_subcommand("forecast", "Issue one 18-hour forecast from the latest model");
    std::string at;
    bool publish = false;
    forecast->add_option("--at", at, "Issuance time (default: last hour in the data)");
    forecast->add_flag("--publish", publish, "Write the grid to the gateway");

    auto* serve = app.add_subcommand("serve", "Run the gateway until interrupted");
    bool import_data = false;
    std::string listen;
    serve->add_flag("--import", import_data, "Import the data directory into the gateway first");
    std::string serve_dir;
    serve->add_option("--listen,--bind", listen, "host:port (default from config)");
    serve->add_option("--data-dir", serve_dir, "Gateway state directory (default gateway_dir)");

    auto* run = app.add_subcommand("run", "Run the forecast and retrain schedule against the gateway");
    std::string sim_from, sim_until;
    run->add_option("--simulate-from", sim_from, "Start a simulated clock here instead of the wall clock");
    run->add_option("--until", sim_until, "Stop when the clock reaches this time");

    auto* grid = app.add_subcommand("grid-search", "Train every configured grid variant and rank them");
    std::string grid_out;
    grid->add_option("--out", grid_out, "Write the ranked CSV here");

    auto* registry_cmd = app.add_subcommand("registry", "Inspect or prune stored models");
    registry_cmd->require_subcommand(1);
    auto* reg_list = registry_cmd->add_subcommand("list", "List points, or versions of --point");
    auto* reg_prune = registry_cmd->add_subcommand("prune", "Keep only the newest versions of --point");
    std::size_t keep = 3;
    reg_prune->add_option("--keep", keep, "Versions to keep")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        AppConfig cfg = load(opt);
        const auto point_or_default = [&] {
            return opt.point.empty() ? cfg.schedule.points.front().load : PointId(opt.point);
        };

        if (*simulate) {
            const auto campus = generate_synthetic_campus(cfg.simulate_seed, days > 0 ? days : cfg.simulate_days);
            const std::string dir = out_dir.empty() ? cfg.data_dir.string() : out_dir;
            write_campus(campus, dir);
            std::cout << "wrote " << campus.load.size() << " hours of 7 series to " << dir << "\n";
        } else if (*qc) {
            std::vector<QcReport> reports;
            clean_table(cfg, load_campus(cfg, opt.point), &reports);
            std::printf("%-28s %9s %8s %11s\n", "point", "examined", "removed", "unscreened");
            for (const auto& r : reports)
                std::printf("%-28s %9zu %8zu %11zu\n", r.point.str().c_str(), r.examined, r.removed, r.unscreened);
            if (!report_path.empty()) {
                nlohmann::json full = nlohmann::json::array();
                for (const auto& r : reports) full.push_back(to_json(r));
                std::ofstream(report_path) << full.dump(2) << "\n";
            }
        } else if (*train) {
            const auto campus = load_campus(cfg, opt.point);
            PipelineOptions options = cfg.pipeline;
            if (!variant.empty()) {
                const auto it = std::find_if(cfg.grid.begin(), cfg.grid.end(),
                                             [&](const GridVariant& v) { return v.name == variant; });
                if (it == cfg.grid.end()) throw ValidationError("no grid variant named '" + variant + "'");
                options.train = it->train;
            }
            if (epochs) options.train.epochs = *epochs;
            const auto model = train_point_model(campus.load.point(), clean_table(cfg, campus), options, now_s());
            if (!curve_path.empty()) std::ofstream(curve_path) << model.curve.to_csv();
            const Registry registry(cfg.registry_dir);
            const auto v = registry.put(model.record);
            nlohmann::json j = to_json(model.record.metrics);
            j["point"] = campus.load.point().str();
            j["version"] = v;
            std::cout << j.dump(2) << "\n";
        } else if (*evaluate) {
            const auto campus = load_campus(cfg, opt.point);
            const Registry registry(cfg.registry_dir);
            const ModelRecord record =
                version ? registry.get_version(campus.load.point(), version) : registry.get_latest(campus.load.point());
            const AlignedTable table = clean_table(cfg, campus);
            const auto split = chronological_split(build_windows(table, record.lookback(), record.horizon()),
                                                   record.split, span_of(table));
            const Metrics m = loadcast::evaluate(record, split.test);
            if (!steps_path.empty()) std::ofstream(steps_path) << metrics_step_csv(m);
            nlohmann::json j = to_json(m);
            j["version"] = record.version;
            std::cout << j.dump(2) << "\n";
        } else if (*forecast) {
            const auto campus = load_campus(cfg, opt.point);
            const Registry registry(cfg.registry_dir);
            const ModelRecord record = registry.get_latest(campus.load.point());
            const AlignedTable table = clean_table(cfg, campus);
            const Timestamp issued = at.empty() ? table.rows.back().ts : parse_timestamp(at);
            const auto end = std::find_if(table.rows.begin(), table.rows.end(),
                                          [&](const AlignedRow& r) { return r.ts == issued; });
            if (end == table.rows.end()) throw ValidationError("no aligned input row at " + format_iso8601(issued));
            const auto lookback = static_cast<std::ptrdiff_t>(record.lookback());
            if (end + 1 - table.rows.begin() < lookback) throw ValidationError("not enough history before --at");
            const ForecastGrid g =
                issue_forecast(record, std::span<const AlignedRow>(&*(end + 1 - lookback), lookback), issued);
            std::cout << to_json(g).dump(2) << "\n";
            if (publish) GatewayClient(cfg.gateway).write_forecast(g);
        } else if (*serve) {
            auto store = std::make_shared<PointStore>(serve_dir.empty() ? cfg.gateway_dir : fs::path(serve_dir));
            if (import_data) {
                const auto campus = read_campus(cfg.data_dir.string());
                store->import_series(campus.load, "Campus electric load");
                for (const auto& w : campus.weather) store->import_series(w);
            }
            std::optional<Registry> registry;
            if (fs::exists(cfg.registry_dir)) registry.emplace(cfg.registry_dir);
            GatewayServer server(store, registry ? &*registry : nullptr);
            const std::string address = listen.empty() ? cfg.listen : listen;
            const auto colon = address.rfind(':');
            if (colon == std::string::npos) throw ValidationError("--listen must be host:port");
            server.start(address.substr(0, colon), std::stoi(address.substr(colon + 1)));
            std::cout << "serving on " << server.address() << "\n" << std::flush;
            wait_for_signal();
            server.stop();
        } else if (*run) {
            const Registry registry(cfg.registry_dir);
            GatewayClient client(cfg.gateway);
            RunLog log(cfg.run_log);
            if (!sim_from.empty()) {
                if (sim_until.empty()) throw ValidationError("--simulate-from needs --until");
                SimulatedClock clock(parse_timestamp(sim_from));
                Runtime rt(cfg.schedule, clock, client, registry, log);
                rt.run_until(parse_timestamp(sim_until));
            } else {
                SystemClock clock;
                Runtime rt(cfg.schedule, clock, client, registry, log);
                if (!sim_until.empty()) {
                    rt.run_until(parse_timestamp(sim_until));
                } else {
                    std::signal(SIGINT, on_signal);
                    std::signal(SIGTERM, on_signal);
                    rt.run(g_stop);
                }
            }
            std::size_t failed = 0;
            for (const auto& r : log.records()) failed += r.ok ? 0 : 1;
            std::cout << log.records().size() << " run records, " << failed << " failed\n";
        } else if (*grid) {
            const auto campus = load_campus(cfg, opt.point);
            std::vector<GridVariant> variants = cfg.grid;
            if (variants.empty()) variants.push_back({"base", cfg.pipeline.train});
            const auto results = grid_search(campus.load.point(), clean_table(cfg, campus), variants,
                                             cfg.pipeline.split, cfg.pipeline.feature_mode);
            const std::string csv = grid_report_csv(results);
            std::cout << csv;
            if (!grid_out.empty()) std::ofstream(grid_out) << csv;
            if (std::none_of(results.begin(), results.end(), [](const GridResult& r) { return r.ok; }))
                return kExitDivergence;
        } else if (*registry_cmd) {
            const Registry registry(cfg.registry_dir);
            if (*reg_list) {
                if (opt.point.empty()) {
                    for (const auto& p : registry.points()) std::cout << p.str() << "\n";
                } else {
                    std::cout << "version,created_at,test_mse\n";
                    for (const auto& v : registry.list(point_or_default()))
                        std::cout << v.version << ',' << format_iso8601(v.created_at) << ',' << v.headline_mse << "\n";
                }
            } else if (*reg_prune) {
                if (opt.point.empty()) throw ValidationError("registry prune needs --point");
                std::cout << "removed " << registry.prune(point_or_default(), keep) << " versions\n";
            }
        }
        return 0;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
