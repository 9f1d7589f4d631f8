#include "loadcast/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "loadcast/error.hpp"

namespace loadcast {

using nlohmann::json;

namespace {

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ValidationError(where + " must be an object");
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items())
        if (!keys.count(key)) throw ValidationError("unknown config key '" + where + "." + key + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError("config key '" + where + "." + key + "' has the wrong type");
    }
}

}  // namespace

lstm::TrainConfig train_config_from_json(const json& j, lstm::TrainConfig t) {
    only_keys(j, "train",
              {"name", "epochs", "learning_rate", "optimizer", "beta1", "beta2", "epsilon", "batch_size", "lookback",
               "grad_clip_norm", "seed", "hidden_dim", "horizon"});
    read(j, "epochs", t.epochs, "train");
    read(j, "learning_rate", t.learning_rate, "train");
    read(j, "beta1", t.beta1, "train");
    read(j, "beta2", t.beta2, "train");
    read(j, "epsilon", t.epsilon, "train");
    read(j, "batch_size", t.batch_size, "train");
    read(j, "lookback", t.lookback, "train");
    read(j, "grad_clip_norm", t.grad_clip_norm, "train");
    read(j, "seed", t.seed, "train");
    read(j, "hidden_dim", t.hidden_dim, "train");
    read(j, "horizon", t.horizon, "train");
    if (j.contains("optimizer")) {
        const std::string o = j["optimizer"].is_string() ? j["optimizer"].get<std::string>() : "";
        if (o == "adam")
            t.optimizer = lstm::Optimizer::Adam;
        else if (o == "sgd")
            t.optimizer = lstm::Optimizer::Sgd;
        else
            throw ValidationError("train.optimizer must be \"adam\" or \"sgd\"");
    }
    t.validate();
    return t;
}

json to_json(const lstm::TrainConfig& t) {
    return {{"epochs", t.epochs},
            {"learning_rate", t.learning_rate},
            {"optimizer", t.optimizer == lstm::Optimizer::Adam ? "adam" : "sgd"},
            {"beta1", t.beta1},
            {"beta2", t.beta2},
            {"epsilon", t.epsilon},
            {"batch_size", t.batch_size},
            {"lookback", t.lookback},
            {"grad_clip_norm", t.grad_clip_norm},
            {"seed", t.seed},
            {"hidden_dim", t.hidden_dim},
            {"horizon", t.horizon}};
}

PointSchedule campus_schedule(const std::string& load, const std::string& weather_prefix) {
    PointSchedule p;
    p.load = PointId(load);
    for (std::size_t f = 0; f < kWeatherFields; ++f)
        p.weather[f] = PointId(weather_prefix + "-" + std::string(kWeatherNames[f]));
    return p;
}

AppConfig config_from_json(const json& j) {
    only_keys(j, "config",
              {"data_dir", "registry_dir", "gateway_dir", "run_log", "listen", "gateway", "simulate", "train", "split",
               "feature_mode", "qc", "schedule", "grid"});
    AppConfig c;
    if (j.contains("data_dir")) c.data_dir = j["data_dir"].get<std::string>();
    if (j.contains("registry_dir")) c.registry_dir = j["registry_dir"].get<std::string>();
    if (j.contains("gateway_dir")) c.gateway_dir = j["gateway_dir"].get<std::string>();
    if (j.contains("run_log")) c.run_log = j["run_log"].get<std::string>();
    read(j, "listen", c.listen, "config");
    read(j, "gateway", c.gateway, "config");

    if (j.contains("simulate")) {
        const json& sim = j["simulate"];
        only_keys(sim, "simulate", {"seed", "days"});
        read(sim, "seed", c.simulate_seed, "simulate");
        read(sim, "days", c.simulate_days, "simulate");
        if (c.simulate_days < 1) throw ValidationError("simulate.days must be >= 1");
    }
    if (j.contains("train")) c.pipeline.train = train_config_from_json(j["train"]);
    if (j.contains("split")) {
        const json& sp = j["split"];
        only_keys(sp, "split", {"train_months", "test_months"});
        read(sp, "train_months", c.pipeline.split.train_months, "split");
        read(sp, "test_months", c.pipeline.split.test_months, "split");
        if (c.pipeline.split.train_months < 1 || c.pipeline.split.test_months < 1)
            throw ValidationError("split months must be >= 1");
    }
    if (j.contains("feature_mode")) c.pipeline.feature_mode = feature_mode_from_string(j["feature_mode"].get<std::string>());
    if (j.contains("qc")) {
        only_keys(j["qc"], "qc", {"sigma_threshold", "window", "min_window_count"});
        c.schedule.qc_policy = qc_policy_from_json(j["qc"]);
    }

    c.schedule.pipeline = c.pipeline;
    c.schedule.points = {campus_schedule()};
    if (j.contains("schedule")) {
        const json& sc = j["schedule"];
        only_keys(sc, "schedule",
                  {"forecast_cadence_s", "retrain_interval_days", "retrain_epochs", "warm_start", "max_gap_hours",
                   "history_start", "points"});
        read(sc, "forecast_cadence_s", c.schedule.forecast_cadence_s, "schedule");
        read(sc, "retrain_interval_days", c.schedule.retrain_interval_days, "schedule");
        read(sc, "retrain_epochs", c.schedule.retrain_epochs, "schedule");
        read(sc, "warm_start", c.schedule.warm_start, "schedule");
        read(sc, "max_gap_hours", c.schedule.max_gap_hours, "schedule");
        if (sc.contains("history_start")) c.schedule.history_start = parse_timestamp(sc["history_start"].get<std::string>());
        if (sc.contains("points")) {
            c.schedule.points.clear();
            for (const json& p : sc["points"]) {
                only_keys(p, "schedule.points[]", {"load", "weather", "weather_prefix"});
                if (!p.contains("load")) throw ValidationError("schedule.points[] needs a load id");
                if (p.contains("weather")) {
                    PointSchedule ps;
                    ps.load = PointId(p["load"].get<std::string>());
                    const auto ids = p["weather"].get<std::vector<std::string>>();
                    if (ids.size() != kWeatherFields)
                        throw ValidationError("schedule.points[].weather needs 6 ids in field order");
                    for (std::size_t f = 0; f < kWeatherFields; ++f) ps.weather[f] = PointId(ids[f]);
                    c.schedule.points.push_back(ps);
                } else {
                    c.schedule.points.push_back(
                        campus_schedule(p["load"].get<std::string>(), p.value("weather_prefix", std::string("srrl"))));
                }
            }
        }
    }
    c.schedule.validate();

    if (j.contains("grid")) {
        int n = 0;
        for (const json& v : j["grid"]) {
            ++n;
            GridVariant g;
            g.name = v.value("name", "variant-" + std::to_string(n));
            g.train = train_config_from_json(v, c.pipeline.train);
            c.grid.push_back(g);
        }
    }
    return c;
}

AppConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config " + path.string());
    std::stringstream text;
    text << in.rdbuf();
    json j;
    try {
        j = json::parse(text.str(), nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const json::exception& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
}

}  // namespace loadcast
