#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "loadcast/runtime.hpp"

namespace loadcast {

/// Everything the CLI reads from its JSON config file. Every key is optional.
struct AppConfig {
    std::filesystem::path data_dir = "data/campus";
    std::filesystem::path registry_dir = "state/registry";
    std::filesystem::path gateway_dir = "state/gateway";
    std::filesystem::path run_log = "state/runlog.jsonl";
    std::string listen = "127.0.0.1:8080";   ///< serve binds here
    std::string gateway = "127.0.0.1:8080";  ///< run talks to this
    std::uint64_t simulate_seed = 7;
    int simulate_days = 365;
    PipelineOptions pipeline;
    ScheduleConfig schedule;
    std::vector<GridVariant> grid;
};

lstm::TrainConfig train_config_from_json(const nlohmann::json& j, lstm::TrainConfig base = {});
nlohmann::json to_json(const lstm::TrainConfig& cfg);

/// Default campus wiring: one load point fed by the six synthetic weather points.
PointSchedule campus_schedule(const std::string& load = "campus-main-kw", const std::string& weather_prefix = "srrl");

/// Throws ValidationError naming the offending key. Unknown keys are rejected
/// so typos do not silently fall back to defaults.
AppConfig config_from_json(const nlohmann::json& j);
/// Accepts `//` and `/* */` comments.
AppConfig load_config(const std::filesystem::path& path);

}  // namespace loadcast
