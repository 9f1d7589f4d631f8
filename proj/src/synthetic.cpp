#include "loadcast/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "loadcast/error.hpp"

namespace loadcast {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Stationary AR(1) with unit marginal variance.
class UnitAr1 {
public:
    UnitAr1(double phi, std::mt19937_64& rng) : phi_(phi), scale_(std::sqrt(1.0 - phi * phi)), rng_(rng) {
        state_ = normal_(rng_);
    }
    double next() {
        state_ = phi_ * state_ + scale_ * normal_(rng_);
        return state_;
    }

private:
    double phi_;
    double scale_;
    std::mt19937_64& rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    double state_ = 0.0;
};

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

double synthetic_load_mean(const SyntheticConfig& c, Timestamp ts, double dry_bulb_c) {
    const double hour = hour_of_day(ts);
    const double weekday_term = weekday(ts) < 5 ? 1.0 : 0.0;
    return c.base_kw + c.diurnal_amp_kw * std::sin(kTwoPi * hour / 24.0 + c.diurnal_phase) +
           c.weekday_amp_kw * weekday_term + c.cooling_slope_kw_per_c * std::max(0.0, dry_bulb_c - c.cooling_ref_temp_c);
}

SyntheticCampus generate_synthetic_campus(std::uint64_t seed, int days, const SyntheticConfig& c) {
    if (days < 1) throw ValidationError("synthetic campus: days must be >= 1, got " + std::to_string(days));
    if (floor_to(c.start, kHour) != c.start) throw ValidationError("synthetic campus: start must be on an hour");

    std::mt19937_64 rng(seed);
    UnitAr1 temp_anomaly(0.985, rng);
    UnitAr1 cloud_latent(0.97, rng);
    UnitAr1 pressure_anomaly(0.995, rng);
    UnitAr1 wind_latent(0.9, rng);
    UnitAr1 humidity_latent(0.98, rng);
    std::normal_distribution<double> load_noise(0.0, 1.0);

    const std::size_t hours = static_cast<std::size_t>(days) * 24;
    std::array<std::vector<Sample>, kWeatherFields> weather;
    for (auto& w : weather) w.reserve(hours);
    std::vector<Sample> load;
    load.reserve(hours);

    for (std::size_t k = 0; k < hours; ++k) {
        const Timestamp ts = c.start + static_cast<Timestamp>(k) * kHour;
        const double doy = day_of_year(ts);
        const double hour = hour_of_day(ts);
        const double season = -std::cos(kTwoPi * (doy - 15.0) / 365.0);  // -1 mid-January, +1 mid-July

        const double cloud = 100.0 * logistic(1.5 * cloud_latent.next() - 0.3);
        const double daylength = 12.0 + 3.0 * season;
        const double sunrise = 12.0 - daylength / 2.0;
        const double solar_phase = (hour + 0.5 - sunrise) / daylength;
        double clear_sky = 0.0;
        if (solar_phase > 0.0 && solar_phase < 1.0)
            clear_sky = c.peak_ghi_wm2 * (0.75 + 0.25 * season) * std::sin(std::numbers::pi * solar_phase);
        const double ghi = clear_sky * (1.0 - 0.75 * std::pow(cloud / 100.0, 3.0));

        const double temp = c.annual_mean_temp_c + c.annual_temp_amp_c * season +
                            c.diurnal_temp_amp_c * std::sin(kTwoPi * (hour - 9.0) / 24.0) * (1.0 - 0.4 * cloud / 100.0) +
                            c.synoptic_temp_sigma_c * temp_anomaly.next();
        const double humidity =
            std::clamp(55.0 - 1.2 * (temp - c.annual_mean_temp_c) + 0.15 * (cloud - 50.0) + 8.0 * humidity_latent.next(),
                       2.0, 100.0);
        const double pressure = c.mean_pressure_hpa + 6.0 * pressure_anomaly.next();
        const double wind = std::abs(2.5 + 1.0 * std::sin(kTwoPi * (hour - 14.0) / 24.0) + 1.5 * wind_latent.next());

        weather[static_cast<std::size_t>(WeatherField::RelHumidity)].push_back({ts, humidity});
        weather[static_cast<std::size_t>(WeatherField::Pressure)].push_back({ts, pressure});
        weather[static_cast<std::size_t>(WeatherField::DryBulbTemp)].push_back({ts, temp});
        weather[static_cast<std::size_t>(WeatherField::Ghi)].push_back({ts, ghi});
        weather[static_cast<std::size_t>(WeatherField::CloudCover)].push_back({ts, cloud});
        weather[static_cast<std::size_t>(WeatherField::WindSpeed)].push_back({ts, wind});

        const double noise = c.noise_sigma_kw * load_noise(rng);
        load.push_back({ts, synthetic_load_mean(c, ts, temp) + noise});
    }

    SyntheticCampus campus{{}, IntervalSeries(PointId(c.load_point), "kW", kHour, std::move(load))};
    for (std::size_t f = 0; f < kWeatherFields; ++f)
        campus.weather.emplace_back(PointId(c.weather_prefix + "-" + std::string(kWeatherNames[f])),
                                    std::string(kWeatherUnits[f]), kHour, std::move(weather[f]));
    return campus;
}

void write_campus(const SyntheticCampus& campus, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    auto emit = [&](const IntervalSeries& s, const std::string& role) {
        const std::string file = s.point().sanitized() + ".csv";
        write_series_csv(s, (fs::path(dir) / file).string());
        manifest["series"].push_back(
            {{"point", s.point().str()}, {"unit", s.unit()}, {"role", role}, {"file", file}});
    };
    emit(campus.load, "load");
    for (std::size_t f = 0; f < kWeatherFields; ++f) emit(campus.weather[f], std::string(kWeatherNames[f]));
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) throw StorageError("cannot write manifest in " + dir);
}

SyntheticCampus read_campus(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw ValidationError("no manifest.json in " + dir);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("bad manifest in " + dir + ": " + e.what());
    }
    std::optional<IntervalSeries> load;
    std::array<std::optional<IntervalSeries>, kWeatherFields> weather;
    for (const auto& entry : manifest.at("series")) {
        const std::string role = entry.at("role");
        IntervalSeries s = read_series_csv((fs::path(dir) / entry.at("file").get<std::string>()).string(),
                                           PointId(entry.at("point").get<std::string>()), entry.at("unit"));
        if (role == "load") {
            load = std::move(s);
            continue;
        }
        auto it = std::find(kWeatherNames.begin(), kWeatherNames.end(), role);
        if (it == kWeatherNames.end()) throw ValidationError("manifest: unknown role '" + role + "'");
        weather[static_cast<std::size_t>(it - kWeatherNames.begin())] = std::move(s);
    }
    if (!load) throw ValidationError("manifest: no load series");
    SyntheticCampus campus{{}, std::move(*load)};
    for (std::size_t f = 0; f < kWeatherFields; ++f) {
        if (!weather[f]) throw ValidationError("manifest: missing " + std::string(kWeatherNames[f]));
        campus.weather.push_back(std::move(*weather[f]));
    }
    return campus;
}

}  // namespace loadcast
