#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loadcast/timeseries.hpp"

namespace loadcast {

/// Constants of the synthetic campus. Load model:
///
///   load(t) = base + diurnal_amp * sin(2*pi*hour/24 + phase)
///           + weekday_amp * [Mon..Fri]
///           + cooling_slope * max(0, dry_bulb(t) - cooling_ref_temp)
///           + N(0, noise_sigma^2)
struct SyntheticConfig {
    Timestamp start = 1546300800;  // 2019-01-01T00:00:00Z
    std::string load_point = "campus-main-kw";
    std::string weather_prefix = "srrl";

    double base_kw = 800.0;
    double diurnal_amp_kw = 300.0;
    double diurnal_phase = -2.356194490192345;  // -3*pi/4: peak near 15:00 UTC
    double weekday_amp_kw = 150.0;
    double cooling_slope_kw_per_c = 25.0;
    double cooling_ref_temp_c = 18.0;
    double noise_sigma_kw = 20.0;

    // Weather climate.
    double annual_mean_temp_c = 10.0;
    double annual_temp_amp_c = 12.0;
    double diurnal_temp_amp_c = 6.0;
    double synoptic_temp_sigma_c = 3.0;
    double mean_pressure_hpa = 820.0;
    double peak_ghi_wm2 = 1000.0;
};

struct SyntheticCampus {
    /// WeatherField order.
    std::vector<IntervalSeries> weather;
    IntervalSeries load;
};

/// Deterministic in (seed, days, config). Throws ValidationError for days < 1.
SyntheticCampus generate_synthetic_campus(std::uint64_t seed, int days, const SyntheticConfig& config = {});

/// Noise-free load at `ts` for the given dry-bulb temperature.
double synthetic_load_mean(const SyntheticConfig& config, Timestamp ts, double dry_bulb_c);

/// Writes one CSV per series plus `manifest.json` into `dir` (created if needed).
void write_campus(const SyntheticCampus& campus, const std::string& dir);

/// Reads back a directory written by write_campus.
SyntheticCampus read_campus(const std::string& dir);

}  // namespace loadcast
