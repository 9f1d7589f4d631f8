#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace loadcast {

/// UTC seconds since the Unix epoch.
using Timestamp = std::int64_t;

inline constexpr Timestamp kHour = 3600;
inline constexpr Timestamp kDay = 86400;

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_iso8601(Timestamp ts);

/// Accepts `YYYY-MM-DDTHH:MM[:SS][Z|+00:00]`, a date-only `YYYY-MM-DD`, or
/// plain integer epoch seconds. Non-UTC offsets are applied. Throws
/// ValidationError on anything else.
Timestamp parse_timestamp(std::string_view text);

/// Adds calendar months (UTC), clamping the day of month.
Timestamp add_months(Timestamp ts, int months);

/// 0 = Monday ... 6 = Sunday.
int weekday(Timestamp ts);

/// Hour of day in [0, 24).
int hour_of_day(Timestamp ts);

/// Day of year in [0, 366).
int day_of_year(Timestamp ts);

inline constexpr Timestamp floor_to(Timestamp ts, Timestamp step) {
    Timestamp r = ts % step;
    if (r < 0) r += step;
    return ts - r;
}

}  // namespace loadcast
