#include "loadcast/time.hpp"

#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>

#include "loadcast/error.hpp"

namespace loadcast {

namespace {

using namespace std::chrono;

sys_days to_days(Timestamp ts) { return floor<days>(sys_seconds{seconds{ts}}); }

[[noreturn]] void bad_timestamp(std::string_view text) {
    throw ValidationError("unparseable timestamp '" + std::string(text) + "'");
}

int read_int(std::string_view text, std::size_t pos, std::size_t len, std::string_view whole) {
    if (pos + len > text.size()) bad_timestamp(whole);
    int value = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) bad_timestamp(whole);
        value = value * 10 + (text[i] - '0');
    }
    return value;
}

}  // namespace

std::string format_iso8601(Timestamp ts) {
    const sys_days day = to_days(ts);
    const year_month_day ymd{day};
    const Timestamp secs = ts - sys_seconds{day}.time_since_epoch().count();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(secs / 3600), static_cast<int>(secs / 60 % 60),
                  static_cast<int>(secs % 60));
    return buf;
}

Timestamp parse_timestamp(std::string_view text) {
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
    if (text.empty()) bad_timestamp(text);

    if (text.find('-', 1) == std::string_view::npos) {
        Timestamp value = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc{} || ptr != text.data() + text.size()) bad_timestamp(text);
        return value;
    }

    const int y = read_int(text, 0, 4, text);
    if (text.size() < 10 || text[4] != '-' || text[7] != '-') bad_timestamp(text);
    const int mo = read_int(text, 5, 2, text);
    const int d = read_int(text, 8, 2, text);
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) bad_timestamp(text);
    Timestamp ts = sys_seconds{sys_days{ymd}}.time_since_epoch().count();
    if (text.size() == 10) return ts;

    if (text[10] != 'T' && text[10] != ' ') bad_timestamp(text);
    const int hh = read_int(text, 11, 2, text);
    if (text.size() < 16 || text[13] != ':') bad_timestamp(text);
    const int mm = read_int(text, 14, 2, text);
    std::size_t pos = 16;
    int ss = 0;
    if (pos < text.size() && text[pos] == ':') {
        ss = read_int(text, pos + 1, 2, text);
        pos += 3;
        if (pos < text.size() && text[pos] == '.') {
            ++pos;
            while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
        }
    }
    if (hh > 23 || mm > 59 || ss > 60) bad_timestamp(text);
    ts += hh * 3600 + mm * 60 + ss;

    if (pos == text.size()) return ts;
    if (text[pos] == 'Z' && pos + 1 == text.size()) return ts;
    if ((text[pos] == '+' || text[pos] == '-') && text.size() == pos + 6 && text[pos + 3] == ':') {
        const int oh = read_int(text, pos + 1, 2, text);
        const int om = read_int(text, pos + 4, 2, text);
        const Timestamp offset = oh * 3600 + om * 60;
        return text[pos] == '+' ? ts - offset : ts + offset;
    }
    bad_timestamp(text);
}

Timestamp add_months(Timestamp ts, int months) {
    const sys_days day = to_days(ts);
    const Timestamp secs = ts - sys_seconds{day}.time_since_epoch().count();
    year_month_day ymd{day};
    year_month_day shifted = ymd.year() / ymd.month() / ymd.day();
    shifted += std::chrono::months{months};
    if (!shifted.ok()) shifted = shifted.year() / shifted.month() / last;
    return sys_seconds{sys_days{shifted}}.time_since_epoch().count() + secs;
}

int weekday(Timestamp ts) {
    return static_cast<int>(std::chrono::weekday{to_days(ts)}.iso_encoding()) - 1;
}

int hour_of_day(Timestamp ts) { return static_cast<int>((ts - floor_to(ts, kDay)) / kHour); }

int day_of_year(Timestamp ts) {
    const sys_days day = to_days(ts);
    const year_month_day ymd{day};
    return static_cast<int>((day - sys_days{ymd.year() / January / 1}).count());
}

}  // namespace loadcast
