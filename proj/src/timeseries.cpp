#include "loadcast/timeseries.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "loadcast/error.hpp"

namespace loadcast {

PointId::PointId(std::string id) : id_(std::move(id)) {
    if (id_.empty()) throw ValidationError("point id must be non-empty");
}

std::string PointId::sanitized() const {
    static constexpr char hex[] = "0123456789ABCDEF";
    std::string out;
    out.reserve(id_.size());
    for (unsigned char ch : id_) {
        if (std::isalnum(ch) || ch == '.' || ch == '_' || ch == '-') {
            out.push_back(static_cast<char>(ch));
        } else {
            out.push_back('%');
            out.push_back(hex[ch >> 4]);
            out.push_back(hex[ch & 0xF]);
        }
    }
    // "." and ".." are not usable directory names.
    if (out == "." || out == "..") out = std::string(out.size(), '_') + "%2E";
    return out;
}

IntervalSeries::IntervalSeries(PointId point, std::string unit, Timestamp resolution_s,
                               std::vector<Sample> samples)
    : point_(std::move(point)), unit_(std::move(unit)), resolution_(resolution_s), samples_(std::move(samples)) {
    if (point_.empty()) throw ValidationError("series point id must be non-empty");
    if (resolution_ <= 0) throw ValidationError("series " + point_.str() + ": resolution must be positive");
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const Sample& s = samples_[i];
        if (floor_to(s.ts, resolution_) != s.ts)
            throw ValidationError("series " + point_.str() + ": timestamp " + format_iso8601(s.ts) +
                                  " is not a multiple of the resolution");
        if (i > 0 && s.ts <= samples_[i - 1].ts)
            throw ValidationError("series " + point_.str() + ": timestamps not strictly increasing at " +
                                  format_iso8601(s.ts));
        if (s.value && !std::isfinite(*s.value))
            throw ValidationError("series " + point_.str() + ": non-finite value at " + format_iso8601(s.ts));
    }
}

std::size_t IntervalSeries::present_count() const {
    return static_cast<std::size_t>(
        std::count_if(samples_.begin(), samples_.end(), [](const Sample& s) { return s.value.has_value(); }));
}

IntervalSeries IntervalSeries::with_samples(std::vector<Sample> samples) const {
    return IntervalSeries(point_, unit_, resolution_, std::move(samples));
}

bool WeatherFrame::in_range() const {
    const auto& v = values;
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return v[0] >= 0.0 && v[0] <= 100.0 && v[1] > 0.0 && v[3] >= 0.0 && v[4] >= 0.0 && v[4] <= 100.0 &&
           v[5] >= 0.0;
}

IntervalSeries resample_hourly(const IntervalSeries& series) {
    const Timestamp res = series.resolution();
    if (res > kHour || kHour % res != 0)
        throw ValidationError("series " + series.point().str() + ": resolution " + std::to_string(res) +
                              " s does not divide 3600 s");
    if (res == kHour) return series;

    std::vector<Sample> out;
    std::size_t i = 0;
    const auto& in = series.samples();
    while (i < in.size()) {
        const Timestamp hour = floor_to(in[i].ts, kHour);
        double sum = 0.0;
        int count = 0;
        for (; i < in.size() && in[i].ts < hour + kHour; ++i) {
            if (in[i].value) {
                sum += *in[i].value;
                ++count;
            }
        }
        Sample s{hour, std::nullopt};
        if (count > 0) s.value = sum / count;
        out.push_back(s);
    }
    return IntervalSeries(series.point(), series.unit(), kHour, std::move(out));
}

AlignedTable align(const IntervalSeries& load, const std::vector<IntervalSeries>& weather) {
    if (weather.size() != kWeatherFields)
        throw ValidationError("align: expected 6 weather series, got " + std::to_string(weather.size()));
    auto check_hourly = [](const IntervalSeries& s) {
        if (s.resolution() != kHour) throw ValidationError("align: series " + s.point().str() + " is not hourly");
    };
    check_hourly(load);
    for (const auto& w : weather) check_hourly(w);

    // Seven-way merge over present samples; each cursor only moves forward.
    std::array<std::size_t, kWeatherFields> cursor{};
    AlignedTable table;
    for (const Sample& ls : load.samples()) {
        if (!ls.value) continue;
        AlignedRow row{ls.ts, WeatherFrame{ls.ts, {}}, *ls.value};
        bool complete = true;
        for (std::size_t f = 0; f < kWeatherFields; ++f) {
            const auto& ws = weather[f].samples();
            std::size_t& c = cursor[f];
            while (c < ws.size() && ws[c].ts < ls.ts) ++c;
            if (c >= ws.size() || ws[c].ts != ls.ts || !ws[c].value) {
                complete = false;
                break;
            }
            row.weather.values[f] = *ws[c].value;
        }
        if (complete) table.rows.push_back(row);
    }

    if (table.empty()) {
        std::ostringstream msg;
        msg << "align: no hour is present in all seven series;";
        auto describe = [&msg](const IntervalSeries& s) {
            msg << ' ' << s.point().str() << '=';
            if (s.empty())
                msg << "[empty]";
            else
                msg << '[' << format_iso8601(s.samples().front().ts) << ", " << format_iso8601(s.samples().back().ts)
                    << ']';
        };
        describe(load);
        for (const auto& w : weather) describe(w);
        throw ValidationError(msg.str());
    }
    return table;
}

IntervalSeries read_series_csv(const std::string& path, PointId point, std::string unit, Timestamp resolution_s) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    std::string line;
    std::vector<Sample> samples;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("ts", 0) == 0) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ValidationError(path + ":" + std::to_string(lineno) + ": expected 'ts,value'");
        Sample s;
        s.ts = parse_timestamp(std::string_view(line).substr(0, comma));
        const std::string value = line.substr(comma + 1);
        if (value.find_first_not_of(" \t") != std::string::npos) {
            std::size_t used = 0;
            try {
                s.value = std::stod(value, &used);
            } catch (const std::exception&) {
                throw ValidationError(path + ":" + std::to_string(lineno) + ": bad value '" + value + "'");
            }
        }
        samples.push_back(s);
    }
    return IntervalSeries(std::move(point), std::move(unit), resolution_s, std::move(samples));
}

void write_series_csv(const IntervalSeries& series, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw StorageError("cannot write " + path);
    out.precision(17);
    out << "ts,value\n";
    for (const Sample& s : series.samples()) {
        out << format_iso8601(s.ts) << ',';
        if (s.value) out << *s.value;
        out << '\n';
    }
    if (!out) throw StorageError("write failed for " + path);
}

}  // namespace loadcast
