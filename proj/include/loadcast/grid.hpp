#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace loadcast {

/// JSON rendering of a Haystack grid:
///
///   {"meta": {"ver": "3.0", "op": "...", ...},
///    "cols": [{"name": "ts"}, {"name": "val"}],
///    "rows": [{"ts": "...", "val": 1.0}, ...]}
///
/// Error grids set meta.err to the marker "m:" and carry a meta.dis message.
struct GridDocument {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<std::string> cols;
    std::vector<nlohmann::json> rows;

    bool is_error() const { return meta.contains("err"); }
    std::string error_message() const { return meta.value("dis", std::string("unknown error")); }

    nlohmann::json to_json() const;
    std::string dump() const { return to_json().dump(); }

    /// Throws ProtocolError when the document is not a well-formed grid, or
    /// when a row carries a column not declared in cols.
    static GridDocument parse(const std::string& text);
    static GridDocument from_json(const nlohmann::json& j);

    static GridDocument make(const std::string& op, std::vector<std::string> cols);
    static GridDocument error(const std::string& op, const std::string& message);
};

/// Marker value in the JSON encoding.
inline const char* const kMarker = "m:";

}  // namespace loadcast
