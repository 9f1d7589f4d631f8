#include "loadcast/grid.hpp"

#include <algorithm>

#include "loadcast/error.hpp"

namespace loadcast {

nlohmann::json GridDocument::to_json() const {
    nlohmann::json j;
    j["meta"] = meta;
    if (!j["meta"].contains("ver")) j["meta"]["ver"] = "3.0";
    j["cols"] = nlohmann::json::array();
    for (const auto& c : cols) j["cols"].push_back({{"name", c}});
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) j["rows"].push_back(r);
    return j;
}

GridDocument GridDocument::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ProtocolError("grid is not a JSON object");
    GridDocument g;
    if (j.contains("meta")) {
        if (!j["meta"].is_object()) throw ProtocolError("grid meta is not an object");
        g.meta = j["meta"];
    }
    if (!j.contains("cols") || !j["cols"].is_array()) throw ProtocolError("grid has no cols array");
    for (const auto& c : j["cols"]) {
        if (!c.is_object() || !c.contains("name") || !c["name"].is_string())
            throw ProtocolError("grid column without a name");
        g.cols.push_back(c["name"].get<std::string>());
    }
    if (!j.contains("rows") || !j["rows"].is_array()) throw ProtocolError("grid has no rows array");
    for (const auto& r : j["rows"]) {
        if (!r.is_object()) throw ProtocolError("grid row is not an object");
        for (const auto& [key, value] : r.items())
            if (std::find(g.cols.begin(), g.cols.end(), key) == g.cols.end())
                throw ProtocolError("grid row has undeclared column '" + key + "'");
        g.rows.push_back(r);
    }
    return g;
}

GridDocument GridDocument::parse(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception&) {
        throw ProtocolError("grid is not valid JSON: '" + text.substr(0, 120) + "'");
    }
    return from_json(j);
}

GridDocument GridDocument::make(const std::string& op, std::vector<std::string> cols) {
    GridDocument g;
    g.meta = {{"ver", "3.0"}, {"op", op}};
    g.cols = std::move(cols);
    return g;
}

GridDocument GridDocument::error(const std::string& op, const std::string& message) {
    GridDocument g;
    g.meta = {{"ver", "3.0"}, {"op", op}, {"err", kMarker}, {"dis", message}};
    g.cols = {"empty"};
    return g;
}

}  // namespace loadcast
