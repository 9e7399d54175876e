#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace nlad {

using Json = nlohmann::ordered_json;

// 17 significant digits, enough to round-trip a double
std::string format_number(double x);

struct Series {
    std::vector<std::string> columns; // header names carry units, e.g. "t", "E"
    std::vector<std::vector<double>> rows;
    bool empty() const { return rows.empty(); }
    void add(std::vector<double> row) { rows.push_back(std::move(row)); }
};

void write_csv(const std::string& path, const Series& s);
void write_json(const std::string& path, const Json& j);
Json read_json(const std::string& path);

// CSV plus a sidecar <stem>.axes.json describing the axes; throws IoFailure on empty data.
// scale: "linear", "loglog", ...; extra is merged into the sidecar.
void emit_plot_data(const Series& s, const std::string& path, const std::string& scale = "linear",
                    const Json& extra = Json::object());
std::string sidecar_path(const std::string& csv_path);

} // namespace nlad
