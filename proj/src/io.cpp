#include "nlad/io.hpp"

#include "nlad/types.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace nlad {

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::filesystem::path p(path);
    std::error_code ec;
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorKind::IoFailure, "cannot open " + path + " for writing");
    return os;
}

} // namespace

void write_csv(const std::string& path, const Series& s) {
    std::ofstream os = open_out(path);
    for (size_t i = 0; i < s.columns.size(); ++i) os << (i ? "," : "") << s.columns[i];
    os << '\n';
    for (const auto& row : s.rows) {
        if (row.size() != s.columns.size()) throw Error(ErrorKind::IoFailure, "row width differs from header in " + path);
        for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_number(row[i]);
        os << '\n';
    }
    if (!os) throw Error(ErrorKind::IoFailure, "write failed for " + path);
}

void write_json(const std::string& path, const Json& j) {
    std::ofstream os = open_out(path);
    os << j.dump(2) << '\n';
    if (!os) throw Error(ErrorKind::IoFailure, "write failed for " + path);
}

Json read_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorKind::IoFailure, "cannot read " + path);
    try {
        return Json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::ConfigInvalid, path + ": " + e.what());
    }
}

std::string sidecar_path(const std::string& csv_path) {
    std::filesystem::path p(csv_path);
    p.replace_extension(".axes.json");
    return p.string();
}

void emit_plot_data(const Series& s, const std::string& path, const std::string& scale, const Json& extra) {
    if (s.empty() || s.columns.empty()) throw Error(ErrorKind::IoFailure, "empty series for " + path);
    write_csv(path, s);
    Json side;
    side["file"] = std::filesystem::path(path).filename().string();
    side["x"] = s.columns.front();
    side["y"] = Json(std::vector<std::string>(s.columns.begin() + 1, s.columns.end()));
    side["scale"] = scale;
    side["rows"] = s.rows.size();
    for (auto it = extra.begin(); it != extra.end(); ++it) side[it.key()] = it.value();
    write_json(sidecar_path(path), side);
}

} // namespace nlad
