#include "kneemorph/report_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "kneemorph/error.hpp"

namespace kneemorph {

namespace {

std::string fixed(double v, int decimals = 6) {
    if (!std::isfinite(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s(buf);
    if (s == "-0.000000") s = "0.000000";
    return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path.string());
    os << text;
    if (!os) throw FormatError("write failed: " + path.string());
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& what) {
    if (s == "nan") return std::nan("");
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw FormatError("");
        return v;
    } catch (const std::exception&) {
        throw FormatError("bad numeric field '" + s + "' in " + what);
    }
}

constexpr const char* kMetricNames[] = {"fcl_percent", "mean_thickness_mm", "surface_area_mm2", "volume_mm3"};

double metric(const RegionRow& row, int m) {
    switch (m) {
        case 0: return row.fcl_percent;
        case 1: return row.mean_thickness_mm;
        case 2: return row.surface_area_mm2;
        default: return row.volume_mm3;
    }
}

template <typename F>
double or_nan(F&& f) {
    try {
        return f();
    } catch (const InvalidArgument&) {
        return std::nan("");
    }
}

}  // namespace

std::string provenance_line(const Provenance& p) {
    std::string inputs;
    for (const auto& in : p.inputs) inputs += (inputs.empty() ? "" : ";") + in;
    return "tool=" + p.tool + " version=" + p.version + " params_hash=" + p.params_hash + " inputs=" + inputs;
}

Provenance parse_provenance_line(const std::string& line) {
    Provenance p;
    p.tool.clear();
    std::string rest = line;
    while (!rest.empty() && (rest.front() == '#' || rest.front() == ' ')) rest.erase(rest.begin());
    const auto in_pos = rest.find("inputs=");
    if (in_pos != std::string::npos) {
        const auto list = rest.substr(in_pos + 7);
        if (!list.empty()) p.inputs = split(list, ';');
        rest = rest.substr(0, in_pos);
    }
    std::istringstream is(rest);
    for (std::string tok; is >> tok;) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const auto key = tok.substr(0, eq);
        const auto value = tok.substr(eq + 1);
        if (key == "tool") {
            p.tool = value;
        } else if (key == "version") {
            p.version = value;
        } else if (key == "params_hash") {
            p.params_hash = value;
        }
    }
    return p;
}

std::string report_csv(const RegionalReport& report) {
    std::string out = "# " + provenance_line(report.provenance) + "\n";
    out += "region,fcl_percent,mean_thickness_mm,surface_area_mm2,volume_mm3\n";
    for (const auto& row : report.rows) {
        out += std::string(region_name(row.region)) + "," + fixed(row.fcl_percent) + "," +
               fixed(row.mean_thickness_mm) + "," + fixed(row.surface_area_mm2) + "," + fixed(row.volume_mm3) + "\n";
    }
    return out;
}

void write_report_csv(const RegionalReport& report, const std::filesystem::path& path) {
    write_text(path, report_csv(report));
}

RegionalReport read_report_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open: " + path.string());
    RegionalReport report = empty_report();
    bool header_seen = false;
    std::vector<bool> seen(report.rows.size(), false);
    for (std::string line; std::getline(is, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            report.provenance = parse_provenance_line(line);
            continue;
        }
        if (!header_seen) {
            if (line != "region,fcl_percent,mean_thickness_mm,surface_area_mm2,volume_mm3") {
                throw FormatError("unexpected report header in " + path.string());
            }
            header_seen = true;
            continue;
        }
        const auto fields = split(line, ',');
        if (fields.size() != 5) throw FormatError("report row needs 5 fields: " + line);
        const auto region = region_from_name(fields[0]);
        if (!region) throw FormatError("unknown region in report: " + fields[0]);
        auto& row = report.row(*region);
        row.fcl_percent = parse_double(fields[1], path.string());
        row.mean_thickness_mm = parse_double(fields[2], path.string());
        row.surface_area_mm2 = parse_double(fields[3], path.string());
        row.volume_mm3 = parse_double(fields[4], path.string());
        row.warning = false;
        seen[static_cast<std::size_t>(region_code(*region) - 1)] = true;
    }
    if (!header_seen) throw FormatError("missing report header in " + path.string());
    for (bool s : seen) {
        if (!s) throw FormatError("report does not list every region: " + path.string());
    }
    flag_empty_rows(report);
    return report;
}

void write_report_json(const RegionalReport& report, const std::string& params_json,
                       const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    auto& prov = j["provenance"];
    prov["tool"] = report.provenance.tool;
    prov["version"] = report.provenance.version;
    prov["inputs"] = report.provenance.inputs;
    prov["params_hash"] = report.provenance.params_hash;
    if (!params_json.empty()) prov["params"] = nlohmann::ordered_json::parse(params_json);
    auto& rows = j["regions"];
    rows = nlohmann::ordered_json::array();
    for (const auto& row : report.rows) {
        rows.push_back({{"region", std::string(region_name(row.region))},
                        {"code", region_code(row.region)},
                        {"fcl_percent", row.fcl_percent},
                        {"mean_thickness_mm", row.mean_thickness_mm},
                        {"surface_area_mm2", row.surface_area_mm2},
                        {"volume_mm3", row.volume_mm3},
                        {"warning", row.warning}});
    }
    write_text(path, j.dump(2) + "\n");
}

void write_thickness_csv(const ThicknessMap& map, const std::filesystem::path& path, const Provenance& provenance) {
    std::string out = "# " + provenance_line(provenance) + "\n";
    out += "vertex,x,y,z,thickness_mm\n";
    const auto& verts = map.patch.surface().vertices();
    for (std::size_t i = 0; i < map.vertex_ids.size(); ++i) {
        const int v = map.vertex_ids[i];
        const auto& p = verts[static_cast<std::size_t>(v)];
        out += std::to_string(v) + "," + fixed(p.x()) + "," + fixed(p.y()) + "," + fixed(p.z()) + ",";
        if (ThicknessMap::defined(map.values[i])) out += fixed(map.values[i]);
        out += "\n";
    }
    write_text(path, out);
}

std::string agreement_table_csv(const std::vector<RegionalReport>& model, const std::vector<RegionalReport>& reference,
                                double phr_tolerance) {
    if (model.size() != reference.size() || model.empty()) {
        throw InvalidArgument("agreement table needs the same non-zero number of model and reference reports");
    }
    std::string out = "region,n";
    for (const char* m : kMetricNames) {
        out += std::string(",") + m + "_rho," + m + "_rmsd," + m + "_cv_rmsd";
    }
    out += ",fcl_percent_phr\n";

    auto emit = [&](const std::string& name, const std::vector<Region>& regions) {
        std::vector<MeasurementSeries> series(4);
        for (std::size_t s = 0; s < model.size(); ++s) {
            for (Region r : regions) {
                for (int m = 0; m < 4; ++m) {
                    series[static_cast<std::size_t>(m)].model.push_back(metric(model[s].row(r), m));
                    series[static_cast<std::size_t>(m)].reference.push_back(metric(reference[s].row(r), m));
                }
            }
        }
        out += name + "," + std::to_string(series[0].model.size());
        for (const auto& s : series) {
            out += "," + fixed(or_nan([&] { return pearson(s); }));
            out += "," + fixed(or_nan([&] { return rmsd(s); }));
            out += "," + fixed(or_nan([&] { return cv_rmsd(s); }));
        }
        out += "," + fixed(or_nan([&] { return phr(series[0].model, series[0].reference, phr_tolerance); }));
        out += "\n";
    };

    if (model.size() >= 2) {
        for (Region r : all_regions()) emit(std::string(region_name(r)), {r});
    }
    emit("ALL", {all_regions().begin(), all_regions().end()});
    return out;
}

}  // namespace kneemorph
