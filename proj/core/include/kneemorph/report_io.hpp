#pragma once

#include <filesystem>
#include <string>

#include "kneemorph/metrics.hpp"

namespace kneemorph {

/// "tool=... version=... params_hash=... inputs=a;b" (no leading '#').
[[nodiscard]] std::string provenance_line(const Provenance& provenance);
/// Inverse of provenance_line; unknown keys are ignored.
[[nodiscard]] Provenance parse_provenance_line(const std::string& line);

/// region,fcl_percent,mean_thickness_mm,surface_area_mm2,volume_mm3 with one
/// leading '#' provenance line.
void write_report_csv(const RegionalReport& report, const std::filesystem::path& path);
[[nodiscard]] std::string report_csv(const RegionalReport& report);
/// Reads rows back; '#' lines are skipped. Throws FormatError.
[[nodiscard]] RegionalReport read_report_csv(const std::filesystem::path& path);

void write_report_json(const RegionalReport& report, const std::string& params_json,
                       const std::filesystem::path& path);

/// vertex,x,y,z,thickness_mm; undefined thickness is written as an empty field.
void write_thickness_csv(const ThicknessMap& map, const std::filesystem::path& path,
                         const Provenance& provenance = {});

/// Agreement table between model-derived and reference reports: one row per
/// region (needs >= 2 report pairs) plus an ALL row pooling every region, with
/// rho / RMSD / CV_RMSD for each metric and the pHR of fcl_percent within
/// `phr_tolerance` percentage points. Undefined statistics print as nan.
[[nodiscard]] std::string agreement_table_csv(const std::vector<RegionalReport>& model,
                                              const std::vector<RegionalReport>& reference,
                                              double phr_tolerance = 10.0);

}  // namespace kneemorph
