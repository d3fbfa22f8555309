#pragma once

#include <span>
#include <string>
#include <vector>

#include "kneemorph/fcl.hpp"
#include "kneemorph/parcellation.hpp"
#include "kneemorph/thickness.hpp"
#include "kneemorph/volume.hpp"

namespace kneemorph {

/// Paired measurements: model-derived values and reference values.
struct MeasurementSeries {
    std::vector<double> model;
    std::vector<double> reference;

    /// Throws InvalidArgument unless lengths match, are at least 2 and all
    /// values are finite.
    void validate() const;
};

/// 2|a & b| / (|a| + |b|); two empty masks give 1.
[[nodiscard]] double dsc(const BinaryMask& a, const BinaryMask& b);

/// Pearson correlation with population moments. Throws InvalidArgument when
/// either side has zero variance.
[[nodiscard]] double pearson(const MeasurementSeries& s);
[[nodiscard]] double rmsd(const MeasurementSeries& s);
/// rmsd / mean(reference). Throws InvalidArgument when that mean is 0.
[[nodiscard]] double cv_rmsd(const MeasurementSeries& s);

/// Fraction of j with truth[j] in [pred[j] - tol, pred[j] + tol].
[[nodiscard]] double phr(std::span<const double> predicted, std::span<const double> truth, double tolerance);

/// Manual FCL grade (0..10) to percent: grade * 10.
[[nodiscard]] double grade_to_fcl_percent(int grade);

[[nodiscard]] double mse_image(const ScalarVolume& a, const ScalarVolume& b);

inline constexpr double kLnccVarianceFloor = 1e-5;

/// Mean over voxels of the squared local correlation in a window^3
/// neighbourhood (clipped at the border). Local sums of squared deviations
/// are floored at kLnccVarianceFloor.
[[nodiscard]] double lncc_image(const ScalarVolume& a, const ScalarVolume& b, int window = 3);

enum class ThicknessMean {
    /// Over all pseudo-healthy vertices, denuded ones counted as 0.
    total_subchondral,
    /// Over vertices with a defined, non-denuded thickness only.
    covered_only,
};

struct RegionRow {
    Region region = Region::aMFC;
    double fcl_percent = 0.0;
    double mean_thickness_mm = 0.0;
    double surface_area_mm2 = 0.0;
    double volume_mm3 = 0.0;
    bool warning = false;
};

struct Provenance {
    std::string tool = "kneemorph";
    std::string version;
    std::vector<std::string> inputs;
    std::string params_hash;
};

struct RegionalReport {
    std::vector<RegionRow> rows;
    Provenance provenance;

    [[nodiscard]] const RegionRow& row(Region r) const;
    [[nodiscard]] RegionRow& row(Region r);
};

/// Empty report with one zero row per region, flagged with a warning.
[[nodiscard]] RegionalReport empty_report();

/// Regional morphometrics for one surface. `thickness` and `fcl` live on the
/// parcellation's surface; `region_labels` is the volume parcellation of the
/// cartilage (region codes). Only regions present in `parcellation` are
/// written; others keep their current values.
void regional_quantify(RegionalReport& report, const ThicknessMap& thickness,
                       const SurfaceParcellation& parcellation, const FclResult& fcl,
                       const LabelVolume& region_labels, ThicknessMean mode = ThicknessMean::total_subchondral);

/// Fresh report for a single surface; cartilage voxels are labelled with
/// labels_to_volume first.
[[nodiscard]] RegionalReport regional_quantify(const ThicknessMap& thickness, const SurfaceParcellation& parcellation,
                                               const FclResult& fcl, const BinaryMask& cart,
                                               ThicknessMean mode = ThicknessMean::total_subchondral);

/// Mark rows whose surface area is zero.
void flag_empty_rows(RegionalReport& report);

}  // namespace kneemorph
