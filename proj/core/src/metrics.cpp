#include "kneemorph/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kneemorph {

void MeasurementSeries::validate() const {
    if (model.size() != reference.size()) throw InvalidArgument("measurement series lengths differ");
    if (model.size() < 2) throw InvalidArgument("measurement series need at least two pairs");
    auto finite = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }); };
    if (!finite(model) || !finite(reference)) throw InvalidArgument("measurement series contain non-finite values");
}

double dsc(const BinaryMask& a, const BinaryMask& b) {
    require_same_grid(a.geometry(), b.geometry(), "dsc");
    std::size_t na = 0;
    std::size_t nb = 0;
    std::size_t both = 0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        const bool x = a[n] != 0;
        const bool y = b[n] != 0;
        na += x;
        nb += y;
        both += x && y;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double pearson(const MeasurementSeries& s) {
    s.validate();
    const auto n = static_cast<double>(s.model.size());
    const double mx = std::accumulate(s.model.begin(), s.model.end(), 0.0) / n;
    const double my = std::accumulate(s.reference.begin(), s.reference.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < s.model.size(); ++i) {
        const double dx = s.model[i] - mx;
        const double dy = s.reference[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) throw InvalidArgument("pearson: a series has zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double rmsd(const MeasurementSeries& s) {
    s.validate();
    double acc = 0.0;
    for (std::size_t i = 0; i < s.model.size(); ++i) {
        const double d = s.model[i] - s.reference[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(s.model.size()));
}

double cv_rmsd(const MeasurementSeries& s) {
    const double r = rmsd(s);
    const double mean = std::accumulate(s.reference.begin(), s.reference.end(), 0.0) / static_cast<double>(s.reference.size());
    if (mean == 0.0) throw InvalidArgument("cv_rmsd: reference mean is zero");
    return r / mean;
}

double phr(std::span<const double> predicted, std::span<const double> truth, double tolerance) {
    if (predicted.size() != truth.size()) throw InvalidArgument("phr: length mismatch");
    if (predicted.empty()) throw InvalidArgument("phr: empty input");
    if (!(tolerance >= 0.0)) throw InvalidArgument("phr: tolerance must be non-negative");
    std::size_t hits = 0;
    for (std::size_t j = 0; j < predicted.size(); ++j) {
        hits += truth[j] >= predicted[j] - tolerance && truth[j] <= predicted[j] + tolerance;
    }
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

double grade_to_fcl_percent(int grade) {
    if (grade < 0 || grade > 10) throw InvalidArgument("FCL grade must lie in 0..10");
    return grade * 10.0;
}

double mse_image(const ScalarVolume& a, const ScalarVolume& b) {
    require_same_grid(a.geometry(), b.geometry(), "mse_image");
    if (a.size() == 0) throw InvalidArgument("mse_image: empty volume");
    double acc = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        const double d = static_cast<double>(a[n]) - b[n];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

namespace {

/// Inclusive 3D prefix sums with a zero border.
class BoxSum {
public:
    BoxSum(const Index3& d, const std::vector<double>& values) : d_(d), s_(static_cast<std::size_t>(d[0] + 1) * (d[1] + 1) * (d[2] + 1), 0.0) {
        for (int i = 0; i < d[0]; ++i) {
            for (int j = 0; j < d[1]; ++j) {
                for (int k = 0; k < d[2]; ++k) {
                    const double v = values[static_cast<std::size_t>((static_cast<std::int64_t>(i) * d[1] + j) * d[2] + k)];
                    at(i + 1, j + 1, k + 1) = v + at(i, j + 1, k + 1) + at(i + 1, j, k + 1) + at(i + 1, j + 1, k) -
                                              at(i, j, k + 1) - at(i, j + 1, k) - at(i + 1, j, k) + at(i, j, k);
                }
            }
        }
    }
    /// Sum over [lo, hi) per axis.
    [[nodiscard]] double sum(const Index3& lo, const Index3& hi) const {
        return get(hi[0], hi[1], hi[2]) - get(lo[0], hi[1], hi[2]) - get(hi[0], lo[1], hi[2]) - get(hi[0], hi[1], lo[2]) +
               get(lo[0], lo[1], hi[2]) + get(lo[0], hi[1], lo[2]) + get(hi[0], lo[1], lo[2]) - get(lo[0], lo[1], lo[2]);
    }

private:
    double& at(int i, int j, int k) { return s_[idx(i, j, k)]; }
    [[nodiscard]] double get(int i, int j, int k) const { return s_[idx(i, j, k)]; }
    [[nodiscard]] std::size_t idx(int i, int j, int k) const {
        return static_cast<std::size_t>((static_cast<std::int64_t>(i) * (d_[1] + 1) + j) * (d_[2] + 1) + k);
    }
    Index3 d_;
    std::vector<double> s_;
};

}  // namespace

double lncc_image(const ScalarVolume& a, const ScalarVolume& b, int window) {
    require_same_grid(a.geometry(), b.geometry(), "lncc_image");
    if (window < 1 || window % 2 == 0) throw InvalidArgument("lncc_image: window must be a positive odd integer");
    if (a.size() == 0) throw InvalidArgument("lncc_image: empty volume");
    const Index3& d = a.dims();
    const std::size_t n = a.size();
    std::vector<double> va(n);
    std::vector<double> vb(n);
    std::vector<double> vaa(n);
    std::vector<double> vbb(n);
    std::vector<double> vab(n);
    for (std::size_t i = 0; i < n; ++i) {
        va[i] = a[i];
        vb[i] = b[i];
        vaa[i] = va[i] * va[i];
        vbb[i] = vb[i] * vb[i];
        vab[i] = va[i] * vb[i];
    }
    const BoxSum sa(d, va);
    const BoxSum sb(d, vb);
    const BoxSum saa(d, vaa);
    const BoxSum sbb(d, vbb);
    const BoxSum sab(d, vab);
    const int r = window / 2;
    double total = 0.0;
    for (int i = 0; i < d[0]; ++i) {
        for (int j = 0; j < d[1]; ++j) {
            for (int k = 0; k < d[2]; ++k) {
                const Index3 lo{std::max(i - r, 0), std::max(j - r, 0), std::max(k - r, 0)};
                const Index3 hi{std::min(i + r + 1, d[0]), std::min(j + r + 1, d[1]), std::min(k + r + 1, d[2])};
                const double cnt = static_cast<double>(hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
                const double sum_a = sa.sum(lo, hi);
                const double sum_b = sb.sum(lo, hi);
                const double cross = sab.sum(lo, hi) - sum_a * sum_b / cnt;
                const double var_a = std::max(saa.sum(lo, hi) - sum_a * sum_a / cnt, kLnccVarianceFloor);
                const double var_b = std::max(sbb.sum(lo, hi) - sum_b * sum_b / cnt, kLnccVarianceFloor);
                total += cross * cross / (var_a * var_b);
            }
        }
    }
    return total / static_cast<double>(n);
}

const RegionRow& RegionalReport::row(Region r) const { return rows.at(static_cast<std::size_t>(region_code(r) - 1)); }
RegionRow& RegionalReport::row(Region r) { return rows.at(static_cast<std::size_t>(region_code(r) - 1)); }

RegionalReport empty_report() {
    RegionalReport report;
    for (Region r : all_regions()) report.rows.push_back(RegionRow{r, 0.0, 0.0, 0.0, 0.0, true});
    return report;
}

void regional_quantify(RegionalReport& report, const ThicknessMap& thickness, const SurfaceParcellation& parcellation,
                       const FclResult& fcl, const LabelVolume& region_labels, ThicknessMean mode) {
    if (report.rows.size() != static_cast<std::size_t>(kRegionCount)) report = empty_report();
    const SurfacePtr& surface = parcellation.surface;
    if (fcl.pseudo_healthy_patch.parent() != surface) {
        throw InvalidArgument("regional_quantify: FCL result and parcellation live on different surfaces");
    }
    if (thickness.patch.parent() && thickness.patch.parent() != surface) {
        throw InvalidArgument("regional_quantify: thickness map and parcellation live on different surfaces");
    }
    const std::vector<double> areas = vertex_areas(fcl.pseudo_healthy_patch);
    const std::vector<double> t = thickness.patch.parent() ? thickness_by_vertex(thickness)
                                                           : std::vector<double>(surface->vertex_count(), ThicknessMap::kNoThickness);
    std::vector<double> denuded(surface->vertex_count(), 0.0);
    for (int f : fcl.denuded_faces) {
        const double third = surface->face_area(f) / 3.0;
        for (int v : surface->faces()[static_cast<std::size_t>(f)]) denuded[static_cast<std::size_t>(v)] += third;
    }

    struct Acc {
        bool present = false;
        double area = 0.0;
        double denuded = 0.0;
        double thick_sum = 0.0;
        std::int64_t all = 0;
        std::int64_t covered = 0;
    };
    std::array<Acc, kRegionCount> acc{};
    for (std::size_t v = 0; v < parcellation.region.size(); ++v) {
        const int code = parcellation.region[v];
        if (code == 0) continue;
        Acc& a = acc[static_cast<std::size_t>(code - 1)];
        a.present = true;
        a.area += areas[v];
        a.denuded += denuded[v];
        ++a.all;
        const bool covered = fcl.cartilage_patch.parent() == surface && fcl.cartilage_patch.contains(static_cast<int>(v));
        if (covered && ThicknessMap::defined(t[v])) {
            a.thick_sum += t[v];
            ++a.covered;
        }
    }
    std::array<std::int64_t, kRegionCount + 1> voxels{};
    for (auto code : region_labels.data()) {
        if (code >= 1 && code <= kRegionCount) ++voxels[code];
    }
    const double voxel_volume = region_labels.geometry().voxel_volume();
    for (int i = 0; i < kRegionCount; ++i) {
        const Acc& a = acc[static_cast<std::size_t>(i)];
        if (!a.present) continue;
        RegionRow& row = report.rows[static_cast<std::size_t>(i)];
        row.surface_area_mm2 = a.area;
        row.fcl_percent = a.area > 0.0 ? std::clamp(100.0 * a.denuded / a.area, 0.0, 100.0) : 0.0;
        const auto denominator = mode == ThicknessMean::total_subchondral ? a.all : a.covered;
        row.mean_thickness_mm = denominator > 0 ? a.thick_sum / static_cast<double>(denominator) : 0.0;
        row.volume_mm3 = static_cast<double>(voxels[static_cast<std::size_t>(i + 1)]) * voxel_volume;
        row.warning = a.area <= 0.0;
        if (row.warning) row = RegionRow{row.region, 0.0, 0.0, 0.0, 0.0, true};
    }
}

RegionalReport regional_quantify(const ThicknessMap& thickness, const SurfaceParcellation& parcellation,
                                 const FclResult& fcl, const BinaryMask& cart, ThicknessMean mode) {
    RegionalReport report = empty_report();
    regional_quantify(report, thickness, parcellation, fcl, labels_to_volume(parcellation, cart), mode);
    return report;
}

void flag_empty_rows(RegionalReport& report) {
    for (auto& row : report.rows) row.warning = row.surface_area_mm2 <= 0.0;
}

}  // namespace kneemorph
