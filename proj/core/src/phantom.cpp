#include "kneemorph/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "kneemorph/error.hpp"

namespace kneemorph {

namespace {

constexpr int kFemur = 1;
constexpr int kTibia = 2;
constexpr int kFemoralCart = 3;
constexpr int kMedialCart = 4;
constexpr int kLateralCart = 5;

constexpr int kFootprintMargin = 4;
constexpr int kBoneMargin = 2;

using Cell = std::pair<int, int>;

// Cartilage voxels grouped into columns on a 2D cell grid.
struct CompartmentBuild {
    std::string name;
    int cart_label = 0;
    int bone_label = 0;
    std::map<Cell, std::vector<std::int64_t>> columns;
    double cell_area = 1.0;
};

class Canvas {
public:
    explicit Canvas(Geometry g) : labels(std::move(g)) {}

    void set(int i, int j, int k, int label) {
        if (!labels.geometry().contains(i, j, k)) {
            throw InvalidArgument("phantom shape does not fit in the grid dims");
        }
        labels.at(i, j, k) = static_cast<std::uint16_t>(label);
    }
    void set_cart(CompartmentBuild& c, Cell cell, int i, int j, int k) {
        set(i, j, k, c.cart_label);
        c.columns[cell].push_back(labels.geometry().linear(i, j, k));
    }

    LabelVolume labels;
};

int thickness_voxels(double thickness_mm, double spacing) {
    const int t = static_cast<int>(std::lround(thickness_mm / spacing));
    if (t < 1) throw InvalidArgument("phantom thickness is below one voxel");
    return t;
}

double wrap_degrees(double deg, double lo) {
    while (deg < lo) deg += 360.0;
    while (deg >= lo + 360.0) deg -= 360.0;
    return deg;
}

// Femoral condyles: cylinders along x with an intercondylar gap holding only
// the anterior half of the bone and the trochlear part of the shell.
void add_femur(Canvas& canvas, CompartmentBuild& fc, double y0, double z0, int t) {
    constexpr double R = 14.0;
    constexpr int kCondyle0[2] = {14, 42};
    constexpr int kCondyle1[2] = {54, 82};
    const double r_mid = R + 0.5 * t;
    const auto& d = canvas.labels.dims();
    for (int i = kCondyle0[0]; i < kCondyle1[1]; ++i) {
        const bool gap = i >= kCondyle0[1] && i < kCondyle1[0];
        for (int j = 0; j < d[1]; ++j) {
            for (int k = 0; k < d[2]; ++k) {
                const double dy = j - y0;
                const double dz = k - z0;
                const double r = std::hypot(dy, dz);
                if (r <= R) {
                    if (!gap || dy >= 0.0) canvas.set(i, j, k, kFemur);
                    continue;
                }
                if (r > R + t) continue;
                const double alpha = wrap_degrees(std::atan2(-dz, dy) * 180.0 / std::numbers::pi, -45.0);
                if (alpha > 200.0 || (gap && alpha >= 90.0)) continue;
                const int bin = static_cast<int>(std::floor(alpha * std::numbers::pi / 180.0 * r_mid));
                canvas.set_cart(fc, {i, bin}, i, j, k);
            }
        }
    }
}

// Tibial plate: a bone slab carrying elliptical cartilage discs.
void add_disc(Canvas& canvas, CompartmentBuild& plate, double cx, double cy, int z0, int t) {
    constexpr double a = 13.0;
    constexpr double b = 18.0;
    const int i0 = static_cast<int>(std::floor(cx - a));
    const int j0 = static_cast<int>(std::floor(cy - b));
    for (int i = i0; i <= static_cast<int>(std::ceil(cx + a)); ++i) {
        for (int j = j0; j <= static_cast<int>(std::ceil(cy + b)); ++j) {
            const double u = (i - cx) / a;
            const double v = (j - cy) / b;
            if (u * u + v * v > 1.0) continue;
            for (int k = z0; k < z0 + t; ++k) canvas.set_cart(plate, {i, j}, i, j, k);
        }
    }
}

void fill_box(Canvas& canvas, Index3 lo, Index3 hi, int label) {
    for (int i = lo[0]; i < hi[0]; ++i) {
        for (int j = lo[1]; j < hi[1]; ++j) {
            for (int k = lo[2]; k < hi[2]; ++k) canvas.set(i, j, k, label);
        }
    }
}

// Rectangle (w, h) with w * h == count and aspect closest to W / H. Falls back
// to full rows plus a partial row when no factor pair fits.
struct Rect {
    int w = 0;
    int h = 0;
    int remainder = 0;
};

Rect defect_rect(int count, int W, int H) {
    const double target = static_cast<double>(W) / H;
    Rect best;
    double best_err = std::numeric_limits<double>::infinity();
    for (int w = 1; w <= W; ++w) {
        if (count % w != 0) continue;
        const int h = count / w;
        if (h > H) continue;
        if (std::min(w, h) < 2 && count >= 4) continue;
        const double err = std::abs(std::log((static_cast<double>(w) / h) / target));
        if (err < best_err) {
            best_err = err;
            best = {w, h, 0};
        }
    }
    if (best.w > 0) return best;
    int w = static_cast<int>(std::lround(std::sqrt(count * target)));
    w = std::clamp(w, 1, W);
    const int full = count / w;
    return {w, full, count - full * w};
}

struct DefectResult {
    std::int64_t removed_voxels = 0;
    std::int64_t removed_cells = 0;
};

DefectResult punch_defect(LabelVolume& labels, const CompartmentBuild& c, const DefectSpec& spec,
                          std::mt19937_64& rng) {
    int lo0 = std::numeric_limits<int>::max(), lo1 = lo0;
    int hi0 = std::numeric_limits<int>::min(), hi1 = hi0;
    for (const auto& [cell, _] : c.columns) {
        lo0 = std::min(lo0, cell.first);
        hi0 = std::max(hi0, cell.first);
        lo1 = std::min(lo1, cell.second);
        hi1 = std::max(hi1, cell.second);
    }
    const int W = hi0 - lo0 + 1;
    const int H = hi1 - lo1 + 1;
    std::array<double, 2> loc{};
    if (spec.location) {
        loc = *spec.location;
    } else {
        std::uniform_real_distribution<double> u(0.3, 0.7);
        loc[0] = u(rng);
        loc[1] = u(rng);
    }
    const double cu = lo0 + loc[0] * (W - 1);
    const double cv = spec.at_edge ? hi1 : lo1 + loc[1] * (H - 1);
    const int count = static_cast<int>(std::lround(spec.fraction * static_cast<double>(c.columns.size())));

    std::vector<Cell> chosen;
    if (spec.rotated) {
        const double theta = spec.angle_deg * std::numbers::pi / 180.0;
        const double rw = std::sqrt(count * static_cast<double>(W) / H);
        const double rh = count / rw;
        const double ct = std::cos(theta);
        const double st = std::sin(theta);
        const double centre_v = spec.at_edge ? hi1 + 0.5 - 0.5 * rh : cv;
        for (const auto& [cell, _] : c.columns) {
            const double du = cell.first - cu;
            const double dv = cell.second - centre_v;
            const double a = ct * du + st * dv;
            const double b = -st * du + ct * dv;
            if (std::abs(a) <= 0.5 * rw && std::abs(b) <= 0.5 * rh) chosen.push_back(cell);
        }
    } else {
        const Rect r = defect_rect(count, W, H);
        const int rows = r.h + (r.remainder > 0 ? 1 : 0);
        const int u0 = std::clamp(static_cast<int>(std::lround(cu - 0.5 * (r.w - 1))), lo0, hi0 - r.w + 1);
        const int v0 = spec.at_edge
                           ? hi1 - rows + 1
                           : std::clamp(static_cast<int>(std::lround(cv - 0.5 * (rows - 1))), lo1, hi1 - rows + 1);
        for (int dv = 0; dv < rows; ++dv) {
            const int width = dv < r.h ? r.w : r.remainder;
            for (int du = 0; du < width; ++du) {
                const Cell cell{u0 + du, v0 + dv};
                if (c.columns.contains(cell)) chosen.push_back(cell);
            }
        }
    }

    DefectResult out;
    for (const auto& cell : chosen) {
        ++out.removed_cells;
        for (auto v : c.columns.at(cell)) {
            labels[static_cast<std::size_t>(v)] = 0;
            ++out.removed_voxels;
        }
    }
    return out;
}

BinaryMask union_of(const LabelVolume& labels, std::initializer_list<int> set) {
    BinaryMask out(labels.geometry());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int v = labels[i];
        out[i] = std::find(set.begin(), set.end(), v) != set.end() ? 1 : 0;
    }
    return out;
}

}  // namespace

std::string_view phantom_kind_name(PhantomKind kind) {
    switch (kind) {
        case PhantomKind::slab: return "slab";
        case PhantomKind::cuboid_defect: return "cuboid_defect";
        case PhantomKind::shell: return "shell";
        case PhantomKind::two_lobe_fc: return "two_lobe_fc";
        case PhantomKind::tibial_disc: return "tibial_disc";
        case PhantomKind::knee: return "knee";
    }
    return "unknown";
}

PhantomKind phantom_kind_from_name(std::string_view name) {
    for (auto k : {PhantomKind::slab, PhantomKind::cuboid_defect, PhantomKind::shell, PhantomKind::two_lobe_fc,
                   PhantomKind::tibial_disc, PhantomKind::knee}) {
        if (phantom_kind_name(k) == name) return k;
    }
    throw InvalidArgument("unknown phantom kind: " + std::string(name));
}

PhantomSpec default_phantom_spec(PhantomKind kind) {
    PhantomSpec s;
    s.kind = kind;
    switch (kind) {
        case PhantomKind::slab: s.dims = {48, 48, 10}; break;
        case PhantomKind::cuboid_defect:
            s.dims = {48, 48, 10};
            s.defect = DefectSpec{};
            s.defect->location = std::array<double, 2>{0.5, 0.5};
            break;
        case PhantomKind::shell: s.dims = {40, 40, 34}; break;
        case PhantomKind::two_lobe_fc: s.dims = {96, 72, 48}; break;
        case PhantomKind::tibial_disc: s.dims = {56, 48, 16}; break;
        case PhantomKind::knee: s.dims = {96, 72, 80}; break;
    }
    return s;
}

Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed) {
    if (!(spec.thickness_mm > 0.0)) throw InvalidArgument("phantom thickness must be positive");
    if (spec.defect && !(spec.defect->fraction > 0.0 && spec.defect->fraction < 1.0)) {
        throw InvalidArgument("defect fraction must lie in (0, 1)");
    }
    Geometry g;
    g.dims = spec.dims;
    g.spacing = spec.spacing;
    g.validate();
    Canvas canvas(g);
    const auto& d = spec.dims;
    std::vector<CompartmentBuild> comps;
    PhantomTruth truth;
    double thickness_mm = 0.0;
    const double col_area = spec.spacing[0] * spec.spacing[1];

    switch (spec.kind) {
        case PhantomKind::slab:
        case PhantomKind::cuboid_defect: {
            const int t = thickness_voxels(spec.thickness_mm, spec.spacing[2]);
            if (d[0] < 2 * kFootprintMargin + 2 || d[1] < 2 * kFootprintMargin + 2 || d[2] < 5 + t) {
                throw InvalidArgument("grid dims too small for a slab phantom");
            }
            fill_box(canvas, {kBoneMargin, kBoneMargin, 1}, {d[0] - kBoneMargin, d[1] - kBoneMargin, 4}, kTibia);
            CompartmentBuild c{"MTC", kMedialCart, kTibia, {}, col_area};
            for (int i = kFootprintMargin; i < d[0] - kFootprintMargin; ++i) {
                for (int j = kFootprintMargin; j < d[1] - kFootprintMargin; ++j) {
                    for (int k = 4; k < 4 + t; ++k) canvas.set_cart(c, {i, j}, i, j, k);
                }
            }
            comps.push_back(std::move(c));
            thickness_mm = t * spec.spacing[2];
            truth.footprint_lo = {kFootprintMargin, kFootprintMargin, 4};
            truth.footprint_hi = {d[0] - kFootprintMargin, d[1] - kFootprintMargin, 4 + t};
            break;
        }
        case PhantomKind::shell: {
            const int t = thickness_voxels(spec.thickness_mm, spec.spacing[1]);
            constexpr double R = 12.0;
            const double y0 = 0.5 * (d[1] - 1);
            const double z0 = 14.0;
            const double r_mid = R + 0.5 * t;
            CompartmentBuild c{"FC", kFemoralCart, kFemur, {}, col_area};
            for (int i = kBoneMargin; i < d[0] - kBoneMargin; ++i) {
                for (int j = 0; j < d[1]; ++j) {
                    for (int k = 0; k < d[2]; ++k) {
                        const double dy = j - y0;
                        const double dz = k - z0;
                        const double r = std::hypot(dy, dz);
                        if (r <= R) {
                            canvas.set(i, j, k, kFemur);
                        } else if (r <= R + t && dz >= 0.0 && i >= kFootprintMargin && i < d[0] - kFootprintMargin) {
                            const int bin = static_cast<int>(std::floor(std::atan2(dz, dy) * r_mid));
                            canvas.set_cart(c, {i, bin}, i, j, k);
                        }
                    }
                }
            }
            comps.push_back(std::move(c));
            thickness_mm = t * spec.spacing[1];
            break;
        }
        case PhantomKind::two_lobe_fc:
        case PhantomKind::knee: {
            const int t = thickness_voxels(spec.thickness_mm, spec.spacing[2]);
            const double y0 = 36.0;
            const double z0 = spec.kind == PhantomKind::knee ? 40.0 : 24.0;
            CompartmentBuild fc{"FC", kFemoralCart, kFemur, {}, col_area};
            add_femur(canvas, fc, y0, z0, t);
            comps.push_back(std::move(fc));
            truth.notch = g.index_to_world(Vec3(47.5, y0, z0 - 14.0));
            if (spec.kind == PhantomKind::knee) {
                fill_box(canvas, {8, 12, 4}, {88, 60, 14}, kTibia);
                CompartmentBuild mtc{"MTC", kMedialCart, kTibia, {}, col_area};
                CompartmentBuild ltc{"LTC", kLateralCart, kTibia, {}, col_area};
                add_disc(canvas, mtc, 28.0, 36.0, 14, t);
                add_disc(canvas, ltc, 68.0, 36.0, 14, t);
                comps.push_back(std::move(mtc));
                comps.push_back(std::move(ltc));
            }
            thickness_mm = t * spec.spacing[2];
            break;
        }
        case PhantomKind::tibial_disc: {
            const int t = thickness_voxels(spec.thickness_mm, spec.spacing[2]);
            fill_box(canvas, {4, 2, 2}, {52, 46, 8}, kTibia);
            CompartmentBuild mtc{"MTC", kMedialCart, kTibia, {}, col_area};
            add_disc(canvas, mtc, 28.0, 24.0, 8, t);
            comps.push_back(std::move(mtc));
            thickness_mm = t * spec.spacing[2];
            break;
        }
    }

    Phantom p;
    p.spec = spec;
    p.intact_labels = canvas.labels;
    std::mt19937_64 rng(seed);
    std::int64_t intact_total = 0;
    std::int64_t removed_total = 0;
    std::vector<std::int64_t> removed_cells_of(comps.size(), 0);
    for (std::size_t ci = 0; ci < comps.size(); ++ci) {
        const auto& c = comps[ci];
        CompartmentTruth ct;
        ct.name = c.name;
        ct.cart_label = c.cart_label;
        ct.bone_label = c.bone_label;
        for (const auto& [_, vox] : c.columns) ct.intact_voxels += static_cast<std::int64_t>(vox.size());
        if (spec.defect) {
            const auto r = punch_defect(canvas.labels, c, *spec.defect, rng);
            ct.removed_voxels = r.removed_voxels;
            removed_cells_of[ci] = r.removed_cells;
        }
        ct.denuded_fraction =
            ct.intact_voxels > 0 ? static_cast<double>(ct.removed_voxels) / static_cast<double>(ct.intact_voxels) : 0.0;
        ct.footprint_area_mm2 = static_cast<double>(c.columns.size()) * c.cell_area;
        intact_total += ct.intact_voxels;
        removed_total += ct.removed_voxels;
        truth.footprint_columns += static_cast<std::int64_t>(c.columns.size());
        truth.defect_columns += removed_cells_of[ci];
        truth.footprint_area_mm2 += ct.footprint_area_mm2;
        truth.compartments.push_back(std::move(ct));
    }
    truth.thickness_mm = thickness_mm;
    truth.denuded_fraction =
        intact_total > 0 ? static_cast<double>(removed_total) / static_cast<double>(intact_total) : 0.0;

    if (spec.kind == PhantomKind::slab || spec.kind == PhantomKind::cuboid_defect) {
        truth.column_thickness.assign(static_cast<std::size_t>(d[0]) * d[1], 0.0);
        for (const auto& [cell, vox] : comps.front().columns) {
            const bool intact = canvas.labels[static_cast<std::size_t>(vox.front())] != 0;
            truth.column_thickness[static_cast<std::size_t>(cell.first) * d[1] + cell.second] =
                intact ? thickness_mm : 0.0;
        }
    }

    p.labels = std::move(canvas.labels);
    if (spec.side == KneeSide::left) {
        p.labels = mirror_x(p.labels);
        p.intact_labels = mirror_x(p.intact_labels);
        if (!truth.column_thickness.empty()) {
            auto mirrored = truth.column_thickness;
            for (int i = 0; i < d[0]; ++i) {
                for (int j = 0; j < d[1]; ++j) {
                    mirrored[static_cast<std::size_t>(d[0] - 1 - i) * d[1] + j] =
                        truth.column_thickness[static_cast<std::size_t>(i) * d[1] + j];
                }
            }
            truth.column_thickness = std::move(mirrored);
            const int lo = truth.footprint_lo[0];
            truth.footprint_lo[0] = d[0] - truth.footprint_hi[0];
            truth.footprint_hi[0] = d[0] - lo;
        }
        if (truth.notch) {
            Vec3 idx = g.world_to_index(*truth.notch);
            idx.x() = d[0] - 1 - idx.x();
            truth.notch = g.index_to_world(idx);
        }
    }
    p.cart = union_of(p.labels, {kFemoralCart, kMedialCart, kLateralCart});
    p.bone = union_of(p.labels, {kFemur, kTibia});
    p.intact_cart = union_of(p.intact_labels, {kFemoralCart, kMedialCart, kLateralCart});
    p.truth = std::move(truth);
    return p;
}

LabelVolume mirror_x(const LabelVolume& labels) {
    LabelVolume out(labels.geometry());
    const auto& d = labels.dims();
    for (int i = 0; i < d[0]; ++i) {
        for (int j = 0; j < d[1]; ++j) {
            for (int k = 0; k < d[2]; ++k) out.at(d[0] - 1 - i, j, k) = labels.at(i, j, k);
        }
    }
    return out;
}

}  // namespace kneemorph
