#include "kneemorph/parcellation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include <Eigen/SVD>

#include "kneemorph/spatial.hpp"

namespace kneemorph {
namespace {

constexpr std::array<std::string_view, kRegionCount> kNames = {
    "aMFC", "ecMFC", "ccMFC", "icMFC", "pMFC", "aLFC", "ecLFC", "ccLFC", "icLFC", "pLFC",
    "aMTC", "eMTC",  "pMTC",  "iMTC",  "cMTC", "aLTC", "eLTC",  "pLTC",  "iLTC",  "cLTC",
};

constexpr int kMinTibialVertices = 20;
constexpr double kCircularTolerance = 1e-3;

/// Rounds to a 1e-6 grid so sort keys ignore floating noise.
double quantize(double x) { return std::round(x * 1e6) / 1e6; }

double median_edge(const SurfacePatch& patch) {
    std::vector<double> lengths;
    const Surface& s = patch.surface();
    for (int v : patch.vertex_ids()) {
        for (int u : s.neighbors(v)) {
            if (u > v && patch.contains(u)) {
                lengths.push_back((s.vertices()[static_cast<std::size_t>(u)] - s.vertices()[static_cast<std::size_t>(v)]).norm());
            }
        }
    }
    if (lengths.empty()) return 1.0;
    auto mid = lengths.begin() + static_cast<std::ptrdiff_t>(lengths.size() / 2);
    std::nth_element(lengths.begin(), mid, lengths.end());
    return std::max(*mid, 1e-6);
}

/// Medial direction along x for a knee side in RAS (+x points to the
/// subject's right).
double medial_sign(KneeSide side) { return side == KneeSide::right ? -1.0 : 1.0; }

Region femoral(bool medial, int band) {
    // band: 0 anterior, 1 ec, 2 cc, 3 ic, 4 posterior
    return static_cast<Region>((medial ? 1 : 6) + band);
}

struct EllipseFit {
    TibialEllipse ellipse;
    std::vector<int> ids;
    std::vector<double> rho2;
    std::vector<double> du;
    std::vector<double> dv;
};

EllipseFit fit_ellipse(const SurfacePatch& tc) {
    EllipseFit f;
    f.ids = tc.vertex_ids();
    if (f.ids.size() < static_cast<std::size_t>(kMinTibialVertices)) {
        throw InvalidArgument("tibial parcellation needs at least 20 vertices");
    }
    const auto& verts = tc.surface().vertices();
    Vec3 c = Vec3::Zero();
    for (int v : f.ids) c += verts[static_cast<std::size_t>(v)];
    c /= static_cast<double>(f.ids.size());
    Eigen::MatrixXd p(static_cast<Eigen::Index>(f.ids.size()), 3);
    for (std::size_t i = 0; i < f.ids.size(); ++i) {
        p.row(static_cast<Eigen::Index>(i)) = (verts[static_cast<std::size_t>(f.ids[i])] - c).transpose();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(p, Eigen::ComputeThinV);
    TibialEllipse& e = f.ellipse;
    e.center = c;
    e.sigma1 = svd.singularValues()[0];
    e.sigma2 = svd.singularValues()[1];
    if (!(e.sigma2 > 0.0)) throw InvalidArgument("tibial patch is degenerate (collinear vertices)");
    const Vec3 normal = svd.matrixV().col(2);
    if (e.sigma1 - e.sigma2 <= kCircularTolerance * e.sigma1) {
        // Circular plate: principal axes are arbitrary, use x and y in plane.
        Vec3 x = Vec3::UnitX() - Vec3::UnitX().dot(normal) * normal;
        if (x.norm() < 1e-6) x = svd.matrixV().col(0);
        e.major_axis = x.normalized();
        e.minor_axis = normal.cross(e.major_axis).normalized();
    } else {
        e.major_axis = svd.matrixV().col(0);
        e.minor_axis = svd.matrixV().col(1);
    }
    const double ratio2 = e.sigma2 / e.sigma1;  // (d2/d1)^2
    for (int v : f.ids) {
        const Vec3 d = verts[static_cast<std::size_t>(v)] - c;
        const double u = e.major_axis.dot(d);
        const double w = e.minor_axis.dot(d);
        f.du.push_back(u);
        f.dv.push_back(w);
        f.rho2.push_back(u * u * ratio2 + w * w);
    }
    return f;
}

/// Central ellipse membership: the rho-ordered prefix whose area is closest
/// to kTibialCentralFraction of the plate.
std::vector<bool> central_prefix(const SurfacePatch& tc, EllipseFit& f, double exterior_sign) {
    const std::vector<double> areas = vertex_areas(tc);
    const auto& verts = tc.surface().vertices();
    std::vector<std::size_t> order(f.ids.size());
    std::iota(order.begin(), order.end(), 0);
    auto key = [&](std::size_t i) {
        const Vec3& p = verts[static_cast<std::size_t>(f.ids[i])];
        return std::make_tuple(quantize(f.rho2[i]), quantize(p.y()), quantize(p.z()), quantize(exterior_sign * p.x()));
    };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
    double total = 0.0;
    for (int v : f.ids) total += areas[static_cast<std::size_t>(v)];
    const double target = kTibialCentralFraction * total;
    double cum = 0.0;
    std::size_t best_n = 0;
    double best_err = target;
    for (std::size_t n = 0; n < order.size(); ++n) {
        cum += areas[static_cast<std::size_t>(f.ids[order[n]])];
        const double err = std::abs(cum - target);
        if (err < best_err) {
            best_err = err;
            best_n = n + 1;
        }
    }
    std::vector<bool> central(f.ids.size(), false);
    double rho_max = 0.0;
    for (std::size_t n = 0; n < best_n; ++n) {
        central[order[n]] = true;
        rho_max = std::max(rho_max, f.rho2[order[n]]);
    }
    const double scale = std::sqrt(rho_max);
    f.ellipse.semi_minor = scale;
    f.ellipse.semi_major = scale * std::sqrt(f.ellipse.sigma1 / f.ellipse.sigma2);
    return central;
}

}  // namespace

std::string_view region_name(Region r) { return kNames[static_cast<std::size_t>(region_code(r) - 1)]; }

std::optional<Region> region_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kNames.size(); ++i) {
        if (kNames[i] == name) return static_cast<Region>(i + 1);
    }
    return std::nullopt;
}

const std::array<Region, kRegionCount>& all_regions() {
    static const std::array<Region, kRegionCount> regions = [] {
        std::array<Region, kRegionCount> r{};
        for (int i = 0; i < kRegionCount; ++i) r[static_cast<std::size_t>(i)] = static_cast<Region>(i + 1);
        return r;
    }();
    return regions;
}

std::vector<int> SurfaceParcellation::vertices_of(Region r) const {
    std::vector<int> out;
    for (std::size_t v = 0; v < region.size(); ++v) {
        if (region[v] == region_code(r)) out.push_back(static_cast<int>(v));
    }
    return out;
}

NotchResult detect_intercondylar_notch(const SurfacePatch& fc) {
    if (fc.empty()) throw InvalidArgument("detect_intercondylar_notch: empty patch");
    const auto ids = fc.vertex_ids();
    const auto& verts = fc.surface().vertices();
    const double h = median_edge(fc);
    double xmin = std::numeric_limits<double>::max();
    double xmax = -xmin;
    Vec3 centroid = Vec3::Zero();
    for (int v : ids) {
        const Vec3& p = verts[static_cast<std::size_t>(v)];
        xmin = std::min(xmin, p.x());
        xmax = std::max(xmax, p.x());
        centroid += p;
    }
    centroid /= static_cast<double>(ids.size());
    NotchResult fallback{centroid, true};

    const int nb = static_cast<int>(std::lround((xmax - xmin) / h)) + 1;
    if (nb < 5) return fallback;
    auto bin_of = [&](double x) { return std::clamp(static_cast<int>(std::lround((x - xmin) / h)), 0, nb - 1); };
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> ymin(static_cast<std::size_t>(nb), inf);
    for (int v : ids) {
        const Vec3& p = verts[static_cast<std::size_t>(v)];
        auto& m = ymin[static_cast<std::size_t>(bin_of(p.x()))];
        m = std::min(m, p.y());
    }
    // Empty bins inside the range belong to the gap.
    double global = inf;
    for (double y : ymin) global = std::min(global, y);
    double interior_max = -inf;
    for (int b = 1; b + 1 < nb; ++b) {
        const double y = ymin[static_cast<std::size_t>(b)];
        interior_max = std::max(interior_max, std::isfinite(y) ? y : -inf);
    }
    if (!std::isfinite(interior_max) || interior_max - global < 2.0 * h) return fallback;
    const double threshold = 0.5 * (global + interior_max);

    struct Run {
        int begin;
        int end;
    };
    std::vector<Run> lobes;
    for (int b = 0; b < nb;) {
        if (!(ymin[static_cast<std::size_t>(b)] <= threshold)) {
            ++b;
            continue;
        }
        int e = b;
        while (e < nb && ymin[static_cast<std::size_t>(e)] <= threshold) ++e;
        lobes.push_back({b, e});
        b = e;
    }
    if (lobes.size() < 2) return fallback;
    std::vector<std::size_t> order(lobes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return lobes[a].end - lobes[a].begin > lobes[b].end - lobes[b].begin;
    });
    Run left = lobes[std::min(order[0], order[1])];
    Run right = lobes[std::max(order[0], order[1])];
    const int gap_begin = left.end;
    const int gap_end = right.begin;  // exclusive
    const double xc = xmin + h * 0.5 * (gap_begin + gap_end - 1);

    // Ridge vertex: most posterior in the gap, closest to its centre.
    int best = -1;
    std::tuple<double, double, double, int> best_key{inf, inf, inf, 0};
    for (int v : ids) {
        const Vec3& p = verts[static_cast<std::size_t>(v)];
        const int b = bin_of(p.x());
        if (b < gap_begin || b >= gap_end) continue;
        const auto key = std::make_tuple(quantize(p.y()), quantize(std::abs(p.x() - xc)), quantize(p.z()), v);
        if (best < 0 || key < best_key) {
            best = v;
            best_key = key;
        }
    }
    if (best < 0) return {Vec3(xc, centroid.y(), centroid.z()), false};
    const Vec3& p = verts[static_cast<std::size_t>(best)];
    return {Vec3(xc, p.y(), p.z()), false};
}

SurfaceParcellation parcellate_femoral(const SurfacePatch& fc, const Vec3& notch, KneeSide side) {
    if (fc.empty()) throw InvalidArgument("parcellate_femoral: empty patch");
    const auto ids = fc.vertex_ids();
    const auto& verts = fc.surface().vertices();
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
    Vec3 hi = -lo;
    for (int v : ids) {
        lo = lo.cwiseMin(verts[static_cast<std::size_t>(v)]);
        hi = hi.cwiseMax(verts[static_cast<std::size_t>(v)]);
    }
    const double tol = 1e-6;
    for (int a = 0; a < 3; ++a) {
        if (notch[a] < lo[a] - tol || notch[a] > hi[a] + tol) {
            throw InvalidArgument("parcellate_femoral: notch lies outside the patch bounding box");
        }
    }
    const double y_post = posterior_plane_y(notch.y(), lo.y());
    const double ms = medial_sign(side);

    SurfaceParcellation out;
    out.surface = fc.parent();
    out.side = side;
    out.region.assign(fc.surface().vertex_count(), 0);
    std::array<std::vector<int>, 2> central;  // [medial, lateral]
    for (int v : ids) {
        const Vec3& p = verts[static_cast<std::size_t>(v)];
        const bool medial = ms * (p.x() - notch.x()) > 0.0;
        int band = -1;
        if (p.y() > notch.y()) {
            band = 0;
        } else if (p.y() < y_post) {
            band = 4;
        }
        if (band >= 0) {
            out.region[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(region_code(femoral(medial, band)));
        } else {
            central[medial ? 0 : 1].push_back(v);
        }
    }
    // Equal-area thirds of each central band, from the notch outward.
    const std::vector<double> areas = vertex_areas(fc);
    for (int m = 0; m < 2; ++m) {
        auto& list = central[static_cast<std::size_t>(m)];
        auto key = [&](int v) {
            const Vec3& p = verts[static_cast<std::size_t>(v)];
            return std::make_tuple(quantize(std::abs(p.x() - notch.x())), quantize(p.y()), quantize(p.z()));
        };
        std::stable_sort(list.begin(), list.end(), [&](int a, int b) { return key(a) < key(b); });
        double total = 0.0;
        for (int v : list) total += areas[static_cast<std::size_t>(v)];
        double cum = 0.0;
        for (int v : list) {
            const double a = areas[static_cast<std::size_t>(v)];
            const double mid = total > 0.0 ? (cum + 0.5 * a) / total : 0.0;
            cum += a;
            const int third = std::clamp(static_cast<int>(std::floor(3.0 * mid)), 0, 2);
            const int band = 3 - third;  // 0 -> ic (3), 1 -> cc (2), 2 -> ec (1)
            out.region[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(region_code(femoral(m == 0, band)));
        }
    }
    return out;
}

TibialEllipse tibial_ellipse(const SurfacePatch& tc) {
    EllipseFit f = fit_ellipse(tc);
    central_prefix(tc, f, 1.0);
    return f.ellipse;
}

SurfaceParcellation parcellate_tibial(const SurfacePatch& tc, KneeSide side, TibialPlate plate) {
    EllipseFit f = fit_ellipse(tc);
    // Exterior points away from the knee centre: medially on the medial plate.
    const double ext_x = plate == TibialPlate::medial ? medial_sign(side) : -medial_sign(side);
    const std::vector<bool> central = central_prefix(tc, f, ext_x);
    const TibialEllipse& e = f.ellipse;

    const int base = plate == TibialPlate::medial ? region_code(Region::aMTC) : region_code(Region::aLTC);
    // Offsets from base: 0 anterior, 1 exterior, 2 posterior, 3 interior, 4 central.
    const std::array<Vec3, 4> dirs = {e.major_axis, Vec3(-e.major_axis), e.minor_axis, Vec3(-e.minor_axis)};
    std::size_t anterior = 0;
    for (std::size_t q = 1; q < 4; ++q) {
        if (dirs[q].y() > dirs[anterior].y() + 1e-12) anterior = q;
    }
    const std::size_t posterior = anterior ^ 1U;
    const std::size_t other = anterior < 2 ? 2 : 0;
    const std::size_t exterior = dirs[other].x() * ext_x >= dirs[other + 1].x() * ext_x ? other : other + 1;
    std::array<int, 4> offset{};
    offset[anterior] = 0;
    offset[posterior] = 2;
    offset[exterior] = 1;
    offset[exterior ^ 1U] = 3;

    SurfaceParcellation out;
    out.surface = tc.parent();
    out.side = side;
    out.region.assign(tc.surface().vertex_count(), 0);
    for (std::size_t i = 0; i < f.ids.size(); ++i) {
        int off = 4;
        if (!central[i]) {
            const double u = f.du[i];
            const double w = f.dv[i];
            const std::size_t q = std::abs(u) >= std::abs(w) ? (u >= 0.0 ? 0 : 1) : (w >= 0.0 ? 2 : 3);
            off = offset[q];
        }
        out.region[static_cast<std::size_t>(f.ids[i])] = static_cast<std::uint8_t>(base + off);
    }
    return out;
}

SurfaceParcellation merge_parcellations(const std::vector<SurfaceParcellation>& parts) {
    if (parts.empty()) throw InvalidArgument("merge_parcellations: nothing to merge");
    SurfaceParcellation out = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) {
        if (parts[i].surface != out.surface) throw InvalidArgument("merge_parcellations: parts differ in surface");
        for (std::size_t v = 0; v < out.region.size(); ++v) {
            if (out.region[v] == 0) out.region[v] = parts[i].region[v];
        }
    }
    return out;
}

LabelVolume labels_to_volume(const SurfaceParcellation& parcellation, const BinaryMask& cart) {
    std::vector<Vec3> pts;
    std::vector<std::uint8_t> codes;
    for (std::size_t v = 0; v < parcellation.region.size(); ++v) {
        if (parcellation.region[v] == 0) continue;
        pts.push_back(parcellation.surface->vertices()[v]);
        codes.push_back(parcellation.region[v]);
    }
    if (pts.empty()) throw InvalidArgument("labels_to_volume: parcellation is empty");
    const KdTree tree(pts);
    const Geometry& g = cart.geometry();
    LabelVolume out(g);
    for (std::size_t n = 0; n < cart.size(); ++n) {
        if (cart[n] == 0) continue;
        const Index3 idx = g.unravel(static_cast<std::int64_t>(n));
        const Vec3 w = g.index_to_world(idx[0], idx[1], idx[2]);
        const int first = tree.nearest_one(w);
        const double best = (tree.point(first) - w).norm();
        std::uint8_t code = codes[static_cast<std::size_t>(first)];
        for (int i : tree.within(w, best * (1.0 + 1e-12) + 1e-12)) code = std::min(code, codes[static_cast<std::size_t>(i)]);
        out[n] = code;
    }
    return out;
}

}  // namespace kneemorph
