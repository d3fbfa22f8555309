#include "kneemorph/thickness.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

#include "kneemorph/spatial.hpp"

namespace kneemorph {
namespace {

constexpr double kRankTolerance = 1e-6;
constexpr double kAmbiguousCosine = 1e-3;

std::vector<int> index_of_members(const SurfacePatch& patch, const std::vector<int>& ids) {
    std::vector<int> pos(patch.surface().vertex_count(), -1);
    for (std::size_t i = 0; i < ids.size(); ++i) pos[static_cast<std::size_t>(ids[i])] = static_cast<int>(i);
    return pos;
}

}  // namespace

NormalField estimate_normals_svd(const SurfacePatch& inner, int k) {
    if (k < 4) throw InvalidArgument("estimate_normals_svd: k must be at least 4");
    if (static_cast<int>(inner.size()) < k) {
        throw InvalidArgument("estimate_normals_svd: patch has fewer vertices than k");
    }
    NormalField out;
    out.patch = inner;
    out.vertex_ids = inner.vertex_ids();
    const auto& verts = inner.surface().vertices();
    std::vector<Vec3> pts;
    pts.reserve(out.vertex_ids.size());
    for (int v : out.vertex_ids) pts.push_back(verts[static_cast<std::size_t>(v)]);
    const KdTree tree(pts);

    out.normals.resize(pts.size(), Vec3::UnitZ());
    std::vector<std::uint8_t> degenerate(pts.size(), 0);
    std::vector<std::vector<int>> hoods(pts.size());
    Eigen::MatrixXd p(k, 3);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        hoods[i] = tree.nearest(pts[i], k);
        Vec3 mean = Vec3::Zero();
        for (int n : hoods[i]) mean += pts[static_cast<std::size_t>(n)];
        mean /= k;
        for (int r = 0; r < k; ++r) p.row(r) = (pts[static_cast<std::size_t>(hoods[i][static_cast<std::size_t>(r)])] - mean).transpose();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(p, Eigen::ComputeFullV);
        const auto& s = svd.singularValues();
        if (s[0] <= 0.0 || s[1] < kRankTolerance * s[0]) {
            degenerate[i] = 1;
            continue;
        }
        out.normals[i] = svd.matrixV().col(2).normalized();
    }
    // Rank-deficient neighbourhoods borrow the sign-aligned mean of valid neighbours.
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (degenerate[i] == 0) continue;
        out.degenerate.push_back(out.vertex_ids[i]);
        Vec3 acc = Vec3::Zero();
        for (int n : hoods[i]) {
            if (degenerate[static_cast<std::size_t>(n)] != 0) continue;
            const Vec3& m = out.normals[static_cast<std::size_t>(n)];
            acc += acc.dot(m) < 0.0 ? Vec3(-m) : m;
        }
        if (acc.norm() > 1e-12) out.normals[i] = acc.normalized();
    }
    return out;
}

NormalField reorient_normals(const NormalField& normals, const BinaryMask& cart, double radius_diagonals) {
    NormalField out = normals;
    const Surface& surf = normals.patch.surface();
    const Geometry& g = cart.geometry();
    const double radius = radius_diagonals * g.voxel_diagonal();
    const double r2 = radius * radius;
    Index3 reach{};
    for (int a = 0; a < 3; ++a) reach[a] = static_cast<int>(std::ceil(radius / g.spacing[a])) + 1;

    std::vector<int> state(out.vertex_ids.size(), 0);  // +1 oriented, 0 ambiguous
    for (std::size_t i = 0; i < out.vertex_ids.size(); ++i) {
        const Vec3& p = surf.vertices()[static_cast<std::size_t>(out.vertex_ids[i])];
        const Vec3 ci = g.world_to_index(p);
        Vec3 sum = Vec3::Zero();
        std::int64_t count = 0;
        Index3 lo{};
        Index3 hi{};
        for (int a = 0; a < 3; ++a) {
            const int c = static_cast<int>(std::floor(ci[a]));
            lo[a] = std::max(0, c - reach[a]);
            hi[a] = std::min(g.dims[a] - 1, c + reach[a]);
        }
        for (int x = lo[0]; x <= hi[0]; ++x) {
            for (int y = lo[1]; y <= hi[1]; ++y) {
                for (int z = lo[2]; z <= hi[2]; ++z) {
                    if (cart.at(x, y, z) == 0) continue;
                    const Vec3 w = g.index_to_world(x, y, z);
                    if ((w - p).squaredNorm() <= r2) {
                        sum += w;
                        ++count;
                    }
                }
            }
        }
        if (count == 0) continue;
        const Vec3 offset = sum / static_cast<double>(count) - p;
        const double len = offset.norm();
        const double d = out.normals[i].dot(offset);
        if (len <= 1e-12 || std::abs(d) <= kAmbiguousCosine * len) continue;
        if (d < 0.0) out.normals[i] = -out.normals[i];
        state[i] = 1;
    }

    // Ambiguous vertices follow the majority of their oriented neighbours.
    const std::vector<int> pos = index_of_members(normals.patch, out.vertex_ids);
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < out.vertex_ids.size(); ++i) {
            if (state[i] != 0) continue;
            int agree = 0;
            int disagree = 0;
            for (int u : surf.neighbors(out.vertex_ids[i])) {
                const int j = pos[static_cast<std::size_t>(u)];
                if (j < 0 || state[static_cast<std::size_t>(j)] == 0) continue;
                if (out.normals[i].dot(out.normals[static_cast<std::size_t>(j)]) >= 0.0) {
                    ++agree;
                } else {
                    ++disagree;
                }
            }
            if (agree + disagree == 0) continue;
            if (disagree > agree) out.normals[i] = -out.normals[i];
            state[i] = 1;
            changed = true;
        }
    }
    return out;
}

NormalField smooth_normals(const NormalField& normals, int iterations) {
    NormalField out = normals;
    const Surface& surf = normals.patch.surface();
    const std::vector<int> pos = index_of_members(normals.patch, out.vertex_ids);
    for (int it = 0; it < iterations; ++it) {
        std::vector<Vec3> next(out.normals.size());
        for (std::size_t i = 0; i < out.vertex_ids.size(); ++i) {
            Vec3 acc = out.normals[i];
            for (int u : surf.neighbors(out.vertex_ids[i])) {
                const int j = pos[static_cast<std::size_t>(u)];
                if (j >= 0) acc += out.normals[static_cast<std::size_t>(j)];
            }
            const double len = acc.norm();
            next[i] = len > 1e-12 ? Vec3(acc / len) : out.normals[i];
        }
        out.normals = std::move(next);
    }
    return out;
}

ThicknessMap measure_thickness(const SurfacePatch& inner, const SurfacePatch& outer, const NormalField& normals,
                               double max_ray_mm) {
    if (inner.parent() != outer.parent()) throw InvalidArgument("measure_thickness: patches differ in surface");
    ThicknessMap out;
    out.patch = inner;
    out.vertex_ids = inner.vertex_ids();
    out.values.assign(out.vertex_ids.size(), ThicknessMap::kNoThickness);
    const TriangleBvh bvh(outer.parent(), outer.induced_faces());
    std::vector<int> normal_of(inner.surface().vertex_count(), -1);
    for (std::size_t i = 0; i < normals.vertex_ids.size(); ++i) {
        normal_of[static_cast<std::size_t>(normals.vertex_ids[i])] = static_cast<int>(i);
    }
    const auto& verts = inner.surface().vertices();
    for (std::size_t i = 0; i < out.vertex_ids.size(); ++i) {
        const int v = out.vertex_ids[i];
        const int n = normal_of[static_cast<std::size_t>(v)];
        if (n < 0) continue;
        const auto hit = bvh.cast(verts[static_cast<std::size_t>(v)], normals.normals[static_cast<std::size_t>(n)],
                                  max_ray_mm, 0.0);
        if (hit) out.values[i] = hit->distance;
    }
    return out;
}

ThicknessMap thickness_3dnn(const SurfacePatch& inner, const SurfacePatch& outer) {
    if (inner.empty() || outer.empty()) throw InvalidArgument("thickness_3dnn: patches must be nonempty");
    const auto& verts = outer.surface().vertices();
    std::vector<Vec3> pts;
    for (int v : outer.vertex_ids()) pts.push_back(verts[static_cast<std::size_t>(v)]);
    const KdTree tree(pts);
    ThicknessMap out;
    out.patch = inner;
    out.vertex_ids = inner.vertex_ids();
    out.values.reserve(out.vertex_ids.size());
    for (int v : out.vertex_ids) {
        const Vec3& p = inner.surface().vertices()[static_cast<std::size_t>(v)];
        out.values.push_back((tree.point(tree.nearest_one(p)) - p).norm());
    }
    return out;
}

CartilageSurfaces segment_cartilage_surfaces(const BinaryMask& cart, const BinaryMask& bone,
                                             const ThicknessParams& params) {
    require_same_grid(cart.geometry(), bone.geometry(), "segment_cartilage_surfaces");
    CartilageSurfaces s;
    s.mesh = mesh_from_mask(cart);
    const BinaryMask vin = inner_surface_voxels(cart, bone, Connectivity::face6, params.gap_rounds);
    const BinaryMask vout = outer_surface_voxels(cart, vin);
    s.inner_raw = patch_from_voxels(s.mesh, vin);
    s.outer_raw = patch_from_voxels(s.mesh, vout);
    const SurfacePatch all(s.mesh, true);
    s.inner = surface_close(s.inner_raw, all, params.close_dilate, params.close_erode);
    s.outer = restricted_dilate(s.outer_raw - s.inner, all, PatchBoundaryRestriction{s.inner.vertex_ids()});
    return s;
}

ThicknessResult map_thickness(const BinaryMask& cart, const BinaryMask& bone, const ThicknessParams& params) {
    ThicknessResult r;
    r.surfaces = segment_cartilage_surfaces(cart, bone, params);
    if (r.surfaces.inner.empty()) throw InvalidArgument("map_thickness: no bone-cartilage interface found");
    const int k = std::min(params.neighbors, static_cast<int>(r.surfaces.inner.size()));
    NormalField n = estimate_normals_svd(r.surfaces.inner, k);
    n = reorient_normals(n, cart, params.orientation_radius);
    r.normals = smooth_normals(n, params.smooth_iterations);
    r.thickness = measure_thickness(r.surfaces.inner, r.surfaces.outer, r.normals, params.max_ray_mm);
    return r;
}

ThicknessMap transfer_thickness(const ThicknessMap& source, const SurfacePatch& target, double max_distance_mm) {
    ThicknessMap out;
    out.patch = target;
    out.vertex_ids = target.vertex_ids();
    out.values.assign(out.vertex_ids.size(), ThicknessMap::kNoThickness);
    if (source.vertex_ids.empty()) return out;
    std::vector<Vec3> pts;
    pts.reserve(source.vertex_ids.size());
    for (int v : source.vertex_ids) pts.push_back(source.patch.surface().vertices()[static_cast<std::size_t>(v)]);
    const KdTree tree(pts);
    for (std::size_t i = 0; i < out.vertex_ids.size(); ++i) {
        const Vec3& p = target.surface().vertices()[static_cast<std::size_t>(out.vertex_ids[i])];
        const int j = tree.nearest_one(p);
        if ((tree.point(j) - p).norm() <= max_distance_mm) out.values[i] = source.values[static_cast<std::size_t>(j)];
    }
    return out;
}

std::vector<double> thickness_by_vertex(const ThicknessMap& map) {
    std::vector<double> out(map.patch.parent() ? map.patch.surface().vertex_count() : 0, ThicknessMap::kNoThickness);
    for (std::size_t i = 0; i < map.vertex_ids.size(); ++i) {
        out[static_cast<std::size_t>(map.vertex_ids[i])] = map.values[i];
    }
    return out;
}

}  // namespace kneemorph
