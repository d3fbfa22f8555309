#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "kneemorph/phantom.hpp"
#include "kneemorph/thickness.hpp"
#include "test_support.hpp"

using namespace kneemorph;

namespace {

Phantom slab(Vec3 spacing = {1.0, 1.0, 1.0}, double thickness = 3.0) {
    PhantomSpec spec = default_phantom_spec(PhantomKind::slab);
    spec.spacing = spacing;
    spec.thickness_mm = thickness;
    spec.dims = {48, 48, 5 + static_cast<int>(std::lround(thickness / spacing.z())) + 1};
    return generate_phantom(spec);
}

/// Column thickness truth under an inner vertex, or -1 when the vertex is not
/// at least `margin` voxels inside the cartilage footprint.
double truth_under(const Phantom& ph, const Vec3& p, int margin) {
    const Geometry& g = ph.labels.geometry();
    const Vec3 idx = g.world_to_index(p);
    const int ny = g.dims[1];
    for (int di = -margin; di <= margin; ++di)
        for (int dj = -margin; dj <= margin; ++dj) {
            const int i = static_cast<int>(std::floor(idx.x())) + di;
            const int j = static_cast<int>(std::floor(idx.y())) + dj;
            if (i < 0 || j < 0 || i >= g.dims[0] || j >= ny) return -1.0;
            if (ph.truth.column_thickness[static_cast<std::size_t>(i * ny + j)] <= 0.0) return -1.0;
        }
    return ph.truth.column_thickness[static_cast<std::size_t>(static_cast<int>(std::floor(idx.x())) * ny +
                                                              static_cast<int>(std::floor(idx.y())))];
}

SurfacePatch flat_top(int n) {
    BinaryMask m(kmtest::grid(n, n, 3));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m.at(i, j, 1) = 1;
    const SurfacePtr s = mesh_from_mask(m);
    SurfacePatch top(s);
    for (std::size_t v = 0; v < s->vertex_count(); ++v)
        if (std::abs(s->vertices()[v].z() - 1.5) < 1e-9) top.insert(static_cast<int>(v));
    return top;
}

}  // namespace

TEST(Normals, PlaneGivesAxisNormal) {
    const SurfacePatch top = flat_top(10);
    const NormalField n = estimate_normals_svd(top, 16);
    ASSERT_EQ(n.normals.size(), top.size());
    for (const Vec3& v : n.normals) {
        EXPECT_NEAR(std::abs(v.z()), 1.0, 1e-9);
        EXPECT_NEAR(v.norm(), 1.0, 1e-12);
    }
    EXPECT_TRUE(n.degenerate.empty());
    EXPECT_THROW((void)estimate_normals_svd(top, 3), InvalidArgument);
    EXPECT_THROW((void)estimate_normals_svd(top, static_cast<int>(top.size()) + 1), InvalidArgument);
}

TEST(Normals, SphereNormalsAreRadial) {
    BinaryMask m(kmtest::grid(21, 21, 21));
    for (int i = 0; i < 21; ++i)
        for (int j = 0; j < 21; ++j)
            for (int k = 0; k < 21; ++k)
                if ((Vec3(i, j, k) - Vec3(10, 10, 10)).norm() <= 8.0) m.at(i, j, k) = 1;
    const SurfacePtr s = mesh_from_mask(m);
    const SurfacePatch all(s, true);
    NormalField n = estimate_normals_svd(all, 16);
    n = reorient_normals(n, m, 5.0);
    n = smooth_normals(n, 3);
    double worst = 1.0;
    for (std::size_t i = 0; i < n.vertex_ids.size(); ++i) {
        const Vec3 inward = (Vec3(10, 10, 10) - s->vertices()[static_cast<std::size_t>(n.vertex_ids[i])]).normalized();
        worst = std::min(worst, n.normals[i].dot(inward));
    }
    // Every normal points into the object and within 30 degrees of radial.
    EXPECT_GT(worst, std::cos(30.0 * M_PI / 180.0));
}

TEST(Normals, ReorientFlipsTowardCartilage) {
    const SurfacePatch top = flat_top(12);
    NormalField n = estimate_normals_svd(top, 16);
    for (auto& v : n.normals) v = Vec3(0, 0, 1);
    n.normals[0] = Vec3(0, 0, -1);
    // Cartilage lies below the plane z = 1.5.
    BinaryMask cart(kmtest::grid(12, 12, 3));
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j) cart.at(i, j, 1) = cart.at(i, j, 0) = 1;
    const NormalField r = reorient_normals(n, cart, 5.0);
    for (const Vec3& v : r.normals) EXPECT_DOUBLE_EQ(v.z(), -1.0);
}

TEST(Normals, SmoothingKeepsUniformFieldAndUnitLength) {
    const SurfacePatch top = flat_top(8);
    NormalField n = estimate_normals_svd(top, 8);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    for (auto& v : n.normals) v = Vec3(0.2 * g(rng), 0.2 * g(rng), 1.0).normalized();
    const NormalField s = smooth_normals(n, 3);
    double spread_before = 0.0, spread_after = 0.0;
    for (std::size_t i = 0; i < n.normals.size(); ++i) {
        EXPECT_NEAR(s.normals[i].norm(), 1.0, 1e-12);
        spread_before += 1.0 - n.normals[i].z();
        spread_after += 1.0 - s.normals[i].z();
    }
    EXPECT_LT(spread_after, spread_before);
    for (auto& v : n.normals) v = Vec3(0, 0, 1);
    for (const Vec3& v : smooth_normals(n, 5).normals) EXPECT_DOUBLE_EQ(v.z(), 1.0);
}

TEST(Thickness, SlabInteriorIsExact) {
    for (const Vec3 spacing : {Vec3(1.0, 1.0, 1.0), Vec3(0.8, 0.8, 0.5)}) {
        const Phantom ph = slab(spacing);
        const ThicknessResult r = map_thickness(ph.cart, ph.bone);
        int checked = 0;
        for (std::size_t i = 0; i < r.thickness.vertex_ids.size(); ++i) {
            const Vec3& p = r.surfaces.mesh->vertices()[static_cast<std::size_t>(r.thickness.vertex_ids[i])];
            // Rim normals tilt; the tilt reaches six rings inward through the
            // neighbourhood and the smoothing rounds.
            const double truth = truth_under(ph, p, 7);
            if (truth <= 0.0) continue;
            ++checked;
            EXPECT_NEAR(r.thickness.values[i], truth, 1e-6);
        }
        EXPECT_GT(checked, 200);
    }
}

TEST(Thickness, NearestNeighbourBaselineOnSlab) {
    const Phantom ph = slab();
    const CartilageSurfaces s = segment_cartilage_surfaces(ph.cart, ph.bone);
    const ThicknessMap nn = thickness_3dnn(s.inner, s.outer);
    for (std::size_t i = 0; i < nn.vertex_ids.size(); ++i) {
        const Vec3& p = s.mesh->vertices()[static_cast<std::size_t>(nn.vertex_ids[i])];
        if (truth_under(ph, p, 4) > 0.0) EXPECT_NEAR(nn.values[i], 3.0, 1e-9);
        EXPECT_LE(nn.values[i], 3.0 + 1e-9);
    }
}

TEST(Thickness, SurfacesPartitionTheMesh) {
    const Phantom ph = slab();
    const CartilageSurfaces s = segment_cartilage_surfaces(ph.cart, ph.bone);
    EXPECT_TRUE(s.inner_raw.is_subset_of(s.inner));
    EXPECT_EQ((s.inner & s.outer).size(), 0u);
    EXPECT_EQ((s.inner | s.outer).size(), s.mesh->vertex_count());
    // Inner vertices lie on the bone contact plane or, where the closing
    // climbs the rim, on the footprint side walls.
    const double lo = ph.truth.footprint_lo[0] - 0.5;
    const double hi = ph.truth.footprint_hi[0] - 0.5;
    for (const SurfacePatch* patch : {&s.inner_raw, &s.inner}) {
        for (int v : patch->vertex_ids()) {
            const Vec3& p = s.mesh->vertices()[static_cast<std::size_t>(v)];
            const bool wall = p.x() == lo || p.x() == hi || p.y() == lo || p.y() == hi;
            if (!wall) EXPECT_NEAR(p.z(), 3.5, 1e-9);
        }
    }
}

TEST(Thickness, MissingOuterGivesUndefined) {
    const Phantom ph = slab();
    const CartilageSurfaces s = segment_cartilage_surfaces(ph.cart, ph.bone);
    NormalField n = estimate_normals_svd(s.inner, 16);
    n = reorient_normals(n, ph.cart);
    const ThicknessMap m = measure_thickness(s.inner, s.outer, n, 2.0);
    for (double t : m.values) EXPECT_FALSE(ThicknessMap::defined(t));
}

TEST(Thickness, TransferUsesNearestWithinRadius) {
    const SurfacePatch top = flat_top(6);
    ThicknessMap src;
    src.patch = SurfacePatch(top.parent(), std::vector<int>{top.vertex_ids()[0]});
    src.vertex_ids = src.patch.vertex_ids();
    src.values = {2.5};
    const ThicknessMap out = transfer_thickness(src, top, 1.0);
    const Vec3 origin = top.surface().vertices()[static_cast<std::size_t>(src.vertex_ids[0])];
    for (std::size_t i = 0; i < out.vertex_ids.size(); ++i) {
        const double d = (top.surface().vertices()[static_cast<std::size_t>(out.vertex_ids[i])] - origin).norm();
        EXPECT_EQ(out.values[i], d <= 1.0 ? 2.5 : ThicknessMap::kNoThickness);
    }
    const auto by_vertex = thickness_by_vertex(src);
    EXPECT_EQ(by_vertex[static_cast<std::size_t>(src.vertex_ids[0])], 2.5);
}

TEST(Thickness, NoInterfaceThrows) {
    const Phantom ph = slab();
    BinaryMask far_bone(ph.bone.geometry());
    far_bone.at(0, 0, 0) = 1;
    EXPECT_THROW((void)map_thickness(ph.cart, far_bone), InvalidArgument);
}
