#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <map>
#include <random>
#include <set>

#include "kneemorph/surface.hpp"
#include "test_support.hpp"

using namespace kneemorph;

namespace {

std::map<std::pair<int, int>, int> edge_use(const Surface& s) {
    std::map<std::pair<int, int>, int> use;
    for (const auto& f : s.faces())
        for (int c = 0; c < 3; ++c) {
            const int a = f[c], b = f[(c + 1) % 3];
            ++use[{std::min(a, b), std::max(a, b)}];
        }
    return use;
}

double signed_volume(const Surface& s) {
    double v = 0.0;
    for (const auto& f : s.faces()) {
        const Vec3& a = s.vertices()[static_cast<std::size_t>(f[0])];
        const Vec3& b = s.vertices()[static_cast<std::size_t>(f[1])];
        const Vec3& c = s.vertices()[static_cast<std::size_t>(f[2])];
        v += a.dot(b.cross(c)) / 6.0;
    }
    return v;
}

int exposed_faces(const BinaryMask& m) {
    const Geometry& g = m.geometry();
    int n = 0;
    for (int i = 0; i < g.dims[0]; ++i)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int k = 0; k < g.dims[2]; ++k) {
                if (!m.at(i, j, k)) continue;
                const int nb[6][3] = {{i - 1, j, k}, {i + 1, j, k}, {i, j - 1, k},
                                      {i, j + 1, k}, {i, j, k - 1}, {i, j, k + 1}};
                for (const auto& q : nb)
                    if (!g.contains(q[0], q[1], q[2]) || !m.at(q[0], q[1], q[2])) ++n;
            }
    return n;
}

BinaryMask box(const Geometry& g, Index3 lo, Index3 hi) {
    BinaryMask m(g);
    for (int i = lo[0]; i < hi[0]; ++i)
        for (int j = lo[1]; j < hi[1]; ++j)
            for (int k = lo[2]; k < hi[2]; ++k) m.at(i, j, k) = 1;
    return m;
}

/// Vertices of the top face (z = top) of a box mesh with their lattice (x, y).
std::map<int, std::pair<int, int>> top_vertices(const Surface& s, double top) {
    std::map<int, std::pair<int, int>> out;
    for (std::size_t v = 0; v < s.vertex_count(); ++v) {
        const Vec3& p = s.vertices()[v];
        if (std::abs(p.z() - top) < 1e-9) {
            out[static_cast<int>(v)] = {static_cast<int>(std::lround(p.x() + 0.5)),
                                        static_cast<int>(std::lround(p.y() + 0.5))};
        }
    }
    return out;
}

}  // namespace

TEST(Mesh, SingleVoxel) {
    BinaryMask m(kmtest::grid(3, 3, 3));
    m.at(1, 1, 1) = 1;
    const SurfacePtr s = mesh_from_mask(m);
    EXPECT_EQ(s->vertex_count(), 8u);
    EXPECT_EQ(s->face_count(), 12u);
    EXPECT_NEAR(s->total_area(), 6.0, 1e-12);
    EXPECT_NEAR(signed_volume(*s), 1.0, 1e-12);
    for (std::size_t v = 0; v < 8; ++v) {
        const Vec3 d = (s->vertices()[v] - Vec3(1, 1, 1)).cwiseAbs();
        EXPECT_LT((d - Vec3(0.5, 0.5, 0.5)).norm(), 1e-12);
        EXPECT_EQ(s->source_voxel(static_cast<int>(v)), m.geometry().linear(1, 1, 1));
    }
}

TEST(Mesh, AnisotropicSpacingArea) {
    BinaryMask m(kmtest::grid(1, 1, 1, {0.5, 1.0, 2.0}));
    m.at(0, 0, 0) = 1;
    const SurfacePtr s = mesh_from_mask(m);
    EXPECT_NEAR(s->total_area(), 2.0 * (0.5 + 2.0 + 1.0), 1e-12);
    EXPECT_NEAR(signed_volume(*s), 1.0, 1e-12);
}

TEST(Mesh, ClosedBoxEulerCharacteristic) {
    const Geometry g = kmtest::grid(6, 6, 6);
    const SurfacePtr s = mesh_from_mask(box(g, {1, 1, 1}, {5, 4, 3}));
    const auto use = edge_use(*s);
    for (const auto& [e, n] : use) EXPECT_EQ(n, 2);
    const long chi = static_cast<long>(s->vertex_count()) - static_cast<long>(use.size()) +
                     static_cast<long>(s->face_count());
    EXPECT_EQ(chi, 2);
    EXPECT_NEAR(s->total_area(), 2.0 * (4 * 3 + 4 * 2 + 3 * 2), 1e-12);
}

TEST(Mesh, RandomMasksAreaAndEnclosedVolume) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const Geometry g = kmtest::grid(8, 8, 8, {0.7, 0.9, 1.3});
        const BinaryMask m = kmtest::random_boxes(g, rng, 5, 4);
        const SurfacePtr s = mesh_from_mask(m);
        EXPECT_EQ(s->face_count(), 2u * static_cast<std::size_t>(exposed_faces(m)));
        EXPECT_NEAR(signed_volume(*s), count_set(m) * g.voxel_volume(), 1e-9);
        for (const auto& [e, n] : edge_use(*s)) EXPECT_EQ(n % 2, 0);
    }
}

TEST(Mesh, EmptyMaskThrows) {
    EXPECT_THROW((void)mesh_from_mask(BinaryMask(kmtest::grid(2, 2, 2))), InvalidArgument);
}

TEST(Surface, FromTrianglesValidates) {
    std::vector<Vec3> v{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    EXPECT_THROW((void)Surface::from_triangles(v, {{0, 1, 3}}), InvalidArgument);
    EXPECT_THROW((void)Surface::from_triangles(v, {{0, 1, 1}}), InvalidArgument);
    const SurfacePtr s = Surface::from_triangles(v, {{0, 1, 2}});
    EXPECT_EQ(s->neighbors(0), (std::vector<int>{1, 2}));
    EXPECT_NEAR(s->face_area(0), 0.5, 1e-15);
    Mat3 r;
    r << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    EXPECT_NEAR(s->transformed(r, Vec3(1, 2, 3))->total_area(), 0.5, 1e-15);
}

TEST(Patch, SetAlgebraAndAreas) {
    const Geometry g = kmtest::grid(5, 5, 5);
    const SurfacePtr s = mesh_from_mask(box(g, {1, 1, 1}, {4, 4, 4}));
    std::mt19937_64 rng(2);
    std::bernoulli_distribution coin(0.5);
    SurfacePatch a(s), b(s);
    for (int v = 0; v < static_cast<int>(s->vertex_count()); ++v) {
        if (coin(rng)) a.insert(v);
        if (coin(rng)) b.insert(v);
    }
    const SurfacePatch u = a | b, x = a & b, d = a - b;
    for (int v = 0; v < static_cast<int>(s->vertex_count()); ++v) {
        EXPECT_EQ(u.contains(v), a.contains(v) || b.contains(v));
        EXPECT_EQ(x.contains(v), a.contains(v) && b.contains(v));
        EXPECT_EQ(d.contains(v), a.contains(v) && !b.contains(v));
    }
    EXPECT_TRUE(x.is_subset_of(a));
    EXPECT_TRUE(a.is_subset_of(u));
    EXPECT_EQ(u.size(), a.size() + b.size() - x.size());

    const SurfacePatch all(s, true);
    EXPECT_NEAR(all.area(), 54.0, 1e-12);
    double sum = 0.0;
    for (double w : vertex_areas(all)) sum += w;
    EXPECT_NEAR(sum, 54.0, 1e-12);
    EXPECT_THROW(a.insert(-1), InvalidArgument);
}

TEST(Patch, FromVoxelsSelectsCorners) {
    const Geometry g = kmtest::grid(6, 6, 6);
    const BinaryMask m = box(g, {1, 1, 1}, {5, 5, 5});
    const SurfacePtr s = mesh_from_mask(m);
    BinaryMask one(g);
    one.at(1, 1, 1) = 1;
    const SurfacePatch p = patch_from_voxels(s, one);
    // Seven of the eight corners of a box-corner voxel lie on the surface.
    std::set<int> expected;
    for (std::size_t v = 0; v < s->vertex_count(); ++v) {
        const Vec3 d = (s->vertices()[v] - Vec3(1, 1, 1)).cwiseAbs();
        if (d.maxCoeff() <= 0.5 + 1e-12) expected.insert(static_cast<int>(v));
    }
    EXPECT_EQ(expected.size(), 7u);
    const auto ids = p.vertex_ids();
    EXPECT_EQ(std::set<int>(ids.begin(), ids.end()), expected);

    BinaryMask other(kmtest::grid(6, 6, 7));
    EXPECT_THROW((void)patch_from_voxels(s, other), GeometryMismatch);
}

TEST(Patch, ClosingFillsPunchedHole) {
    const Geometry g = kmtest::grid(24, 24, 4);
    const SurfacePtr s = mesh_from_mask(box(g, {1, 1, 1}, {23, 23, 3}));
    const auto top = top_vertices(*s, 2.5);
    SurfacePatch patch(s);
    std::vector<int> hole;
    int centre = -1;
    for (const auto& [v, xy] : top) {
        const int r = std::max(std::abs(xy.first - 12), std::abs(xy.second - 12));
        if (r == 0) centre = v;
        if (r <= 1) {
            hole.push_back(v);
        } else {
            patch.insert(v);
        }
    }
    ASSERT_EQ(hole.size(), 9u);
    const SurfacePatch all(s, true);
    const SurfacePatch closed = surface_close(patch, all, 4, 4);
    for (int v : hole) EXPECT_TRUE(closed.contains(v));
    // The far side of the slab stays untouched away from the rim, which
    // dilation reaches around the side walls.
    for (std::size_t v = 0; v < s->vertex_count(); ++v) {
        const Vec3& p = s->vertices()[v];
        if (p.z() < 0.6 && p.x() > 5.0 && p.x() < 18.0 && p.y() > 5.0 && p.y() < 18.0) {
            EXPECT_FALSE(closed.contains(static_cast<int>(v)));
        }
    }
    // Without enough dilation the hole survives.
    const SurfacePatch weak = surface_close(patch, all, 1, 1);
    EXPECT_FALSE(weak.contains(centre));
}

TEST(Patch, RestrictedDilationStopsAtRing) {
    const Geometry g = kmtest::grid(24, 24, 4);
    const SurfacePtr s = mesh_from_mask(box(g, {1, 1, 1}, {23, 23, 3}));
    const auto top = top_vertices(*s, 2.5);
    SurfacePatch seed(s);
    PatchBoundaryRestriction ring;
    std::set<int> inside;
    for (const auto& [v, xy] : top) {
        const int r = std::max(std::abs(xy.first - 12), std::abs(xy.second - 12));
        if (r == 0) seed.insert(v);
        if (r == 4) ring.forbidden.push_back(v);
        if (r < 4) inside.insert(v);
    }
    const SurfacePatch grown = restricted_dilate(seed, SurfacePatch(s, true), ring);
    const auto ids = grown.vertex_ids();
    EXPECT_EQ(std::set<int>(ids.begin(), ids.end()), inside);
}

TEST(Patch, RestrictedDilationMatchesBfsOracle) {
    std::mt19937_64 rng(31);
    const Geometry g = kmtest::grid(8, 8, 8);
    for (int trial = 0; trial < 10; ++trial) {
        const SurfacePtr s = mesh_from_mask(kmtest::random_boxes(g, rng, 4, 5));
        const int n = static_cast<int>(s->vertex_count());
        std::uniform_int_distribution<int> pick(0, n - 1);
        std::bernoulli_distribution in_domain(0.8), forbid(0.15);
        SurfacePatch domain(s), seed(s);
        PatchBoundaryRestriction r;
        for (int v = 0; v < n; ++v) {
            if (in_domain(rng)) domain.insert(v);
            if (forbid(rng)) r.forbidden.push_back(v);
        }
        seed.insert(pick(rng));
        seed.insert(pick(rng));
        std::set<int> forbidden(r.forbidden.begin(), r.forbidden.end());
        std::vector<bool> reached(static_cast<std::size_t>(n), false);
        std::deque<int> queue;
        for (int v : seed.vertex_ids()) {
            reached[static_cast<std::size_t>(v)] = true;
            queue.push_back(v);
        }
        while (!queue.empty()) {
            const int v = queue.front();
            queue.pop_front();
            for (int u : s->neighbors(v)) {
                if (reached[static_cast<std::size_t>(u)] || !domain.contains(u) || forbidden.count(u)) continue;
                reached[static_cast<std::size_t>(u)] = true;
                queue.push_back(u);
            }
        }
        const SurfacePatch grown = restricted_dilate(seed, domain, r);
        for (int v = 0; v < n; ++v) EXPECT_EQ(grown.contains(v), reached[static_cast<std::size_t>(v)]);
    }
}

TEST(Patch, ErodeAndComponents) {
    const Geometry g = kmtest::grid(10, 4, 4);
    BinaryMask m = box(g, {0, 1, 1}, {3, 3, 3});
    for (int i = 6; i < 9; ++i)
        for (int j = 1; j < 3; ++j)
            for (int k = 1; k < 3; ++k) m.at(i, j, k) = 1;
    const SurfacePtr s = mesh_from_mask(m);
    const auto comps = patch_components(SurfacePatch(s, true));
    ASSERT_EQ(comps.size(), 2u);
    EXPECT_EQ(comps[0].size() + comps[1].size(), s->vertex_count());
    EXPECT_TRUE(comps[0].contains(0));
    // A whole closed component has no non-member neighbours.
    EXPECT_EQ(surface_erode(comps[0], 3), comps[0]);
    SurfacePatch partial = comps[0];
    partial.erase(0);
    EXPECT_LT(surface_erode(partial, 1).size(), partial.size());
}
