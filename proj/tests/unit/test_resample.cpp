#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "kneemorph/resample.hpp"
#include "test_support.hpp"

using namespace kneemorph;

namespace {

Mat3 signed_permutation(const std::array<int, 3>& perm, const std::array<int, 3>& sign) {
    Mat3 m = Mat3::Zero();
    for (int a = 0; a < 3; ++a) m(perm[a], a) = sign[a];
    return m;
}

}  // namespace

TEST(Reorient, PreservesWorldPositionOfEveryVoxel) {
    std::mt19937_64 rng(3);
    const std::array<std::array<int, 3>, 4> perms{{{0, 1, 2}, {1, 0, 2}, {2, 0, 1}, {1, 2, 0}}};
    for (const auto& perm : perms) {
        for (int signs = 0; signs < 8; ++signs) {
            Geometry g = kmtest::grid(4, 3, 5, {0.5, 1.0, 2.0});
            g.origin = {3.0, -7.0, 11.0};
            g.direction = signed_permutation(perm, {signs & 1 ? -1 : 1, signs & 2 ? -1 : 1, signs & 4 ? -1 : 1});
            LabelVolume v(g);
            for (std::size_t n = 0; n < v.size(); ++n) v[n] = static_cast<std::uint16_t>(n + 1);

            const LabelVolume r = reorient_ras(v);
            EXPECT_TRUE(r.geometry().direction.isApprox(Mat3::Identity()));
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 3; ++j)
                    for (int k = 0; k < 5; ++k) {
                        const Vec3 idx = r.geometry().world_to_index(g.index_to_world(i, j, k));
                        const int a = static_cast<int>(std::lround(idx.x()));
                        const int b = static_cast<int>(std::lround(idx.y()));
                        const int c = static_cast<int>(std::lround(idx.z()));
                        EXPECT_LT((idx - Vec3(a, b, c)).norm(), 1e-9);
                        EXPECT_EQ(r.at(a, b, c), v.at(i, j, k));
                    }
        }
    }
}

TEST(Reorient, ObliqueKeepsResidualRotation) {
    Geometry g = kmtest::grid(3, 3, 3);
    const double c = std::cos(0.2), s = std::sin(0.2);
    g.direction << -c, s, 0, -s, -c, 0, 0, 0, 1;  // roughly LPS
    LabelVolume v(g);
    v.at(0, 1, 2) = 9;
    const LabelVolume r = reorient_ras(v);
    for (int a = 0; a < 3; ++a) EXPECT_GT(r.geometry().direction(a, a), 0.9);
    const Vec3 world = g.index_to_world(0, 1, 2);
    const Vec3 idx = r.geometry().world_to_index(world);
    EXPECT_EQ(r.at(static_cast<int>(std::lround(idx.x())), static_cast<int>(std::lround(idx.y())),
                   static_cast<int>(std::lround(idx.z()))),
              9);
}

TEST(Crop, WindowCentredOnAnatomyByHand) {
    LabelVolume seg(kmtest::grid(20, 20, 20));
    // Blob spans 12..13 on x, 2..3 on y, 17..18 on z.
    for (int i = 12; i <= 13; ++i)
        for (int j = 2; j <= 3; ++j)
            for (int k = 17; k <= 18; ++k) seg.at(i, j, k) = 1;
    const CropRecord rec = plan_crop(seg, {4, 4, 4}, 0.5);
    EXPECT_EQ(rec.scaled_dims, (Index3{10, 10, 10}));
    // x: centroid 12.5 -> (13 * 0.5 - 0.5) = 6 -> 6 - 1.5 = 4.5 -> 5.
    // y: centroid 2.5 -> 1 -> -0.5 -> clamped to 0.
    // z: centroid 17.5 -> 8.5 -> 7 -> clamped to 6.
    EXPECT_EQ(rec.crop_offset, (Index3{5, 0, 6}));

    EXPECT_THROW((void)plan_crop(seg, {11, 4, 4}, 0.5), InvalidArgument);
    EXPECT_THROW((void)plan_crop(LabelVolume(seg.geometry()), {4, 4, 4}, 0.5), InvalidArgument);
}

TEST(Crop, LowResolutionGeometryAlignsVoxelCentres) {
    CropRecord rec;
    rec.scale = 0.5;
    rec.crop_offset = {2, 1, 0};
    rec.window_dims = {3, 3, 3};
    rec.source_geometry = kmtest::grid(16, 16, 16, {0.5, 0.5, 1.0});
    rec.source_geometry.origin = {1.0, 2.0, 3.0};
    const Geometry low = low_resolution_geometry(rec);
    EXPECT_LT((low.spacing - Vec3(1.0, 1.0, 2.0)).norm(), 1e-12);
    // Low voxel (0,0,0) is downsampled voxel (2,1,0); its centre covers
    // source voxels 4..5, 2..3, 0..1, i.e. source index 4.5, 2.5, 0.5.
    const Vec3 expected = rec.source_geometry.index_to_world(Vec3(4.5, 2.5, 0.5));
    EXPECT_LT((low.index_to_world(0, 0, 0) - expected).norm(), 1e-12);
}

TEST(Crop, DownsamplesLinearImageExactlyAndMasks) {
    const Geometry g = kmtest::grid(16, 16, 16);
    ScalarVolume image(g);
    LabelVolume seg(g, std::uint16_t{1});
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j)
            for (int k = 0; k < 16; ++k) image.at(i, j, k) = static_cast<float>(i + 2 * j + 3 * k);
    const auto [low, rec] = mask_downsample_crop(image, seg, {8, 8, 8}, 0.5);
    EXPECT_EQ(rec.crop_offset, (Index3{0, 0, 0}));
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            for (int k = 0; k < 8; ++k) {
                const double x = 2 * i + 0.5, y = 2 * j + 0.5, z = 2 * k + 0.5;
                EXPECT_NEAR(low.at(i, j, k), x + 2 * y + 3 * z, 1e-4);
            }

    LabelVolume half(g);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 16; ++j)
            for (int k = 0; k < 16; ++k) half.at(i, j, k) = 1;
    const auto [masked, rec2] = mask_downsample_crop(image, half, {8, 8, 8}, 0.5);
    EXPECT_EQ(rec2.crop_offset[0], 0);
    EXPECT_FLOAT_EQ(masked.at(7, 3, 3), 0.0F);  // source index 14.5, outside the mask
    EXPECT_GT(masked.at(2, 3, 3), 0.0F);
}

TEST(Crop, RestoreInvertsBlockAlignedLabels) {
    const Geometry g = kmtest::grid(24, 20, 16);
    LabelVolume seg(g);
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> lab(0, 5);
    // Labels constant on 2x2x2 blocks inside a central region.
    for (int bi = 3; bi < 9; ++bi)
        for (int bj = 2; bj < 8; ++bj)
            for (int bk = 2; bk < 6; ++bk) {
                const auto v = static_cast<std::uint16_t>(lab(rng));
                for (int d = 0; d < 8; ++d) seg.at(2 * bi + (d & 1), 2 * bj + ((d >> 1) & 1), 2 * bk + (d >> 2)) = v;
            }
    const CropRecord rec = plan_crop(seg, {8, 8, 6}, 0.5);
    const LabelVolume low = downsample_crop_labels(seg, rec);
    const LabelVolume back = restore_resolution(low, rec);
    for (std::size_t n = 0; n < seg.size(); ++n) {
        const Index3 x = g.unravel(static_cast<std::int64_t>(n));
        bool inside = true;
        for (int a = 0; a < 3; ++a) {
            const int l = x[a] / 2 - rec.crop_offset[a];
            inside = inside && l >= 0 && l < rec.window_dims[a];
        }
        if (inside) {
            EXPECT_EQ(back[n], seg[n]) << n;
        } else {
            EXPECT_EQ(back[n], 0) << n;
        }
    }
    EXPECT_THROW((void)restore_resolution(LabelVolume(kmtest::grid(2, 2, 2)), rec), GeometryMismatch);
}

TEST(Normalize, MinMax) {
    ScalarVolume v(kmtest::grid(2, 2, 1));
    v.data() = {-2.0F, 0.0F, 2.0F, 6.0F};
    const ScalarVolume n = normalize_min_max(v);
    EXPECT_FLOAT_EQ(n[0], 0.0F);
    EXPECT_FLOAT_EQ(n[1], 0.25F);
    EXPECT_FLOAT_EQ(n[3], 1.0F);
    ScalarVolume c(kmtest::grid(2, 1, 1), 4.0F);
    EXPECT_FLOAT_EQ(normalize_min_max(c)[1], 0.0F);
}
