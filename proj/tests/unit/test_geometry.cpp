#include <gtest/gtest.h>

#include <cmath>

#include "kneemorph/geometry.hpp"
#include "kneemorph/volume.hpp"
#include "test_support.hpp"

using namespace kneemorph;

TEST(Geometry, LinearIndexIsRowMajor) {
    const Geometry g = kmtest::grid(4, 5, 6);
    EXPECT_EQ(g.linear(0, 0, 1), 1);
    EXPECT_EQ(g.linear(0, 1, 0), 6);
    EXPECT_EQ(g.linear(1, 0, 0), 30);
    for (std::int64_t idx = 0; idx < static_cast<std::int64_t>(g.voxel_count()); ++idx) {
        const Index3 ijk = g.unravel(idx);
        EXPECT_EQ(g.linear(ijk[0], ijk[1], ijk[2]), idx);
    }
}

TEST(Geometry, WorldMappingMatchesAffine) {
    Geometry g = kmtest::grid(8, 8, 8, {0.5, 0.7, 1.2});
    g.origin = {10.0, -4.0, 3.0};
    const double c = std::cos(0.3), s = std::sin(0.3);
    g.direction << c, -s, 0, s, c, 0, 0, 0, 1;
    const Vec3 idx(2.0, 3.0, 5.0);
    // Hand-expanded affine: origin + R * (spacing .* idx).
    const Vec3 scaled(0.5 * 2.0, 0.7 * 3.0, 1.2 * 5.0);
    const Vec3 expected(10.0 + c * scaled.x() - s * scaled.y(), -4.0 + s * scaled.x() + c * scaled.y(), 3.0 + scaled.z());
    EXPECT_LT((g.index_to_world(idx) - expected).norm(), 1e-12);
    EXPECT_LT((g.world_to_index(expected) - idx).norm(), 1e-12);
}

TEST(Geometry, ValidateRejectsBadGrids) {
    Geometry g = kmtest::grid(2, 2, 2);
    EXPECT_NO_THROW(g.validate());
    g.spacing = {1.0, 0.0, 1.0};
    EXPECT_THROW(g.validate(), InvalidArgument);
    g = kmtest::grid(2, 2, 2);
    g.direction(0, 0) = 1.1;
    EXPECT_THROW(g.validate(), InvalidArgument);
    g = kmtest::grid(0, 2, 2);
    EXPECT_THROW(g.validate(), InvalidArgument);
}

TEST(Geometry, SameGridUsesTolerance) {
    Geometry a = kmtest::grid(3, 3, 3);
    Geometry b = a;
    b.origin.x() += 1e-9;
    EXPECT_TRUE(same_grid(a, b));
    b.origin.x() += 1e-3;
    EXPECT_FALSE(same_grid(a, b));
    EXPECT_THROW(require_same_grid(a, b, "test"), GeometryMismatch);
    b = a;
    b.dims = {3, 3, 4};
    EXPECT_FALSE(same_grid(a, b));
}

TEST(Volume, ConstructionChecksSize) {
    const Geometry g = kmtest::grid(2, 3, 4);
    EXPECT_THROW(LabelVolume(g, std::vector<std::uint16_t>(5)), InvalidArgument);
    LabelVolume v(g, std::vector<std::uint16_t>(24, 7));
    EXPECT_EQ(v.at(1, 2, 3), 7);
}

TEST(Volume, SchemaValidationListsUnknownLabels) {
    LabelVolume v(kmtest::grid(2, 2, 2));
    v.at(0, 0, 0) = 1;
    v.at(1, 1, 1) = 9;
    try {
        validate_labels(v, default_label_schema());
        FAIL() << "expected InvalidArgument";
    } catch (const InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find('9'), std::string::npos);
    }
    v.at(1, 1, 1) = 5;
    EXPECT_NO_THROW(validate_labels(v, default_label_schema()));
}

TEST(Volume, MaskOfAndCount) {
    LabelVolume v(kmtest::grid(3, 3, 3));
    v.at(0, 0, 0) = 3;
    v.at(2, 2, 2) = 3;
    v.at(1, 1, 1) = 4;
    const BinaryMask m = mask_of(v, 3);
    EXPECT_EQ(count_set(m), 2u);
    EXPECT_EQ(m.at(2, 2, 2), 1);
    EXPECT_EQ(m.at(1, 1, 1), 0);
}
