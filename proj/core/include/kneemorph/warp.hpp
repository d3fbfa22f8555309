#pragma once

#include <vector>

#include "kneemorph/volume.hpp"

namespace kneemorph {

/// Dense grid of 3-vectors in RAS mm. Sampling outside the grid clamps to the
/// border.
struct VectorField {
    Geometry geometry;
    std::vector<Vec3> vectors;

    VectorField() = default;
    explicit VectorField(Geometry g, const Vec3& fill = Vec3::Zero())
        : geometry(std::move(g)), vectors(geometry.voxel_count(), fill) {}

    [[nodiscard]] Vec3& at(int i, int j, int k) {
        return vectors[static_cast<std::size_t>(geometry.linear(i, j, k))];
    }
    [[nodiscard]] const Vec3& at(int i, int j, int k) const {
        return vectors[static_cast<std::size_t>(geometry.linear(i, j, k))];
    }
    /// Trilinear sample at a continuous voxel index, clamped to the grid.
    [[nodiscard]] Vec3 sample(const Vec3& continuous_index) const;
    /// Trilinear sample at a world position.
    [[nodiscard]] Vec3 sample_world(const Vec3& world) const { return sample(geometry.world_to_index(world)); }
};

/// Stationary velocity field (displacement rate per unit pseudo-time, mm).
struct VelocityField : VectorField {
    using VectorField::VectorField;
};

/// Displacement field: a voxel at world x maps to x + displacement(x).
struct DeformationField : VectorField {
    using VectorField::VectorField;
};

inline constexpr int kDefaultIntegrationSteps = 7;

/// Scaling and squaring: u = v / 2^steps, then u <- u + u(x + u) `steps` times.
[[nodiscard]] DeformationField integrate_svf(const VelocityField& velocity, int steps = kDefaultIntegrationSteps);

[[nodiscard]] VelocityField negate(const VelocityField& velocity);

/// (outer o inner)(x) = x + inner(x) + outer(x + inner(x)), as a displacement.
[[nodiscard]] DeformationField compose(const DeformationField& outer, const DeformationField& inner);

enum class Interpolation { nearest, trilinear };

/// out(x) = volume(x + displacement(x)). Labels only accept nearest.
[[nodiscard]] LabelVolume apply_field(const LabelVolume& volume, const DeformationField& field,
                                      Interpolation interp = Interpolation::nearest);
[[nodiscard]] ScalarVolume apply_field(const ScalarVolume& volume, const DeformationField& field,
                                       Interpolation interp = Interpolation::trilinear);
[[nodiscard]] BinaryMask apply_field(const BinaryMask& volume, const DeformationField& field);

/// Voxelwise mean of warped binary masks.
[[nodiscard]] ScalarVolume probability_map(const std::vector<BinaryMask>& warped_masks);

/// Voxels with value >= threshold. Throws InvalidArgument outside [0, 1].
[[nodiscard]] BinaryMask threshold_map(const ScalarVolume& probability, double threshold = 0.5);

/// Jacobian determinant of x -> x + u(x) by central differences (one-sided at
/// the border), per voxel.
[[nodiscard]] std::vector<double> jacobian_determinant(const DeformationField& field);

}  // namespace kneemorph
