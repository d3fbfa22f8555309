#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace kneemorph {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Index3 = std::array<int, 3>;

/// Physical placement of a voxel grid. World coordinates are RAS+ millimetres:
/// world = origin + direction * diag(spacing) * index.
struct Geometry {
    Index3 dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};
    /// Columns are the world directions of the voxel axes.
    Mat3 direction = Mat3::Identity();

    [[nodiscard]] std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
               static_cast<std::size_t>(dims[2]);
    }

    /// Row-major linear index: the last axis varies fastest.
    [[nodiscard]] std::int64_t linear(int i, int j, int k) const {
        return (static_cast<std::int64_t>(i) * dims[1] + j) * dims[2] + k;
    }
    [[nodiscard]] Index3 unravel(std::int64_t idx) const {
        const int k = static_cast<int>(idx % dims[2]);
        idx /= dims[2];
        const int j = static_cast<int>(idx % dims[1]);
        const int i = static_cast<int>(idx / dims[1]);
        return {i, j, k};
    }
    [[nodiscard]] bool contains(int i, int j, int k) const {
        return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
    }

    [[nodiscard]] Vec3 index_to_world(const Vec3& continuous_index) const;
    [[nodiscard]] Vec3 index_to_world(int i, int j, int k) const {
        return index_to_world(Vec3(i, j, k));
    }
    [[nodiscard]] Vec3 world_to_index(const Vec3& world) const;

    /// Volume of a single voxel in mm^3.
    [[nodiscard]] double voxel_volume() const { return spacing.prod(); }
    /// Length of the voxel diagonal in mm.
    [[nodiscard]] double voxel_diagonal() const { return spacing.norm(); }

    /// Throws InvalidArgument unless dims and spacing are positive and the
    /// direction columns are orthonormal within 1e-6.
    void validate() const;
};

/// True when both grids have identical dims and matching spacing, origin and
/// direction within `tol`.
[[nodiscard]] bool same_grid(const Geometry& a, const Geometry& b, double tol = 1e-6);

/// Throws GeometryMismatch naming `what` unless `same_grid(a, b)`.
void require_same_grid(const Geometry& a, const Geometry& b, const char* what);

}  // namespace kneemorph
