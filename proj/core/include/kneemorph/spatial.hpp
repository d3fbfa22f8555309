#pragma once

#include <optional>
#include <vector>

#include "kneemorph/geometry.hpp"
#include "kneemorph/surface.hpp"

namespace kneemorph {

/// Static 3D kd-tree over a point set for nearest-neighbour queries.
class KdTree {
public:
    KdTree() = default;
    explicit KdTree(std::vector<Vec3> points);

    [[nodiscard]] std::size_t size() const { return points_.size(); }
    [[nodiscard]] const Vec3& point(int i) const { return points_[static_cast<std::size_t>(i)]; }

    /// Indices of the k nearest points ordered by distance, ties by index.
    [[nodiscard]] std::vector<int> nearest(const Vec3& query, int k) const;
    /// Index of the nearest point, ties by smallest index; -1 when empty.
    [[nodiscard]] int nearest_one(const Vec3& query) const;
    /// Indices of every point within `radius` (inclusive), unordered.
    [[nodiscard]] std::vector<int> within(const Vec3& query, double radius) const;

private:
    struct Node {
        int begin = 0;
        int end = 0;
        int axis = -1;
        double split = 0.0;
        int left = -1;
        int right = -1;
    };
    int build(int begin, int end, int depth);

    std::vector<Vec3> points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

struct RayHit {
    double distance = 0.0;
    int face = -1;
};

/// Bounding volume hierarchy over a set of surface triangles for ray casting.
/// Intersections use a watertight test, so hits on shared edges and vertices
/// are never lost.
class TriangleBvh {
public:
    TriangleBvh(SurfacePtr surface, std::vector<int> faces);

    /// Nearest hit with distance in [min_distance, max_distance].
    [[nodiscard]] std::optional<RayHit> cast(const Vec3& origin, const Vec3& direction, double max_distance,
                                             double min_distance = 1e-9) const;

private:
    struct Node {
        Eigen::Vector3d lo;
        Eigen::Vector3d hi;
        int begin = 0;
        int end = 0;
        int left = -1;
        int right = -1;
    };
    int build(int begin, int end);

    SurfacePtr surface_;
    std::vector<int> faces_;
    std::vector<Vec3> centroids_;
    std::vector<Node> nodes_;
};

/// Watertight ray-triangle intersection; returns the ray parameter of the hit
/// (edges inclusive) or nothing for misses and ray-parallel triangles.
[[nodiscard]] std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& direction, const Vec3& a,
                                                       const Vec3& b, const Vec3& c);

}  // namespace kneemorph
