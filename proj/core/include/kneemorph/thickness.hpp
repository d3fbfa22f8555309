#pragma once

#include <vector>

#include "kneemorph/morphology.hpp"
#include "kneemorph/surface.hpp"

namespace kneemorph {

/// Unit normals over the members of a patch, in vertex_ids() order.
struct NormalField {
    SurfacePatch patch;
    std::vector<int> vertex_ids;
    std::vector<Vec3> normals;
    /// Vertices whose neighbourhood was rank deficient and whose normal was
    /// borrowed from neighbours.
    std::vector<int> degenerate;
};

/// Per-vertex thickness (mm) over the members of a patch, in vertex_ids()
/// order. kNoThickness marks a vertex whose ray found no opposite surface.
struct ThicknessMap {
    static constexpr double kNoThickness = -1.0;

    SurfacePatch patch;
    std::vector<int> vertex_ids;
    std::vector<double> values;

    [[nodiscard]] static bool defined(double t) { return t >= 0.0; }
};

struct ThicknessParams {
    /// SVD neighbourhood size.
    int neighbors = 16;
    int smooth_iterations = 3;
    /// Search ball for orientation, in voxel diagonals.
    double orientation_radius = 5.0;
    double max_ray_mm = 15.0;
    int close_dilate = 4;
    int close_erode = 4;
    int gap_rounds = kDefaultGapRounds;
};

/// Smallest right-singular vector of the centred k-neighbourhood position
/// matrix of each vertex. Signs are arbitrary. Throws InvalidArgument when
/// k < 4 or the patch has fewer than k vertices.
[[nodiscard]] NormalField estimate_normals_svd(const SurfacePatch& inner, int k = 16);

/// Flip each normal toward the centroid of cartilage voxels inside a ball of
/// `radius_diagonals` voxel diagonals. Vertices where that offset is
/// ambiguous take the majority sign of their oriented neighbours.
[[nodiscard]] NormalField reorient_normals(const NormalField& normals, const BinaryMask& cart,
                                           double radius_diagonals = 5.0);

/// Average each normal with its adjacency ring, renormalising every round.
[[nodiscard]] NormalField smooth_normals(const NormalField& normals, int iterations);

/// Ray cast from each inner vertex along its normal to the induced triangles of
/// `outer`; the nearest hit within max_ray_mm is the thickness.
[[nodiscard]] ThicknessMap measure_thickness(const SurfacePatch& inner, const SurfacePatch& outer,
                                             const NormalField& normals, double max_ray_mm = 15.0);

/// Baseline: distance from each inner vertex to the nearest outer vertex.
[[nodiscard]] ThicknessMap thickness_3dnn(const SurfacePatch& inner, const SurfacePatch& outer);

/// Inner and outer cartilage surfaces on the cartilage mesh after the surface
/// fine-tuning steps (closing of the inner patch, restricted dilation of the
/// outer patch away from it).
struct CartilageSurfaces {
    SurfacePtr mesh;
    SurfacePatch inner_raw;
    SurfacePatch outer_raw;
    SurfacePatch inner;
    SurfacePatch outer;
};

[[nodiscard]] CartilageSurfaces segment_cartilage_surfaces(const BinaryMask& cart, const BinaryMask& bone,
                                                           const ThicknessParams& params = {});

struct ThicknessResult {
    CartilageSurfaces surfaces;
    NormalField normals;
    ThicknessMap thickness;
};

/// Full surface-normal thickness mapping of one cartilage plate.
[[nodiscard]] ThicknessResult map_thickness(const BinaryMask& cart, const BinaryMask& bone,
                                            const ThicknessParams& params = {});

/// Copy thickness onto the members of `target` (typically a bone-surface
/// patch): each target vertex takes the value of the nearest source vertex
/// within `max_distance_mm`, otherwise kNoThickness.
[[nodiscard]] ThicknessMap transfer_thickness(const ThicknessMap& source, const SurfacePatch& target,
                                              double max_distance_mm);

/// Value lookup by parent vertex id (kNoThickness for non-members).
[[nodiscard]] std::vector<double> thickness_by_vertex(const ThicknessMap& map);

}  // namespace kneemorph
