#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "kneemorph/volume.hpp"

namespace kneemorph {

using Face = std::array<int, 3>;

/// Triangle mesh with shared-edge vertex adjacency. Vertices are RAS mm.
class Surface {
public:
    /// Builds adjacency and validates that face indices are in range and no
    /// face repeats a vertex.
    static std::shared_ptr<const Surface> from_triangles(std::vector<Vec3> vertices, std::vector<Face> faces,
                                                         std::vector<std::int64_t> source_voxel = {},
                                                         Geometry generator = {});

    [[nodiscard]] std::size_t vertex_count() const { return vertices_.size(); }
    [[nodiscard]] std::size_t face_count() const { return faces_.size(); }
    [[nodiscard]] const std::vector<Vec3>& vertices() const { return vertices_; }
    [[nodiscard]] const std::vector<Face>& faces() const { return faces_; }
    /// Sorted neighbour ids of vertex v.
    [[nodiscard]] const std::vector<int>& neighbors(int v) const { return adjacency_[static_cast<std::size_t>(v)]; }
    /// Faces incident to vertex v.
    [[nodiscard]] const std::vector<int>& incident_faces(int v) const {
        return vertex_faces_[static_cast<std::size_t>(v)];
    }
    /// Linear index of the generating voxel, -1 when the mesh was not built
    /// from a mask.
    [[nodiscard]] std::int64_t source_voxel(int v) const {
        return source_voxel_.empty() ? -1 : source_voxel_[static_cast<std::size_t>(v)];
    }
    /// Grid of the generating mask (identity geometry for hand-built meshes).
    [[nodiscard]] const Geometry& generator() const { return generator_; }

    [[nodiscard]] double face_area(int f) const;
    [[nodiscard]] double total_area() const;

    /// Same topology with every vertex mapped by x -> rotation * x + translation.
    [[nodiscard]] std::shared_ptr<const Surface> transformed(const Mat3& rotation, const Vec3& translation) const;

private:
    Surface() = default;

    std::vector<Vec3> vertices_;
    std::vector<Face> faces_;
    std::vector<std::vector<int>> adjacency_;
    std::vector<std::vector<int>> vertex_faces_;
    std::vector<std::int64_t> source_voxel_;
    Geometry generator_;
};

using SurfacePtr = std::shared_ptr<const Surface>;

/// Vertex subset of a surface; its faces are the induced ones (all three
/// corners members).
class SurfacePatch {
public:
    SurfacePatch() = default;
    explicit SurfacePatch(SurfacePtr parent, bool all = false);
    SurfacePatch(SurfacePtr parent, const std::vector<int>& vertex_ids);

    [[nodiscard]] const SurfacePtr& parent() const { return parent_; }
    [[nodiscard]] const Surface& surface() const { return *parent_; }
    [[nodiscard]] bool contains(int v) const { return member_[static_cast<std::size_t>(v)] != 0; }
    void insert(int v);
    void erase(int v);
    [[nodiscard]] std::size_t size() const { return count_; }
    [[nodiscard]] bool empty() const { return count_ == 0; }

    /// Sorted member ids.
    [[nodiscard]] std::vector<int> vertex_ids() const;
    [[nodiscard]] std::vector<int> induced_faces() const;
    /// Sum of induced triangle areas.
    [[nodiscard]] double area() const;

    [[nodiscard]] bool is_subset_of(const SurfacePatch& other) const;

    friend SurfacePatch operator|(const SurfacePatch& a, const SurfacePatch& b);
    friend SurfacePatch operator&(const SurfacePatch& a, const SurfacePatch& b);
    friend SurfacePatch operator-(const SurfacePatch& a, const SurfacePatch& b);
    friend bool operator==(const SurfacePatch& a, const SurfacePatch& b) {
        return a.parent_ == b.parent_ && a.member_ == b.member_;
    }

private:
    SurfacePtr parent_;
    std::vector<std::uint8_t> member_;
    std::size_t count_ = 0;
};

/// Vertices a restricted dilation may never enter.
struct PatchBoundaryRestriction {
    std::vector<int> forbidden;
};

/// Per-vertex area: a third of each induced face of `patch` incident to the
/// vertex. Indexed by parent vertex id; non-members get 0.
[[nodiscard]] std::vector<double> vertex_areas(const SurfacePatch& patch);

/// Mesh of all exposed voxel faces; each quad becomes two triangles with
/// outward orientation. Vertices are voxel corners shared between faces and
/// record the first voxel (in linear order) that produced them. Throws
/// InvalidArgument for an empty mask.
[[nodiscard]] SurfacePtr mesh_from_mask(const BinaryMask& mask);

/// Default voxel-to-surface mapping radius, in voxel diagonals: a vertex maps
/// when it is a corner of a set voxel.
inline constexpr double kCornerMappingRadius = 0.5;

/// Vertices whose source voxel is set in `voxels`, or whose position lies
/// within `radius_diagonals` voxel diagonals of a set voxel centre. Throws
/// GeometryMismatch when `voxels` is not on the surface generator grid.
[[nodiscard]] SurfacePatch patch_from_voxels(const SurfacePtr& surface, const BinaryMask& voxels,
                                             double radius_diagonals = kCornerMappingRadius);

/// n rounds of adding every domain vertex adjacent to the patch.
[[nodiscard]] SurfacePatch surface_dilate(const SurfacePatch& patch, const SurfacePatch& domain, int iterations);

/// n rounds of removing members adjacent to a non-member of the parent surface.
[[nodiscard]] SurfacePatch surface_erode(const SurfacePatch& patch, int iterations);

/// surface_erode(surface_dilate(patch, domain, n_dilate), n_erode).
[[nodiscard]] SurfacePatch surface_close(const SurfacePatch& patch, const SurfacePatch& domain, int n_dilate,
                                         int n_erode);

/// Dilate within domain minus the forbidden vertices until nothing changes.
[[nodiscard]] SurfacePatch restricted_dilate(const SurfacePatch& patch, const SurfacePatch& domain,
                                             const PatchBoundaryRestriction& restriction);

/// Connected components of a patch under vertex adjacency, in order of the
/// smallest member id.
[[nodiscard]] std::vector<SurfacePatch> patch_components(const SurfacePatch& patch);

}  // namespace kneemorph
