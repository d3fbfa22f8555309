#include "kneemorph/geometry.hpp"

#include <cmath>
#include <string>

#include "kneemorph/error.hpp"

namespace kneemorph {

Vec3 Geometry::index_to_world(const Vec3& continuous_index) const {
    return origin + direction * spacing.cwiseProduct(continuous_index);
}

Vec3 Geometry::world_to_index(const Vec3& world) const {
    // direction is orthonormal, so its inverse is the transpose.
    return (direction.transpose() * (world - origin)).cwiseQuotient(spacing);
}

void Geometry::validate() const {
    for (int d : dims) {
        if (d <= 0) throw InvalidArgument("geometry dims must be positive");
    }
    for (int a = 0; a < 3; ++a) {
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
            throw InvalidArgument("geometry spacing must be positive and finite");
        }
    }
    if (!origin.allFinite() || !direction.allFinite()) throw InvalidArgument("geometry contains non-finite values");
    const Mat3 gram = direction.transpose() * direction;
    if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
        throw InvalidArgument("geometry direction columns are not orthonormal");
    }
}

bool same_grid(const Geometry& a, const Geometry& b, double tol) {
    if (a.dims != b.dims) return false;
    if ((a.spacing - b.spacing).cwiseAbs().maxCoeff() > tol) return false;
    if ((a.origin - b.origin).cwiseAbs().maxCoeff() > tol) return false;
    return (a.direction - b.direction).cwiseAbs().maxCoeff() <= tol;
}

void require_same_grid(const Geometry& a, const Geometry& b, const char* what) {
    if (!same_grid(a, b)) throw GeometryMismatch(std::string(what) + ": inputs are not on the same voxel grid");
}

}  // namespace kneemorph
