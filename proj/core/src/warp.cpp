#include "kneemorph/warp.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace kneemorph {
namespace {

struct TrilinearStencil {
    std::array<int, 3> lo{};
    std::array<int, 3> hi{};
    std::array<double, 3> t{};
};

TrilinearStencil stencil(const Index3& dims, const Vec3& p) {
    TrilinearStencil s;
    for (int a = 0; a < 3; ++a) {
        const double x = std::clamp(p[a], 0.0, static_cast<double>(dims[a] - 1));
        s.lo[a] = static_cast<int>(std::floor(x));
        s.hi[a] = std::min(s.lo[a] + 1, dims[a] - 1);
        s.t[a] = x - s.lo[a];
    }
    return s;
}

template <typename Get>
auto interpolate(const TrilinearStencil& s, Get&& get) {
    using R = decltype(get(0, 0, 0));
    R acc = get(s.lo[0], s.lo[1], s.lo[2]) * 0.0;
    for (int c = 0; c < 8; ++c) {
        double w = 1.0;
        std::array<int, 3> idx{};
        for (int a = 0; a < 3; ++a) {
            const bool up = ((c >> a) & 1) != 0;
            w *= up ? s.t[a] : 1.0 - s.t[a];
            idx[a] = up ? s.hi[a] : s.lo[a];
        }
        if (w != 0.0) acc += get(idx[0], idx[1], idx[2]) * w;
    }
    return acc;
}

Index3 nearest_index(const Index3& dims, const Vec3& p) {
    Index3 out{};
    for (int a = 0; a < 3; ++a) {
        out[a] = std::clamp(static_cast<int>(std::lround(p[a])), 0, dims[a] - 1);
    }
    return out;
}

void require_field_grid(const Geometry& vol, const DeformationField& field, const char* what) {
    require_same_grid(vol, field.geometry, what);
    if (field.vectors.size() != field.geometry.voxel_count()) throw InvalidArgument("field size does not match geometry");
}

template <typename F>
void for_each_index(const Index3& d, F&& f) {
    for (int i = 0; i < d[0]; ++i)
        for (int j = 0; j < d[1]; ++j)
            for (int k = 0; k < d[2]; ++k) f(i, j, k);
}

}  // namespace

Vec3 VectorField::sample(const Vec3& continuous_index) const {
    const TrilinearStencil s = stencil(geometry.dims, continuous_index);
    return interpolate(s, [&](int i, int j, int k) -> Vec3 { return at(i, j, k); });
}

DeformationField integrate_svf(const VelocityField& velocity, int steps) {
    if (steps < 1) throw InvalidArgument("integrate_svf: steps must be at least 1");
    const Geometry& g = velocity.geometry;
    DeformationField u(g);
    const double scale = std::ldexp(1.0, -steps);
    for (std::size_t n = 0; n < u.vectors.size(); ++n) u.vectors[n] = velocity.vectors[n] * scale;
    DeformationField next(g);
    for (int s = 0; s < steps; ++s) {
        for_each_index(g.dims, [&](int i, int j, int k) {
            const Vec3& d = u.at(i, j, k);
            next.at(i, j, k) = d + u.sample_world(g.index_to_world(i, j, k) + d);
        });
        std::swap(u.vectors, next.vectors);
    }
    return u;
}

VelocityField negate(const VelocityField& velocity) {
    VelocityField out(velocity.geometry);
    for (std::size_t n = 0; n < out.vectors.size(); ++n) out.vectors[n] = -velocity.vectors[n];
    return out;
}

DeformationField compose(const DeformationField& outer, const DeformationField& inner) {
    const Geometry& g = inner.geometry;
    DeformationField out(g);
    for_each_index(g.dims, [&](int i, int j, int k) {
        const Vec3& d = inner.at(i, j, k);
        out.at(i, j, k) = d + outer.sample_world(g.index_to_world(i, j, k) + d);
    });
    return out;
}

LabelVolume apply_field(const LabelVolume& volume, const DeformationField& field, Interpolation interp) {
    if (interp != Interpolation::nearest) throw InvalidArgument("apply_field: label volumes require nearest interpolation");
    require_field_grid(volume.geometry(), field, "apply_field");
    const Geometry& g = volume.geometry();
    LabelVolume out(g);
    for_each_index(g.dims, [&](int i, int j, int k) {
        const Vec3 src = g.world_to_index(g.index_to_world(i, j, k) + field.at(i, j, k));
        const Index3 n = nearest_index(g.dims, src);
        out.at(i, j, k) = volume.at(n[0], n[1], n[2]);
    });
    return out;
}

ScalarVolume apply_field(const ScalarVolume& volume, const DeformationField& field, Interpolation interp) {
    require_field_grid(volume.geometry(), field, "apply_field");
    const Geometry& g = volume.geometry();
    ScalarVolume out(g);
    for_each_index(g.dims, [&](int i, int j, int k) {
        const Vec3 src = g.world_to_index(g.index_to_world(i, j, k) + field.at(i, j, k));
        if (interp == Interpolation::nearest) {
            const Index3 n = nearest_index(g.dims, src);
            out.at(i, j, k) = volume.at(n[0], n[1], n[2]);
        } else {
            const TrilinearStencil s = stencil(g.dims, src);
            out.at(i, j, k) = static_cast<float>(
                interpolate(s, [&](int a, int b, int c) -> double { return volume.at(a, b, c); }));
        }
    });
    return out;
}

BinaryMask apply_field(const BinaryMask& volume, const DeformationField& field) {
    require_field_grid(volume.geometry(), field, "apply_field");
    const Geometry& g = volume.geometry();
    BinaryMask out(g);
    for_each_index(g.dims, [&](int i, int j, int k) {
        const Vec3 src = g.world_to_index(g.index_to_world(i, j, k) + field.at(i, j, k));
        const Index3 n = nearest_index(g.dims, src);
        out.at(i, j, k) = volume.at(n[0], n[1], n[2]);
    });
    return out;
}

ScalarVolume probability_map(const std::vector<BinaryMask>& warped_masks) {
    if (warped_masks.empty()) throw InvalidArgument("probability_map: no masks given");
    const Geometry& g = warped_masks.front().geometry();
    std::vector<std::uint32_t> counts(g.voxel_count(), 0);
    for (const auto& m : warped_masks) {
        require_same_grid(g, m.geometry(), "probability_map");
        for (std::size_t n = 0; n < m.size(); ++n) counts[n] += m[n] != 0 ? 1 : 0;
    }
    ScalarVolume out(g);
    const double total = static_cast<double>(warped_masks.size());
    for (std::size_t n = 0; n < counts.size(); ++n) out[n] = static_cast<float>(counts[n] / total);
    return out;
}

BinaryMask threshold_map(const ScalarVolume& probability, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw InvalidArgument("threshold_map: threshold must lie in [0, 1]");
    BinaryMask out(probability.geometry());
    for (std::size_t n = 0; n < probability.size(); ++n) out[n] = probability[n] >= threshold ? 1 : 0;
    return out;
}

std::vector<double> jacobian_determinant(const DeformationField& field) {
    const Geometry& g = field.geometry;
    std::vector<double> out(g.voxel_count(), 1.0);
    const Mat3 to_world = g.direction.transpose();
    for_each_index(g.dims, [&](int i, int j, int k) {
        Mat3 grad_index;  // columns: du / d(index axis a), per mm of that axis
        const Index3 p{i, j, k};
        for (int a = 0; a < 3; ++a) {
            Index3 lo = p;
            Index3 hi = p;
            lo[a] = std::max(0, p[a] - 1);
            hi[a] = std::min(g.dims[a] - 1, p[a] + 1);
            const int span = hi[a] - lo[a];
            if (span == 0) {
                grad_index.col(a).setZero();
                continue;
            }
            grad_index.col(a) = (field.at(hi[0], hi[1], hi[2]) - field.at(lo[0], lo[1], lo[2])) / (span * g.spacing[a]);
        }
        const Mat3 jac = Mat3::Identity() + grad_index * to_world;
        out[static_cast<std::size_t>(g.linear(i, j, k))] = jac.determinant();
    });
    return out;
}

}  // namespace kneemorph
