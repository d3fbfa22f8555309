#include "kneemorph/surface.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <unordered_map>

namespace kneemorph {

std::shared_ptr<const Surface> Surface::from_triangles(std::vector<Vec3> vertices, std::vector<Face> faces,
                                                       std::vector<std::int64_t> source_voxel, Geometry generator) {
    const auto nv = static_cast<int>(vertices.size());
    if (!source_voxel.empty() && source_voxel.size() != vertices.size()) {
        throw InvalidArgument("source_voxel must have one entry per vertex");
    }
    std::shared_ptr<Surface> s(new Surface());
    s->adjacency_.resize(vertices.size());
    s->vertex_faces_.resize(vertices.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const Face& t = faces[f];
        for (int c = 0; c < 3; ++c) {
            if (t[c] < 0 || t[c] >= nv) throw InvalidArgument("face index out of range");
        }
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) throw InvalidArgument("degenerate face repeats a vertex");
        for (int c = 0; c < 3; ++c) {
            const auto a = static_cast<std::size_t>(t[c]);
            const int b = t[(c + 1) % 3];
            s->adjacency_[a].push_back(b);
            s->adjacency_[static_cast<std::size_t>(b)].push_back(t[c]);
            s->vertex_faces_[a].push_back(static_cast<int>(f));
        }
    }
    for (auto& adj : s->adjacency_) {
        std::sort(adj.begin(), adj.end());
        adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    }
    s->vertices_ = std::move(vertices);
    s->faces_ = std::move(faces);
    s->source_voxel_ = std::move(source_voxel);
    s->generator_ = std::move(generator);
    return s;
}

double Surface::face_area(int f) const {
    const Face& t = faces_[static_cast<std::size_t>(f)];
    const Vec3& a = vertices_[static_cast<std::size_t>(t[0])];
    const Vec3& b = vertices_[static_cast<std::size_t>(t[1])];
    const Vec3& c = vertices_[static_cast<std::size_t>(t[2])];
    return 0.5 * (b - a).cross(c - a).norm();
}

double Surface::total_area() const {
    double sum = 0.0;
    for (std::size_t f = 0; f < faces_.size(); ++f) sum += face_area(static_cast<int>(f));
    return sum;
}

std::shared_ptr<const Surface> Surface::transformed(const Mat3& rotation, const Vec3& translation) const {
    std::shared_ptr<Surface> s(new Surface(*this));
    for (auto& v : s->vertices_) v = rotation * v + translation;
    return s;
}

SurfacePatch::SurfacePatch(SurfacePtr parent, bool all)
    : parent_(std::move(parent)), member_(parent_ ? parent_->vertex_count() : 0, all ? 1 : 0),
      count_(all ? member_.size() : 0) {}

SurfacePatch::SurfacePatch(SurfacePtr parent, const std::vector<int>& vertex_ids) : SurfacePatch(std::move(parent)) {
    for (int v : vertex_ids) insert(v);
}

void SurfacePatch::insert(int v) {
    if (v < 0 || static_cast<std::size_t>(v) >= member_.size()) throw InvalidArgument("vertex id out of range");
    auto& m = member_[static_cast<std::size_t>(v)];
    if (m == 0) {
        m = 1;
        ++count_;
    }
}

void SurfacePatch::erase(int v) {
    if (v < 0 || static_cast<std::size_t>(v) >= member_.size()) throw InvalidArgument("vertex id out of range");
    auto& m = member_[static_cast<std::size_t>(v)];
    if (m != 0) {
        m = 0;
        --count_;
    }
}

std::vector<int> SurfacePatch::vertex_ids() const {
    std::vector<int> out;
    out.reserve(count_);
    for (std::size_t v = 0; v < member_.size(); ++v) {
        if (member_[v] != 0) out.push_back(static_cast<int>(v));
    }
    return out;
}

std::vector<int> SurfacePatch::induced_faces() const {
    std::vector<int> out;
    if (!parent_) return out;
    const auto& faces = parent_->faces();
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const Face& t = faces[f];
        if (contains(t[0]) && contains(t[1]) && contains(t[2])) out.push_back(static_cast<int>(f));
    }
    return out;
}

double SurfacePatch::area() const {
    double sum = 0.0;
    for (int f : induced_faces()) sum += parent_->face_area(f);
    return sum;
}

bool SurfacePatch::is_subset_of(const SurfacePatch& other) const {
    if (parent_ != other.parent_) return false;
    for (std::size_t v = 0; v < member_.size(); ++v) {
        if (member_[v] != 0 && other.member_[v] == 0) return false;
    }
    return true;
}

namespace {

template <typename Op>
SurfacePatch combine(const SurfacePatch& a, const SurfacePatch& b, Op op) {
    if (a.parent() != b.parent()) throw InvalidArgument("patches belong to different surfaces");
    SurfacePatch out(a.parent());
    const auto n = static_cast<int>(a.parent() ? a.surface().vertex_count() : 0);
    for (int v = 0; v < n; ++v) {
        if (op(a.contains(v), b.contains(v))) out.insert(v);
    }
    return out;
}

}  // namespace

SurfacePatch operator|(const SurfacePatch& a, const SurfacePatch& b) {
    return combine(a, b, [](bool x, bool y) { return x || y; });
}
SurfacePatch operator&(const SurfacePatch& a, const SurfacePatch& b) {
    return combine(a, b, [](bool x, bool y) { return x && y; });
}
SurfacePatch operator-(const SurfacePatch& a, const SurfacePatch& b) {
    return combine(a, b, [](bool x, bool y) { return x && !y; });
}

std::vector<double> vertex_areas(const SurfacePatch& patch) {
    std::vector<double> out(patch.parent() ? patch.surface().vertex_count() : 0, 0.0);
    for (int f : patch.induced_faces()) {
        const double third = patch.surface().face_area(f) / 3.0;
        for (int v : patch.surface().faces()[static_cast<std::size_t>(f)]) out[static_cast<std::size_t>(v)] += third;
    }
    return out;
}

SurfacePtr mesh_from_mask(const BinaryMask& mask) {
    const Geometry& g = mask.geometry();
    const Index3& d = g.dims;
    const std::int64_t cy = d[1] + 1;
    const std::int64_t cz = d[2] + 1;
    std::unordered_map<std::int64_t, int> corner_ids;
    std::vector<Vec3> vertices;
    std::vector<std::int64_t> sources;
    std::vector<Face> faces;

    auto corner = [&](const Index3& c, std::int64_t voxel) {
        const std::int64_t key = (c[0] * cy + c[1]) * cz + c[2];
        auto [it, fresh] = corner_ids.try_emplace(key, static_cast<int>(vertices.size()));
        if (fresh) {
            vertices.push_back(g.index_to_world(Vec3(c[0] - 0.5, c[1] - 0.5, c[2] - 0.5)));
            sources.push_back(voxel);
        }
        return it->second;
    };

    bool any = false;
    for (int i = 0; i < d[0]; ++i) {
        for (int j = 0; j < d[1]; ++j) {
            for (int k = 0; k < d[2]; ++k) {
                if (mask.at(i, j, k) == 0) continue;
                any = true;
                const std::int64_t voxel = g.linear(i, j, k);
                const Index3 v{i, j, k};
                for (int a = 0; a < 3; ++a) {
                    const int b = (a + 1) % 3;
                    const int c = (a + 2) % 3;
                    for (int side = 0; side < 2; ++side) {
                        Index3 nb = v;
                        nb[a] += side == 0 ? -1 : 1;
                        if (g.contains(nb[0], nb[1], nb[2]) && mask.at(nb[0], nb[1], nb[2]) != 0) continue;
                        Index3 base = v;
                        base[a] += side;
                        Index3 pb = base;
                        pb[b] += 1;
                        Index3 pbc = pb;
                        pbc[c] += 1;
                        Index3 pc = base;
                        pc[c] += 1;
                        const int q0 = corner(base, voxel);
                        int q1 = 0;
                        int q2 = corner(pbc, voxel);
                        int q3 = 0;
                        if (side == 1) {
                            q1 = corner(pb, voxel);
                            q3 = corner(pc, voxel);
                        } else {
                            q1 = corner(pc, voxel);
                            q3 = corner(pb, voxel);
                        }
                        faces.push_back({q0, q1, q2});
                        faces.push_back({q0, q2, q3});
                    }
                }
            }
        }
    }
    if (!any) throw InvalidArgument("mesh_from_mask: mask is empty");
    return Surface::from_triangles(std::move(vertices), std::move(faces), std::move(sources), g);
}

SurfacePatch patch_from_voxels(const SurfacePtr& surface, const BinaryMask& voxels, double radius_diagonals) {
    const Geometry& g = voxels.geometry();
    require_same_grid(surface->generator(), g, "patch_from_voxels");
    SurfacePatch out(surface);
    const double radius = radius_diagonals * g.voxel_diagonal();
    const double r2 = radius * radius * (1.0 + 1e-9) + 1e-12;
    Index3 reach{};
    for (int a = 0; a < 3; ++a) reach[a] = static_cast<int>(std::ceil(radius / g.spacing[a])) + 1;
    const auto n = static_cast<int>(surface->vertex_count());
    for (int v = 0; v < n; ++v) {
        const std::int64_t src = surface->source_voxel(v);
        if (src >= 0 && voxels[static_cast<std::size_t>(src)] != 0) {
            out.insert(v);
            continue;
        }
        if (radius <= 0.0) continue;
        const Vec3& p = surface->vertices()[static_cast<std::size_t>(v)];
        const Vec3 ci = g.world_to_index(p);
        Index3 lo{};
        Index3 hi{};
        for (int a = 0; a < 3; ++a) {
            const int c = static_cast<int>(std::floor(ci[a]));
            lo[a] = std::max(0, c - reach[a]);
            hi[a] = std::min(g.dims[a] - 1, c + reach[a]);
        }
        bool found = false;
        for (int i = lo[0]; i <= hi[0] && !found; ++i) {
            for (int j = lo[1]; j <= hi[1] && !found; ++j) {
                for (int k = lo[2]; k <= hi[2] && !found; ++k) {
                    if (voxels.at(i, j, k) == 0) continue;
                    found = (g.index_to_world(i, j, k) - p).squaredNorm() <= r2;
                }
            }
        }
        if (found) out.insert(v);
    }
    return out;
}

SurfacePatch surface_dilate(const SurfacePatch& patch, const SurfacePatch& domain, int iterations) {
    if (patch.parent() != domain.parent()) throw InvalidArgument("surface_dilate: patch and domain differ in surface");
    SurfacePatch cur = patch;
    std::vector<int> frontier = cur.vertex_ids();
    for (int it = 0; it < iterations && !frontier.empty(); ++it) {
        std::vector<int> added;
        for (int v : frontier) {
            for (int u : cur.surface().neighbors(v)) {
                if (domain.contains(u) && !cur.contains(u)) {
                    cur.insert(u);
                    added.push_back(u);
                }
            }
        }
        frontier = std::move(added);
    }
    return cur;
}

SurfacePatch surface_erode(const SurfacePatch& patch, int iterations) {
    SurfacePatch cur = patch;
    for (int it = 0; it < iterations && !cur.empty(); ++it) {
        std::vector<int> removed;
        for (int v : cur.vertex_ids()) {
            for (int u : cur.surface().neighbors(v)) {
                if (!cur.contains(u)) {
                    removed.push_back(v);
                    break;
                }
            }
        }
        if (removed.empty()) break;
        for (int v : removed) cur.erase(v);
    }
    return cur;
}

SurfacePatch surface_close(const SurfacePatch& patch, const SurfacePatch& domain, int n_dilate, int n_erode) {
    return surface_erode(surface_dilate(patch, domain, n_dilate), n_erode);
}

SurfacePatch restricted_dilate(const SurfacePatch& patch, const SurfacePatch& domain,
                               const PatchBoundaryRestriction& restriction) {
    SurfacePatch allowed = domain;
    for (int v : restriction.forbidden) allowed.erase(v);
    const auto n = static_cast<int>(domain.parent() ? domain.surface().vertex_count() : 0);
    return surface_dilate(patch, allowed, std::max(n, 1));
}

std::vector<SurfacePatch> patch_components(const SurfacePatch& patch) {
    std::vector<SurfacePatch> out;
    if (!patch.parent()) return out;
    std::vector<std::uint8_t> seen(patch.surface().vertex_count(), 0);
    for (int seed : patch.vertex_ids()) {
        if (seen[static_cast<std::size_t>(seed)] != 0) continue;
        SurfacePatch comp(patch.parent());
        std::deque<int> queue{seed};
        seen[static_cast<std::size_t>(seed)] = 1;
        while (!queue.empty()) {
            const int v = queue.front();
            queue.pop_front();
            comp.insert(v);
            for (int u : patch.surface().neighbors(v)) {
                if (patch.contains(u) && seen[static_cast<std::size_t>(u)] == 0) {
                    seen[static_cast<std::size_t>(u)] = 1;
                    queue.push_back(u);
                }
            }
        }
        out.push_back(std::move(comp));
    }
    return out;
}

}  // namespace kneemorph
