#include "kneemorph/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <utility>

namespace kneemorph {
namespace {

constexpr int kKdLeafSize = 8;
constexpr int kBvhLeafSize = 4;

}  // namespace

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (!points_.empty()) build(0, static_cast<int>(points_.size()), 0);
}

int KdTree::build(int begin, int end, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{begin, end, -1, 0.0, -1, -1});
    if (end - begin <= kKdLeafSize) return id;
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
    Vec3 hi = -lo;
    for (int i = begin; i < end; ++i) {
        lo = lo.cwiseMin(points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])]);
        hi = hi.cwiseMax(points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
        const double pa = points_[static_cast<std::size_t>(a)][axis];
        const double pb = points_[static_cast<std::size_t>(b)][axis];
        return pa < pb || (pa == pb && a < b);
    });
    const double split = points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(mid)])][axis];
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid, end, depth + 1);
    Node& n = nodes_[static_cast<std::size_t>(id)];
    n.axis = axis;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
}

std::vector<int> KdTree::nearest(const Vec3& query, int k) const {
    std::vector<int> out;
    if (k <= 0 || points_.empty()) return out;
    using Entry = std::pair<double, int>;
    std::priority_queue<Entry> heap;  // worst (largest distance, then index) on top
    auto consider = [&](int idx) {
        const Entry e{(points_[static_cast<std::size_t>(idx)] - query).squaredNorm(), idx};
        if (static_cast<int>(heap.size()) < k) {
            heap.push(e);
        } else if (e < heap.top()) {
            heap.pop();
            heap.push(e);
        }
    };
    auto search = [&](auto&& self, int node_id) -> void {
        const Node& n = nodes_[static_cast<std::size_t>(node_id)];
        if (n.axis < 0) {
            for (int i = n.begin; i < n.end; ++i) consider(order_[static_cast<std::size_t>(i)]);
            return;
        }
        const double diff = query[n.axis] - n.split;
        const int first = diff < 0 ? n.left : n.right;
        const int second = diff < 0 ? n.right : n.left;
        self(self, first);
        if (static_cast<int>(heap.size()) < k || diff * diff <= heap.top().first) self(self, second);
    };
    search(search, 0);
    out.resize(heap.size());
    for (auto i = static_cast<int>(heap.size()) - 1; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = heap.top().second;
        heap.pop();
    }
    return out;
}

int KdTree::nearest_one(const Vec3& query) const {
    const auto r = nearest(query, 1);
    return r.empty() ? -1 : r.front();
}

std::vector<int> KdTree::within(const Vec3& query, double radius) const {
    std::vector<int> out;
    if (points_.empty()) return out;
    const double r2 = radius * radius;
    auto search = [&](auto&& self, int node_id) -> void {
        const Node& n = nodes_[static_cast<std::size_t>(node_id)];
        if (n.axis < 0) {
            for (int i = n.begin; i < n.end; ++i) {
                const int idx = order_[static_cast<std::size_t>(i)];
                if ((points_[static_cast<std::size_t>(idx)] - query).squaredNorm() <= r2) out.push_back(idx);
            }
            return;
        }
        const double diff = query[n.axis] - n.split;
        if (diff <= radius) self(self, n.left);
        if (diff >= -radius) self(self, n.right);
    };
    search(search, 0);
    return out;
}

std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& direction, const Vec3& a, const Vec3& b,
                                         const Vec3& c) {
    int kz = 0;
    direction.cwiseAbs().maxCoeff(&kz);
    int kx = (kz + 1) % 3;
    int ky = (kx + 1) % 3;
    if (direction[kz] < 0.0) std::swap(kx, ky);
    const double dz = direction[kz];
    if (dz == 0.0) return std::nullopt;
    const double sx = direction[kx] / dz;
    const double sy = direction[ky] / dz;
    const double sz = 1.0 / dz;

    const Vec3 A = a - origin;
    const Vec3 B = b - origin;
    const Vec3 C = c - origin;
    const double ax = A[kx] - sx * A[kz];
    const double ay = A[ky] - sy * A[kz];
    const double bx = B[kx] - sx * B[kz];
    const double by = B[ky] - sy * B[kz];
    const double cx = C[kx] - sx * C[kz];
    const double cy = C[ky] - sy * C[kz];

    const double u = cx * by - cy * bx;
    const double v = ax * cy - ay * cx;
    const double w = bx * ay - by * ax;
    if ((u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0)) return std::nullopt;
    const double det = u + v + w;
    if (det == 0.0) return std::nullopt;
    const double t = (u * sz * A[kz] + v * sz * B[kz] + w * sz * C[kz]) / det;
    return t;
}

TriangleBvh::TriangleBvh(SurfacePtr surface, std::vector<int> faces)
    : surface_(std::move(surface)), faces_(std::move(faces)) {
    const auto& verts = surface_->vertices();
    centroids_.reserve(faces_.size());
    for (int f : faces_) {
        const Face& t = surface_->faces()[static_cast<std::size_t>(f)];
        centroids_.push_back((verts[static_cast<std::size_t>(t[0])] + verts[static_cast<std::size_t>(t[1])] +
                              verts[static_cast<std::size_t>(t[2])]) /
                             3.0);
    }
    if (!faces_.empty()) build(0, static_cast<int>(faces_.size()));
}

int TriangleBvh::build(int begin, int end) {
    const auto& verts = surface_->vertices();
    Node node;
    node.lo = Vec3::Constant(std::numeric_limits<double>::max());
    node.hi = -node.lo;
    for (int i = begin; i < end; ++i) {
        const Face& t = surface_->faces()[static_cast<std::size_t>(faces_[static_cast<std::size_t>(i)])];
        for (int c = 0; c < 3; ++c) {
            node.lo = node.lo.cwiseMin(verts[static_cast<std::size_t>(t[c])]);
            node.hi = node.hi.cwiseMax(verts[static_cast<std::size_t>(t[c])]);
        }
    }
    node.begin = begin;
    node.end = end;
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kBvhLeafSize) return id;

    Vec3 clo = Vec3::Constant(std::numeric_limits<double>::max());
    Vec3 chi = -clo;
    for (int i = begin; i < end; ++i) {
        clo = clo.cwiseMin(centroids_[static_cast<std::size_t>(i)]);
        chi = chi.cwiseMax(centroids_[static_cast<std::size_t>(i)]);
    }
    int axis = 0;
    (chi - clo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    // Sort faces and centroids together by centroid along the axis.
    std::vector<int> idx(static_cast<std::size_t>(end - begin));
    std::iota(idx.begin(), idx.end(), begin);
    std::nth_element(idx.begin(), idx.begin() + (mid - begin), idx.end(), [&](int a, int b) {
        const double pa = centroids_[static_cast<std::size_t>(a)][axis];
        const double pb = centroids_[static_cast<std::size_t>(b)][axis];
        return pa < pb || (pa == pb && faces_[static_cast<std::size_t>(a)] < faces_[static_cast<std::size_t>(b)]);
    });
    std::vector<int> f2;
    std::vector<Vec3> c2;
    f2.reserve(idx.size());
    c2.reserve(idx.size());
    for (int i : idx) {
        f2.push_back(faces_[static_cast<std::size_t>(i)]);
        c2.push_back(centroids_[static_cast<std::size_t>(i)]);
    }
    std::copy(f2.begin(), f2.end(), faces_.begin() + begin);
    std::copy(c2.begin(), c2.end(), centroids_.begin() + begin);

    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
}

std::optional<RayHit> TriangleBvh::cast(const Vec3& origin, const Vec3& direction, double max_distance,
                                        double min_distance) const {
    if (nodes_.empty()) return std::nullopt;
    const double len = direction.norm();
    if (!(len > 0.0)) return std::nullopt;
    const Vec3 dir = direction / len;
    const Vec3 inv = dir.cwiseInverse();
    const auto& verts = surface_->vertices();

    std::optional<RayHit> best;
    double limit = max_distance;
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const Node& n = nodes_[static_cast<std::size_t>(stack.back())];
        stack.pop_back();
        // Slab test with a small pad so hits on box faces are not lost.
        double t0 = -std::numeric_limits<double>::infinity();
        double t1 = std::numeric_limits<double>::infinity();
        bool miss = false;
        for (int a = 0; a < 3 && !miss; ++a) {
            const double pad = 1e-9 * (1.0 + std::abs(n.lo[a]) + std::abs(n.hi[a]));
            if (dir[a] == 0.0) {
                miss = origin[a] < n.lo[a] - pad || origin[a] > n.hi[a] + pad;
                continue;
            }
            double ta = (n.lo[a] - pad - origin[a]) * inv[a];
            double tb = (n.hi[a] + pad - origin[a]) * inv[a];
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
            miss = t0 > t1;
        }
        if (miss || t1 < min_distance || t0 > limit) continue;
        if (n.left < 0) {
            for (int i = n.begin; i < n.end; ++i) {
                const int f = faces_[static_cast<std::size_t>(i)];
                const Face& t = surface_->faces()[static_cast<std::size_t>(f)];
                const auto hit = intersect_triangle(origin, dir, verts[static_cast<std::size_t>(t[0])],
                                                    verts[static_cast<std::size_t>(t[1])],
                                                    verts[static_cast<std::size_t>(t[2])]);
                if (!hit || *hit < min_distance || *hit > limit) continue;
                if (!best || *hit < best->distance || (*hit == best->distance && f < best->face)) {
                    best = RayHit{*hit, f};
                    limit = *hit;
                }
            }
        } else {
            stack.push_back(n.right);
            stack.push_back(n.left);
        }
    }
    return best;
}

}  // namespace kneemorph
