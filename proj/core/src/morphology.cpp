#include "kneemorph/morphology.hpp"

#include <algorithm>
#include <numeric>

namespace kneemorph {
namespace {

std::vector<Index3> make_offsets(int max_nonzero) {
    std::vector<Index3> out;
    for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
            for (int dk = -1; dk <= 1; ++dk) {
                const int nz = (di != 0) + (dj != 0) + (dk != 0);
                if (nz > 0 && nz <= max_nonzero) out.push_back({di, dj, dk});
            }
        }
    }
    return out;
}

BinaryMask binary_op(const BinaryMask& a, const BinaryMask& b, const char* what, auto op) {
    require_same_grid(a.geometry(), b.geometry(), what);
    BinaryMask out(a.geometry());
    for (std::size_t n = 0; n < a.size(); ++n) out[n] = op(a[n] != 0, b[n] != 0) ? 1 : 0;
    return out;
}

}  // namespace

const std::vector<Index3>& neighbor_offsets(Connectivity c) {
    static const std::vector<Index3> face = make_offsets(1);
    static const std::vector<Index3> edge = make_offsets(2);
    static const std::vector<Index3> vertex = make_offsets(3);
    switch (c) {
        case Connectivity::face6: return face;
        case Connectivity::edge18: return edge;
        default: return vertex;
    }
}

BinaryMask boundary(const BinaryMask& mask, Connectivity c) {
    const Geometry& g = mask.geometry();
    const auto& offsets = neighbor_offsets(c);
    BinaryMask out(g);
    for (int i = 0; i < g.dims[0]; ++i) {
        for (int j = 0; j < g.dims[1]; ++j) {
            for (int k = 0; k < g.dims[2]; ++k) {
                if (mask.at(i, j, k) == 0) continue;
                for (const auto& o : offsets) {
                    const int a = i + o[0];
                    const int b = j + o[1];
                    const int d = k + o[2];
                    if (!g.contains(a, b, d) || mask.at(a, b, d) == 0) {
                        out.at(i, j, k) = 1;
                        break;
                    }
                }
            }
        }
    }
    return out;
}

BinaryMask invert(const BinaryMask& mask) {
    BinaryMask out(mask.geometry());
    for (std::size_t n = 0; n < mask.size(); ++n) out[n] = mask[n] == 0 ? 1 : 0;
    return out;
}

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
    return binary_op(a, b, "mask_union", [](bool x, bool y) { return x || y; });
}

BinaryMask mask_intersection(const BinaryMask& a, const BinaryMask& b) {
    return binary_op(a, b, "mask_intersection", [](bool x, bool y) { return x && y; });
}

BinaryMask mask_difference(const BinaryMask& a, const BinaryMask& b) {
    return binary_op(a, b, "mask_difference", [](bool x, bool y) { return x && !y; });
}

BinaryMask fill_gap(const BinaryMask& cart, const BinaryMask& bone, int max_rounds) {
    require_same_grid(cart.geometry(), bone.geometry(), "fill_gap");
    if (max_rounds < 0) throw InvalidArgument("fill_gap: max_rounds must be non-negative");
    for (std::size_t n = 0; n < cart.size(); ++n) {
        if (cart[n] != 0 && bone[n] != 0) throw InvalidArgument("fill_gap: cartilage and bone masks overlap");
    }
    const Geometry& g = cart.geometry();
    BinaryMask out = mask_union(cart, bone);
    const auto& dirs = neighbor_offsets(Connectivity::face6);
    for (int i = 0; i < g.dims[0]; ++i) {
        for (int j = 0; j < g.dims[1]; ++j) {
            for (int k = 0; k < g.dims[2]; ++k) {
                if (bone.at(i, j, k) == 0) continue;
                for (const auto& e : dirs) {
                    // Walk through background; fill the run only if it ends at cartilage.
                    int hit = -1;
                    for (int s = 1; s <= max_rounds + 1; ++s) {
                        const int a = i + s * e[0];
                        const int b = j + s * e[1];
                        const int d = k + s * e[2];
                        if (!g.contains(a, b, d) || bone.at(a, b, d) != 0) break;
                        if (cart.at(a, b, d) != 0) {
                            hit = s;
                            break;
                        }
                    }
                    for (int s = 1; s < hit; ++s) out.at(i + s * e[0], j + s * e[1], k + s * e[2]) = 1;
                }
            }
        }
    }
    return out;
}

Components connected_components(const BinaryMask& mask, Connectivity c) {
    const Geometry& g = mask.geometry();
    const auto& offsets = neighbor_offsets(c);
    Volume<std::int32_t> provisional(g, 0);
    std::vector<std::int64_t> sizes;
    std::vector<std::int64_t> stack;
    for (std::size_t n = 0; n < mask.size(); ++n) {
        if (mask[n] == 0 || provisional[n] != 0) continue;
        const auto id = static_cast<std::int32_t>(sizes.size() + 1);
        std::int64_t size = 0;
        provisional[n] = id;
        stack.push_back(static_cast<std::int64_t>(n));
        while (!stack.empty()) {
            const std::int64_t cur = stack.back();
            stack.pop_back();
            ++size;
            const Index3 p = g.unravel(cur);
            for (const auto& o : offsets) {
                const int a = p[0] + o[0];
                const int b = p[1] + o[1];
                const int d = p[2] + o[2];
                if (!g.contains(a, b, d)) continue;
                const auto m = static_cast<std::size_t>(g.linear(a, b, d));
                if (mask[m] != 0 && provisional[m] == 0) {
                    provisional[m] = id;
                    stack.push_back(static_cast<std::int64_t>(m));
                }
            }
        }
        sizes.push_back(size);
    }
    // Provisional ids follow the smallest voxel index, so a stable sort by
    // size keeps the tie-break.
    std::vector<int> order(sizes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return sizes[x] > sizes[y]; });
    std::vector<std::int32_t> remap(sizes.size() + 1, 0);
    Components out;
    out.sizes.reserve(sizes.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
        remap[static_cast<std::size_t>(order[r]) + 1] = static_cast<std::int32_t>(r + 1);
        out.sizes.push_back(sizes[static_cast<std::size_t>(order[r])]);
    }
    for (auto& v : provisional.data()) v = remap[static_cast<std::size_t>(v)];
    out.labels = std::move(provisional);
    return out;
}

BinaryMask inner_surface_voxels(const BinaryMask& cart, const BinaryMask& bone, Connectivity c, int gap_rounds) {
    const BinaryMask filled = fill_gap(cart, bone, gap_rounds);
    const BinaryMask grown_bone = mask_difference(filled, cart);
    return mask_intersection(boundary(cart, c), boundary(invert(grown_bone), c));
}

BinaryMask outer_surface_voxels(const BinaryMask& cart, const BinaryMask& inner, Connectivity c) {
    require_same_grid(cart.geometry(), inner.geometry(), "outer_surface_voxels");
    const BinaryMask b = boundary(cart, c);
    for (std::size_t n = 0; n < b.size(); ++n) {
        if (inner[n] != 0 && b[n] == 0) throw InvalidArgument("outer_surface_voxels: inner is not a subset of boundary(cart)");
    }
    return mask_difference(b, inner);
}

}  // namespace kneemorph
