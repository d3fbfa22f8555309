#pragma once

#include <cstdint>
#include <vector>

#include "kneemorph/volume.hpp"

namespace kneemorph {

enum class Connectivity { face6, edge18, vertex26 };

/// Neighbour offsets for a connectivity, in (di, dj, dk) form.
[[nodiscard]] const std::vector<Index3>& neighbor_offsets(Connectivity c);

/// Voxels of `mask` with at least one neighbour outside it; the grid border
/// counts as outside.
[[nodiscard]] BinaryMask boundary(const BinaryMask& mask, Connectivity c = Connectivity::face6);

[[nodiscard]] BinaryMask invert(const BinaryMask& mask);

[[nodiscard]] BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b);
[[nodiscard]] BinaryMask mask_intersection(const BinaryMask& a, const BinaryMask& b);
[[nodiscard]] BinaryMask mask_difference(const BinaryMask& a, const BinaryMask& b);

/// Default number of bone growth rounds in fill_gap.
inline constexpr int kDefaultGapRounds = 3;

/// Close thin background gaps between cartilage and bone by growing bone
/// toward the cartilage. Each round advances the bone front by one voxel along
/// the six axis directions, and only through background voxels that lie on a
/// straight background run ending at cartilage within the remaining rounds.
/// Returns cart, bone and the grown voxels. Throws InvalidArgument when cart
/// and bone overlap.
[[nodiscard]] BinaryMask fill_gap(const BinaryMask& cart, const BinaryMask& bone, int max_rounds = kDefaultGapRounds);

struct Components {
    /// 0 for background, otherwise 1-based component id.
    Volume<std::int32_t> labels;
    /// sizes[id - 1] is the voxel count of component id.
    std::vector<std::int64_t> sizes;
};

/// Connected component labelling. Ids are ordered by decreasing size; ties go
/// to the component holding the smallest linear voxel index.
[[nodiscard]] Components connected_components(const BinaryMask& mask, Connectivity c = Connectivity::face6);

/// Bone-cartilage interface voxels:
/// boundary(cart) & boundary(invert(fill_gap(cart, bone) - cart)).
[[nodiscard]] BinaryMask inner_surface_voxels(const BinaryMask& cart, const BinaryMask& bone,
                                              Connectivity c = Connectivity::face6,
                                              int gap_rounds = kDefaultGapRounds);

/// boundary(cart) - inner. Throws InvalidArgument unless inner is a subset of
/// boundary(cart).
[[nodiscard]] BinaryMask outer_surface_voxels(const BinaryMask& cart, const BinaryMask& inner,
                                              Connectivity c = Connectivity::face6);

}  // namespace kneemorph
