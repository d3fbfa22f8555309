#include "kneemorph/fcl.hpp"

#include <algorithm>
#include <unordered_set>

#include "kneemorph/morphology.hpp"

namespace kneemorph {

BinaryMask merge_cartilage_masks(const BinaryMask& subject, const BinaryMask& warped_template, MergeMode mode) {
    return mode == MergeMode::union_masks ? mask_union(subject, warped_template)
                                          : mask_intersection(subject, warped_template);
}

SurfacePatch fill_holes_connectivity(const SurfacePatch& cart_on_bone) {
    if (!cart_on_bone.parent()) return cart_on_bone;
    const SurfacePatch complement = SurfacePatch(cart_on_bone.parent(), true) - cart_on_bone;
    std::vector<SurfacePatch> comps = patch_components(complement);
    if (comps.size() <= 1) return cart_on_bone;
    std::size_t exterior = 0;
    for (std::size_t c = 1; c < comps.size(); ++c) {
        if (comps[c].size() > comps[exterior].size()) exterior = c;
    }
    SurfacePatch out = cart_on_bone;
    for (std::size_t c = 0; c < comps.size(); ++c) {
        if (c == exterior) continue;
        for (int v : comps[c].vertex_ids()) out.insert(v);
    }
    return out;
}

FclResult estimate_fcl(const BinaryMask& cart, const SurfacePtr& bone_surface, const BinaryMask& warped_template_cart,
                       Compartment compartment, const FclParams& params) {
    require_same_grid(cart.geometry(), warped_template_cart.geometry(), "estimate_fcl");
    const BinaryMask merged = merge_cartilage_masks(cart, warped_template_cart, params.merge);
    const SurfacePatch mapped = patch_from_voxels(bone_surface, merged, params.mapping_radius);
    const SurfacePatch filled = fill_holes_connectivity(mapped);
    const int order = compartment == Compartment::tibial ? params.tibial_order : params.femoral_order;
    const CurveFitOutcome fitted = fill_holes_curvefit(filled, compartment, order);
    const SurfacePatch all(bone_surface, true);

    FclResult r;
    r.pseudo_healthy_patch = surface_close(fitted.patch, all, params.close_dilate, params.close_erode);
    r.cartilage_patch = patch_from_voxels(bone_surface, cart, params.mapping_radius);
    const std::vector<int> pseudo_faces = r.pseudo_healthy_patch.induced_faces();
    if (pseudo_faces.empty()) throw InvalidArgument("estimate_fcl: pseudo-healthy surface is empty");

    r.fcl_patch = SurfacePatch(bone_surface);
    for (int f : pseudo_faces) {
        const double a = bone_surface->face_area(f);
        r.pseudo_healthy_area += a;
        const Face& t = bone_surface->faces()[static_cast<std::size_t>(f)];
        const bool covered =
            r.cartilage_patch.contains(t[0]) && r.cartilage_patch.contains(t[1]) && r.cartilage_patch.contains(t[2]);
        if (covered) continue;
        r.denuded_faces.push_back(f);
        r.denuded_area += a;
        for (int v : t) r.fcl_patch.insert(v);
    }
    r.fcl_percent = std::clamp(100.0 * r.denuded_area / r.pseudo_healthy_area, 0.0, 100.0);
    return r;
}

FclResult estimate_fcl(const BinaryMask& cart, const BinaryMask& bone, const BinaryMask& warped_template_cart,
                       Compartment compartment, const FclParams& params) {
    require_same_grid(cart.geometry(), bone.geometry(), "estimate_fcl");
    return estimate_fcl(cart, mesh_from_mask(bone), warped_template_cart, compartment, params);
}

}  // namespace kneemorph
