#pragma once

#include <string>
#include <vector>

#include "kneemorph/surface.hpp"

namespace kneemorph {

enum class Compartment { femoral, tibial };
enum class MergeMode { union_masks, intersection };

/// Full-thickness cartilage loss on a bone surface.
struct FclResult {
    /// Pseudo-healthy cartilage footprint on the bone surface.
    SurfacePatch pseudo_healthy_patch;
    /// Footprint of the subject's own cartilage.
    SurfacePatch cartilage_patch;
    /// Vertices of the denuded faces.
    SurfacePatch fcl_patch;
    /// Induced pseudo-healthy faces that are not induced cartilage faces.
    std::vector<int> denuded_faces;
    double pseudo_healthy_area = 0.0;
    double denuded_area = 0.0;
    double fcl_percent = 0.0;
};

struct FclParams {
    MergeMode merge = MergeMode::union_masks;
    int close_dilate = 4;
    int close_erode = 4;
    int tibial_order = 3;
    int femoral_order = 4;
    double mapping_radius = kCornerMappingRadius;
};

/// Union (or intersection) of subject cartilage and warped template cartilage.
[[nodiscard]] BinaryMask merge_cartilage_masks(const BinaryMask& subject, const BinaryMask& warped_template,
                                               MergeMode mode = MergeMode::union_masks);

/// Add every complement component of the patch that is enclosed by it. The
/// largest complement component is the exterior and is never filled.
[[nodiscard]] SurfacePatch fill_holes_connectivity(const SurfacePatch& cart_on_bone);

struct CurveFitOutcome {
    SurfacePatch patch;
    /// Vertices added by the fit.
    std::size_t added = 0;
    bool skipped = false;
    std::string reason;
};

/// Recover penetrative defects that reach the cartilage edge by fitting the
/// footprint outline. Tibial outlines are fitted with polynomials in in-plane
/// Cartesian coordinates; femoral outlines per condyle in polar coordinates
/// around the left-right axis (polynomial in axial position, trigonometric
/// in angle). Only outline dips enclosed on both sides by fitted outline are
/// filled. Returns the input unchanged (skipped) when the outline is too small
/// for the fit order.
[[nodiscard]] CurveFitOutcome fill_holes_curvefit(const SurfacePatch& cart_on_bone, Compartment compartment,
                                                  int order = -1);

/// Pseudo-healthy reconstruction and denuded-area estimate.
[[nodiscard]] FclResult estimate_fcl(const BinaryMask& cart, const SurfacePtr& bone_surface,
                                     const BinaryMask& warped_template_cart, Compartment compartment,
                                     const FclParams& params = {});

/// Convenience overload that meshes the bone mask first.
[[nodiscard]] FclResult estimate_fcl(const BinaryMask& cart, const BinaryMask& bone,
                                     const BinaryMask& warped_template_cart, Compartment compartment,
                                     const FclParams& params = {});

}  // namespace kneemorph
