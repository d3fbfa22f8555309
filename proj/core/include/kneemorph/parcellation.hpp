#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "kneemorph/surface.hpp"
#include "kneemorph/volume.hpp"

namespace kneemorph {

/// The 20 cartilage subregions; numeric values are the atlas label codes.
enum class Region : std::uint8_t {
    aMFC = 1, ecMFC, ccMFC, icMFC, pMFC,
    aLFC, ecLFC, ccLFC, icLFC, pLFC,
    aMTC, eMTC, pMTC, iMTC, cMTC,
    aLTC, eLTC, pLTC, iLTC, cLTC,
};

inline constexpr int kRegionCount = 20;

[[nodiscard]] std::string_view region_name(Region r);
[[nodiscard]] std::optional<Region> region_from_name(std::string_view name);
[[nodiscard]] constexpr int region_code(Region r) { return static_cast<int>(r); }
[[nodiscard]] const std::array<Region, kRegionCount>& all_regions();

enum class KneeSide { left, right };
enum class TibialPlate { medial, lateral };

/// Region per vertex of one or more patches on a surface; 0 = unassigned.
struct SurfaceParcellation {
    SurfacePtr surface;
    std::vector<std::uint8_t> region;
    KneeSide side = KneeSide::right;

    [[nodiscard]] std::vector<int> vertices_of(Region r) const;
};

struct NotchResult {
    Vec3 position;
    /// True when no two-lobed structure was found and the centroid was used.
    bool fallback = false;
};

/// Intercondylar notch on a femoral cartilage patch. Coronal profiles of the
/// most posterior cartilage per left-right column expose the two condyles;
/// the notch sits at the centre of the gap between them, on the most
/// posterior cartilage of the bridge.
[[nodiscard]] NotchResult detect_intercondylar_notch(const SurfacePatch& fc);

/// Posterior cutting plane coordinate: 60% of the way from the notch to the
/// posterior end.
[[nodiscard]] constexpr double posterior_plane_y(double notch_y, double posterior_end_y) {
    return notch_y - 0.6 * (notch_y - posterior_end_y);
}

/// Femoral regions (aMFC..pLFC) for the members of `fc`. Throws
/// InvalidArgument when the notch lies outside the patch bounding box.
[[nodiscard]] SurfaceParcellation parcellate_femoral(const SurfacePatch& fc, const Vec3& notch, KneeSide side);

/// Central ellipse fraction of the plate area.
inline constexpr double kTibialCentralFraction = 0.20;

/// Tibial regions for one plate. Throws InvalidArgument for fewer than 20
/// vertices.
[[nodiscard]] SurfaceParcellation parcellate_tibial(const SurfacePatch& tc, KneeSide side, TibialPlate plate);

/// Geometry of the tibial ellipse, exposed for inspection.
struct TibialEllipse {
    Vec3 center;
    Vec3 major_axis;
    Vec3 minor_axis;
    double semi_major = 0.0;
    double semi_minor = 0.0;
    double sigma1 = 0.0;
    double sigma2 = 0.0;
};
[[nodiscard]] TibialEllipse tibial_ellipse(const SurfacePatch& tc);

/// Merge parcellations on the same surface; later assignments never
/// overwrite earlier ones.
[[nodiscard]] SurfaceParcellation merge_parcellations(const std::vector<SurfaceParcellation>& parts);

/// Each cartilage voxel takes the region of the nearest labelled vertex
/// (ties: smallest region code). Throws InvalidArgument for an empty
/// parcellation.
[[nodiscard]] LabelVolume labels_to_volume(const SurfaceParcellation& parcellation, const BinaryMask& cart);

}  // namespace kneemorph
