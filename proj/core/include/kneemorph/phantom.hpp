#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kneemorph/parcellation.hpp"
#include "kneemorph/volume.hpp"

namespace kneemorph {

enum class PhantomKind { slab, cuboid_defect, shell, two_lobe_fc, tibial_disc, knee };

[[nodiscard]] std::string_view phantom_kind_name(PhantomKind kind);
[[nodiscard]] PhantomKind phantom_kind_from_name(std::string_view name);

/// Full-thickness punch-through defect.
struct DefectSpec {
    /// Fraction of the cartilage footprint removed, in (0, 1).
    double fraction = 0.2;
    /// Defect centre in normalised footprint coordinates; a seeded random
    /// interior position when absent.
    std::optional<std::array<double, 2>> location;
    /// Touch the +y edge of the footprint instead of sitting inside it.
    bool at_edge = false;
    /// Rotate the defect rectangle in the footprint plane.
    bool rotated = false;
    double angle_deg = 30.0;
};

struct PhantomSpec {
    PhantomKind kind = PhantomKind::cuboid_defect;
    /// Grid dims. For slab and cuboid phantoms the cartilage footprint is the
    /// grid minus a 4-voxel margin on each side in x and y.
    Index3 dims{48, 48, 10};
    Vec3 spacing{1.0, 1.0, 1.0};
    std::optional<DefectSpec> defect;
    double thickness_mm = 3.0;
    KneeSide side = KneeSide::right;
};

/// Defaults per kind (dims, thickness, defect).
[[nodiscard]] PhantomSpec default_phantom_spec(PhantomKind kind);

struct CompartmentTruth {
    std::string name;
    int cart_label = 0;
    int bone_label = 0;
    std::int64_t intact_voxels = 0;
    std::int64_t removed_voxels = 0;
    /// removed / intact cartilage voxels.
    double denuded_fraction = 0.0;
    /// Intact footprint area (columns times column cross-section), mm^2.
    double footprint_area_mm2 = 0.0;
};

struct PhantomTruth {
    double thickness_mm = 0.0;
    /// Over all compartments.
    double denuded_fraction = 0.0;
    std::int64_t footprint_columns = 0;
    std::int64_t defect_columns = 0;
    double footprint_area_mm2 = 0.0;
    /// Slab and cuboid phantoms: thickness (mm) per footprint column
    /// (i * ny + j), 0 under the defect and outside the footprint.
    std::vector<double> column_thickness;
    Index3 footprint_lo{0, 0, 0};
    Index3 footprint_hi{0, 0, 0};
    /// Two-lobe femoral phantoms: constructed notch position (mm).
    std::optional<Vec3> notch;
    std::vector<CompartmentTruth> compartments;
};

struct Phantom {
    PhantomSpec spec;
    LabelVolume labels;
    /// Union of all cartilage labels / all bone labels.
    BinaryMask cart;
    BinaryMask bone;
    /// Same phantom without its defect.
    BinaryMask intact_cart;
    LabelVolume intact_labels;
    PhantomTruth truth;
};

/// Deterministic for a fixed (spec, seed). Throws InvalidArgument for
/// invalid specs.
[[nodiscard]] Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed = 0);

/// Mirror a label volume left-right (first axis), keeping its geometry.
[[nodiscard]] LabelVolume mirror_x(const LabelVolume& labels);

}  // namespace kneemorph
