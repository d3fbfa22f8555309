#pragma once

#include "kneemorph/volume.hpp"

namespace kneemorph {

/// Permute and flip voxel axes so each axis points along +R, +A, +S. The
/// world position of every voxel is unchanged. For oblique grids the closest
/// axis is used and the remaining rotation stays in the direction matrix.
template <typename T>
[[nodiscard]] Volume<T> reorient_ras(const Volume<T>& volume);

/// Inversion data for mask_downsample_crop.
struct CropRecord {
    double scale = 0.5;
    /// Window start in the downsampled grid.
    Index3 crop_offset{0, 0, 0};
    Index3 window_dims{1, 1, 1};
    /// Dims of the full downsampled grid the window was taken from.
    Index3 scaled_dims{1, 1, 1};
    Geometry source_geometry;
};

/// Dims of the grid obtained by scaling `dims` (floor, at least 1).
[[nodiscard]] Index3 scaled_dims(const Index3& dims, double scale);

/// Geometry of the cropped, downsampled grid described by `record`.
[[nodiscard]] Geometry low_resolution_geometry(const CropRecord& record);

/// Crop window placement: centroid of nonzero labels in the downsampled grid,
/// clamped so the window stays in bounds.
[[nodiscard]] CropRecord plan_crop(const LabelVolume& seg, const Index3& target_dims, double scale = 0.5);

/// Mask the image by nonzero labels, downsample it with trilinear
/// interpolation and crop the window centred on the anatomy.
[[nodiscard]] std::pair<ScalarVolume, CropRecord> mask_downsample_crop(const ScalarVolume& image,
                                                                        const LabelVolume& seg,
                                                                        const Index3& target_dims,
                                                                        double scale = 0.5);

/// Nearest-neighbour counterpart for label volumes (registration targets).
[[nodiscard]] LabelVolume downsample_crop_labels(const LabelVolume& seg, const CropRecord& record);

/// Place a low-resolution label window back onto the source grid with
/// nearest-neighbour upsampling; voxels outside the window become 0.
[[nodiscard]] LabelVolume restore_resolution(const LabelVolume& low, const CropRecord& record);

/// Intensity normalisation to [0, 1]; a constant image maps to 0.
[[nodiscard]] ScalarVolume normalize_min_max(const ScalarVolume& image);

}  // namespace kneemorph
