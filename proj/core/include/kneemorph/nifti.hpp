#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include "kneemorph/volume.hpp"

namespace kneemorph {

struct VectorField;

/// NIfTI-1 single-file (.nii, .nii.gz) reading and writing. Supported
/// datatypes: uint8, int16, int32, float32. Volumes are 3D and scalar; vector
/// fields carry a trailing dimension of size 3 (see docs/file-formats.md).
namespace nifti {

/// Result of loading a 3D scalar file: integer datatypes give labels.
using AnyVolume = std::variant<LabelVolume, ScalarVolume>;

[[nodiscard]] AnyVolume load_volume(const std::filesystem::path& path);
[[nodiscard]] LabelVolume load_labels(const std::filesystem::path& path);
[[nodiscard]] ScalarVolume load_scalar(const std::filesystem::path& path);

/// Labels are stored as uint8 when they fit, otherwise int16 or int32.
/// `description` goes into the header descrip field (79 chars kept).
void save(const LabelVolume& volume, const std::filesystem::path& path, const std::string& description = {});
void save(const ScalarVolume& volume, const std::filesystem::path& path, const std::string& description = {});

[[nodiscard]] VectorField load_field(const std::filesystem::path& path);
void save_field(const VectorField& field, const std::filesystem::path& path, const std::string& description = {});

}  // namespace nifti
}  // namespace kneemorph
