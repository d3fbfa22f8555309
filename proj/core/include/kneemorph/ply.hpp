#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kneemorph/surface.hpp"

namespace kneemorph::ply {

enum class Encoding { ascii, binary_little_endian };

/// Optional per-vertex properties, indexed by parent vertex id.
struct VertexProperties {
    std::optional<std::pair<std::string, std::vector<float>>> scalar;
    std::optional<std::pair<std::string, std::vector<int>>> integer;
};

/// Write the induced sub-mesh of `patch` (vertices re-indexed in id order).
void write(const std::filesystem::path& path, const SurfacePatch& patch, const VertexProperties& props = {},
           Encoding encoding = Encoding::binary_little_endian, const std::string& comment = {});

/// Mesh read back from a PLY file written by `write`.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::vector<float> scalar;
    std::vector<int> integer;
};
[[nodiscard]] Mesh read(const std::filesystem::path& path);

}  // namespace kneemorph::ply
