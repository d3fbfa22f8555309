#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kneemorph/fcl.hpp"
#include "kneemorph/metrics.hpp"
#include "kneemorph/parcellation.hpp"
#include "kneemorph/thickness.hpp"
#include "kneemorph/volume.hpp"
#include "kneemorph/warp.hpp"

namespace kneemorph {

inline constexpr const char* kVersion = "0.1.0";

struct PipelineParams {
    int neighbors = 16;
    int smooth_iterations = 3;
    int close_dilate = 4;
    int close_erode = 4;
    double max_ray_mm = 15.0;
    double orientation_radius = 5.0;
    int gap_rounds = kDefaultGapRounds;
    int lncc_window = 3;
    int tibial_order = 3;
    int femoral_order = 4;
    int integration_steps = 7;
    double template_threshold = 0.5;
    MergeMode merge = MergeMode::union_masks;
    ThicknessMean thickness_mean = ThicknessMean::total_subchondral;
    double downsample_scale = 0.5;

    /// Throws InvalidArgument for out-of-range values.
    void validate() const;
};

struct PipelineConfig {
    std::filesystem::path seg;
    std::optional<std::filesystem::path> image;
    std::optional<std::filesystem::path> template_seg;
    std::optional<std::filesystem::path> svf;
    std::optional<std::filesystem::path> dvf;
    std::filesystem::path out = "out";
    KneeSide side = KneeSide::right;
    LabelSchema schema = default_label_schema();
    PipelineParams params;
    bool write_meshes = true;
};

/// JSON round trip for configs (paths, side, schema, params).
[[nodiscard]] std::string config_to_json(const PipelineConfig& config);
[[nodiscard]] PipelineConfig config_from_json(const std::string& text, PipelineConfig base = {});
/// Params only, canonical form used for the provenance hash.
[[nodiscard]] std::string params_to_json(const PipelineParams& params);
/// 64-bit FNV-1a of the canonical params JSON, hex encoded.
[[nodiscard]] std::string params_hash(const PipelineParams& params);

/// Error raised by run_pipeline; names the stage that failed.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message)
        : Error(message), stage_(std::move(stage)) {}
    [[nodiscard]] const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

/// In-memory inputs for one subject.
struct SubjectInputs {
    LabelVolume seg;
    std::optional<LabelVolume> template_seg;
    std::optional<DeformationField> field;
    std::vector<std::string> input_names;
};

struct CompartmentOutputs {
    std::string name;
    std::optional<ThicknessResult> thickness;
    std::optional<FclResult> fcl;
    std::optional<SurfaceParcellation> parcellation;
    ThicknessMap bone_thickness;
};

struct PipelineResult {
    RegionalReport report;
    LabelVolume atlas;
    std::vector<CompartmentOutputs> compartments;
    std::vector<std::string> warnings;
};

/// Downstream analysis of one subject: reorient, optionally warp the template,
/// then per compartment thickness, FCL, parcellation and quantification.
/// Compartments run on up to `workers` threads. Throws StageError.
[[nodiscard]] PipelineResult analyze_subject(const SubjectInputs& inputs, const PipelineConfig& config,
                                             int workers = 1);

/// File-based pipeline: loads inputs, runs analyze_subject and writes
/// report.csv, report.json, atlas.nii.gz and PLY meshes into config.out.
/// Throws StageError.
PipelineResult run_pipeline(const PipelineConfig& config, int workers = 1);

}  // namespace kneemorph
