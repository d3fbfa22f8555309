#include "kneemorph/pipeline.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <thread>

#include "json.hpp"
#include "kneemorph/nifti.hpp"
#include "kneemorph/ply.hpp"
#include "kneemorph/report_io.hpp"
#include "kneemorph/resample.hpp"

namespace kneemorph {

namespace {

using json = nlohmann::ordered_json;

struct CompartmentDef {
    const char* name;
    const char* cart_tissue;
    const char* bone_tissue;
    Compartment kind;
    TibialPlate plate;
};

constexpr CompartmentDef kCompartments[] = {
    {"FC", "femoral_cartilage", "femur", Compartment::femoral, TibialPlate::medial},
    {"MTC", "medial_tibial_cartilage", "tibia", Compartment::tibial, TibialPlate::medial},
    {"LTC", "lateral_tibial_cartilage", "tibia", Compartment::tibial, TibialPlate::lateral},
};

int label_for(const LabelSchema& schema, const std::string& tissue) {
    for (const auto& [code, name] : schema) {
        if (name == tissue) return code;
    }
    throw StageError("load", "label schema has no '" + tissue + "' entry");
}

const char* merge_name(MergeMode m) { return m == MergeMode::union_masks ? "union" : "intersection"; }
MergeMode merge_from(const std::string& s) {
    if (s == "union") return MergeMode::union_masks;
    if (s == "intersection") return MergeMode::intersection;
    throw InvalidArgument("merge must be 'union' or 'intersection', got '" + s + "'");
}
const char* mean_name(ThicknessMean m) {
    return m == ThicknessMean::total_subchondral ? "total_subchondral" : "covered_only";
}
ThicknessMean mean_from(const std::string& s) {
    if (s == "total_subchondral") return ThicknessMean::total_subchondral;
    if (s == "covered_only") return ThicknessMean::covered_only;
    throw InvalidArgument("thickness_mean must be 'total_subchondral' or 'covered_only', got '" + s + "'");
}

json params_json(const PipelineParams& p) {
    return json{{"neighbors", p.neighbors},
                {"smooth_iterations", p.smooth_iterations},
                {"close_dilate", p.close_dilate},
                {"close_erode", p.close_erode},
                {"max_ray_mm", p.max_ray_mm},
                {"orientation_radius", p.orientation_radius},
                {"gap_rounds", p.gap_rounds},
                {"lncc_window", p.lncc_window},
                {"tibial_order", p.tibial_order},
                {"femoral_order", p.femoral_order},
                {"integration_steps", p.integration_steps},
                {"template_threshold", p.template_threshold},
                {"merge", merge_name(p.merge)},
                {"thickness_mean", mean_name(p.thickness_mean)},
                {"downsample_scale", p.downsample_scale}};
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void params_from_json(const json& j, PipelineParams& p) {
    if (!j.is_object()) throw InvalidArgument("params must be a JSON object");
    static const std::vector<std::string> known = {
        "neighbors",     "smooth_iterations", "close_dilate",       "close_erode",    "max_ray_mm",
        "orientation_radius", "gap_rounds",  "lncc_window",        "tibial_order",   "femoral_order",
        "integration_steps", "template_threshold", "merge",          "thickness_mean", "downsample_scale"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw InvalidArgument("unknown params key: " + key);
        }
    }
    read_key(j, "neighbors", p.neighbors);
    read_key(j, "smooth_iterations", p.smooth_iterations);
    read_key(j, "close_dilate", p.close_dilate);
    read_key(j, "close_erode", p.close_erode);
    read_key(j, "max_ray_mm", p.max_ray_mm);
    read_key(j, "orientation_radius", p.orientation_radius);
    read_key(j, "gap_rounds", p.gap_rounds);
    read_key(j, "lncc_window", p.lncc_window);
    read_key(j, "tibial_order", p.tibial_order);
    read_key(j, "femoral_order", p.femoral_order);
    read_key(j, "integration_steps", p.integration_steps);
    read_key(j, "template_threshold", p.template_threshold);
    if (j.contains("merge")) p.merge = merge_from(j.at("merge").get<std::string>());
    if (j.contains("thickness_mean")) p.thickness_mean = mean_from(j.at("thickness_mean").get<std::string>());
    read_key(j, "downsample_scale", p.downsample_scale);
}

json optional_path(const std::optional<std::filesystem::path>& p) {
    return p ? json(p->string()) : json(nullptr);
}

void read_optional_path(const json& j, const char* key, std::optional<std::filesystem::path>& out) {
    if (!j.contains(key)) return;
    if (j.at(key).is_null()) {
        out.reset();
    } else {
        out = j.at(key).get<std::string>();
    }
}

template <typename F>
auto at_stage(const std::string& stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

// Template labels warped into the subject's (original) grid. Same-grid
// templates are warped directly; templates on a smaller grid live in the
// downsampled crop window around the subject's anatomy.
LabelVolume warp_template(const LabelVolume& seg, const LabelVolume& tmpl, const std::optional<DeformationField>& field,
                          const PipelineParams& params) {
    if (same_grid(seg.geometry(), tmpl.geometry())) {
        if (!field) return tmpl;
        return apply_field(tmpl, *field, Interpolation::nearest);
    }
    const CropRecord record = plan_crop(seg, tmpl.dims(), params.downsample_scale);
    const Geometry low = low_resolution_geometry(record);
    LabelVolume moving(low, tmpl.data());
    LabelVolume warped = moving;
    if (field) {
        if (field->geometry.dims != tmpl.dims()) {
            throw GeometryMismatch("deformation field dims do not match the template grid");
        }
        DeformationField f = *field;
        f.geometry = low;
        warped = apply_field(moving, f, Interpolation::nearest);
    }
    return restore_resolution(warped, record);
}

BinaryMask template_cartilage(const LabelVolume& warped, int label, double threshold) {
    const BinaryMask mask = mask_of(warped, label);
    return threshold_map(probability_map({mask}), threshold);
}

CompartmentOutputs run_compartment(const CompartmentDef& def, const LabelVolume& seg,
                                   const std::optional<LabelVolume>& warped_template, const PipelineConfig& config,
                                   std::vector<std::string>& warnings, LabelVolume& regions) {
    const auto& p = config.params;
    const int cart_label = label_for(config.schema, def.cart_tissue);
    const int bone_label = label_for(config.schema, def.bone_tissue);
    const BinaryMask cart = mask_of(seg, cart_label);
    const BinaryMask bone = mask_of(seg, bone_label);
    CompartmentOutputs out;
    out.name = def.name;
    if (count_set(cart) == 0) {
        warnings.push_back(std::string(def.name) + ": no cartilage voxels, compartment skipped");
        return out;
    }
    if (count_set(bone) == 0) {
        warnings.push_back(std::string(def.name) + ": no bone voxels, compartment skipped");
        return out;
    }
    const std::string tag = std::string(" (") + def.name + ")";
    auto stage = [&](const char* name, auto&& f) {
        try {
            return f();
        } catch (const std::exception& e) {
            throw StageError(name, e.what() + tag);
        }
    };

    ThicknessParams tp;
    tp.neighbors = p.neighbors;
    tp.smooth_iterations = p.smooth_iterations;
    tp.orientation_radius = p.orientation_radius;
    tp.max_ray_mm = p.max_ray_mm;
    tp.close_dilate = p.close_dilate;
    tp.close_erode = p.close_erode;
    tp.gap_rounds = p.gap_rounds;
    out.thickness = stage("thickness", [&] { return map_thickness(cart, bone, tp); });

    FclParams fp;
    fp.merge = p.merge;
    fp.close_dilate = p.close_dilate;
    fp.close_erode = p.close_erode;
    fp.tibial_order = p.tibial_order;
    fp.femoral_order = p.femoral_order;
    const BinaryMask tmpl_cart = warped_template ? template_cartilage(*warped_template, cart_label, p.template_threshold)
                                                 : BinaryMask(seg.geometry());
    out.fcl = stage("fcl", [&] { return estimate_fcl(cart, bone, tmpl_cart, def.kind, fp); });

    out.parcellation = stage("parcellation", [&] {
        const SurfacePatch& pseudo = out.fcl->pseudo_healthy_patch;
        if (def.kind == Compartment::femoral) {
            const NotchResult notch = detect_intercondylar_notch(pseudo);
            if (notch.fallback) {
                warnings.push_back(std::string(def.name) + ": no intercondylar notch found, patch centroid used");
            }
            return parcellate_femoral(pseudo, notch.position, config.side);
        }
        return parcellate_tibial(pseudo, config.side, def.plate);
    });

    out.bone_thickness = transfer_thickness(out.thickness->thickness, out.fcl->pseudo_healthy_patch,
                                            seg.geometry().voxel_diagonal());
    regions = stage("quantify", [&] { return labels_to_volume(*out.parcellation, cart); });
    return out;
}

void write_meshes(const PipelineResult& result, const PipelineConfig& config, const std::string& comment) {
    for (const auto& c : result.compartments) {
        if (!c.thickness || !c.fcl || !c.parcellation) continue;
        const auto base = config.out / c.name;
        {
            const auto& inner = c.thickness->surfaces.inner;
            const auto values = thickness_by_vertex(c.thickness->thickness);
            ply::VertexProperties props;
            props.scalar = {"thickness", std::vector<float>(values.begin(), values.end())};
            ply::write(base.string() + "_thickness.ply", inner, props, ply::Encoding::binary_little_endian, comment);
        }
        {
            const auto& surf = c.fcl->pseudo_healthy_patch.surface();
            std::vector<int> flag(surf.vertex_count(), 0);
            for (int v : c.fcl->fcl_patch.vertex_ids()) flag[static_cast<std::size_t>(v)] = 1;
            ply::VertexProperties props;
            props.integer = {"denuded", std::move(flag)};
            ply::write(base.string() + "_fcl.ply", c.fcl->pseudo_healthy_patch, props,
                       ply::Encoding::binary_little_endian, comment);
        }
        {
            const auto values = thickness_by_vertex(c.bone_thickness);
            std::vector<int> region(c.parcellation->region.begin(), c.parcellation->region.end());
            ply::VertexProperties props;
            props.scalar = {"thickness", std::vector<float>(values.begin(), values.end())};
            props.integer = {"region", std::move(region)};
            ply::write(base.string() + "_regions.ply", c.fcl->pseudo_healthy_patch, props,
                       ply::Encoding::binary_little_endian, comment);
        }
    }
}

}  // namespace

void PipelineParams::validate() const {
    auto require = [](bool ok, const char* msg) {
        if (!ok) throw InvalidArgument(msg);
    };
    require(neighbors >= 4, "neighbors must be at least 4");
    require(smooth_iterations >= 0, "smooth_iterations must be non-negative");
    require(close_dilate >= 0 && close_erode >= 0, "closing iterations must be non-negative");
    require(max_ray_mm > 0.0, "max_ray_mm must be positive");
    require(orientation_radius > 0.0, "orientation_radius must be positive");
    require(gap_rounds >= 0, "gap_rounds must be non-negative");
    require(lncc_window >= 1 && lncc_window % 2 == 1, "lncc_window must be a positive odd number");
    require(tibial_order >= 1 && femoral_order >= 1, "fit orders must be at least 1");
    require(integration_steps >= 0 && integration_steps <= 30, "integration_steps must lie in [0, 30]");
    require(template_threshold >= 0.0 && template_threshold <= 1.0, "template_threshold must lie in [0, 1]");
    require(downsample_scale > 0.0 && downsample_scale <= 1.0, "downsample_scale must lie in (0, 1]");
}

std::string params_to_json(const PipelineParams& params) { return params_json(params).dump(); }

std::string params_hash(const PipelineParams& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : params_to_json(params)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_to_json(const PipelineConfig& c) {
    json schema = json::object();
    for (const auto& [code, name] : c.schema) schema[std::to_string(code)] = name;
    json j{{"seg", c.seg.string()},
           {"image", optional_path(c.image)},
           {"template_seg", optional_path(c.template_seg)},
           {"svf", optional_path(c.svf)},
           {"dvf", optional_path(c.dvf)},
           {"out", c.out.string()},
           {"side", c.side == KneeSide::right ? "right" : "left"},
           {"schema", schema},
           {"write_meshes", c.write_meshes},
           {"params", params_json(c.params)}};
    return j.dump(2);
}

PipelineConfig config_from_json(const std::string& text, PipelineConfig base) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
    static const std::vector<std::string> known = {"seg", "image",  "template_seg", "svf",          "dvf",
                                                   "out", "side",   "schema",       "write_meshes", "params"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw InvalidArgument("unknown config key: " + key);
        }
    }
    try {
        if (j.contains("seg")) base.seg = j.at("seg").get<std::string>();
        read_optional_path(j, "image", base.image);
        read_optional_path(j, "template_seg", base.template_seg);
        read_optional_path(j, "svf", base.svf);
        read_optional_path(j, "dvf", base.dvf);
        if (j.contains("out")) base.out = j.at("out").get<std::string>();
        if (j.contains("side")) {
            const auto side = j.at("side").get<std::string>();
            if (side != "left" && side != "right") throw InvalidArgument("side must be 'left' or 'right'");
            base.side = side == "right" ? KneeSide::right : KneeSide::left;
        }
        if (j.contains("schema")) {
            LabelSchema schema;
            for (const auto& [code, name] : j.at("schema").items()) schema[std::stoi(code)] = name.get<std::string>();
            base.schema = std::move(schema);
        }
        read_key(j, "write_meshes", base.write_meshes);
        if (j.contains("params")) params_from_json(j.at("params"), base.params);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("bad config value: ") + e.what());
    }
    return base;
}

PipelineResult analyze_subject(const SubjectInputs& inputs, const PipelineConfig& config, int workers) {
    at_stage("config", [&] { config.params.validate(); });
    at_stage("load", [&] {
        inputs.seg.geometry().validate();
        validate_labels(inputs.seg, config.schema);
        if (inputs.template_seg) validate_labels(*inputs.template_seg, config.schema);
    });
    if (inputs.field && !inputs.template_seg) throw StageError("warp", "a deformation field needs a template segmentation");

    std::optional<LabelVolume> warped;
    if (inputs.template_seg) {
        warped = at_stage("warp", [&] { return warp_template(inputs.seg, *inputs.template_seg, inputs.field, config.params); });
    }
    const LabelVolume seg = at_stage("reorient", [&] { return reorient_ras(inputs.seg); });
    if (warped) warped = at_stage("reorient", [&] { return reorient_ras(*warped); });

    constexpr std::size_t n = std::size(kCompartments);
    std::vector<CompartmentOutputs> outputs(n);
    std::vector<std::vector<std::string>> warnings(n);
    std::vector<LabelVolume> regions(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                outputs[i] = run_compartment(kCompartments[i], seg, warped, config, warnings[i], regions[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int threads = std::clamp(workers, 1, static_cast<int>(n));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    PipelineResult result;
    result.report = empty_report();
    result.report.provenance.version = kVersion;
    result.report.provenance.inputs = inputs.input_names;
    result.report.provenance.params_hash = params_hash(config.params);
    result.atlas = LabelVolume(seg.geometry());
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& w : warnings[i]) result.warnings.push_back(std::move(w));
        const auto& c = outputs[i];
        if (c.parcellation) {
            at_stage("quantify", [&] {
                regional_quantify(result.report, c.bone_thickness, *c.parcellation, *c.fcl, regions[i],
                                  config.params.thickness_mean);
            });
            auto& atlas = result.atlas.data();
            const auto& r = regions[i].data();
            for (std::size_t v = 0; v < atlas.size(); ++v) {
                if (atlas[v] == 0) atlas[v] = r[v];
            }
        }
        result.compartments.push_back(std::move(outputs[i]));
    }
    flag_empty_rows(result.report);
    return result;
}

PipelineResult run_pipeline(const PipelineConfig& config, int workers) {
    at_stage("config", [&] {
        config.params.validate();
        if (config.seg.empty()) throw InvalidArgument("no segmentation given");
        if (config.svf && config.dvf) throw InvalidArgument("give either an SVF or a DVF, not both");
    });
    SubjectInputs inputs;
    at_stage("load", [&] {
        inputs.seg = nifti::load_labels(config.seg);
        inputs.input_names.push_back(config.seg.string());
        if (config.image) {
            const ScalarVolume image = nifti::load_scalar(*config.image);
            require_same_grid(image.geometry(), inputs.seg.geometry(), "image and segmentation");
            inputs.input_names.push_back(config.image->string());
        }
        if (config.template_seg) {
            inputs.template_seg = nifti::load_labels(*config.template_seg);
            inputs.input_names.push_back(config.template_seg->string());
        }
    });
    if (config.svf || config.dvf) {
        const auto& path = config.svf ? *config.svf : *config.dvf;
        const VectorField raw = at_stage("load", [&] { return nifti::load_field(path); });
        inputs.input_names.push_back(path.string());
        if (config.svf) {
            VelocityField v;
            v.geometry = raw.geometry;
            v.vectors = raw.vectors;
            inputs.field = at_stage("integrate", [&] { return integrate_svf(v, config.params.integration_steps); });
        } else {
            DeformationField d;
            d.geometry = raw.geometry;
            d.vectors = raw.vectors;
            inputs.field = std::move(d);
        }
    }

    PipelineResult result = analyze_subject(inputs, config, workers);

    at_stage("write", [&] {
        std::filesystem::create_directories(config.out);
        write_report_csv(result.report, config.out / "report.csv");
        write_report_json(result.report, params_to_json(config.params), config.out / "report.json");
        nifti::save(result.atlas, config.out / "atlas.nii.gz",
                    std::string("kneemorph ") + kVersion + " params_hash=" + result.report.provenance.params_hash);
        const std::string comment = provenance_line(result.report.provenance);
        for (const auto& c : result.compartments) {
            if (c.thickness) {
                write_thickness_csv(c.thickness->thickness, config.out / (c.name + "_thickness.csv"),
                                    result.report.provenance);
            }
        }
        if (config.write_meshes) write_meshes(result, config, comment);
    });
    return result;
}

}  // namespace kneemorph
