// kneemorph command line: full pipeline plus one subcommand per module.

#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "kneemorph/fcl.hpp"
#include "kneemorph/metrics.hpp"
#include "kneemorph/nifti.hpp"
#include "kneemorph/parcellation.hpp"
#include "kneemorph/phantom.hpp"
#include "kneemorph/pipeline.hpp"
#include "kneemorph/ply.hpp"
#include "kneemorph/report_io.hpp"
#include "kneemorph/resample.hpp"
#include "kneemorph/thickness.hpp"
#include "kneemorph/warp.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace kneemorph;

namespace {

constexpr int kExitFailure = 2;

std::string read_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw StageError("config", "cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_json(const json& j, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw StageError("write", "cannot write " + path.string());
    os << j.dump(2) << '\n';
}

json provenance_json(const PipelineParams& params, const std::vector<std::string>& inputs) {
    return json{{"tool", "kneemorph"}, {"version", kVersion}, {"params_hash", params_hash(params)}, {"inputs", inputs}};
}

Provenance provenance_of(const PipelineParams& params, const std::vector<std::string>& inputs) {
    Provenance p;
    p.version = kVersion;
    p.params_hash = params_hash(params);
    p.inputs = inputs;
    return p;
}

KneeSide parse_side(const std::string& s) { return s == "left" ? KneeSide::left : KneeSide::right; }

struct CompartmentChoice {
    std::string cart_tissue;
    std::string bone_tissue;
    Compartment kind;
    TibialPlate plate;
};

CompartmentChoice compartment_choice(const std::string& name) {
    if (name == "FC") return {"femoral_cartilage", "femur", Compartment::femoral, TibialPlate::medial};
    if (name == "MTC") return {"medial_tibial_cartilage", "tibia", Compartment::tibial, TibialPlate::medial};
    if (name == "LTC") return {"lateral_tibial_cartilage", "tibia", Compartment::tibial, TibialPlate::lateral};
    throw StageError("config", "unknown compartment: " + name);
}

int label_of(const LabelSchema& schema, const std::string& tissue) {
    for (const auto& [code, name] : schema) {
        if (name == tissue) return code;
    }
    throw StageError("config", "label schema has no '" + tissue + "' entry");
}

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

struct CompartmentMasks {
    LabelVolume seg;
    BinaryMask cart;
    BinaryMask bone;
    CompartmentChoice choice;
};

CompartmentMasks load_compartment(const fs::path& seg_path, const std::string& compartment) {
    CompartmentMasks m;
    m.choice = compartment_choice(compartment);
    m.seg = stage("load", [&] { return reorient_ras(nifti::load_labels(seg_path)); });
    const auto schema = default_label_schema();
    m.cart = mask_of(m.seg, label_of(schema, m.choice.cart_tissue));
    m.bone = mask_of(m.seg, label_of(schema, m.choice.bone_tissue));
    if (count_set(m.cart) == 0) throw StageError("load", compartment + " has no cartilage voxels");
    return m;
}

// ---- run -------------------------------------------------------------------

struct RunOptions {
    fs::path config;
    std::vector<fs::path> segs;
    std::string image, template_seg, svf, dvf, out, side;
    int workers = 1;
    bool dump_config = false;
};

PipelineConfig effective_config(const RunOptions& o) {
    PipelineConfig cfg;
    if (!o.config.empty()) cfg = config_from_json(read_file(o.config));
    if (!o.segs.empty()) cfg.seg = o.segs.front();
    if (!o.image.empty()) cfg.image = o.image;
    if (!o.template_seg.empty()) cfg.template_seg = o.template_seg;
    if (!o.svf.empty()) cfg.svf = o.svf;
    if (!o.dvf.empty()) cfg.dvf = o.dvf;
    if (!o.out.empty()) cfg.out = o.out;
    if (!o.side.empty()) cfg.side = parse_side(o.side);
    return cfg;
}

int cmd_run(const RunOptions& o) {
    PipelineConfig cfg = stage("config", [&] { return effective_config(o); });
    if (o.dump_config) {
        std::cout << config_to_json(cfg) << '\n';
        return 0;
    }
    std::vector<fs::path> segs = o.segs;
    if (segs.empty()) segs.push_back(cfg.seg);
    if (segs.size() == 1) {
        cfg.seg = segs.front();
        const auto result = run_pipeline(cfg, o.workers);
        for (const auto& w : result.warnings) spdlog::warn("{}", w);
        spdlog::info("wrote report to {}", (cfg.out / "report.csv").string());
        return 0;
    }

    // Several subjects: one output directory per subject, subjects in a pool.
    std::atomic<std::size_t> next{0};
    std::atomic<int> failures{0};
    std::mutex log_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < segs.size(); i = next++) {
            PipelineConfig sub = cfg;
            sub.seg = segs[i];
            std::string stem = segs[i].filename().string();
            for (const char* ext : {".gz", ".nii"}) {
                if (stem.size() > std::strlen(ext) && stem.ends_with(ext)) stem.resize(stem.size() - std::strlen(ext));
            }
            sub.out = cfg.out / stem;
            try {
                const auto result = run_pipeline(sub, 1);
                std::lock_guard lock(log_mutex);
                for (const auto& w : result.warnings) spdlog::warn("{}: {}", stem, w);
                spdlog::info("{}: wrote {}", stem, (sub.out / "report.csv").string());
            } catch (const StageError& e) {
                std::lock_guard lock(log_mutex);
                spdlog::error("{}: error [stage={}] {}", stem, e.stage(), e.what());
                ++failures;
            }
        }
    };
    const int threads = std::clamp(o.workers, 1, static_cast<int>(segs.size()));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return failures == 0 ? 0 : kExitFailure;
}

// ---- phantom ---------------------------------------------------------------

struct PhantomOptions {
    std::string kind = "cuboid_defect";
    std::vector<int> dims;
    std::vector<double> spacing;
    double thickness = 3.0;
    double fraction = -1.0;
    std::vector<double> location;
    bool at_edge = false;
    bool rotated = false;
    double angle = 30.0;
    bool no_defect = false;
    std::string side = "right";
    std::uint64_t seed = 0;
    std::string out = "phantom";
};

int cmd_phantom(const PhantomOptions& o) {
    PhantomSpec spec = stage("config", [&] {
        PhantomSpec s = default_phantom_spec(phantom_kind_from_name(o.kind));
        if (o.dims.size() == 3) s.dims = {o.dims[0], o.dims[1], o.dims[2]};
        if (o.spacing.size() == 3) s.spacing = {o.spacing[0], o.spacing[1], o.spacing[2]};
        s.thickness_mm = o.thickness;
        s.side = parse_side(o.side);
        if (o.fraction > 0.0 || o.at_edge || o.rotated || o.location.size() == 2) {
            if (!s.defect) s.defect = DefectSpec{};
            if (o.fraction > 0.0) s.defect->fraction = o.fraction;
            if (o.location.size() == 2) s.defect->location = std::array<double, 2>{o.location[0], o.location[1]};
            s.defect->at_edge = o.at_edge;
            s.defect->rotated = o.rotated;
            s.defect->angle_deg = o.angle;
        }
        if (o.no_defect) s.defect.reset();
        return s;
    });
    const Phantom p = stage("phantom", [&] { return generate_phantom(spec, o.seed); });
    const fs::path out(o.out);
    stage("write", [&] {
        fs::create_directories(out);
        const std::string desc = std::string("kneemorph ") + kVersion + " phantom " + o.kind;
        nifti::save(p.labels, out / "seg.nii.gz", desc);
        nifti::save(p.intact_labels, out / "intact_seg.nii.gz", desc);
        json truth{{"provenance", {{"tool", "kneemorph"}, {"version", kVersion}, {"seed", o.seed}}},
                   {"kind", o.kind},
                   {"dims", spec.dims},
                   {"spacing", {spec.spacing[0], spec.spacing[1], spec.spacing[2]}},
                   {"side", spec.side == KneeSide::right ? "right" : "left"},
                   {"thickness_mm", p.truth.thickness_mm},
                   {"denuded_fraction", p.truth.denuded_fraction},
                   {"fcl_percent", 100.0 * p.truth.denuded_fraction},
                   {"footprint_columns", p.truth.footprint_columns},
                   {"defect_columns", p.truth.defect_columns},
                   {"footprint_area_mm2", p.truth.footprint_area_mm2}};
        if (p.truth.notch) truth["notch_mm"] = {p.truth.notch->x(), p.truth.notch->y(), p.truth.notch->z()};
        json comps = json::array();
        for (const auto& c : p.truth.compartments) {
            comps.push_back({{"name", c.name},
                             {"cart_label", c.cart_label},
                             {"bone_label", c.bone_label},
                             {"intact_voxels", c.intact_voxels},
                             {"removed_voxels", c.removed_voxels},
                             {"denuded_fraction", c.denuded_fraction},
                             {"footprint_area_mm2", c.footprint_area_mm2}});
        }
        truth["compartments"] = comps;
        write_json(truth, out / "truth.json");
    });
    spdlog::info("wrote phantom to {}", out.string());
    return 0;
}

// ---- thickness -------------------------------------------------------------

struct ModuleOptions {
    std::string seg;
    std::string template_seg;
    std::string compartment = "MTC";
    std::string side = "right";
    std::string out = "out";
    std::string method = "normal";
    std::string config;
};

PipelineParams module_params(const ModuleOptions& o) {
    if (o.config.empty()) return {};
    return config_from_json(read_file(o.config)).params;
}

ThicknessParams thickness_params(const PipelineParams& p) {
    ThicknessParams tp;
    tp.neighbors = p.neighbors;
    tp.smooth_iterations = p.smooth_iterations;
    tp.orientation_radius = p.orientation_radius;
    tp.max_ray_mm = p.max_ray_mm;
    tp.close_dilate = p.close_dilate;
    tp.close_erode = p.close_erode;
    tp.gap_rounds = p.gap_rounds;
    return tp;
}

FclParams fcl_params(const PipelineParams& p) {
    FclParams fp;
    fp.merge = p.merge;
    fp.close_dilate = p.close_dilate;
    fp.close_erode = p.close_erode;
    fp.tibial_order = p.tibial_order;
    fp.femoral_order = p.femoral_order;
    return fp;
}

int cmd_thickness(const ModuleOptions& o) {
    const PipelineParams params = stage("config", [&] { return module_params(o); });
    const auto m = load_compartment(o.seg, o.compartment);
    const ThicknessParams tp = thickness_params(params);
    ThicknessMap map;
    if (o.method == "3dnn") {
        map = stage("thickness", [&] {
            const auto s = segment_cartilage_surfaces(m.cart, m.bone, tp);
            return thickness_3dnn(s.inner, s.outer);
        });
    } else {
        map = stage("thickness", [&] { return map_thickness(m.cart, m.bone, tp).thickness; });
    }
    const fs::path out(o.out);
    stage("write", [&] {
        fs::create_directories(out);
        const Provenance prov = provenance_of(params, {o.seg});
        write_thickness_csv(map, out / (o.compartment + "_thickness.csv"), prov);
        const auto values = thickness_by_vertex(map);
        ply::VertexProperties props;
        props.scalar = {"thickness", std::vector<float>(values.begin(), values.end())};
        ply::write(out / (o.compartment + "_thickness.ply"), map.patch, props, ply::Encoding::binary_little_endian,
                   provenance_line(prov));
    });
    return 0;
}

// ---- fcl -------------------------------------------------------------------

int cmd_fcl(const ModuleOptions& o) {
    const PipelineParams params = stage("config", [&] { return module_params(o); });
    const auto m = load_compartment(o.seg, o.compartment);
    BinaryMask tmpl(m.seg.geometry());
    std::vector<std::string> inputs{o.seg};
    if (!o.template_seg.empty()) {
        tmpl = stage("load", [&] {
            const LabelVolume t = reorient_ras(nifti::load_labels(o.template_seg));
            require_same_grid(t.geometry(), m.seg.geometry(), "template and segmentation");
            return mask_of(t, label_of(default_label_schema(), m.choice.cart_tissue));
        });
        inputs.push_back(o.template_seg);
    }
    const FclResult r = stage("fcl", [&] { return estimate_fcl(m.cart, m.bone, tmpl, m.choice.kind, fcl_params(params)); });
    const fs::path out(o.out);
    stage("write", [&] {
        fs::create_directories(out);
        json j{{"provenance", provenance_json(params, inputs)},
               {"compartment", o.compartment},
               {"fcl_percent", r.fcl_percent},
               {"pseudo_healthy_area_mm2", r.pseudo_healthy_area},
               {"denuded_area_mm2", r.denuded_area},
               {"denuded_faces", r.denuded_faces.size()}};
        write_json(j, out / (o.compartment + "_fcl.json"));
        std::vector<int> flag(r.pseudo_healthy_patch.surface().vertex_count(), 0);
        for (int v : r.fcl_patch.vertex_ids()) flag[static_cast<std::size_t>(v)] = 1;
        ply::VertexProperties props;
        props.integer = {"denuded", std::move(flag)};
        ply::write(out / (o.compartment + "_fcl.ply"), r.pseudo_healthy_patch, props,
                   ply::Encoding::binary_little_endian, provenance_line(provenance_of(params, inputs)));
    });
    std::cout << o.compartment << " fcl_percent " << r.fcl_percent << '\n';
    return 0;
}

// ---- parcellate ------------------------------------------------------------

int cmd_parcellate(const ModuleOptions& o) {
    const PipelineParams params = stage("config", [&] { return module_params(o); });
    const auto m = load_compartment(o.seg, o.compartment);
    const KneeSide side = parse_side(o.side);
    const SurfacePtr bone = stage("parcellation", [&] { return mesh_from_mask(m.bone); });
    const SurfacePatch footprint = stage("parcellation", [&] {
        const SurfacePatch all(bone, true);
        return surface_close(fill_holes_connectivity(patch_from_voxels(bone, m.cart)), all, params.close_dilate,
                             params.close_erode);
    });
    const SurfaceParcellation parc = stage("parcellation", [&] {
        if (m.choice.kind == Compartment::femoral) {
            const NotchResult notch = detect_intercondylar_notch(footprint);
            if (notch.fallback) spdlog::warn("no intercondylar notch found; using the patch centroid");
            return parcellate_femoral(footprint, notch.position, side);
        }
        return parcellate_tibial(footprint, side, m.choice.plate);
    });
    const LabelVolume atlas = stage("parcellation", [&] { return labels_to_volume(parc, m.cart); });
    const fs::path out(o.out);
    const std::vector<double> areas = vertex_areas(footprint);
    stage("write", [&] {
        fs::create_directories(out);
        const Provenance prov = provenance_of(params, {o.seg});
        nifti::save(atlas, out / (o.compartment + "_atlas.nii.gz"),
                    std::string("kneemorph ") + kVersion + " params_hash=" + prov.params_hash);
        ply::VertexProperties props;
        props.integer = {"region", std::vector<int>(parc.region.begin(), parc.region.end())};
        ply::write(out / (o.compartment + "_regions.ply"), footprint, props, ply::Encoding::binary_little_endian,
                   provenance_line(prov));
        json regions = json::array();
        double total = 0.0;
        for (double a : areas) total += a;
        for (Region r : all_regions()) {
            const auto ids = parc.vertices_of(r);
            if (ids.empty()) continue;
            double area = 0.0;
            for (int v : ids) area += areas[static_cast<std::size_t>(v)];
            regions.push_back({{"region", std::string(region_name(r))},
                               {"vertices", ids.size()},
                               {"area_mm2", area},
                               {"area_fraction", total > 0.0 ? area / total : 0.0}});
        }
        write_json({{"provenance", provenance_json(params, {o.seg})}, {"regions", regions}},
                   out / (o.compartment + "_regions.json"));
    });
    return 0;
}

// ---- warp ------------------------------------------------------------------

struct WarpOptions {
    std::string in;
    std::string svf;
    std::string dvf;
    std::string out;
    std::string field_out;
    std::string interp = "auto";
    int steps = kDefaultIntegrationSteps;
};

int cmd_warp(const WarpOptions& o) {
    if (o.svf.empty() == o.dvf.empty()) throw StageError("config", "give exactly one of --svf or --dvf");
    const VectorField raw = stage("load", [&] { return nifti::load_field(o.svf.empty() ? o.dvf : o.svf); });
    DeformationField field;
    if (!o.svf.empty()) {
        VelocityField v;
        v.geometry = raw.geometry;
        v.vectors = raw.vectors;
        field = stage("integrate", [&] { return integrate_svf(v, o.steps); });
    } else {
        field.geometry = raw.geometry;
        field.vectors = raw.vectors;
    }
    PipelineParams params;
    params.integration_steps = o.steps;
    const std::string desc = std::string("kneemorph ") + kVersion + " params_hash=" + params_hash(params);
    if (!o.field_out.empty()) stage("write", [&] { nifti::save_field(field, o.field_out, desc); });
    if (o.in.empty()) return 0;
    const auto vol = stage("load", [&] { return nifti::load_volume(o.in); });
    if (o.out.empty()) throw StageError("config", "--out is required with --in");
    stage("warp", [&] {
        if (const auto* labels = std::get_if<LabelVolume>(&vol)) {
            if (o.interp == "trilinear") throw InvalidArgument("label volumes only support nearest interpolation");
            nifti::save(apply_field(*labels, field, Interpolation::nearest), o.out, desc);
        } else {
            const auto& scalars = std::get<ScalarVolume>(vol);
            const Interpolation interp = o.interp == "nearest" ? Interpolation::nearest : Interpolation::trilinear;
            nifti::save(apply_field(scalars, field, interp), o.out, desc);
        }
    });
    return 0;
}

// ---- metrics ---------------------------------------------------------------

struct MetricsOptions {
    std::vector<std::string> model;
    std::vector<std::string> reference;
    std::vector<std::string> seg_pair;
    std::vector<std::string> image_pair;
    double phr_tolerance = 10.0;
    int window = 3;
    std::string out;
};

int cmd_metrics(const MetricsOptions& o) {
    std::ostringstream text;
    if (!o.model.empty() || !o.reference.empty()) {
        std::vector<RegionalReport> model, reference;
        stage("load", [&] {
            for (const auto& p : o.model) model.push_back(read_report_csv(p));
            for (const auto& p : o.reference) reference.push_back(read_report_csv(p));
        });
        text << "# tool=kneemorph version=" << kVersion << " phr_tolerance=" << o.phr_tolerance << '\n';
        text << stage("metrics", [&] { return agreement_table_csv(model, reference, o.phr_tolerance); });
    } else if (o.seg_pair.size() == 2) {
        const auto a = stage("load", [&] { return nifti::load_labels(o.seg_pair[0]); });
        const auto b = stage("load", [&] { return nifti::load_labels(o.seg_pair[1]); });
        stage("metrics", [&] {
            require_same_grid(a.geometry(), b.geometry(), "segmentations");
            text << "label,dsc\n";
            for (const auto& [code, name] : default_label_schema()) {
                text << name << ',' << dsc(mask_of(a, code), mask_of(b, code)) << '\n';
            }
        });
    } else if (o.image_pair.size() == 2) {
        const auto a = stage("load", [&] { return nifti::load_scalar(o.image_pair[0]); });
        const auto b = stage("load", [&] { return nifti::load_scalar(o.image_pair[1]); });
        stage("metrics", [&] {
            text.precision(12);
            text << "mse,lncc\n" << mse_image(a, b) << ',' << lncc_image(a, b, o.window) << '\n';
        });
    } else {
        throw StageError("config", "metrics needs --model/--reference reports, --seg A B or --image A B");
    }
    if (o.out.empty()) {
        std::cout << text.str();
    } else {
        stage("write", [&] {
            std::ofstream os(o.out, std::ios::binary);
            if (!os) throw Error("cannot write " + o.out);
            os << text.str();
        });
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_color_mt("kneemorph");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");

    CLI::App app{"Knee cartilage morphometrics: thickness, full-thickness cartilage loss and regional reports"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

    RunOptions run;
    auto* run_cmd = app.add_subcommand("run", "Full pipeline on one or more segmentations");
    run_cmd->add_option("--config", run.config, "JSON config; flags override it");
    run_cmd->add_option("--seg", run.segs, "Segmentation NIfTI (repeat for several subjects)");
    run_cmd->add_option("--image", run.image, "MR image on the segmentation grid");
    run_cmd->add_option("--template-seg", run.template_seg, "Template segmentation");
    run_cmd->add_option("--svf", run.svf, "Stationary velocity field (template to subject)");
    run_cmd->add_option("--dvf", run.dvf, "Displacement field (template to subject)");
    run_cmd->add_option("--out", run.out, "Output directory");
    run_cmd->add_option("--side", run.side, "Knee side")->check(CLI::IsMember({"left", "right"}));
    run_cmd->add_option("--workers", run.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    run_cmd->add_flag("--dump-config", run.dump_config, "Print the effective config and exit");

    PhantomOptions ph;
    auto* ph_cmd = app.add_subcommand("phantom", "Generate a synthetic phantom with ground truth");
    ph_cmd->add_option("--kind", ph.kind, "slab, cuboid_defect, shell, two_lobe_fc, tibial_disc or knee")
        ->capture_default_str();
    ph_cmd->add_option("--dims", ph.dims, "Grid dims")->expected(3);
    ph_cmd->add_option("--spacing", ph.spacing, "Voxel spacing in mm")->expected(3);
    ph_cmd->add_option("--thickness", ph.thickness, "Cartilage thickness in mm")->capture_default_str();
    ph_cmd->add_option("--defect-fraction", ph.fraction, "Fraction of the footprint removed");
    ph_cmd->add_option("--defect-location", ph.location, "Defect centre in normalised footprint coordinates")
        ->expected(2);
    ph_cmd->add_flag("--at-edge", ph.at_edge, "Place the defect on the footprint edge");
    ph_cmd->add_flag("--rotated", ph.rotated, "Rotate the defect rectangle");
    ph_cmd->add_option("--angle", ph.angle, "Rotation angle in degrees")->capture_default_str();
    ph_cmd->add_flag("--no-defect", ph.no_defect, "Drop the default defect");
    ph_cmd->add_option("--side", ph.side, "Knee side")->check(CLI::IsMember({"left", "right"}));
    ph_cmd->add_option("--seed", ph.seed, "Random seed")->capture_default_str();
    ph_cmd->add_option("--out", ph.out, "Output directory")->capture_default_str();

    auto add_module = [&](CLI::App* cmd, ModuleOptions& m) {
        cmd->add_option("--seg", m.seg, "Segmentation NIfTI")->required();
        cmd->add_option("--compartment", m.compartment, "FC, MTC or LTC")
            ->check(CLI::IsMember({"FC", "MTC", "LTC"}))
            ->capture_default_str();
        cmd->add_option("--out", m.out, "Output directory")->capture_default_str();
        cmd->add_option("--config", m.config, "JSON config (params are used)");
    };
    ModuleOptions th;
    auto* th_cmd = app.add_subcommand("thickness", "Cartilage thickness map");
    add_module(th_cmd, th);
    th_cmd->add_option("--method", th.method, "normal or 3dnn")
        ->check(CLI::IsMember({"normal", "3dnn"}))
        ->capture_default_str();
    ModuleOptions fc;
    auto* fcl_cmd = app.add_subcommand("fcl", "Full-thickness cartilage loss");
    add_module(fcl_cmd, fc);
    fcl_cmd->add_option("--template-seg", fc.template_seg, "Warped template segmentation on the subject grid");
    ModuleOptions pa;
    auto* pa_cmd = app.add_subcommand("parcellate", "Subregion parcellation of a cartilage footprint");
    add_module(pa_cmd, pa);
    pa_cmd->add_option("--side", pa.side, "Knee side")->check(CLI::IsMember({"left", "right"}))->capture_default_str();

    WarpOptions wa;
    auto* wa_cmd = app.add_subcommand("warp", "Integrate a velocity field and warp a volume");
    wa_cmd->add_option("--in", wa.in, "Volume to warp");
    wa_cmd->add_option("--svf", wa.svf, "Stationary velocity field");
    wa_cmd->add_option("--dvf", wa.dvf, "Displacement field");
    wa_cmd->add_option("--out", wa.out, "Warped volume");
    wa_cmd->add_option("--field-out", wa.field_out, "Write the displacement field");
    wa_cmd->add_option("--interp", wa.interp, "nearest or trilinear (scalar volumes)")
        ->check(CLI::IsMember({"auto", "nearest", "trilinear"}));
    wa_cmd->add_option("--steps", wa.steps, "Scaling and squaring steps")->capture_default_str();

    MetricsOptions me;
    auto* me_cmd = app.add_subcommand("metrics", "Agreement tables, overlap and image similarity");
    me_cmd->add_option("--model", me.model, "Model report CSVs");
    me_cmd->add_option("--reference", me.reference, "Reference report CSVs (same order)");
    me_cmd->add_option("--seg", me.seg_pair, "Two segmentations for DSC")->expected(2);
    me_cmd->add_option("--image", me.image_pair, "Two images for MSE and LNCC")->expected(2);
    me_cmd->add_option("--phr-tolerance", me.phr_tolerance, "pHR tolerance in FCL percentage points")
        ->capture_default_str();
    me_cmd->add_option("--window", me.window, "LNCC window")->capture_default_str();
    me_cmd->add_option("--out", me.out, "Output file (stdout when absent)");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*run_cmd) return cmd_run(run);
        if (*ph_cmd) return cmd_phantom(ph);
        if (*th_cmd) return cmd_thickness(th);
        if (*fcl_cmd) return cmd_fcl(fc);
        if (*pa_cmd) return cmd_parcellate(pa);
        if (*wa_cmd) return cmd_warp(wa);
        if (*me_cmd) return cmd_metrics(me);
    } catch (const StageError& e) {
        spdlog::error("error [stage={}] {}", e.stage(), e.what());
        return kExitFailure;
    } catch (const std::exception& e) {
        spdlog::error("error [stage=unknown] {}", e.what());
        return kExitFailure;
    }
    return 0;
}
