// Acceptance checks for criteria 1-7. Prints one PASS/FAIL line per
// criterion and exits nonzero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "kneemorph/metrics.hpp"
#include "kneemorph/morphology.hpp"
#include "kneemorph/nifti.hpp"
#include "kneemorph/phantom.hpp"
#include "kneemorph/pipeline.hpp"
#include "kneemorph/thickness.hpp"
#include "kneemorph/warp.hpp"

using namespace kneemorph;

namespace {

// Pinned tolerances.
constexpr double kC1MedianErrorVoxels = 0.5;
constexpr double kC1MaxSeconds = 10.0;
constexpr double kC2PercentPoints = 2.0;
constexpr double kC3CentralFraction = 0.20;
constexpr double kC3CentralTolerance = 0.005;
constexpr double kC3StripTolerance = 0.05;
constexpr double kC3MirrorAgreement = 0.98;
constexpr double kC3MirrorAreaRatio = 0.03;
constexpr double kC4Translation = 1e-5;
constexpr double kC4LinearRelative = 1e-3;
constexpr double kC4InverseMeanVoxels = 0.5;
constexpr double kC5Exact = 1e-12;
constexpr double kC5Lncc = 1e-6;
constexpr int kC5Instances = 100;
constexpr double kC7MaxSeconds = 60.0;

struct Outcome {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why) {
        pass = false;
        detail += (detail.empty() ? "" : "; ") + why;
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, a, b, c, d);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Geometry grid(int nx, int ny, int nz, Vec3 spacing = {1.0, 1.0, 1.0}) {
    Geometry g;
    g.dims = {nx, ny, nz};
    g.spacing = spacing;
    return g;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------- criterion 1

Outcome criterion1() {
    Outcome out;
    const Phantom ph = generate_phantom(default_phantom_spec(PhantomKind::cuboid_defect));
    const auto t0 = std::chrono::steady_clock::now();
    const ThicknessResult r = map_thickness(ph.cart, ph.bone);
    const double elapsed = seconds_since(t0);
    const ThicknessMap nn = thickness_3dnn(r.surfaces.inner, r.surfaces.outer);
    const std::vector<double> normal_t = thickness_by_vertex(r.thickness);
    const std::vector<double> nn_t = thickness_by_vertex(nn);

    // Interface vertices sit on the bone contact plane at lattice corners;
    // a corner's ring is its distance in vertex rows from a column without
    // cartilage (1 = touches one).
    const Geometry& g = ph.cart.geometry();
    const double plane_z = g.index_to_world(Vec3(0, 0, ph.truth.footprint_lo[2] - 0.5)).z();
    const int ny = g.dims[1];
    auto column_has_cart = [&](int i, int j) {
        if (i < 0 || j < 0 || i >= g.dims[0] || j >= ny) return false;
        return ph.truth.column_thickness[static_cast<std::size_t>(i) * ny + j] > 0.0;
    };
    std::vector<double> interior_err, band_normal, band_nn;
    for (std::size_t v = 0; v < r.surfaces.mesh->vertex_count(); ++v) {
        if (!ThicknessMap::defined(normal_t[v]) && !r.thickness.patch.contains(static_cast<int>(v))) continue;
        const Vec3& p = r.surfaces.mesh->vertices()[v];
        if (std::abs(p.z() - plane_z) > 1e-9) continue;
        const Vec3 idx = g.world_to_index(p);
        const int a = static_cast<int>(std::lround(idx.x() + 0.5));
        const int b = static_cast<int>(std::lround(idx.y() + 0.5));
        bool touches = false, ring1 = false, ring2 = false;
        for (int di = -2; di <= 1; ++di)
            for (int dj = -2; dj <= 1; ++dj) {
                const bool cart = column_has_cart(a + di, b + dj);
                const bool near = di >= -1 && di <= 0 && dj >= -1 && dj <= 0;
                if (near && cart) touches = true;
                if (!cart) (near ? ring1 : ring2) = true;
            }
        if (!touches) continue;
        const double truth = ph.truth.thickness_mm;
        const double e_normal = ThicknessMap::defined(normal_t[v]) ? std::abs(normal_t[v] - truth) : truth;
        const double e_nn = ThicknessMap::defined(nn_t[v]) ? std::abs(nn_t[v] - truth) : truth;
        if (ring1 || ring2) {
            band_normal.push_back(e_normal);
            band_nn.push_back(e_nn);
        } else {
            interior_err.push_back(e_normal);
        }
    }
    if (interior_err.empty() || band_normal.empty()) {
        out.fail("no interface vertices found");
        return out;
    }
    std::nth_element(interior_err.begin(), interior_err.begin() + interior_err.size() / 2, interior_err.end());
    const double median = interior_err[interior_err.size() / 2];
    const double voxel = g.spacing.minCoeff();
    auto mean = [](const std::vector<double>& x) {
        double s = 0.0;
        for (double e : x) s += e;
        return s / static_cast<double>(x.size());
    };
    const double mae_normal = mean(band_normal);
    const double mae_nn = mean(band_nn);
    out.note(fmt("interior median |err| %.4f mm over %.0f vertices", median, static_cast<double>(interior_err.size())));
    out.note(fmt("band MAE normal %.3f vs 3dNN %.3f mm over %.0f vertices", mae_normal, mae_nn,
                 static_cast<double>(band_normal.size())));
    out.note(fmt("%.2f s", elapsed));
    if (median > kC1MedianErrorVoxels * voxel) out.fail("interior median above 0.5 voxel");
    if (!(mae_normal < mae_nn)) out.fail("band MAE not below 3dNN");
    if (elapsed >= kC1MaxSeconds) out.fail("runtime above 10 s");
    return out;
}

// ---------------------------------------------------------------- criterion 2

Outcome criterion2() {
    Outcome out;
    for (double f : {0.1, 0.2, 0.4}) {
        PhantomSpec spec = default_phantom_spec(PhantomKind::cuboid_defect);
        spec.defect->fraction = f;
        const Phantom ph = generate_phantom(spec);
        SubjectInputs in;
        in.seg = ph.labels;
        in.template_seg = ph.intact_labels;
        in.field = DeformationField(ph.labels.geometry());
        const PipelineResult r = analyze_subject(in, PipelineConfig{});
        const CompartmentOutputs* mtc = nullptr;
        for (const auto& c : r.compartments) {
            if (c.name == "MTC") mtc = &c;
        }
        if (!mtc || !mtc->fcl) {
            out.fail(fmt("f=%.1f: no tibial FCL result", f));
            continue;
        }
        const double got = mtc->fcl->fcl_percent;
        out.note(fmt("f=%.1f -> %.2f%%", f, got));
        if (std::abs(got - 100.0 * f) > kC2PercentPoints) out.fail(fmt("f=%.1f off by more than 2 points", f));
    }
    return out;
}

// ---------------------------------------------------------------- criterion 3

struct Footprint {
    SurfacePtr bone_mesh;
    SurfacePatch patch;
};

Footprint footprint(const Phantom& ph, int cart_label, int bone_label) {
    Footprint f;
    f.bone_mesh = mesh_from_mask(mask_of(ph.labels, bone_label));
    f.patch = patch_from_voxels(f.bone_mesh, mask_of(ph.labels, cart_label));
    return f;
}

std::map<int, double> region_areas(const SurfaceParcellation& parc, const SurfacePatch& p) {
    std::map<int, double> out;
    const Surface& s = p.surface();
    for (const auto& t : s.faces()) {
        if (!p.contains(t[0]) || !p.contains(t[1]) || !p.contains(t[2])) continue;
        const Vec3& a = s.vertices()[static_cast<std::size_t>(t[0])];
        const Vec3& b = s.vertices()[static_cast<std::size_t>(t[1])];
        const Vec3& c = s.vertices()[static_cast<std::size_t>(t[2])];
        const double area = 0.5 * (b - a).cross(c - a).norm();
        for (int v : t) out[parc.region[static_cast<std::size_t>(v)]] += area / 3.0;
    }
    return out;
}

// Region vertex sets must be pairwise disjoint and cover the patch exactly.
void check_partition(Outcome& out, const std::string& what, const SurfaceParcellation& parc,
                     const SurfacePatch& patch, const std::vector<Region>& regions) {
    std::set<int> seen;
    std::size_t total = 0;
    for (Region r : regions) {
        const auto ids = parc.vertices_of(r);
        if (ids.empty()) out.fail(what + ": region " + std::string(region_name(r)) + " empty");
        total += ids.size();
        seen.insert(ids.begin(), ids.end());
    }
    const auto members = patch.vertex_ids();
    if (total != seen.size()) out.fail(what + ": regions overlap");
    if (seen != std::set<int>(members.begin(), members.end())) {
        out.fail(what + fmt(": union covers %.0f of %.0f vertices", static_cast<double>(seen.size()),
                            static_cast<double>(members.size())));
    }
}

std::vector<Region> regions_in(int first, int last) {
    std::vector<Region> out;
    for (int c = first; c <= last; ++c) out.push_back(static_cast<Region>(c));
    return out;
}

double mirror_agreement(const Phantom& right, const Phantom& left, int cart, int bone, double& worst_ratio) {
    const double span = right.labels.dims()[0] - 1;
    const Footprint r = footprint(right, cart, bone);
    const Footprint l = footprint(left, cart, bone);
    SurfaceParcellation pr, pl;
    if (cart == 3) {
        pr = parcellate_femoral(r.patch, detect_intercondylar_notch(r.patch).position, KneeSide::right);
        pl = parcellate_femoral(l.patch, detect_intercondylar_notch(l.patch).position, KneeSide::left);
    } else {
        const TibialPlate plate = cart == 4 ? TibialPlate::medial : TibialPlate::lateral;
        pr = parcellate_tibial(r.patch, KneeSide::right, plate);
        pl = parcellate_tibial(l.patch, KneeSide::left, plate);
    }
    std::map<std::tuple<long, long, long>, int> left_code;
    for (int v : l.patch.vertex_ids()) {
        const Vec3& p = l.bone_mesh->vertices()[static_cast<std::size_t>(v)];
        left_code[{std::lround(2 * p.x()), std::lround(2 * p.y()), std::lround(2 * p.z())}] =
            pl.region[static_cast<std::size_t>(v)];
    }
    std::size_t agree = 0;
    for (int v : r.patch.vertex_ids()) {
        const Vec3& p = r.bone_mesh->vertices()[static_cast<std::size_t>(v)];
        const auto it = left_code.find({std::lround(2 * (span - p.x())), std::lround(2 * p.y()), std::lround(2 * p.z())});
        if (it != left_code.end() && it->second == pr.region[static_cast<std::size_t>(v)]) ++agree;
    }
    const auto ar = region_areas(pr, r.patch);
    const auto al = region_areas(pl, l.patch);
    for (const auto& [code, a] : ar) {
        const auto it = al.find(code);
        const double ratio = it == al.end() ? 0.0 : it->second / a;
        worst_ratio = std::max(worst_ratio, std::abs(ratio - 1.0));
    }
    return static_cast<double>(agree) / static_cast<double>(r.patch.size());
}

Outcome criterion3() {
    Outcome out;
    {
        const Phantom ph = generate_phantom(default_phantom_spec(PhantomKind::tibial_disc));
        const Footprint f = footprint(ph, 4, 2);
        const SurfaceParcellation parc = parcellate_tibial(f.patch, KneeSide::right, TibialPlate::medial);
        const auto areas = region_areas(parc, f.patch);
        double total = 0.0;
        for (const auto& [code, a] : areas) total += a;
        const double central = areas.count(region_code(Region::cMTC)) ? areas.at(region_code(Region::cMTC)) / total : 0.0;
        out.note(fmt("disc central fraction %.4f", central));
        if (std::abs(central - kC3CentralFraction) > kC3CentralTolerance) out.fail("central fraction outside 20% +- 0.5%");
        check_partition(out, "disc", parc, f.patch, regions_in(11, 15));
    }
    {
        const Phantom ph = generate_phantom(default_phantom_spec(PhantomKind::two_lobe_fc));
        const Footprint f = footprint(ph, 3, 1);
        const NotchResult notch = detect_intercondylar_notch(f.patch);
        const SurfaceParcellation parc = parcellate_femoral(f.patch, notch.position, KneeSide::right);
        const auto areas = region_areas(parc, f.patch);
        double worst = 0.0;
        for (const auto& strips : {std::array<Region, 3>{Region::ecMFC, Region::ccMFC, Region::icMFC},
                                   std::array<Region, 3>{Region::ecLFC, Region::ccLFC, Region::icLFC}}) {
            double a[3], mean = 0.0;
            for (int s = 0; s < 3; ++s) {
                a[s] = areas.count(region_code(strips[s])) ? areas.at(region_code(strips[s])) : 0.0;
                mean += a[s] / 3.0;
            }
            for (double x : a) worst = std::max(worst, std::abs(x / mean - 1.0));
        }
        out.note(fmt("femoral strips within %.2f%% of their mean", 100.0 * worst));
        if (worst > kC3StripTolerance) out.fail("central femoral strips not equal-area within 5%");
        check_partition(out, "two-lobe", parc, f.patch, regions_in(1, 10));
    }
    {
        const Phantom right = generate_phantom(default_phantom_spec(PhantomKind::knee));
        const Footprint fc = footprint(right, 3, 1);
        const Footprint mtc = footprint(right, 4, 2);
        const SurfacePatch ltc = patch_from_voxels(mtc.bone_mesh, mask_of(right.labels, 5));
        const SurfaceParcellation femoral =
            parcellate_femoral(fc.patch, detect_intercondylar_notch(fc.patch).position, KneeSide::right);
        const SurfaceParcellation tibial =
            merge_parcellations({parcellate_tibial(mtc.patch, KneeSide::right, TibialPlate::medial),
                                 parcellate_tibial(ltc, KneeSide::right, TibialPlate::lateral)});
        check_partition(out, "knee femoral", femoral, fc.patch, regions_in(1, 10));
        check_partition(out, "knee tibial", tibial, mtc.patch | ltc, regions_in(11, 20));

        PhantomSpec left_spec = default_phantom_spec(PhantomKind::knee);
        left_spec.side = KneeSide::left;
        const Phantom left = generate_phantom(left_spec);
        double worst_agree = 1.0, worst_ratio = 0.0;
        for (const auto& [cart, bone] : {std::pair{3, 1}, std::pair{4, 2}, std::pair{5, 2}}) {
            worst_agree = std::min(worst_agree, mirror_agreement(right, left, cart, bone, worst_ratio));
        }
        out.note(fmt("mirror agreement %.4f, worst region area ratio off by %.4f", worst_agree, worst_ratio));
        if (worst_agree < kC3MirrorAgreement || worst_ratio > kC3MirrorAreaRatio) out.fail("mirror consistency");
    }
    return out;
}

// ---------------------------------------------------------------- criterion 4

Mat3 expm_taylor(const Mat3& a) {
    Mat3 sum = Mat3::Identity();
    Mat3 term = Mat3::Identity();
    for (int n = 1; n < 40; ++n) {
        term = term * a / n;
        sum += term;
    }
    return sum;
}

Geometry centred(int n) {
    Geometry g = grid(n, n, n);
    g.origin = Vec3::Constant(-(n - 1) / 2.0);
    return g;
}

VelocityField smooth_random(const Geometry& g, std::uint64_t seed, double amplitude) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI), freq(0.1, 0.3), amp(-1.0, 1.0);
    struct Wave {
        Vec3 k;
        double phi;
        Vec3 a;
    };
    std::vector<Wave> waves;
    for (int w = 0; w < 4; ++w) {
        waves.push_back({Vec3(freq(rng), freq(rng), freq(rng)), phase(rng),
                         Vec3(amp(rng), amp(rng), amp(rng)) * amplitude / 4.0});
    }
    VelocityField v(g);
    for (int i = 0; i < g.dims[0]; ++i)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int k = 0; k < g.dims[2]; ++k) {
                const Vec3 x = g.index_to_world(i, j, k);
                Vec3 s = Vec3::Zero();
                for (const auto& w : waves) s += w.a * std::sin(w.k.dot(x) + w.phi);
                v.at(i, j, k) = s;
            }
    return v;
}

Outcome criterion4() {
    Outcome out;
    double zero_max = 0.0;
    for (const Vec3& d : integrate_svf(VelocityField(centred(9))).vectors) zero_max = std::max(zero_max, d.cwiseAbs().maxCoeff());
    out.note(fmt("zero SVF max |u| %.1g", zero_max));
    if (zero_max != 0.0) out.fail("zero SVF is not the identity");

    const Vec3 c(1.25, -0.5, 2.0);
    double trans_err = 0.0;
    for (const Vec3& d : integrate_svf(VelocityField(centred(9), c)).vectors) trans_err = std::max(trans_err, (d - c).norm());
    out.note(fmt("constant SVF error %.2g", trans_err));
    if (trans_err > kC4Translation) out.fail("constant SVF is not a translation");

    Mat3 a;
    a << 0.02, -0.05, 0.01, 0.05, 0.01, 0.0, -0.01, 0.02, -0.03;
    const Geometry g = centred(41);
    VelocityField v(g);
    for (int i = 0; i < 41; ++i)
        for (int j = 0; j < 41; ++j)
            for (int k = 0; k < 41; ++k) v.at(i, j, k) = a * g.index_to_world(i, j, k);
    const DeformationField u = integrate_svf(v);
    const Mat3 disp = expm_taylor(a) - Mat3::Identity();
    double err2 = 0.0, ref2 = 0.0;
    for (int i = 10; i <= 30; ++i)
        for (int j = 10; j <= 30; ++j)
            for (int k = 10; k <= 30; ++k) {
                const Vec3 exact = disp * g.index_to_world(i, j, k);
                err2 += (u.at(i, j, k) - exact).squaredNorm();
                ref2 += exact.squaredNorm();
            }
    const double rel = std::sqrt(err2 / ref2);
    out.note(fmt("linear SVF relative error %.2g", rel));
    if (rel > kC4LinearRelative) out.fail("linear SVF deviates from the matrix exponential");

    double worst = 0.0;
    const Geometry gs = centred(24);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const VelocityField vs = smooth_random(gs, seed, 2.0);
        const DeformationField both = compose(integrate_svf(vs), integrate_svf(negate(vs)));
        double sum = 0.0;
        for (const Vec3& d : both.vectors) sum += d.norm();
        worst = std::max(worst, sum / static_cast<double>(both.vectors.size()));
    }
    out.note(fmt("worst inverse-consistency mean residual %.3g voxel", worst));
    if (worst > kC4InverseMeanVoxels) out.fail("inverse consistency above 0.5 voxel");
    return out;
}

// ---------------------------------------------------------------- criterion 5

double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    const long double n = static_cast<long double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += static_cast<long double>(x[i]) * x[i];
        syy += static_cast<long double>(y[i]) * y[i];
        sxy += static_cast<long double>(x[i]) * y[i];
    }
    return static_cast<double>((n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy)));
}

double lncc_oracle(const ScalarVolume& a, const ScalarVolume& b, int window) {
    const Index3& d = a.dims();
    const int r = window / 2;
    double total = 0.0;
    for (int i = 0; i < d[0]; ++i)
        for (int j = 0; j < d[1]; ++j)
            for (int k = 0; k < d[2]; ++k) {
                std::vector<double> xa, xb;
                for (int p = i - r; p <= i + r; ++p)
                    for (int q = j - r; q <= j + r; ++q)
                        for (int s = k - r; s <= k + r; ++s) {
                            if (!a.geometry().contains(p, q, s)) continue;
                            xa.push_back(a.at(p, q, s));
                            xb.push_back(b.at(p, q, s));
                        }
                double ma = 0, mb = 0;
                for (std::size_t n = 0; n < xa.size(); ++n) {
                    ma += xa[n];
                    mb += xb[n];
                }
                ma /= static_cast<double>(xa.size());
                mb /= static_cast<double>(xb.size());
                double cab = 0, caa = 0, cbb = 0;
                for (std::size_t n = 0; n < xa.size(); ++n) {
                    cab += (xa[n] - ma) * (xb[n] - mb);
                    caa += (xa[n] - ma) * (xa[n] - ma);
                    cbb += (xb[n] - mb) * (xb[n] - mb);
                }
                total += cab * cab / (std::max(caa, kLnccVarianceFloor) * std::max(cbb, kLnccVarianceFloor));
            }
    return total / static_cast<double>(a.size());
}

Outcome criterion5() {
    Outcome out;
    std::map<std::string, double> worst;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.5, 40.0);
    std::normal_distribution<double> noise(0.0, 3.0);
    std::uniform_real_distribution<float> uf(0.0F, 1.0F);
    auto track = [&](const std::string& name, double got, double want) {
        worst[name] = std::max(worst[name], std::abs(got - want));
    };
    for (int trial = 0; trial < kC5Instances; ++trial) {
        const Geometry gm = grid(6, 5, 4);
        BinaryMask ma(gm), mb(gm);
        std::bernoulli_distribution pa(0.2 + 0.005 * trial), pb(0.5);
        int inter = 0, sa = 0, sb = 0;
        for (std::size_t n = 0; n < ma.size(); ++n) {
            ma[n] = pa(rng);
            mb[n] = pb(rng);
            inter += ma[n] && mb[n];
            sa += ma[n];
            sb += mb[n];
        }
        track("dsc", dsc(ma, mb), 2.0 * inter / (sa + sb));

        MeasurementSeries s;
        const int n = 2 + trial % 40;
        for (int i = 0; i < n; ++i) {
            s.reference.push_back(u(rng));
            s.model.push_back(s.reference.back() + noise(rng));
        }
        double acc = 0.0, mean = 0.0;
        for (int i = 0; i < n; ++i) {
            acc += (s.model[i] - s.reference[i]) * (s.model[i] - s.reference[i]);
            mean += s.reference[i];
        }
        track("pearson", pearson(s), pearson_oracle(s.model, s.reference));
        track("rmsd", rmsd(s), std::sqrt(acc / n));
        track("cv_rmsd", cv_rmsd(s), std::sqrt(acc / n) / (mean / n));
        const double tol = u(rng) / 4.0;
        int hits = 0;
        for (int i = 0; i < n; ++i) hits += s.model[i] - tol <= s.reference[i] && s.reference[i] <= s.model[i] + tol;
        track("phr", phr(s.model, s.reference, tol), static_cast<double>(hits) / n);

        const Geometry gi = grid(5 + trial % 3, 4 + trial % 2, 4);
        ScalarVolume ia(gi), ib(gi);
        for (std::size_t v = 0; v < ia.size(); ++v) {
            ia[v] = uf(rng);
            ib[v] = trial % 5 == 0 ? 0.25F : 0.6F * ia[v] + 0.4F * uf(rng);
        }
        long double sq = 0;
        for (std::size_t v = 0; v < ia.size(); ++v) {
            sq += (static_cast<long double>(ia[v]) - ib[v]) * (static_cast<long double>(ia[v]) - ib[v]);
        }
        track("mse", mse_image(ia, ib), static_cast<double>(sq / ia.size()));
        const int window = trial % 2 ? 3 : 5;
        track("lncc", lncc_image(ia, ib, window), lncc_oracle(ia, ib, window));
    }
    for (const auto& [name, err] : worst) {
        const double tol = name == "lncc" ? kC5Lncc : kC5Exact;
        if (err > tol) out.fail(name + fmt(" deviates by %.3g", err));
    }
    out.note(fmt("worst deviation %.2g (exact metrics), %.2g (lncc)",
                 std::max({worst["dsc"], worst["pearson"], worst["rmsd"], worst["cv_rmsd"], worst["phr"], worst["mse"]}),
                 worst["lncc"]));

    std::vector<double> pred(500), truth(500);
    std::uniform_real_distribution<double> pct(0.0, 100.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pred[i] = pct(rng);
        truth[i] = pct(rng);
    }
    double prev = -1.0;
    bool monotone = true;
    for (double tol = 0.0; tol <= 100.0; tol += 1.0) {
        const double p = phr(pred, truth, tol);
        monotone = monotone && p >= prev;
        prev = p;
    }
    out.note(monotone && prev == 1.0 ? "pHR monotone over 101 tolerances" : "pHR sweep broken");
    if (!monotone || prev != 1.0) out.fail("pHR not monotone in tolerance");
    return out;
}

// ---------------------------------------------------------------- criterion 6

Outcome criterion6() {
    Outcome out;
    std::mt19937_64 rng(77);
    const PhantomKind kinds[] = {PhantomKind::slab, PhantomKind::cuboid_defect, PhantomKind::shell,
                                 PhantomKind::two_lobe_fc, PhantomKind::tibial_disc};
    std::uniform_real_distribution<double> frac(0.05, 0.4);
    int partition_ok = 0;
    for (int trial = 0; trial < 20; ++trial) {
        PhantomSpec spec = default_phantom_spec(kinds[trial % 5]);
        if (trial % 3 != 0) {
            spec.defect = DefectSpec{frac(rng)};
            spec.defect->at_edge = trial % 4 == 1;
            spec.defect->rotated = trial % 4 == 2;
        }
        const Phantom ph = generate_phantom(spec, rng());
        const BinaryMask inner = inner_surface_voxels(ph.cart, ph.bone);
        const BinaryMask outer = outer_surface_voxels(ph.cart, inner);
        const BinaryMask b = boundary(ph.cart);
        const bool ok = mask_union(inner, outer).data() == b.data() && count_set(mask_intersection(inner, outer)) == 0 &&
                        count_set(inner) > 0;
        partition_ok += ok;
    }
    out.note(fmt("boundary partition holds on %.0f of 20 phantoms", partition_ok));
    if (partition_ok != 20) out.fail("V_in / V_out partition broken");

    // Top face of a 22x22x2 block; lattice (x, y) of top vertices.
    BinaryMask block(grid(24, 24, 4));
    for (int i = 1; i < 23; ++i)
        for (int j = 1; j < 23; ++j)
            for (int k = 1; k < 3; ++k) block.at(i, j, k) = 1;
    const SurfacePtr s = mesh_from_mask(block);
    std::map<int, std::pair<int, int>> top;
    for (std::size_t v = 0; v < s->vertex_count(); ++v) {
        const Vec3& p = s->vertices()[v];
        if (std::abs(p.z() - 2.5) < 1e-9) top[static_cast<int>(v)] = {static_cast<int>(std::lround(p.x() + 0.5)),
                                                                      static_cast<int>(std::lround(p.y() + 0.5))};
    }
    SurfacePatch punched(s);
    std::vector<int> hole;
    for (const auto& [v, xy] : top) {
        const int r = std::max(std::abs(xy.first - 12), std::abs(xy.second - 12));
        (r <= 1 ? hole.push_back(v) : punched.insert(v));
    }
    const SurfacePatch closed = surface_close(punched, SurfacePatch(s, true), 4, 4);
    const bool filled = std::all_of(hole.begin(), hole.end(), [&](int v) { return closed.contains(v); });
    out.note(filled ? "closing n_d=n_e=4 fills the punched 1-ring hole" : "closing leaves the hole open");
    if (!filled || !punched.is_subset_of(closed)) out.fail("surface closing");

    int crossings = 0, rings = 0;
    std::uniform_int_distribution<int> centre(7, 16), radius(2, 5);
    for (int trial = 0; trial < 20; ++trial) {
        const int cx = centre(rng), cy = centre(rng), rad = radius(rng);
        SurfacePatch seed(s);
        PatchBoundaryRestriction ring;
        std::set<int> inside;
        for (const auto& [v, xy] : top) {
            const int r = std::max(std::abs(xy.first - cx), std::abs(xy.second - cy));
            if (r == rad) ring.forbidden.push_back(v);
            if (r < rad) inside.insert(v);
            if (r < rad && (xy.first + xy.second + trial) % 5 == 0) seed.insert(v);
        }
        if (seed.empty()) continue;
        ++rings;
        for (int v : restricted_dilate(seed, SurfacePatch(s, true), ring).vertex_ids()) crossings += !inside.count(v);
    }
    out.note(fmt("restricted dilation: %.0f vertices beyond %.0f rings", crossings, rings));
    if (crossings != 0) out.fail("restricted dilation crossed a closed ring");
    return out;
}

// ---------------------------------------------------------------- criterion 7

Outcome criterion7() {
    Outcome out;
    const auto dir = std::filesystem::temp_directory_path() /
                     ("kneemorph_acceptance_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(dir);
    PhantomSpec spec = default_phantom_spec(PhantomKind::knee);
    spec.defect = DefectSpec{0.15};
    const Phantom ph = generate_phantom(spec, 7);
    nifti::save(ph.labels, dir / "seg.nii.gz");
    nifti::save(ph.intact_labels, dir / "template.nii.gz");

    PipelineConfig c;
    c.seg = dir / "seg.nii.gz";
    c.template_seg = dir / "template.nii.gz";
    c.out = dir / "run1";
    const auto t0 = std::chrono::steady_clock::now();
    (void)run_pipeline(c);
    const double elapsed = seconds_since(t0);
    c.out = dir / "run2";
    (void)run_pipeline(c);

    const std::string a = slurp(dir / "run1" / "report.csv");
    const std::string b = slurp(dir / "run2" / "report.csv");
    out.note(fmt("report.csv %.0f bytes, single run %.2f s", static_cast<double>(a.size()), elapsed));
    if (a.empty() || a != b) out.fail("reports differ between runs");
    if (elapsed >= kC7MaxSeconds) out.fail("pipeline slower than 60 s");
    std::filesystem::remove_all(dir);
    return out;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"C1 cuboid-defect thickness", criterion1},
        {"C2 FCL phantom recovery", criterion2},
        {"C3 parcellation partition", criterion3},
        {"C4 warp engine", criterion4},
        {"C5 metrics oracle equivalence", criterion5},
        {"C6 surface-operator laws", criterion6},
        {"C7 end-to-end determinism", criterion7},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o.fail(std::string("exception: ") + e.what());
        }
        failed += !o.pass;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
