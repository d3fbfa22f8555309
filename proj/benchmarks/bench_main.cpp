#include <benchmark/benchmark.h>

#include <random>

#include "kneemorph/fcl.hpp"
#include "kneemorph/metrics.hpp"
#include "kneemorph/phantom.hpp"
#include "kneemorph/pipeline.hpp"
#include "kneemorph/thickness.hpp"
#include "kneemorph/warp.hpp"

using namespace kneemorph;

namespace {

const Phantom& cuboid() {
    static const Phantom p = generate_phantom(default_phantom_spec(PhantomKind::cuboid_defect));
    return p;
}

const Phantom& knee() {
    static const Phantom p = [] {
        PhantomSpec spec = default_phantom_spec(PhantomKind::knee);
        spec.defect = DefectSpec{0.15};
        return generate_phantom(spec, 1);
    }();
    return p;
}

void BM_MeshFromMask(benchmark::State& state) {
    const BinaryMask& cart = knee().cart;
    for (auto _ : state) benchmark::DoNotOptimize(mesh_from_mask(cart));
}
BENCHMARK(BM_MeshFromMask)->Unit(benchmark::kMillisecond);

void BM_SegmentSurfaces(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(segment_cartilage_surfaces(cuboid().cart, cuboid().bone));
}
BENCHMARK(BM_SegmentSurfaces)->Unit(benchmark::kMillisecond);

void BM_Normals(benchmark::State& state) {
    const CartilageSurfaces s = segment_cartilage_surfaces(cuboid().cart, cuboid().bone);
    const int k = static_cast<int>(state.range(0));
    for (auto _ : state) {
        NormalField n = estimate_normals_svd(s.inner, k);
        n = reorient_normals(n, cuboid().cart);
        benchmark::DoNotOptimize(smooth_normals(n, 3));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.inner.size()));
}
BENCHMARK(BM_Normals)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ThicknessNormal(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(map_thickness(cuboid().cart, cuboid().bone));
}
BENCHMARK(BM_ThicknessNormal)->Unit(benchmark::kMillisecond);

void BM_Thickness3dnn(benchmark::State& state) {
    const CartilageSurfaces s = segment_cartilage_surfaces(cuboid().cart, cuboid().bone);
    for (auto _ : state) benchmark::DoNotOptimize(thickness_3dnn(s.inner, s.outer));
}
BENCHMARK(BM_Thickness3dnn)->Unit(benchmark::kMillisecond);

void BM_IntegrateSvf(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Geometry g;
    g.dims = {n, n, n};
    VelocityField v(g);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> d(0.0, 0.5);
    for (auto& x : v.vectors) x = Vec3(d(rng), d(rng), d(rng));
    for (auto _ : state) benchmark::DoNotOptimize(integrate_svf(v, 7));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(v.vectors.size()));
}
BENCHMARK(BM_IntegrateSvf)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Lncc(benchmark::State& state) {
    Geometry g;
    g.dims = {64, 64, 64};
    ScalarVolume a(g), b(g);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<float> u(0.0F, 1.0F);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = u(rng);
        b[i] = 0.5F * a[i] + 0.5F * u(rng);
    }
    for (auto _ : state) benchmark::DoNotOptimize(lncc_image(a, b, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_Lncc)->Arg(3)->Arg(9)->Unit(benchmark::kMillisecond);

void BM_EstimateFcl(benchmark::State& state) {
    const SurfacePtr bone = mesh_from_mask(cuboid().bone);
    for (auto _ : state) {
        benchmark::DoNotOptimize(estimate_fcl(cuboid().cart, bone, cuboid().intact_cart, Compartment::tibial));
    }
}
BENCHMARK(BM_EstimateFcl)->Unit(benchmark::kMillisecond);

void BM_PipelineKnee(benchmark::State& state) {
    SubjectInputs in;
    in.seg = knee().labels;
    in.template_seg = knee().intact_labels;
    const int workers = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(analyze_subject(in, PipelineConfig{}, workers));
}
BENCHMARK(BM_PipelineKnee)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);

}  // namespace

// The system benchmark_main archive is not link-compatible here.
BENCHMARK_MAIN();
