#include "kneemorph/resample.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace kneemorph {
namespace {

/// Voxel-axis to world-axis assignment maximising the summed alignment.
std::array<int, 3> closest_axis_permutation(const Mat3& direction) {
    std::array<int, 3> perm{0, 1, 2};
    std::array<int, 3> best = perm;
    double best_score = -1.0;
    do {
        double score = 0.0;
        for (int a = 0; a < 3; ++a) score += std::abs(direction(perm[a], a));
        if (score > best_score + 1e-12) {
            best_score = score;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

double clamp_index(double x, int n) { return std::clamp(x, 0.0, static_cast<double>(n - 1)); }

float trilinear(const ScalarVolume& v, const Vec3& p) {
    const Index3& d = v.dims();
    std::array<int, 3> lo{};
    std::array<double, 3> t{};
    for (int a = 0; a < 3; ++a) {
        const double x = clamp_index(p[a], d[a]);
        lo[a] = std::min(static_cast<int>(std::floor(x)), std::max(d[a] - 2, 0));
        t[a] = x - lo[a];
    }
    double acc = 0.0;
    for (int c = 0; c < 8; ++c) {
        double w = 1.0;
        std::array<int, 3> idx{};
        for (int a = 0; a < 3; ++a) {
            const int bit = (c >> a) & 1;
            w *= bit ? t[a] : 1.0 - t[a];
            idx[a] = std::min(lo[a] + bit, d[a] - 1);
        }
        if (w != 0.0) acc += w * v.at(idx[0], idx[1], idx[2]);
    }
    return static_cast<float>(acc);
}

}  // namespace

template <typename T>
Volume<T> reorient_ras(const Volume<T>& volume) {
    const Geometry& g = volume.geometry();
    const std::array<int, 3> perm = closest_axis_permutation(g.direction);
    std::array<bool, 3> flip{};
    Geometry out;
    out.origin = g.origin;
    for (int a = 0; a < 3; ++a) {
        const int w = perm[a];
        flip[a] = g.direction(w, a) < 0.0;
        out.dims[w] = g.dims[a];
        out.spacing[w] = g.spacing[a];
        out.direction.col(w) = flip[a] ? Vec3(-g.direction.col(a)) : Vec3(g.direction.col(a));
        if (flip[a]) out.origin += g.direction.col(a) * g.spacing[a] * (g.dims[a] - 1);
    }
    if (perm == std::array<int, 3>{0, 1, 2} && !flip[0] && !flip[1] && !flip[2]) return volume;

    Volume<T> result(out);
    for (int i = 0; i < g.dims[0]; ++i) {
        for (int j = 0; j < g.dims[1]; ++j) {
            for (int k = 0; k < g.dims[2]; ++k) {
                const std::array<int, 3> src{i, j, k};
                std::array<int, 3> dst{};
                for (int a = 0; a < 3; ++a) dst[perm[a]] = flip[a] ? g.dims[a] - 1 - src[a] : src[a];
                result.at(dst[0], dst[1], dst[2]) = volume.at(i, j, k);
            }
        }
    }
    return result;
}

template LabelVolume reorient_ras(const LabelVolume&);
template ScalarVolume reorient_ras(const ScalarVolume&);
template BinaryMask reorient_ras(const BinaryMask&);

Index3 scaled_dims(const Index3& dims, double scale) {
    if (!(scale > 0.0)) throw InvalidArgument("scale must be positive");
    Index3 out{};
    for (int a = 0; a < 3; ++a) out[a] = std::max(1, static_cast<int>(std::floor(dims[a] * scale + 1e-9)));
    return out;
}

Geometry low_resolution_geometry(const CropRecord& record) {
    const Geometry& src = record.source_geometry;
    Geometry g;
    g.dims = record.window_dims;
    g.spacing = src.spacing / record.scale;
    g.direction = src.direction;
    Vec3 start;
    for (int a = 0; a < 3; ++a) start[a] = (record.crop_offset[a] + 0.5) / record.scale - 0.5;
    g.origin = src.index_to_world(start);
    return g;
}

CropRecord plan_crop(const LabelVolume& seg, const Index3& target_dims, double scale) {
    const Geometry& g = seg.geometry();
    CropRecord rec;
    rec.scale = scale;
    rec.scaled_dims = scaled_dims(g.dims, scale);
    rec.window_dims = target_dims;
    rec.source_geometry = g;
    for (int a = 0; a < 3; ++a) {
        if (target_dims[a] <= 0) throw InvalidArgument("crop target dims must be positive");
        if (target_dims[a] > rec.scaled_dims[a]) {
            throw InvalidArgument("crop target dims exceed the downsampled grid");
        }
    }
    Vec3 sum = Vec3::Zero();
    std::int64_t count = 0;
    for (std::size_t n = 0; n < seg.size(); ++n) {
        if (seg[n] == 0) continue;
        const Index3 idx = g.unravel(static_cast<std::int64_t>(n));
        sum += Vec3(idx[0], idx[1], idx[2]);
        ++count;
    }
    if (count == 0) throw InvalidArgument("segmentation is empty; nothing to centre the crop on");
    const Vec3 centroid = sum / static_cast<double>(count);
    for (int a = 0; a < 3; ++a) {
        const double c_low = (centroid[a] + 0.5) * scale - 0.5;
        const int offset = static_cast<int>(std::lround(c_low - (target_dims[a] - 1) / 2.0));
        rec.crop_offset[a] = std::clamp(offset, 0, rec.scaled_dims[a] - target_dims[a]);
    }
    return rec;
}

std::pair<ScalarVolume, CropRecord> mask_downsample_crop(const ScalarVolume& image, const LabelVolume& seg,
                                                         const Index3& target_dims, double scale) {
    require_same_grid(image.geometry(), seg.geometry(), "mask_downsample_crop");
    CropRecord rec = plan_crop(seg, target_dims, scale);
    ScalarVolume masked = image;
    for (std::size_t n = 0; n < masked.size(); ++n) {
        if (seg[n] == 0) masked[n] = 0.0F;
    }
    ScalarVolume out(low_resolution_geometry(rec));
    for (int i = 0; i < target_dims[0]; ++i) {
        for (int j = 0; j < target_dims[1]; ++j) {
            for (int k = 0; k < target_dims[2]; ++k) {
                const Index3 l{i + rec.crop_offset[0], j + rec.crop_offset[1], k + rec.crop_offset[2]};
                Vec3 src;
                for (int a = 0; a < 3; ++a) src[a] = (l[a] + 0.5) / scale - 0.5;
                out.at(i, j, k) = trilinear(masked, src);
            }
        }
    }
    return {std::move(out), rec};
}

LabelVolume downsample_crop_labels(const LabelVolume& seg, const CropRecord& record) {
    require_same_grid(seg.geometry(), record.source_geometry, "downsample_crop_labels");
    LabelVolume out(low_resolution_geometry(record));
    const Index3& sd = seg.dims();
    for (int i = 0; i < record.window_dims[0]; ++i) {
        for (int j = 0; j < record.window_dims[1]; ++j) {
            for (int k = 0; k < record.window_dims[2]; ++k) {
                const Index3 l{i + record.crop_offset[0], j + record.crop_offset[1], k + record.crop_offset[2]};
                Index3 src{};
                for (int a = 0; a < 3; ++a) {
                    src[a] = std::clamp(static_cast<int>(std::floor((l[a] + 0.5) / record.scale)), 0, sd[a] - 1);
                }
                out.at(i, j, k) = seg.at(src[0], src[1], src[2]);
            }
        }
    }
    return out;
}

LabelVolume restore_resolution(const LabelVolume& low, const CropRecord& record) {
    if (low.dims() != record.window_dims) throw GeometryMismatch("restore_resolution: dims differ from crop window");
    LabelVolume out(record.source_geometry);
    const Index3& d = record.source_geometry.dims;
    for (int i = 0; i < d[0]; ++i) {
        for (int j = 0; j < d[1]; ++j) {
            for (int k = 0; k < d[2]; ++k) {
                const Index3 x{i, j, k};
                Index3 l{};
                bool inside = true;
                for (int a = 0; a < 3; ++a) {
                    l[a] = static_cast<int>(std::floor((x[a] + 0.5) * record.scale + 1e-9)) - record.crop_offset[a];
                    inside = inside && l[a] >= 0 && l[a] < record.window_dims[a];
                }
                if (inside) out.at(i, j, k) = low.at(l[0], l[1], l[2]);
            }
        }
    }
    return out;
}

ScalarVolume normalize_min_max(const ScalarVolume& image) {
    ScalarVolume out(image.geometry());
    if (image.size() == 0) return out;
    const auto [lo, hi] = std::minmax_element(image.data().begin(), image.data().end());
    const double range = static_cast<double>(*hi) - *lo;
    if (range <= 0.0) return out;
    for (std::size_t n = 0; n < image.size(); ++n) {
        out[n] = static_cast<float>((image[n] - static_cast<double>(*lo)) / range);
    }
    return out;
}

}  // namespace kneemorph
