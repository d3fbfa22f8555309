#include "kneemorph/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "kneemorph/warp.hpp"

namespace kneemorph::nifti {
namespace {

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;
constexpr short kUint8 = 2;
constexpr short kInt16 = 4;
constexpr short kInt32 = 8;
constexpr short kFloat32 = 16;
constexpr short kIntentVector = 1007;

#pragma pack(push, 1)
struct Header {
    std::int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code;
    std::int16_t sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4];
    float srow_y[4];
    float srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Header) == kHeaderSize);

template <typename T>
void swap_bytes(T& v) {
    auto* p = reinterpret_cast<unsigned char*>(&v);
    std::reverse(p, p + sizeof(T));
}

void swap_header(Header& h) {
    swap_bytes(h.sizeof_hdr);
    swap_bytes(h.extents);
    swap_bytes(h.session_error);
    for (auto& d : h.dim) swap_bytes(d);
    swap_bytes(h.intent_p1);
    swap_bytes(h.intent_p2);
    swap_bytes(h.intent_p3);
    swap_bytes(h.intent_code);
    swap_bytes(h.datatype);
    swap_bytes(h.bitpix);
    swap_bytes(h.slice_start);
    for (auto& p : h.pixdim) swap_bytes(p);
    swap_bytes(h.vox_offset);
    swap_bytes(h.scl_slope);
    swap_bytes(h.scl_inter);
    swap_bytes(h.slice_end);
    swap_bytes(h.cal_max);
    swap_bytes(h.cal_min);
    swap_bytes(h.slice_duration);
    swap_bytes(h.toffset);
    swap_bytes(h.glmax);
    swap_bytes(h.glmin);
    swap_bytes(h.qform_code);
    swap_bytes(h.sform_code);
    swap_bytes(h.quatern_b);
    swap_bytes(h.quatern_c);
    swap_bytes(h.quatern_d);
    swap_bytes(h.qoffset_x);
    swap_bytes(h.qoffset_y);
    swap_bytes(h.qoffset_z);
    for (int i = 0; i < 4; ++i) {
        swap_bytes(h.srow_x[i]);
        swap_bytes(h.srow_y[i]);
        swap_bytes(h.srow_z[i]);
    }
}

class GzFile {
public:
    GzFile(const std::filesystem::path& path, const char* mode) : file_(gzopen(path.string().c_str(), mode)) {}
    ~GzFile() {
        if (file_ != nullptr) gzclose(file_);
    }
    GzFile(const GzFile&) = delete;
    GzFile& operator=(const GzFile&) = delete;

    [[nodiscard]] bool ok() const { return file_ != nullptr; }
    void read_exact(void* dst, std::size_t n, const std::filesystem::path& path) {
        auto* out = static_cast<char*>(dst);
        while (n > 0) {
            const auto chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
            const int got = gzread(file_, out, chunk);
            if (got <= 0) throw FormatError(path.string() + ": truncated NIfTI file");
            out += got;
            n -= static_cast<std::size_t>(got);
        }
    }
    void skip(std::size_t n, const std::filesystem::path& path) {
        std::vector<char> buf(n);
        read_exact(buf.data(), n, path);
    }
    void write_exact(const void* src, std::size_t n, const std::filesystem::path& path) {
        const auto* in = static_cast<const char*>(src);
        while (n > 0) {
            const auto chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
            const int put = gzwrite(file_, in, chunk);
            if (put <= 0) throw Error(path.string() + ": write failed");
            in += put;
            n -= static_cast<std::size_t>(put);
        }
    }
    void close(const std::filesystem::path& path) {
        const int rc = gzclose(file_);
        file_ = nullptr;
        if (rc != Z_OK) throw Error(path.string() + ": write failed");
    }

private:
    gzFile file_;
};

bool is_gzip_name(const std::filesystem::path& path) {
    const std::string s = path.string();
    return s.size() >= 3 && s.compare(s.size() - 3, 3, ".gz") == 0;
}

struct RawImage {
    Header header{};
    bool swapped = false;
    Geometry geometry;
    int components = 1;
    std::vector<char> bytes;
};

Mat3 quaternion_matrix(double b, double c, double d) {
    double a = 1.0 - (b * b + c * c + d * d);
    if (a < 1e-7) {
        const double n = std::sqrt(b * b + c * c + d * d);
        b /= n;
        c /= n;
        d /= n;
        a = 0.0;
    } else {
        a = std::sqrt(a);
    }
    Mat3 r;
    r << a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c),
        2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b),
        2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b;
    return r;
}

void geometry_from_header(const Header& h, Geometry& g, const std::filesystem::path& path) {
    Mat3 m;
    Vec3 origin;
    if (h.sform_code > 0) {
        for (int c = 0; c < 3; ++c) {
            m(0, c) = h.srow_x[c];
            m(1, c) = h.srow_y[c];
            m(2, c) = h.srow_z[c];
        }
        origin = Vec3(h.srow_x[3], h.srow_y[3], h.srow_z[3]);
    } else if (h.qform_code > 0) {
        Mat3 r = quaternion_matrix(h.quatern_b, h.quatern_c, h.quatern_d);
        const double qfac = h.pixdim[0] < 0 ? -1.0 : 1.0;
        r.col(2) *= qfac;
        for (int c = 0; c < 3; ++c) m.col(c) = r.col(c) * std::abs(static_cast<double>(h.pixdim[c + 1]));
        origin = Vec3(h.qoffset_x, h.qoffset_y, h.qoffset_z);
    } else {
        m.setZero();
        for (int c = 0; c < 3; ++c) m(c, c) = std::abs(static_cast<double>(h.pixdim[c + 1]));
        origin.setZero();
    }
    for (int c = 0; c < 3; ++c) {
        const double s = m.col(c).norm();
        if (!(s > 0.0) || !std::isfinite(s)) throw FormatError(path.string() + ": degenerate voxel spacing");
        g.spacing[c] = s;
        g.direction.col(c) = m.col(c) / s;
    }
    g.origin = origin;
    const Mat3 gram = g.direction.transpose() * g.direction;
    if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
        throw FormatError(path.string() + ": direction matrix is not orthonormal");
    }
    // Remove float rounding so the internal direction is exactly orthonormal.
    Eigen::JacobiSVD<Mat3> svd(g.direction, Eigen::ComputeFullU | Eigen::ComputeFullV);
    g.direction = svd.matrixU() * svd.matrixV().transpose();
}

int bytes_per_voxel(short datatype) {
    switch (datatype) {
        case kUint8: return 1;
        case kInt16: return 2;
        case kInt32: return 4;
        case kFloat32: return 4;
        default: return 0;
    }
}

RawImage read_raw(const std::filesystem::path& path, bool vector_field) {
    if (!std::filesystem::exists(path)) throw FormatError(path.string() + ": file does not exist");
    GzFile file(path, "rb");
    if (!file.ok()) throw FormatError(path.string() + ": cannot open");
    RawImage img;
    file.read_exact(&img.header, sizeof(Header), path);
    Header& h = img.header;
    if (h.sizeof_hdr != kHeaderSize) {
        swap_header(h);
        if (h.sizeof_hdr != kHeaderSize) throw FormatError(path.string() + ": not a NIfTI-1 file");
        img.swapped = true;
    }
    if (std::memcmp(h.magic, "n+1", 4) != 0) {
        throw FormatError(path.string() + ": only single-file NIfTI-1 (magic n+1) is supported");
    }
    const int ndim = h.dim[0];
    if (ndim < 1 || ndim > 7) throw FormatError(path.string() + ": invalid dim[0]");
    std::array<int, 7> d{};
    for (int i = 0; i < 7; ++i) d[i] = i < ndim ? h.dim[i + 1] : 1;
    for (int i = 0; i < 7; ++i) {
        if (d[i] < 1) throw FormatError(path.string() + ": non-positive dimension");
    }
    if (vector_field) {
        // Vector fields: (x, y, z, 1, 3) or (x, y, z, 3).
        if (d[3] == 3 && d[4] == 1 && d[5] == 1 && d[6] == 1) {
            img.components = 3;
        } else if (d[3] == 1 && d[4] == 3 && d[5] == 1 && d[6] == 1) {
            img.components = 3;
        } else {
            throw FormatError(path.string() + ": vector field must have a trailing dimension of size 3");
        }
    } else {
        for (int i = 3; i < 7; ++i) {
            if (d[i] != 1) throw FormatError(path.string() + ": only 3D scalar volumes are supported");
        }
    }
    img.geometry.dims = {d[0], d[1], d[2]};
    const int bpv = bytes_per_voxel(h.datatype);
    if (bpv == 0) {
        throw FormatError(path.string() + ": unsupported datatype " + std::to_string(h.datatype) +
                          " (supported: uint8, int16, int32, float32)");
    }
    if (vector_field && h.datatype != kFloat32) throw FormatError(path.string() + ": vector fields must be float32");
    geometry_from_header(h, img.geometry, path);
    const auto offset = static_cast<std::int64_t>(h.vox_offset);
    if (offset < kHeaderSize) throw FormatError(path.string() + ": invalid vox_offset");
    file.skip(static_cast<std::size_t>(offset - kHeaderSize), path);
    img.bytes.resize(img.geometry.voxel_count() * static_cast<std::size_t>(img.components * bpv));
    file.read_exact(img.bytes.data(), img.bytes.size(), path);
    return img;
}

template <typename T>
T read_value(const char* p, bool swapped) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    if (swapped) swap_bytes(v);
    return v;
}

/// Value of NIfTI voxel `n` (i-fastest order) as double, before scaling.
double raw_value(const RawImage& img, std::size_t n) {
    const char* p = img.bytes.data() + n * static_cast<std::size_t>(bytes_per_voxel(img.header.datatype));
    switch (img.header.datatype) {
        case kUint8: return static_cast<unsigned char>(*p);
        case kInt16: return read_value<std::int16_t>(p, img.swapped);
        case kInt32: return read_value<std::int32_t>(p, img.swapped);
        default: return read_value<float>(p, img.swapped);
    }
}

/// NIfTI voxel number of internal index (i, j, k).
std::size_t file_index(const Index3& dims, int i, int j, int k) {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
}

bool has_scaling(const Header& h) {
    return h.scl_slope != 0.0F && (h.scl_slope != 1.0F || h.scl_inter != 0.0F);
}

template <typename F>
void for_each_voxel(const Index3& dims, F&& f) {
    std::size_t linear = 0;
    for (int i = 0; i < dims[0]; ++i)
        for (int j = 0; j < dims[1]; ++j)
            for (int k = 0; k < dims[2]; ++k) f(linear++, file_index(dims, i, j, k));
}

LabelVolume labels_from_raw(const RawImage& img, const std::filesystem::path& path) {
    LabelVolume out(img.geometry);
    const double slope = has_scaling(img.header) ? img.header.scl_slope : 1.0;
    const double inter = has_scaling(img.header) ? img.header.scl_inter : 0.0;
    for_each_voxel(img.geometry.dims, [&](std::size_t linear, std::size_t n) {
        const double v = raw_value(img, n) * slope + inter;
        if (!(v >= 0.0) || v > std::numeric_limits<std::uint16_t>::max() || v != std::floor(v)) {
            throw FormatError(path.string() + ": voxel values are not non-negative integer labels");
        }
        out[linear] = static_cast<std::uint16_t>(v);
    });
    return out;
}

ScalarVolume scalars_from_raw(const RawImage& img, const std::filesystem::path& path) {
    ScalarVolume out(img.geometry);
    const double slope = has_scaling(img.header) ? img.header.scl_slope : 1.0;
    const double inter = has_scaling(img.header) ? img.header.scl_inter : 0.0;
    for_each_voxel(img.geometry.dims, [&](std::size_t linear, std::size_t n) {
        const double v = raw_value(img, n) * slope + inter;
        if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite voxel value");
        out[linear] = static_cast<float>(v);
    });
    return out;
}

/// Unit quaternion (b, c, d) with a >= 0 for a proper rotation.
std::array<double, 3> rotation_to_quaternion(const Mat3& r) {
    double a = 0.5 * std::sqrt(std::max(0.0, 1.0 + r(0, 0) + r(1, 1) + r(2, 2)));
    double b = 0.0;
    double c = 0.0;
    double d = 0.0;
    if (a > 0.5) {
        b = 0.25 * (r(2, 1) - r(1, 2)) / a;
        c = 0.25 * (r(0, 2) - r(2, 0)) / a;
        d = 0.25 * (r(1, 0) - r(0, 1)) / a;
    } else {
        const double xd = 1.0 + r(0, 0) - (r(1, 1) + r(2, 2));
        const double yd = 1.0 + r(1, 1) - (r(0, 0) + r(2, 2));
        const double zd = 1.0 + r(2, 2) - (r(0, 0) + r(1, 1));
        if (xd >= yd && xd >= zd) {
            b = 0.5 * std::sqrt(xd);
            c = 0.25 * (r(0, 1) + r(1, 0)) / b;
            d = 0.25 * (r(0, 2) + r(2, 0)) / b;
            a = 0.25 * (r(2, 1) - r(1, 2)) / b;
        } else if (yd >= zd) {
            c = 0.5 * std::sqrt(yd);
            b = 0.25 * (r(0, 1) + r(1, 0)) / c;
            d = 0.25 * (r(1, 2) + r(2, 1)) / c;
            a = 0.25 * (r(0, 2) - r(2, 0)) / c;
        } else {
            d = 0.5 * std::sqrt(zd);
            b = 0.25 * (r(0, 2) + r(2, 0)) / d;
            c = 0.25 * (r(1, 2) + r(2, 1)) / d;
            a = 0.25 * (r(1, 0) - r(0, 1)) / d;
        }
        if (a < 0.0) {
            b = -b;
            c = -c;
            d = -d;
        }
    }
    return {b, c, d};
}

Header make_header(const Geometry& g, short datatype, int components, const std::string& description) {
    g.validate();
    Header h{};
    h.sizeof_hdr = kHeaderSize;
    h.regular = 'r';
    h.dim[0] = components == 1 ? 3 : 4;
    for (int a = 0; a < 3; ++a) {
        if (g.dims[a] > std::numeric_limits<std::int16_t>::max()) throw InvalidArgument("dimension too large for NIfTI-1");
        h.dim[a + 1] = static_cast<std::int16_t>(g.dims[a]);
    }
    for (int a = 4; a < 8; ++a) h.dim[a] = 1;
    if (components != 1) {
        h.dim[4] = static_cast<std::int16_t>(components);
        h.intent_code = kIntentVector;
    }
    h.datatype = datatype;
    h.bitpix = static_cast<std::int16_t>(8 * bytes_per_voxel(datatype));
    h.vox_offset = static_cast<float>(kVoxOffset);
    h.scl_slope = 1.0F;
    h.xyzt_units = 2;  // millimetres

    Mat3 r = g.direction;
    double qfac = 1.0;
    if (r.determinant() < 0.0) {
        qfac = -1.0;
        r.col(2) = -r.col(2);
    }
    const auto q = rotation_to_quaternion(r);
    h.pixdim[0] = static_cast<float>(qfac);
    for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = static_cast<float>(g.spacing[a]);
    for (int a = 4; a < 8; ++a) h.pixdim[a] = 1.0F;
    h.qform_code = 1;
    h.sform_code = 1;
    h.quatern_b = static_cast<float>(q[0]);
    h.quatern_c = static_cast<float>(q[1]);
    h.quatern_d = static_cast<float>(q[2]);
    h.qoffset_x = static_cast<float>(g.origin[0]);
    h.qoffset_y = static_cast<float>(g.origin[1]);
    h.qoffset_z = static_cast<float>(g.origin[2]);
    const Mat3 m = g.direction * g.spacing.asDiagonal();
    for (int c = 0; c < 3; ++c) {
        h.srow_x[c] = static_cast<float>(m(0, c));
        h.srow_y[c] = static_cast<float>(m(1, c));
        h.srow_z[c] = static_cast<float>(m(2, c));
    }
    h.srow_x[3] = static_cast<float>(g.origin[0]);
    h.srow_y[3] = static_cast<float>(g.origin[1]);
    h.srow_z[3] = static_cast<float>(g.origin[2]);
    std::strncpy(h.descrip, description.empty() ? "kneemorph" : description.c_str(), sizeof(h.descrip) - 1);
    std::memcpy(h.magic, "n+1", 4);
    return h;
}

void write_file(const std::filesystem::path& path, const Header& h, const std::vector<char>& data) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    GzFile file(path, is_gzip_name(path) ? "wb6" : "wbT");
    if (!file.ok()) throw Error(path.string() + ": cannot open for writing");
    file.write_exact(&h, sizeof(Header), path);
    const char extension[4] = {0, 0, 0, 0};
    file.write_exact(extension, sizeof(extension), path);
    file.write_exact(data.data(), data.size(), path);
    file.close(path);
}

template <typename T, typename Src>
std::vector<char> pack(const Index3& dims, const Src& src) {
    std::vector<char> out(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2] * sizeof(T));
    for_each_voxel(dims, [&](std::size_t linear, std::size_t n) {
        const T v = static_cast<T>(src[linear]);
        std::memcpy(out.data() + n * sizeof(T), &v, sizeof(T));
    });
    return out;
}

}  // namespace

AnyVolume load_volume(const std::filesystem::path& path) {
    const RawImage img = read_raw(path, false);
    if (img.header.datatype != kFloat32 && !has_scaling(img.header)) return labels_from_raw(img, path);
    return scalars_from_raw(img, path);
}

LabelVolume load_labels(const std::filesystem::path& path) {
    return labels_from_raw(read_raw(path, false), path);
}

ScalarVolume load_scalar(const std::filesystem::path& path) {
    return scalars_from_raw(read_raw(path, false), path);
}

void save(const LabelVolume& volume, const std::filesystem::path& path, const std::string& description) {
    const auto& data = volume.data();
    const bool fits_u8 = std::all_of(data.begin(), data.end(), [](std::uint16_t v) { return v <= 255; });
    const bool fits_i16 =
        std::all_of(data.begin(), data.end(), [](std::uint16_t v) { return v <= std::numeric_limits<std::int16_t>::max(); });
    if (fits_u8) {
        write_file(path, make_header(volume.geometry(), kUint8, 1, description), pack<std::uint8_t>(volume.dims(), data));
    } else if (fits_i16) {
        write_file(path, make_header(volume.geometry(), kInt16, 1, description), pack<std::int16_t>(volume.dims(), data));
    } else {
        write_file(path, make_header(volume.geometry(), kInt32, 1, description), pack<std::int32_t>(volume.dims(), data));
    }
}

void save(const ScalarVolume& volume, const std::filesystem::path& path, const std::string& description) {
    write_file(path, make_header(volume.geometry(), kFloat32, 1, description), pack<float>(volume.dims(), volume.data()));
}

VectorField load_field(const std::filesystem::path& path) {
    const RawImage img = read_raw(path, true);
    VectorField field(img.geometry);
    const std::size_t n = img.geometry.voxel_count();
    for_each_voxel(img.geometry.dims, [&](std::size_t linear, std::size_t idx) {
        for (int c = 0; c < 3; ++c) {
            const double v = raw_value(img, idx + static_cast<std::size_t>(c) * n);
            if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite vector component");
            field.vectors[linear][c] = v;
        }
    });
    return field;
}

void save_field(const VectorField& field, const std::filesystem::path& path, const std::string& description) {
    const Index3& dims = field.geometry.dims;
    const std::size_t n = field.geometry.voxel_count();
    if (field.vectors.size() != n) throw InvalidArgument("vector field size does not match geometry");
    std::vector<char> data(n * 3 * sizeof(float));
    for_each_voxel(dims, [&](std::size_t linear, std::size_t idx) {
        for (int c = 0; c < 3; ++c) {
            const auto v = static_cast<float>(field.vectors[linear][c]);
            std::memcpy(data.data() + (idx + static_cast<std::size_t>(c) * n) * sizeof(float), &v, sizeof(float));
        }
    });
    write_file(path, make_header(field.geometry, kFloat32, 3, description), data);
}

}  // namespace kneemorph::nifti
