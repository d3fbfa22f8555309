#include "kneemorph/ply.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "kneemorph/error.hpp"

namespace kneemorph::ply {

namespace {

static_assert(std::endian::native == std::endian::little, "binary PLY I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("PLY body truncated");
    return v;
}

enum class Scalar { i8, u8, i16, u16, i32, u32, f32, f64 };

Scalar scalar_from_name(const std::string& name) {
    static const std::unordered_map<std::string, Scalar> map{
        {"char", Scalar::i8},     {"int8", Scalar::i8},     {"uchar", Scalar::u8},   {"uint8", Scalar::u8},
        {"short", Scalar::i16},   {"int16", Scalar::i16},   {"ushort", Scalar::u16}, {"uint16", Scalar::u16},
        {"int", Scalar::i32},     {"int32", Scalar::i32},   {"uint", Scalar::u32},   {"uint32", Scalar::u32},
        {"float", Scalar::f32},   {"float32", Scalar::f32}, {"double", Scalar::f64}, {"float64", Scalar::f64}};
    auto it = map.find(name);
    if (it == map.end()) throw FormatError("unsupported PLY property type: " + name);
    return it->second;
}

bool is_integral(Scalar s) { return s != Scalar::f32 && s != Scalar::f64; }

double read_binary(std::istream& is, Scalar s) {
    switch (s) {
        case Scalar::i8: return get<std::int8_t>(is);
        case Scalar::u8: return get<std::uint8_t>(is);
        case Scalar::i16: return get<std::int16_t>(is);
        case Scalar::u16: return get<std::uint16_t>(is);
        case Scalar::i32: return get<std::int32_t>(is);
        case Scalar::u32: return get<std::uint32_t>(is);
        case Scalar::f32: return get<float>(is);
        case Scalar::f64: return get<double>(is);
    }
    return 0.0;
}

struct Property {
    std::string name;
    Scalar type = Scalar::f32;
    bool list = false;
    Scalar count_type = Scalar::u8;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> props;
};

class ValueReader {
public:
    ValueReader(std::istream& is, bool binary) : is_(is), binary_(binary) {}

    double next(Scalar s) {
        if (binary_) return read_binary(is_, s);
        double v = 0.0;
        if (!(is_ >> v)) throw FormatError("PLY body truncated");
        return v;
    }

private:
    std::istream& is_;
    bool binary_;
};

}  // namespace

void write(const std::filesystem::path& path, const SurfacePatch& patch, const VertexProperties& props,
           Encoding encoding, const std::string& comment) {
    const auto& surf = patch.surface();
    const auto ids = patch.vertex_ids();
    const auto faces = patch.induced_faces();
    std::vector<int> remap(surf.vertex_count(), -1);
    for (std::size_t i = 0; i < ids.size(); ++i) remap[static_cast<std::size_t>(ids[i])] = static_cast<int>(i);
    if (props.scalar && props.scalar->second.size() != surf.vertex_count()) {
        throw InvalidArgument("scalar vertex property must have one value per parent vertex");
    }
    if (props.integer && props.integer->second.size() != surf.vertex_count()) {
        throw InvalidArgument("integer vertex property must have one value per parent vertex");
    }

    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path.string());
    os << "ply\nformat " << (encoding == Encoding::ascii ? "ascii" : "binary_little_endian") << " 1.0\n";
    if (!comment.empty()) {
        std::istringstream lines(comment);
        for (std::string line; std::getline(lines, line);) os << "comment " << line << '\n';
    }
    os << "element vertex " << ids.size() << "\nproperty float x\nproperty float y\nproperty float z\n";
    if (props.scalar) os << "property float " << props.scalar->first << '\n';
    if (props.integer) os << "property int " << props.integer->first << '\n';
    os << "element face " << faces.size() << "\nproperty list uchar int vertex_indices\nend_header\n";

    if (encoding == Encoding::ascii) {
        os.precision(9);
        for (int v : ids) {
            const auto& p = surf.vertices()[static_cast<std::size_t>(v)];
            os << static_cast<float>(p.x()) << ' ' << static_cast<float>(p.y()) << ' ' << static_cast<float>(p.z());
            if (props.scalar) os << ' ' << props.scalar->second[static_cast<std::size_t>(v)];
            if (props.integer) os << ' ' << props.integer->second[static_cast<std::size_t>(v)];
            os << '\n';
        }
        for (int f : faces) {
            const auto& t = surf.faces()[static_cast<std::size_t>(f)];
            os << "3 " << remap[static_cast<std::size_t>(t[0])] << ' ' << remap[static_cast<std::size_t>(t[1])] << ' '
               << remap[static_cast<std::size_t>(t[2])] << '\n';
        }
    } else {
        for (int v : ids) {
            const auto& p = surf.vertices()[static_cast<std::size_t>(v)];
            put(os, static_cast<float>(p.x()));
            put(os, static_cast<float>(p.y()));
            put(os, static_cast<float>(p.z()));
            if (props.scalar) put(os, props.scalar->second[static_cast<std::size_t>(v)]);
            if (props.integer) put(os, static_cast<std::int32_t>(props.integer->second[static_cast<std::size_t>(v)]));
        }
        for (int f : faces) {
            const auto& t = surf.faces()[static_cast<std::size_t>(f)];
            put(os, static_cast<std::uint8_t>(3));
            for (int c : t) put(os, static_cast<std::int32_t>(remap[static_cast<std::size_t>(c)]));
        }
    }
    if (!os) throw FormatError("write failed: " + path.string());
}

Mesh read(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path.string());
    std::string line;
    std::getline(is, line);
    if (line != "ply") throw FormatError("not a PLY file: " + path.string());
    bool binary = false;
    std::vector<Element> elements;
    for (;;) {
        if (!std::getline(is, line)) throw FormatError("PLY header not terminated");
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "end_header") break;
        if (key == "comment" || key == "obj_info" || key.empty()) continue;
        if (key == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii") {
                binary = false;
            } else if (fmt == "binary_little_endian") {
                binary = true;
            } else {
                throw FormatError("unsupported PLY format: " + fmt);
            }
        } else if (key == "element") {
            Element e;
            ls >> e.name >> e.count;
            elements.push_back(e);
        } else if (key == "property") {
            if (elements.empty()) throw FormatError("PLY property before any element");
            Property p;
            std::string type;
            ls >> type;
            if (type == "list") {
                std::string ct, vt;
                ls >> ct >> vt;
                p.list = true;
                p.count_type = scalar_from_name(ct);
                p.type = scalar_from_name(vt);
            } else {
                p.type = scalar_from_name(type);
            }
            ls >> p.name;
            elements.back().props.push_back(p);
        } else {
            throw FormatError("unexpected PLY header line: " + line);
        }
    }

    Mesh mesh;
    ValueReader reader(is, binary);
    for (const auto& e : elements) {
        for (std::size_t n = 0; n < e.count; ++n) {
            if (e.name == "vertex") {
                Vec3 p = Vec3::Zero();
                bool have_scalar = false;
                bool have_int = false;
                for (const auto& prop : e.props) {
                    if (prop.list) {
                        const auto len = static_cast<std::size_t>(reader.next(prop.count_type));
                        for (std::size_t i = 0; i < len; ++i) reader.next(prop.type);
                        continue;
                    }
                    const double v = reader.next(prop.type);
                    if (prop.name == "x") {
                        p.x() = v;
                    } else if (prop.name == "y") {
                        p.y() = v;
                    } else if (prop.name == "z") {
                        p.z() = v;
                    } else if (!is_integral(prop.type) && !have_scalar) {
                        mesh.scalar.push_back(static_cast<float>(v));
                        have_scalar = true;
                    } else if (is_integral(prop.type) && !have_int) {
                        mesh.integer.push_back(static_cast<int>(v));
                        have_int = true;
                    }
                }
                mesh.vertices.push_back(p);
            } else if (e.name == "face") {
                Face f{};
                for (const auto& prop : e.props) {
                    if (!prop.list) {
                        reader.next(prop.type);
                        continue;
                    }
                    const auto len = static_cast<std::size_t>(reader.next(prop.count_type));
                    if (len != 3) throw FormatError("only triangular PLY faces are supported");
                    for (std::size_t i = 0; i < 3; ++i) f[i] = static_cast<int>(reader.next(prop.type));
                }
                mesh.faces.push_back(f);
            } else {
                for (const auto& prop : e.props) {
                    if (prop.list) {
                        const auto len = static_cast<std::size_t>(reader.next(prop.count_type));
                        for (std::size_t i = 0; i < len; ++i) reader.next(prop.type);
                    } else {
                        reader.next(prop.type);
                    }
                }
            }
        }
    }
    for (const auto& f : mesh.faces) {
        for (int c : f) {
            if (c < 0 || static_cast<std::size_t>(c) >= mesh.vertices.size()) {
                throw FormatError("PLY face index out of range");
            }
        }
    }
    return mesh;
}

}  // namespace kneemorph::ply
