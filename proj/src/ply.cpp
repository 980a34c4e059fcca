#include "sparsesplat/ply.hpp"

#include "sparsesplat/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace sparsesplat {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

namespace {

std::size_t type_size(const std::string& type) {
    static const std::map<std::string, std::size_t> sizes = {
        {"char", 1},   {"int8", 1},   {"uchar", 1},  {"uint8", 1},  {"short", 2},  {"int16", 2},
        {"ushort", 2}, {"uint16", 2}, {"int", 4},    {"int32", 4},  {"uint", 4},   {"uint32", 4},
        {"float", 4},  {"float32", 4}, {"double", 8}, {"float64", 8}};
    const auto it = sizes.find(type);
    if (it == sizes.end()) {
        throw Error(ErrorCode::ParseError, "unsupported PLY property type " + type);
    }
    return it->second;
}

template <typename T>
double load(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
}

double decode(const std::string& type, const char* p) {
    if (type == "char" || type == "int8") return load<std::int8_t>(p);
    if (type == "uchar" || type == "uint8") return load<std::uint8_t>(p);
    if (type == "short" || type == "int16") return load<std::int16_t>(p);
    if (type == "ushort" || type == "uint16") return load<std::uint16_t>(p);
    if (type == "int" || type == "int32") return load<std::int32_t>(p);
    if (type == "uint" || type == "uint32") return load<std::uint32_t>(p);
    if (type == "float" || type == "float32") return load<float>(p);
    return load<double>(p);
}

} // namespace

bool PlyVertices::has(const std::string& name) const {
    for (const auto& n : names) {
        if (n == name) {
            return true;
        }
    }
    return false;
}

const std::vector<double>& PlyVertices::column(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) {
            return columns[i];
        }
    }
    throw Error(ErrorCode::ParseError, "PLY vertex property missing: " + name);
}

PlyVertices read_ply_vertices(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    std::string line;
    std::getline(in, line);
    if (line != "ply") {
        throw Error(ErrorCode::ParseError, path.string() + ": not a PLY file");
    }
    PlyVertices result;
    std::vector<std::string> types;
    bool in_vertex = false;
    bool seen_vertex = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword == "end_header") {
            break;
        }
        if (keyword == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian") {
                throw Error(ErrorCode::ParseError, path.string() + ": only binary_little_endian PLY is supported");
            }
        } else if (keyword == "element") {
            std::string name;
            std::size_t count = 0;
            ls >> name >> count;
            in_vertex = name == "vertex";
            if (in_vertex) {
                if (seen_vertex) {
                    throw Error(ErrorCode::ParseError, path.string() + ": duplicate vertex element");
                }
                result.count = count;
                seen_vertex = true;
            } else if (!seen_vertex) {
                throw Error(ErrorCode::ParseError, path.string() + ": vertex element must come first");
            }
        } else if (keyword == "property" && in_vertex) {
            std::string type, name;
            ls >> type;
            if (type == "list") {
                throw Error(ErrorCode::ParseError, path.string() + ": list properties on vertices are unsupported");
            }
            ls >> name;
            types.push_back(type);
            result.names.push_back(name);
        }
    }
    if (!seen_vertex) {
        throw Error(ErrorCode::ParseError, path.string() + ": no vertex element");
    }
    std::size_t stride = 0;
    std::vector<std::size_t> offsets;
    for (const auto& t : types) {
        offsets.push_back(stride);
        stride += type_size(t);
    }
    std::vector<char> buffer(stride * result.count);
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    if (static_cast<std::size_t>(in.gcount()) != buffer.size()) {
        throw Error(ErrorCode::ParseError, path.string() + ": truncated vertex data");
    }
    result.columns.assign(types.size(), std::vector<double>(result.count));
    for (std::size_t v = 0; v < result.count; ++v) {
        const char* row = buffer.data() + v * stride;
        for (std::size_t p = 0; p < types.size(); ++p) {
            result.columns[p][v] = decode(types[p], row + offsets[p]);
        }
    }
    return result;
}

void write_field_ply(const std::filesystem::path& path, const GaussianField& field) {
    field.validate();
    const int bases = field.bases();
    const int rest = 3 * (bases - 1);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << field.size() << '\n';
    for (const char* name : {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"}) {
        out << "property float " << name << '\n';
    }
    for (int i = 0; i < rest; ++i) {
        out << "property float f_rest_" << i << '\n';
    }
    out << "property float opacity\n";
    for (const char* name : {"scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
        out << "property float " << name << '\n';
    }
    out << "end_header\n";
    std::vector<float> row(static_cast<std::size_t>(3 + 3 + rest + 1 + 3 + 4));
    for (std::size_t i = 0; i < field.size(); ++i) {
        std::size_t k = 0;
        for (int a = 0; a < 3; ++a) row[k++] = static_cast<float>(field.positions[3 * i + a]);
        const auto sh = field.sh_of(i);
        for (int c = 0; c < 3; ++c) row[k++] = static_cast<float>(sh[static_cast<std::size_t>(c)]);
        for (int c = 0; c < 3; ++c) {
            for (int b = 1; b < bases; ++b) row[k++] = static_cast<float>(sh[static_cast<std::size_t>(b * 3 + c)]);
        }
        row[k++] = static_cast<float>(field.opacity_logits[i]);
        for (int a = 0; a < 3; ++a) row[k++] = static_cast<float>(field.log_scales[3 * i + a]);
        for (int a = 0; a < 4; ++a) row[k++] = static_cast<float>(field.rotations[4 * i + a]);
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) {
        throw Error(ErrorCode::IoError, "failed writing " + path.string());
    }
}

GaussianField read_field_ply(const std::filesystem::path& path) {
    const PlyVertices ply = read_ply_vertices(path);
    int rest = 0;
    while (ply.has("f_rest_" + std::to_string(rest))) {
        ++rest;
    }
    int degree = -1;
    for (int d = 0; d <= kMaxShDegree; ++d) {
        if (3 * (sh_bases(d) - 1) == rest) {
            degree = d;
        }
    }
    if (degree < 0) {
        throw Error(ErrorCode::DegreeMismatch, path.string() + ": f_rest count matches no SH degree");
    }
    GaussianField field(degree);
    const int bases = field.bases();
    const auto& x = ply.column("x");
    const auto& y = ply.column("y");
    const auto& z = ply.column("z");
    const auto& op = ply.column("opacity");
    std::vector<const std::vector<double>*> dc, rest_cols, scale, rot;
    for (int c = 0; c < 3; ++c) dc.push_back(&ply.column("f_dc_" + std::to_string(c)));
    for (int i = 0; i < rest; ++i) rest_cols.push_back(&ply.column("f_rest_" + std::to_string(i)));
    for (int a = 0; a < 3; ++a) scale.push_back(&ply.column("scale_" + std::to_string(a)));
    for (int a = 0; a < 4; ++a) rot.push_back(&ply.column("rot_" + std::to_string(a)));
    std::vector<double> sh(field.sh_stride());
    for (std::size_t v = 0; v < ply.count; ++v) {
        for (int c = 0; c < 3; ++c) {
            sh[static_cast<std::size_t>(c)] = (*dc[static_cast<std::size_t>(c)])[v];
            for (int b = 1; b < bases; ++b) {
                sh[static_cast<std::size_t>(b * 3 + c)] =
                    (*rest_cols[static_cast<std::size_t>(c * (bases - 1) + (b - 1))])[v];
            }
        }
        field.append({x[v], y[v], z[v]}, {(*rot[0])[v], (*rot[1])[v], (*rot[2])[v], (*rot[3])[v]},
                     {(*scale[0])[v], (*scale[1])[v], (*scale[2])[v]}, op[v], sh);
    }
    return field;
}

} // namespace sparsesplat
