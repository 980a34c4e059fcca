#pragma once

#include "sparsesplat/gaussian_field.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace sparsesplat {

/// Vertex data of a PLY file, one column per property, converted to double.
struct PlyVertices {
    std::size_t count = 0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;

    bool has(const std::string& name) const;
    const std::vector<double>& column(const std::string& name) const; // ParseError when absent
};

/// Reads the vertex element of a binary-little-endian PLY.
PlyVertices read_ply_vertices(const std::filesystem::path& path);

/// Gaussian field in the common splatting layout: float32 x,y,z, f_dc_0..2,
/// f_rest_*, opacity, scale_0..2, rot_0..3 with f_rest stored channel-major.
void write_field_ply(const std::filesystem::path& path, const GaussianField& field);
GaussianField read_field_ply(const std::filesystem::path& path);

} // namespace sparsesplat
