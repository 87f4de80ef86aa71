#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capsim/mesh.hpp"

namespace capsim {

/// Raw file contents before cleanup. segment_ids is empty unless the file
/// carries an integer per-vertex "segment" property (PLY only).
struct MeshData {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<int> segment_ids;
};

MeshData read_obj(const std::filesystem::path& path);
MeshData read_ply(const std::filesystem::path& path);
/// Dispatches on the extension (.obj / .ply, case-insensitive).
MeshData read_mesh(const std::filesystem::path& path);

void write_obj(const std::filesystem::path& path, std::span<const Vec3> vertices,
               std::span<const Triangle> triangles);

struct PlyScalar {
  std::string name;
  std::span<const double> values;
};

enum class PlyFormat { Ascii, BinaryLittleEndian };

/// Writes vertices (double x/y/z), optional integer "segment" and double
/// scalar properties, and faces when any are given.
void write_ply(const std::filesystem::path& path, std::span<const Vec3> vertices,
               std::span<const Triangle> triangles, std::optional<PlyScalar> scalar = std::nullopt,
               std::span<const int> segment_ids = {}, PlyFormat format = PlyFormat::Ascii);

/// Reads a centerline description: JSON array of {"start": [x,y,z], "end": [x,y,z]}.
std::vector<CenterlineSegment> read_segments(const std::filesystem::path& path);
void write_segments(const std::filesystem::path& path, std::span<const CenterlineSegment> segments);

}  // namespace capsim
