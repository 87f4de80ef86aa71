#include "capsim/mesh_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "capsim/errors.hpp"
#include "capsim/json_io.hpp"

namespace capsim {
namespace {

std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  if (!std::filesystem::exists(path)) throw MissingFileError(path.string());
  std::ifstream in(path, mode);
  if (!in) throw MissingFileError(path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw Error("cannot open for writing: " + path.string());
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

void append_polygon(std::vector<Triangle>& out, const std::vector<std::uint32_t>& poly) {
  for (std::size_t i = 1; i + 1 < poly.size(); ++i) out.push_back({poly[0], poly[i], poly[i + 1]});
}

// --- PLY -------------------------------------------------------------------

struct PlyProperty {
  std::string name;
  std::string type;
  bool is_list = false;
  std::string count_type;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

std::size_t ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  return 0;
}

bool ply_is_integer(const std::string& t) {
  return t != "float" && t != "float32" && t != "double" && t != "float64";
}

template <typename T>
T load_bytes(const unsigned char* p, bool swap) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, p, sizeof(T));
  if (swap) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

class BinaryReader {
 public:
  BinaryReader(std::istream& in, bool big_endian)
      : in_(in), swap_(big_endian != (std::endian::native == std::endian::big)) {}

  double read(const std::string& type) {
    const std::size_t n = ply_type_size(type);
    unsigned char buf[8];
    if (!in_.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n))) {
      throw ParseError("ply: unexpected end of binary data", 0, 0);
    }
    if (type == "char" || type == "int8") return load_bytes<std::int8_t>(buf, swap_);
    if (type == "uchar" || type == "uint8") return load_bytes<std::uint8_t>(buf, swap_);
    if (type == "short" || type == "int16") return load_bytes<std::int16_t>(buf, swap_);
    if (type == "ushort" || type == "uint16") return load_bytes<std::uint16_t>(buf, swap_);
    if (type == "int" || type == "int32") return load_bytes<std::int32_t>(buf, swap_);
    if (type == "uint" || type == "uint32") return load_bytes<std::uint32_t>(buf, swap_);
    if (type == "float" || type == "float32") return load_bytes<float>(buf, swap_);
    return load_bytes<double>(buf, swap_);
  }

 private:
  std::istream& in_;
  bool swap_;
};

}  // namespace

MeshData read_ply(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, std::ios::in | std::ios::binary);
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line() || line != "ply") throw ParseError("ply: missing magic", 1, 1);

  std::string format;
  std::vector<PlyElement> elements;
  while (true) {
    if (!next_line()) throw ParseError("ply: header not terminated", line_no, 1);
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "end_header") break;
    if (kw == "comment" || kw == "obj_info" || kw.empty()) continue;
    if (kw == "format") {
      ls >> format;
    } else if (kw == "element") {
      PlyElement e;
      if (!(ls >> e.name >> e.count)) throw ParseError("ply: bad element line", line_no, 1);
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) throw ParseError("ply: property before element", line_no, 1);
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        p.is_list = true;
        ls >> p.count_type >> p.type >> p.name;
        if (ply_type_size(p.count_type) == 0) throw ParseError("ply: bad list count type", line_no, 1);
      } else {
        p.type = t;
        ls >> p.name;
      }
      if (ply_type_size(p.type) == 0) throw ParseError("ply: unknown type \"" + p.type + "\"", line_no, 1);
      elements.back().props.push_back(p);
    } else {
      throw ParseError("ply: unknown header keyword \"" + kw + "\"", line_no, 1);
    }
  }
  const bool ascii = format == "ascii";
  const bool big = format == "binary_big_endian";
  if (!ascii && !big && format != "binary_little_endian") {
    throw ParseError("ply: unsupported format \"" + format + "\"", line_no, 1);
  }

  MeshData data;
  BinaryReader bin(in, big);
  for (const auto& e : elements) {
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    if (is_vertex) data.vertices.reserve(e.count);
    bool has_segment = false;
    for (const auto& p : e.props) {
      if (is_vertex && p.name == "segment" && !p.is_list && ply_is_integer(p.type)) has_segment = true;
    }
    if (is_vertex && has_segment) data.segment_ids.reserve(e.count);

    for (std::size_t i = 0; i < e.count; ++i) {
      std::istringstream ls;
      if (ascii) {
        if (!next_line()) throw ParseError("ply: unexpected end of file in " + e.name, line_no, 1);
        ls.str(line);
      }
      auto read_value = [&](const std::string& type) -> double {
        if (!ascii) return bin.read(type);
        double v = 0.0;
        if (!(ls >> v)) throw ParseError("ply: malformed value in " + e.name, line_no, 1);
        return v;
      };
      Vec3 p = Vec3::Zero();
      int segment = -1;
      std::vector<std::uint32_t> poly;
      for (const auto& prop : e.props) {
        if (prop.is_list) {
          const auto n = static_cast<std::size_t>(read_value(prop.count_type));
          std::vector<std::uint32_t> items(n);
          for (std::size_t k = 0; k < n; ++k) items[k] = static_cast<std::uint32_t>(read_value(prop.type));
          if (is_face && (prop.name == "vertex_indices" || prop.name == "vertex_index")) poly = std::move(items);
          continue;
        }
        const double v = read_value(prop.type);
        if (is_vertex) {
          if (prop.name == "x") p.x() = v;
          else if (prop.name == "y") p.y() = v;
          else if (prop.name == "z") p.z() = v;
          else if (prop.name == "segment" && has_segment) segment = static_cast<int>(v);
        }
      }
      if (is_vertex) {
        data.vertices.push_back(p);
        if (has_segment) data.segment_ids.push_back(segment);
      } else if (is_face) {
        if (poly.size() < 3) throw ParseError("ply: face with fewer than 3 vertices", line_no, 1);
        append_polygon(data.triangles, poly);
      }
    }
  }
  return data;
}

MeshData read_obj(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  MeshData data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) throw ParseError("obj: malformed vertex", line_no, 1);
      data.vertices.push_back(p);
    } else if (kw == "f") {
      std::vector<std::uint32_t> poly;
      std::string tok;
      while (ls >> tok) {
        const std::size_t slash = tok.find('/');
        long idx = 0;
        try {
          idx = std::stol(tok.substr(0, slash));
        } catch (const std::exception&) {
          throw ParseError("obj: malformed face index \"" + tok + "\"", line_no, 1);
        }
        if (idx < 0) idx = static_cast<long>(data.vertices.size()) + idx + 1;
        if (idx <= 0) throw ParseError("obj: face index out of range", line_no, 1);
        poly.push_back(static_cast<std::uint32_t>(idx - 1));
      }
      if (poly.size() < 3) throw ParseError("obj: face with fewer than 3 vertices", line_no, 1);
      append_polygon(data.triangles, poly);
    }
  }
  return data;
}

MeshData read_mesh(const std::filesystem::path& path) {
  const std::string ext = lower(path.extension().string());
  if (ext == ".obj") return read_obj(path);
  if (ext == ".ply") return read_ply(path);
  if (!std::filesystem::exists(path)) throw MissingFileError(path.string());
  throw InputError("unsupported mesh format: " + path.string());
}

void write_obj(const std::filesystem::path& path, std::span<const Vec3> vertices,
               std::span<const Triangle> triangles) {
  std::ofstream out = open_output(path);
  for (const auto& v : vertices) out << fmt::format("v {:.9g} {:.9g} {:.9g}\n", v.x(), v.y(), v.z());
  for (const auto& t : triangles) out << fmt::format("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1);
}

void write_ply(const std::filesystem::path& path, std::span<const Vec3> vertices,
               std::span<const Triangle> triangles, std::optional<PlyScalar> scalar,
               std::span<const int> segment_ids, PlyFormat format) {
  if (scalar && scalar->values.size() != vertices.size()) {
    throw DimensionError("write_ply: scalar count does not match vertex count");
  }
  if (!segment_ids.empty() && segment_ids.size() != vertices.size()) {
    throw DimensionError("write_ply: segment count does not match vertex count");
  }
  const bool binary = format == PlyFormat::BinaryLittleEndian;
  std::ofstream out = open_output(path, std::ios::out | std::ios::binary);
  out << "ply\n" << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
  out << "element vertex " << vertices.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n";
  if (!segment_ids.empty()) out << "property int segment\n";
  if (scalar) out << "property double " << scalar->name << "\n";
  if (!triangles.empty()) {
    out << "element face " << triangles.size() << "\n"
        << "property list uchar int vertex_indices\n";
  }
  out << "end_header\n";

  auto put = [&out](auto v) {
    // Little-endian host assumed for binary output.
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const Vec3& v = vertices[i];
    if (binary) {
      put(v.x());
      put(v.y());
      put(v.z());
      if (!segment_ids.empty()) put(static_cast<std::int32_t>(segment_ids[i]));
      if (scalar) put(scalar->values[i]);
    } else {
      out << fmt::format("{:.17g} {:.17g} {:.17g}", v.x(), v.y(), v.z());
      if (!segment_ids.empty()) out << ' ' << segment_ids[i];
      if (scalar) out << fmt::format(" {:.17g}", scalar->values[i]);
      out << '\n';
    }
  }
  for (const auto& t : triangles) {
    if (binary) {
      put(static_cast<std::uint8_t>(3));
      for (std::uint32_t v : t) put(static_cast<std::int32_t>(v));
    } else {
      out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    }
  }
}

std::vector<CenterlineSegment> read_segments(const std::filesystem::path& path) {
  const auto j = jsonio::read_file(path);
  if (!j.is_array()) throw ValidationError("segments", "expected an array");
  std::vector<CenterlineSegment> segments;
  for (std::size_t i = 0; i < j.size(); ++i) {
    jsonio::ObjectReader r(j[i], fmt::format("segments[{}]", i));
    CenterlineSegment s;
    if (!r.has("start") || !r.has("end")) throw ValidationError(r.field("start"), "start and end are required");
    s.start = r.vec3("start", Vec3::Zero());
    s.end = r.vec3("end", Vec3::Zero());
    r.finish();
    segments.push_back(std::move(s));
  }
  return segments;
}

void write_segments(const std::filesystem::path& path, std::span<const CenterlineSegment> segments) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : segments) {
    j.push_back({{"start", {s.start.x(), s.start.y(), s.start.z()}},
                 {"end", {s.end.x(), s.end.y(), s.end.z()}}});
  }
  std::ofstream out = open_output(path);
  out << j.dump(2) << "\n";
}

}  // namespace capsim
