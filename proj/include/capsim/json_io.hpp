#pragma once

#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

#include "capsim/errors.hpp"
#include "capsim/geometry.hpp"

namespace capsim::jsonio {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

/// Parses JSON text. ParseError carries the 1-based line and column of the fault.
Json parse(const std::string& text, const std::string& what);
/// MissingFileError when absent, otherwise as parse().
Json read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Json& j);

Json to_json(const Vec3& v);
Vec3 vec3_from(const Json& j, const std::string& field);

/// {"position": [x, y, z], "quaternion": [qx, qy, qz, qw]}; "rpy": [r, p, y]
/// is accepted in place of the quaternion.
Json to_json(const RigidTransform& t);
RigidTransform pose_from(const Json& j, const std::string& field);

/// Reads an object field by field and rejects keys nobody asked for.
/// Field names in errors are dotted paths from the document root.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path);

  bool has(const std::string& key) const;
  const Json& at(const std::string& key);
  std::string field(const std::string& key) const;

  template <typename T>
  T get(const std::string& key, const T& fallback) {
    if (!has(key)) return fallback;
    return as<T>(key);
  }

  template <typename T>
  T required(const std::string& key) {
    if (!has(key)) throw ValidationError(field(key), "is required");
    return as<T>(key);
  }

  Vec3 vec3(const std::string& key, const Vec3& fallback);
  RigidTransform pose(const std::string& key, const RigidTransform& fallback);

  /// Throws ValidationError naming the first key that was never read.
  void finish() const;

 private:
  template <typename T>
  T as(const std::string& key) {
    const Json& v = at(key);
    try {
      return v.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(field(key), "has the wrong type (" + std::string(v.type_name()) + ")");
    }
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace capsim::jsonio
