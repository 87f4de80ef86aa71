#include "capsim/json_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace capsim::jsonio {
namespace {

// nlohmann reports a byte offset; translate it to line and column.
std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

}  // namespace

Json parse(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, column] = line_column(text, e.byte);
    throw ParseError(fmt::format("{}:{}:{}: malformed JSON", what, line, column), line, column);
  }
}

Json read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError(path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void write_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Json to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const Json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(field, "expected an array of 3 numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw ValidationError(field, "expected an array of 3 numbers");
    v[i] = j[i].get<double>();
    if (!std::isfinite(v[i])) throw ValidationError(field, "must be finite");
  }
  return v;
}

Json to_json(const RigidTransform& t) {
  const Quat& q = t.rotation();
  return Json{{"position", to_json(t.translation())}, {"quaternion", Json::array({q.x(), q.y(), q.z(), q.w()})}};
}

RigidTransform pose_from(const Json& j, const std::string& field) {
  if (!j.is_object()) throw ValidationError(field, "expected an object");
  ObjectReader r(j, field);
  const Vec3 position = r.vec3("position", Vec3::Zero());
  Quat q = Quat::Identity();
  if (r.has("quaternion") && r.has("rpy")) throw ValidationError(field, "give either quaternion or rpy, not both");
  if (r.has("quaternion")) {
    const auto& a = r.at("quaternion");
    if (!a.is_array() || a.size() != 4) throw ValidationError(r.field("quaternion"), "expected [qx, qy, qz, qw]");
    for (const auto& e : a) {
      if (!e.is_number()) throw ValidationError(r.field("quaternion"), "expected [qx, qy, qz, qw]");
    }
    q = Quat(a[3].get<double>(), a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
    if (!(q.norm() > 1e-12)) throw ValidationError(r.field("quaternion"), "must be non-zero");
  } else if (r.has("rpy")) {
    const Vec3 rpy = r.vec3("rpy", Vec3::Zero());
    q = quat_from_rpy(rpy.x(), rpy.y(), rpy.z());
  }
  r.finish();
  return {q, position};
}

ObjectReader::ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
  if (!j_.is_object()) throw ValidationError(path_.empty() ? "<root>" : path_, "expected an object");
}

bool ObjectReader::has(const std::string& key) const { return j_.contains(key); }

const Json& ObjectReader::at(const std::string& key) {
  seen_.insert(key);
  return j_.at(key);
}

std::string ObjectReader::field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

Vec3 ObjectReader::vec3(const std::string& key, const Vec3& fallback) {
  if (!has(key)) return fallback;
  return vec3_from(at(key), field(key));
}

RigidTransform ObjectReader::pose(const std::string& key, const RigidTransform& fallback) {
  if (!has(key)) return fallback;
  return pose_from(at(key), field(key));
}

void ObjectReader::finish() const {
  for (const auto& [key, value] : j_.items()) {
    if (!seen_.count(key)) throw ValidationError(field(key), "unknown key");
  }
}

}  // namespace capsim::jsonio
