#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "capsim/geometry.hpp"

namespace capsim::metrics {

// --- Trajectories ------------------------------------------------------------

struct PoseSample {
  double t = 0.0;
  RigidTransform pose;
};

struct Trajectory {
  std::vector<PoseSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::vector<Vec3> positions() const;
  /// ValidationError unless timestamps strictly increase.
  void validate() const;
};

/// One line per sample: "t tx ty tz qx qy qz qw". '#' comments and blank lines are skipped.
Trajectory read_tum(const std::filesystem::path& path);
Trajectory parse_tum(const std::string& text, const std::string& what = "trajectory");
/// Shortest round-trip decimal formatting, so reading back is exact.
std::string format_tum_line(const PoseSample& s);
void write_tum(const std::filesystem::path& path, const Trajectory& traj);

/// Pairs each gt sample with the nearest unused pred sample within max_dt,
/// in time order. Returns the matched (pred, gt) trajectories of equal length.
std::pair<Trajectory, Trajectory> associate(const Trajectory& pred, const Trajectory& gt, double max_dt = 0.02);

// --- Alignment -------------------------------------------------------------

/// Least-squares rigid transform T minimizing sum |T(pred_i) - gt_i|^2 (Kabsch,
/// det = +1). DegenerateError for fewer than 3 points or collinear/coincident
/// input; LengthMismatchError for unequal lengths.
RigidTransform rigid_align(std::span<const Vec3> pred, std::span<const Vec3> gt);

struct Similarity {
  RigidTransform rigid;
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return rigid.rotation() * (scale * p) + rigid.translation(); }
};

/// As rigid_align but also fits a uniform scale (Umeyama).
Similarity similarity_align(std::span<const Vec3> pred, std::span<const Vec3> gt);

// --- Trajectory errors ---------------------------------------------------------

struct AteResult {
  std::vector<double> errors;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  Similarity alignment;
};

/// Aligns pred positions onto gt (rigid, or similarity when with_scale), then
/// per-sample Euclidean distance.
AteResult ate(const Trajectory& pred, const Trajectory& gt, bool with_scale = false);

struct RpeError {
  double trans = 0.0;  // m
  double rot = 0.0;    // rad, in [0, pi]
};

/// E = (Q_i^-1 Q_i1)^-1 (P_i^-1 P_i1); trans = |E translation|,
/// rot = acos(clamp((trace(E rotation) - 1) / 2, -1, 1)).
RpeError rpe_pair(const RigidTransform& p_i, const RigidTransform& p_i1, const RigidTransform& q_i,
                  const RigidTransform& q_i1);

struct RpeResult {
  std::vector<RpeError> pairs;
  double trans_mean = 0.0;
  double trans_std = 0.0;
  double rot_mean = 0.0;
  double rot_std = 0.0;
};

RpeResult rpe_sequence(const Trajectory& pred, const Trajectory& gt);

// --- Point clouds --------------------------------------------------------------

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<double> scalar;  // optional, one per point
};

/// Vertices of a PLY or OBJ file.
PointCloud read_cloud(const std::filesystem::path& path);
/// Points with a per-point "c2c_dist" property.
void write_heatmap_ply(const std::filesystem::path& path, std::span<const Vec3> points,
                       std::span<const double> distances);

/// Static kd-tree; equal distances resolve to the lowest point index.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);

  struct Hit {
    std::size_t index = 0;
    double distance2 = 0.0;
  };
  Hit nearest(const Vec3& q) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int axis = -1;  // -1 for a leaf
    double split = 0.0;
    std::size_t begin = 0;
    std::size_t end = 0;
    int left = -1;
    int right = -1;
  };
  int build(std::size_t begin, std::size_t end);
  void search(int node, const Vec3& q, Hit& best) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

struct CloudDistance {
  double rmse = 0.0;
  std::vector<double> distances;  // per point of the first cloud
};

/// Nearest-neighbour distance from each point of a to b, and their RMS.
/// Not symmetric. DomainError if either cloud is empty.
CloudDistance cloud_to_cloud_rmse(std::span<const Vec3> a, std::span<const Vec3> b);

struct IcpOptions {
  int max_iterations = 100;
  double tolerance = 1e-8;  // on the change of RMSE between iterations
  std::optional<double> max_correspondence_distance;
};

struct IcpResult {
  RigidTransform transform;  // maps moving onto fixed
  double rmse = 0.0;
  int iterations = 0;
  std::vector<double> rmse_history;  // initial RMSE, then one entry per accepted update
};

/// Point-to-point ICP. An update that would raise the RMSE is not taken, so
/// rmse_history never increases.
IcpResult icp_align(std::span<const Vec3> moving, std::span<const Vec3> fixed, const RigidTransform& init = {},
                    const IcpOptions& options = {});

}  // namespace capsim::metrics
