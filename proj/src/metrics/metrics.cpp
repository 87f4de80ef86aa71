#include "capsim/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "capsim/errors.hpp"
#include "capsim/mesh_io.hpp"

namespace capsim::metrics {
namespace {

std::pair<double, double> mean_std(std::span<const double> xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / n)};
}

struct Centered {
  Vec3 mean_pred;
  Vec3 mean_gt;
  Mat3 cov;  // sum (gt_i - mean_gt)(pred_i - mean_pred)^T
  double var_pred = 0.0;
};

Centered center(std::span<const Vec3> pred, std::span<const Vec3> gt) {
  if (pred.size() != gt.size()) {
    throw LengthMismatchError(fmt::format("alignment: {} vs {} points", pred.size(), gt.size()));
  }
  if (pred.size() < 3) throw DegenerateError("alignment: need at least 3 point pairs");
  Centered c;
  c.mean_pred.setZero();
  c.mean_gt.setZero();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    c.mean_pred += pred[i];
    c.mean_gt += gt[i];
  }
  c.mean_pred /= static_cast<double>(pred.size());
  c.mean_gt /= static_cast<double>(gt.size());
  c.cov.setZero();
  Mat3 scatter_pred = Mat3::Zero();
  Mat3 scatter_gt = Mat3::Zero();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Vec3 p = pred[i] - c.mean_pred;
    const Vec3 q = gt[i] - c.mean_gt;
    c.cov += q * p.transpose();
    scatter_pred += p * p.transpose();
    scatter_gt += q * q.transpose();
    c.var_pred += p.squaredNorm();
  }
  // A rotation is pinned down only when both sets span at least a plane.
  for (const Mat3* s : {&scatter_pred, &scatter_gt}) {
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(*s);
    const Vec3 ev = eig.eigenvalues();  // ascending
    if (!(ev[2] > 0.0) || ev[1] <= 1e-20 * ev[2]) {
      throw DegenerateError("alignment: points are coincident or collinear");
    }
  }
  return c;
}

Mat3 kabsch_rotation(const Mat3& cov, Vec3* singular_values = nullptr, double* det_sign = nullptr) {
  const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  const double sign = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  d(2, 2) = sign;
  if (singular_values) *singular_values = svd.singularValues();
  if (det_sign) *det_sign = sign;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

double parse_number(std::string_view tok, std::size_t line, std::size_t column, const std::string& what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw ParseError(fmt::format("{}:{}:{}: expected a number, got \"{}\"", what, line, column, tok), line, column);
  }
  return v;
}

}  // namespace

std::vector<Vec3> Trajectory::positions() const {
  std::vector<Vec3> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.pose.translation());
  return out;
}

void Trajectory::validate() const {
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].t > samples[i - 1].t)) {
      throw ValidationError("timestamp", fmt::format("not strictly increasing at sample {}", i));
    }
  }
}

Trajectory parse_tum(const std::string& text, const std::string& what) {
  Trajectory traj;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::pair<std::string_view, std::size_t>> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      if (i >= line.size()) break;
      const std::size_t start = i;
      while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      tokens.emplace_back(std::string_view(line).substr(start, i - start), start + 1);
    }
    if (tokens.empty() || tokens.front().first.front() == '#') continue;
    if (tokens.size() != 8) {
      throw ParseError(fmt::format("{}:{}: expected 8 values, got {}", what, line_no, tokens.size()), line_no, 1);
    }
    double v[8];
    for (int k = 0; k < 8; ++k) v[k] = parse_number(tokens[k].first, line_no, tokens[k].second, what);
    const Quat q(v[7], v[4], v[5], v[6]);
    if (!(q.norm() > 1e-12)) throw ParseError(fmt::format("{}:{}: zero quaternion", what, line_no), line_no, 1);
    traj.samples.push_back({v[0], RigidTransform(q, Vec3(v[1], v[2], v[3]))});
  }
  traj.validate();
  return traj;
}

Trajectory read_tum(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError(path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_tum(buf.str(), path.string());
}

std::string format_tum_line(const PoseSample& s) {
  const Vec3& p = s.pose.translation();
  const Quat& q = s.pose.rotation();
  return fmt::format("{} {} {} {} {} {} {} {}", s.t, p.x(), p.y(), p.z(), q.x(), q.y(), q.z(), q.w());
}

void write_tum(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : traj.samples) out << format_tum_line(s) << '\n';
}

std::pair<Trajectory, Trajectory> associate(const Trajectory& pred, const Trajectory& gt, double max_dt) {
  Trajectory out_pred;
  Trajectory out_gt;
  std::size_t j = 0;
  for (const auto& g : gt.samples) {
    while (j + 1 < pred.size() && std::abs(pred.samples[j + 1].t - g.t) <= std::abs(pred.samples[j].t - g.t)) ++j;
    if (j < pred.size() && std::abs(pred.samples[j].t - g.t) <= max_dt) {
      out_pred.samples.push_back(pred.samples[j]);
      out_gt.samples.push_back(g);
      ++j;
    }
  }
  return {out_pred, out_gt};
}

RigidTransform rigid_align(std::span<const Vec3> pred, std::span<const Vec3> gt) {
  const Centered c = center(pred, gt);
  const Mat3 r = kabsch_rotation(c.cov);
  return {Quat(r), c.mean_gt - r * c.mean_pred};
}

Similarity similarity_align(std::span<const Vec3> pred, std::span<const Vec3> gt) {
  const Centered c = center(pred, gt);
  Vec3 sv;
  double sign = 1.0;
  const Mat3 r = kabsch_rotation(c.cov, &sv, &sign);
  const double scale = (sv[0] + sv[1] + sign * sv[2]) / c.var_pred;
  return {RigidTransform(Quat(r), c.mean_gt - scale * (r * c.mean_pred)), scale};
}

AteResult ate(const Trajectory& pred, const Trajectory& gt, bool with_scale) {
  if (pred.size() != gt.size()) {
    throw LengthMismatchError(fmt::format("ate: {} predicted vs {} ground-truth samples", pred.size(), gt.size()));
  }
  const auto p = pred.positions();
  const auto q = gt.positions();
  AteResult out;
  out.alignment = with_scale ? similarity_align(p, q) : Similarity{rigid_align(p, q), 1.0};
  out.errors.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out.errors.push_back((out.alignment.apply(p[i]) - q[i]).norm());
  std::tie(out.mean, out.std) = mean_std(out.errors);
  return out;
}

RpeError rpe_pair(const RigidTransform& p_i, const RigidTransform& p_i1, const RigidTransform& q_i,
                  const RigidTransform& q_i1) {
  const Mat4 dq = q_i.matrix().inverse() * q_i1.matrix();
  const Mat4 dp = p_i.matrix().inverse() * p_i1.matrix();
  const Mat4 e = dq.inverse() * dp;
  RpeError out;
  out.trans = std::sqrt(e(0, 3) * e(0, 3) + e(1, 3) * e(1, 3) + e(2, 3) * e(2, 3));
  // Same angle as acos((trace - 1) / 2), but without its loss of precision near 0 and pi.
  const double c = 0.5 * (e(0, 0) + e(1, 1) + e(2, 2) - 1.0);
  const double s = 0.5 * Vec3(e(2, 1) - e(1, 2), e(0, 2) - e(2, 0), e(1, 0) - e(0, 1)).norm();
  out.rot = std::atan2(s, c);
  return out;
}

RpeResult rpe_sequence(const Trajectory& pred, const Trajectory& gt) {
  if (pred.size() != gt.size()) {
    throw LengthMismatchError(fmt::format("rpe: {} predicted vs {} ground-truth samples", pred.size(), gt.size()));
  }
  if (pred.size() < 2) throw DomainError("rpe: need at least two samples");
  RpeResult out;
  std::vector<double> trans;
  std::vector<double> rot;
  for (std::size_t i = 0; i + 1 < pred.size(); ++i) {
    const RpeError e = rpe_pair(pred.samples[i].pose, pred.samples[i + 1].pose, gt.samples[i].pose,
                                gt.samples[i + 1].pose);
    out.pairs.push_back(e);
    trans.push_back(e.trans);
    rot.push_back(e.rot);
  }
  std::tie(out.trans_mean, out.trans_std) = mean_std(trans);
  std::tie(out.rot_mean, out.rot_std) = mean_std(rot);
  return out;
}

PointCloud read_cloud(const std::filesystem::path& path) {
  PointCloud c;
  c.points = read_mesh(path).vertices;
  return c;
}

void write_heatmap_ply(const std::filesystem::path& path, std::span<const Vec3> points,
                       std::span<const double> distances) {
  write_ply(path, points, {}, PlyScalar{"c2c_dist", distances});
}

// --- KdTree ----------------------------------------------------------------

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()), order_(points.size()) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!points_.empty()) build(0, points_.size());
}

int KdTree::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({-1, 0.0, begin, end, -1, -1});
  if (end - begin <= 8) return id;
  Eigen::AlignedBox3d box;
  for (std::size_t i = begin; i < end; ++i) box.extend(points_[order_[i]]);
  int axis = 0;
  box.sizes().maxCoeff(&axis);
  const std::size_t mid = begin + (end - begin) / 2;
  auto less = [&](std::size_t a, std::size_t b) {
    const double pa = points_[a][axis];
    const double pb = points_[b][axis];
    return pa < pb || (pa == pb && a < b);
  };
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end), less);
  const double split = points_[order_[mid]][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node_id, const Vec3& q, Hit& best) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      const double d2 = (points_[idx] - q).squaredNorm();
      if (d2 < best.distance2 || (d2 == best.distance2 && idx < best.index)) best = {idx, d2};
    }
    return;
  }
  // Left holds coordinates <= split, right holds >= split.
  const double diff = q[node.axis] - node.split;
  const int near = diff <= 0.0 ? node.left : node.right;
  const int far = diff <= 0.0 ? node.right : node.left;
  search(near, q, best);
  if (diff * diff <= best.distance2) search(far, q, best);
}

KdTree::Hit KdTree::nearest(const Vec3& q) const {
  if (points_.empty()) throw DomainError("KdTree::nearest on an empty tree");
  Hit best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
  search(0, q, best);
  return best;
}

CloudDistance cloud_to_cloud_rmse(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw DomainError("cloud_to_cloud_rmse: empty cloud");
  const KdTree tree(b);
  CloudDistance out;
  out.distances.reserve(a.size());
  double sum = 0.0;
  for (const auto& p : a) {
    const auto hit = tree.nearest(p);
    out.distances.push_back(std::sqrt(hit.distance2));
    sum += hit.distance2;
  }
  out.rmse = std::sqrt(sum / static_cast<double>(a.size()));
  return out;
}

// --- ICP ---------------------------------------------------------------------

namespace {

struct Matches {
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  double rmse = 0.0;
};

Matches match(std::span<const Vec3> moving, const RigidTransform& t, const KdTree& tree,
              std::span<const Vec3> fixed, const std::optional<double>& gate) {
  Matches m;
  double sum = 0.0;
  for (const auto& p : moving) {
    const Vec3 moved = t.apply(p);
    const auto hit = tree.nearest(moved);
    if (gate && hit.distance2 > *gate * *gate) continue;
    m.src.push_back(moved);
    m.dst.push_back(fixed[hit.index]);
    sum += hit.distance2;
  }
  m.rmse = m.src.empty() ? std::numeric_limits<double>::infinity() : std::sqrt(sum / static_cast<double>(m.src.size()));
  return m;
}

}  // namespace

IcpResult icp_align(std::span<const Vec3> moving, std::span<const Vec3> fixed, const RigidTransform& init,
                    const IcpOptions& options) {
  if (moving.size() < 3 || fixed.size() < 3) throw DegenerateError("icp_align: both clouds need >= 3 points");
  const KdTree tree(fixed);
  IcpResult out;
  out.transform = init;
  Matches current = match(moving, init, tree, fixed, options.max_correspondence_distance);
  out.rmse = current.rmse;
  out.rmse_history.push_back(current.rmse);
  while (out.iterations < options.max_iterations) {
    ++out.iterations;
    const RigidTransform delta = rigid_align(current.src, current.dst);
    const RigidTransform candidate = delta * out.transform;
    Matches next = match(moving, candidate, tree, fixed, options.max_correspondence_distance);
    if (next.rmse > current.rmse) break;  // round-off or gating; keep the better pose
    const double change = current.rmse - next.rmse;
    out.transform = candidate;
    out.rmse = next.rmse;
    out.rmse_history.push_back(next.rmse);
    current = std::move(next);
    if (change < options.tolerance) break;
  }
  return out;
}

}  // namespace capsim::metrics
