#include "capsim/friction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "capsim/errors.hpp"

namespace capsim::friction {
namespace {

double log_of(double v, LogBase base) { return base == LogBase::Natural ? std::log(v) : std::log10(v); }

double log_scale(LogBase base) { return base == LogBase::Natural ? 1.0 : std::log(10.0); }

using Params4 = Eigen::Vector4d;  // a, b, c, C

bool feasible(const Params4& p, std::span<const FrictionSample> samples) {
  for (const auto& s : samples) {
    if (s.velocity > 1.0 && !(p[1] * s.velocity + p[2] > 0.0)) return false;
  }
  return true;
}

double residuals(const Params4& p, std::span<const FrictionSample> samples, LogBase base,
                 Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  r.resize(n);
  if (jac) jac->setZero(n, 4);
  const double k = log_scale(base);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = samples[i].velocity;
    if (x <= 1.0) {
      r[i] = p[3] - samples[i].force;
      if (jac) (*jac)(i, 3) = 1.0;
      continue;
    }
    const double arg = p[1] * x + p[2];
    const double l = log_of(arg, base);
    r[i] = p[0] * l + p[3] - samples[i].force;
    if (jac) {
      (*jac)(i, 0) = l;
      (*jac)(i, 1) = p[0] * x / (arg * k);
      (*jac)(i, 2) = p[0] / (arg * k);
      (*jac)(i, 3) = 1.0;
    }
  }
  return 0.5 * r.squaredNorm();
}

// Deterministic start: C from the constant branch, then a coarse (b, c) grid
// with a solved in closed form for each cell.
Params4 initial_guess(std::span<const FrictionSample> samples, LogBase base) {
  double c_sum = 0.0;
  int c_count = 0;
  for (const auto& s : samples) {
    if (s.velocity <= 1.0) {
      c_sum += s.force;
      ++c_count;
    }
  }
  const double big_c = c_sum / c_count;

  Params4 best(1.0, 1.0, 1.0, big_c);
  double best_cost = std::numeric_limits<double>::infinity();
  for (int ib = 0; ib <= 60; ++ib) {
    const double b = std::pow(10.0, -3.0 + 5.0 * ib / 60.0);
    for (int ic = 0; ic <= 50; ++ic) {
      const double c = ic == 0 ? 0.0 : std::pow(10.0, -3.0 + 5.0 * (ic - 1) / 49.0);
      double num = 0.0;
      double den = 0.0;
      for (const auto& s : samples) {
        if (s.velocity <= 1.0) continue;
        const double l = log_of(b * s.velocity + c, base);
        num += l * (s.force - big_c);
        den += l * l;
      }
      if (den <= 0.0) continue;
      const double a = num / den;
      double cost = 0.0;
      for (const auto& s : samples) {
        const double model = s.velocity <= 1.0 ? big_c : a * log_of(b * s.velocity + c, base) + big_c;
        cost += (model - s.force) * (model - s.force);
      }
      if (cost < best_cost) {
        best_cost = cost;
        best = Params4(a, b, c, big_c);
      }
    }
  }
  return best;
}

}  // namespace

Vec3 coulomb_friction(double mu, const Vec3& normal_force, const Vec3& velocity) {
  const double speed = velocity.norm();
  if (speed <= kRestSpeed) return Vec3::Zero();
  return -mu * normal_force.norm() * velocity / speed;
}

double environmental_resistance(const ContactFrame& frame) {
  return frame.pressure * frame.surface.norm() * std::sin(frame.skew_angle);
}

double total_friction_curve(double x, const CurveParams& params) {
  const double arg = params.b * x + params.c;
  if (!(arg > 0.0)) {
    throw DomainError(fmt::format("friction curve: b*x + c = {:.6g} is not positive at x = {:.6g}", arg, x));
  }
  if (x <= 1.0) return params.C;
  return params.a * log_of(arg, params.base) + params.C;
}

FitResult fit_friction_params(std::span<const FrictionSample> samples, const FitOptions& options) {
  std::set<double> distinct_high;
  bool has_low = false;
  for (const auto& s : samples) {
    if (!std::isfinite(s.velocity) || !std::isfinite(s.force) || s.velocity < 0.0) {
      throw DomainError("fit_friction_params: samples must be finite with velocity >= 0");
    }
    if (s.velocity > 1.0) distinct_high.insert(s.velocity);
    else has_low = true;
  }
  if (distinct_high.size() < 4 || !has_low) {
    throw RankDeficientError(
        fmt::format("fit_friction_params: need >= 4 distinct velocities above 1 and >= 1 at or below 1 "
                    "(have {} and {})", distinct_high.size(), has_low ? 1 : 0));
  }

  Params4 p = initial_guess(samples, options.base);
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  double cost = residuals(p, samples, options.base, r, &jac);
  double lambda = 1e-3;
  int iter = 0;
  bool converged = cost == 0.0;
  while (!converged && iter < options.max_iterations) {
    ++iter;
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
    const auto& sv = svd.singularValues();
    if (sv[0] == 0.0 || sv[3] / sv[0] < 1e-13) {
      throw RankDeficientError("fit_friction_params: Jacobian is rank deficient");
    }
    const Eigen::Matrix4d jtj = jac.transpose() * jac;
    const Params4 grad = jac.transpose() * r;
    if (grad.cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + cost)) {
      converged = true;
      break;
    }

    bool accepted = false;
    while (!accepted) {
      Eigen::Matrix4d damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal();
      const Params4 step = damped.ldlt().solve(-grad);
      const Params4 trial = p + step;
      Eigen::VectorXd r_trial;
      Eigen::MatrixXd jac_trial;
      if (feasible(trial, samples)) {
        const double trial_cost = residuals(trial, samples, options.base, r_trial, &jac_trial);
        if (trial_cost < cost) {
          const double reduction = (cost - trial_cost) / cost;
          const bool small_step = step.norm() <= 1e-12 * (p.norm() + 1e-12);
          p = trial;
          r = std::move(r_trial);
          jac = std::move(jac_trial);
          cost = trial_cost;
          lambda = std::max(lambda / 10.0, 1e-12);
          accepted = true;
          if (small_step || reduction < 1e-15 || cost == 0.0) converged = true;
          continue;
        }
      }
      lambda *= 10.0;
      if (lambda > 1e16) {
        // No descent direction left at machine precision: a stationary point.
        converged = true;
        break;
      }
    }
  }
  if (!converged) {
    throw NonConvergenceError(
        fmt::format("fit_friction_params: no convergence after {} iterations", options.max_iterations));
  }
  FitResult result;
  result.params = CurveParams{p[0], p[1], p[2], p[3], options.base};
  result.rmse = std::sqrt(2.0 * cost / static_cast<double>(samples.size()));
  result.iterations = iter;
  return result;
}

}  // namespace capsim::friction
