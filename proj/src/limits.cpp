#include "pzero/limits.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <sstream>

namespace pzero {

std::string BoundCurve::csv_rows() const {
  std::ostringstream os;
  os.precision(10);
  for (const auto& pt : points) os << r0 << ',' << pt.t << ',' << pt.expected_gi << ',' << pt.p_max << '\n';
  return os.str();
}

BoundCurve bound_curve(double n, double p, double gamma, double r0, std::span<const double> t_grid) {
  BoundCurve c{n, p, gamma, r0, t_max(n, gamma, r0), {}};
  c.points.reserve(t_grid.size());
  for (double t : t_grid) {
    const double gi = expected_gi_size(n, gamma, r0, t);
    c.points.push_back({t, gi, p_max(gi, p)});
  }
  return c;
}

namespace {

struct Model {
  std::span<const double> t, y;

  double sse(const Eigen::Vector4d& th) const {
    double s = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double r = y[k] - (th[0] + th[1] * logistic(th[2] * (th[3] - t[k])));
      s += r * r;
    }
    return s;
  }

  // Normal equations J^T J and gradient J^T r at th.
  void linearize(const Eigen::Vector4d& th, Eigen::Matrix4d& jtj, Eigen::Vector4d& jtr) const {
    jtj.setZero();
    jtr.setZero();
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double u = th[3] - t[k];
      const double s = logistic(th[2] * u);
      const double ds = th[1] * s * (1.0 - s);
      const Eigen::Vector4d j(1.0, s, ds * u, ds * th[2]);
      const double r = y[k] - (th[0] + th[1] * s);
      jtj.noalias() += j * j.transpose();
      jtr.noalias() += j * r;
    }
  }
};

Eigen::Vector4d levenberg_marquardt(const Model& m, Eigen::Vector4d th) {
  double lambda = 1e-3;
  double cost = m.sse(th);
  Eigen::Matrix4d jtj;
  Eigen::Vector4d jtr;
  for (int it = 0; it < 500; ++it) {
    m.linearize(th, jtj, jtr);
    bool improved = false;
    while (lambda < 1e12) {
      Eigen::Matrix4d a = jtj;
      a.diagonal() += lambda * (jtj.diagonal().array() + 1e-12).matrix();
      const Eigen::Vector4d delta = a.ldlt().solve(jtr);
      const Eigen::Vector4d cand = th + delta;
      const double c = m.sse(cand);
      if (std::isfinite(c) && c < cost) {
        const double gain = cost - c;
        th = cand;
        cost = c;
        lambda = std::max(lambda / 10.0, 1e-15);
        improved = true;
        if (gain <= 1e-30 + 1e-15 * cost) return th;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }
  return th;
}

}  // namespace

LogisticFit fit_logistic(std::span<const double> times, std::span<const double> values) {
  if (times.size() != values.size()) throw std::invalid_argument("fit_logistic: times/values length mismatch");
  if (values.size() < 5) throw std::invalid_argument("fit_logistic: need at least 5 points");
  const auto [vmin, vmax] = std::minmax_element(values.begin(), values.end());
  if (*vmax - *vmin <= 1e-12 * std::max(1.0, std::abs(*vmax)))
    throw std::invalid_argument("fit_logistic: degenerate (constant) series");

  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double sst = 0.0;
  for (double v : values) sst += (v - mean) * (v - mean);

  const double t0 = times.front(), t1 = times.back();
  const double span = std::max(t1 - t0, 1e-12);
  const bool decreasing = values.front() >= values.back();
  const Model model{times, values};

  Eigen::Vector4d best = Eigen::Vector4d::Zero();
  double best_cost = std::numeric_limits<double>::infinity();
  for (double rate_scale : {2.0, 5.0, 10.0, 20.0}) {
    for (int q = 0; q < 5; ++q) {
      Eigen::Vector4d th;
      th[0] = decreasing ? *vmin : *vmax;
      th[1] = decreasing ? *vmax - *vmin : *vmin - *vmax;
      th[2] = rate_scale / span;
      th[3] = t0 + span * (q + 0.5) / 5.0;
      th = levenberg_marquardt(model, th);
      const double c = model.sse(th);
      if (c < best_cost) {
        best_cost = c;
        best = th;
      }
    }
  }
  // Canonical orientation: hi is the early-time level.
  LogisticFit fit{best[2], best[3], 1.0 - best_cost / sst, best[0], best[0] + best[1]};
  return fit;
}

LogisticFit fit_logistic(std::span<const double> values) {
  std::vector<double> t(values.size());
  std::iota(t.begin(), t.end(), 0.0);
  return fit_logistic(t, values);
}

}  // namespace pzero
